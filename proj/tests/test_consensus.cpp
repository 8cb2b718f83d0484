#include <doctest.h>

#include <deque>
#include <memory>
#include <set>
#include <variant>

#include "cycledger/consensus.hpp"
#include "cycledger/messages.hpp"
#include "oracles.hpp"

using namespace cycledger;
using namespace cycledger::consensus;

namespace {

PayloadPtr test_payload(std::uint8_t tag) { return make_payload(TestBody{{tag, 1, 2}}); }

// A synchronous committee: every wave delivers all messages queued by the
// previous one. Silent members never send.
struct Cluster {
  using Wire = std::variant<ProposeMsg, EchoMsg, ConfirmMsg>;

  oracle::Identities ids;
  Roster roster;
  std::vector<std::unique_ptr<Engine>> engines;
  std::set<NodeId> silent;
  std::deque<std::pair<NodeId, Wire>> inbox;
  std::vector<ConsensusResult> results;
  std::vector<EquivocationWitness> witnesses;
  std::vector<ConfirmMsg> confirms_sent;
  int waves = 0;

  explicit Cluster(std::size_t size, Round round = 1) : ids(size) {
    std::vector<NodeId> members;
    for (NodeId i = 0; i < size; ++i) {
      members.push_back(i);
      engines.push_back(std::make_unique<Engine>(i, ids.keys[i], ids.crypto, ids.dir));
      engines.back()->begin_round(round);
    }
    roster = Roster(members);
  }

  void to_all(NodeId from, const Wire& w) {
    if (silent.contains(from)) return;
    for (NodeId to : roster.members()) inbox.emplace_back(to, w);
  }

  void handle(NodeId self, const Engine::Output& out, NodeId proposer) {
    if (out.witness) witnesses.push_back(*out.witness);
    if (out.echo) to_all(self, *out.echo);
    if (out.confirm && !silent.contains(self)) {
      confirms_sent.push_back(*out.confirm);
      inbox.emplace_back(proposer, *out.confirm);
    }
    if (out.result) results.push_back(*out.result);
  }

  void deliver(NodeId to, const Wire& w) {
    auto& e = *engines[to];
    if (const auto* p = std::get_if<ProposeMsg>(&w)) {
      handle(to, e.on_propose(roster, *p, true), p->header.key.proposer);
    } else if (const auto* x = std::get_if<EchoMsg>(&w)) {
      handle(to, e.on_echo(roster, *x), x->key.proposer);
    } else if (const auto* c = std::get_if<ConfirmMsg>(&w)) {
      handle(to, e.on_confirm(roster, *c), c->key.proposer);
    }
  }

  void run() {
    while (!inbox.empty()) {
      ++waves;
      auto wave = std::move(inbox);
      inbox.clear();
      for (const auto& [to, w] : wave) deliver(to, w);
    }
  }
};

}  // namespace

TEST_CASE("honest committee of five decides within three waves") {
  Cluster c(5);
  const auto msg = c.engines[0]->propose(1, 1, Topic::Test, test_payload(1));
  c.to_all(0, msg);
  c.run();
  REQUIRE(c.results.size() == 1);
  CHECK(c.results[0].sig_list.size() >= 3);
  CHECK(c.results[0].digest == msg.header.digest);
  CHECK(c.waves <= 3);
  CHECK(verify_certificate(c.results[0].sig_list, msg.header.key, msg.header.digest, c.roster,
                           c.ids.dir, c.ids.crypto));
}

TEST_CASE("a committee of one decides on its own confirm") {
  Cluster c(1);
  const auto msg = c.engines[0]->propose(1, 1, Topic::Test, test_payload(1));
  c.to_all(0, msg);
  c.run();
  REQUIRE(c.results.size() == 1);
  CHECK(c.results[0].sig_list.size() == 1);
}

TEST_CASE("sequence numbers cannot be reused in a round") {
  Cluster c(3);
  c.engines[0]->propose(1, 4, Topic::Test, test_payload(1));
  try {
    c.engines[0]->propose(1, 4, Topic::Test, test_payload(2));
    FAIL("expected DuplicateSeq");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DuplicateSeq);
  }
  CHECK(c.engines[0]->next_seq() == 5);
}

TEST_CASE("a proposal whose digest does not match its payload is refused") {
  Cluster c(5);
  auto msg = c.engines[0]->sign_header({0, 1, 1, Topic::Test}, test_payload(1)->digest,
                                       test_payload(2));
  const auto out = c.engines[1]->on_propose(c.roster, msg, true);
  CHECK(out.error == Errc::BadDigest);
  CHECK_FALSE(out.echo.has_value());
}

TEST_CASE("a valid proposal yields one echo per member") {
  Cluster c(5);
  const auto msg = c.engines[0]->propose(1, 1, Topic::Test, test_payload(1));
  c.to_all(0, msg);
  for (NodeId to = 1; to < 5; ++to) {
    const auto out = c.engines[to]->on_propose(c.roster, msg, true);
    REQUIRE(out.echo.has_value());
    CHECK(out.echo->relayed == msg.header);
  }
}

TEST_CASE("conflicting proposals for one sequence produce a witness") {
  Cluster c(5);
  const auto a = c.engines[0]->propose(1, 1, Topic::Test, test_payload(1));
  const auto b = c.engines[0]->sign_header(a.header.key, test_payload(2)->digest, test_payload(2));
  CHECK_FALSE(c.engines[1]->on_propose(c.roster, a, true).witness.has_value());
  const auto out = c.engines[1]->on_propose(c.roster, b, true);
  REQUIRE(out.witness.has_value());
  CHECK(detect_equivocation(out.witness->first, out.witness->second, c.ids.dir, c.ids.crypto));
  CHECK(c.engines[1]->aborted(a.header.key));
}

TEST_CASE("equivocation to two halves is caught through relayed headers") {
  Cluster c(5);
  const auto a = c.engines[0]->propose(1, 1, Topic::Test, test_payload(1));
  const auto b = c.engines[0]->sign_header(a.header.key, test_payload(2)->digest, test_payload(2));
  c.inbox.emplace_back(0, a);
  c.inbox.emplace_back(1, a);
  c.inbox.emplace_back(2, a);
  c.inbox.emplace_back(3, b);
  c.inbox.emplace_back(4, b);
  c.run();
  CHECK_FALSE(c.witnesses.empty());
  CHECK(c.results.empty());
}

TEST_CASE("confirm waits for a quorum of echoes and the proposal") {
  Cluster c(5);
  const auto msg = c.engines[0]->propose(1, 1, Topic::Test, test_payload(1));
  std::vector<EchoMsg> echoes;
  for (NodeId i = 0; i < 3; ++i) echoes.push_back(*c.engines[i]->on_propose(c.roster, msg, true).echo);
  auto& late = *c.engines[4];
  for (const auto& e : echoes) CHECK_FALSE(late.on_echo(c.roster, e).confirm.has_value());
  // The relayed header is known, but the member has not echoed the payload.
  const auto out = late.on_propose(c.roster, msg, true);
  CHECK(out.confirm.has_value());
}

TEST_CASE("exactly a quorum of echoes triggers the confirm") {
  Cluster c(5);
  const auto msg = c.engines[0]->propose(1, 1, Topic::Test, test_payload(1));
  auto& m = *c.engines[1];
  const auto own = *m.on_propose(c.roster, msg, true).echo;
  CHECK_FALSE(m.on_echo(c.roster, own).confirm.has_value());
  const auto e2 = *c.engines[2]->on_propose(c.roster, msg, true).echo;
  CHECK_FALSE(m.on_echo(c.roster, e2).confirm.has_value());
  CHECK_FALSE(m.on_echo(c.roster, e2).confirm.has_value());  // duplicate counted once
  const auto e3 = *c.engines[3]->on_propose(c.roster, msg, true).echo;
  const auto out = m.on_echo(c.roster, e3);
  REQUIRE(out.confirm.has_value());
  CHECK(out.confirm->echo_list.size() == 3);
}

TEST_CASE("silent majority leads to no quorum rather than a result") {
  Cluster c(5);
  c.silent = {2, 3, 4};
  const auto msg = c.engines[0]->propose(1, 1, Topic::Test, test_payload(1));
  c.to_all(0, msg);
  c.run();
  CHECK(c.results.empty());
  CHECK(c.engines[0]->expire(msg.header.key));
  CHECK_FALSE(c.engines[0]->expire(msg.header.key));
}

TEST_CASE("confirms for another digest are discarded") {
  Cluster c(3);
  const auto msg = c.engines[0]->propose(1, 1, Topic::Test, test_payload(1));
  c.to_all(0, msg);
  c.run();
  REQUIRE(c.results.size() == 1);
  Cluster d(3);
  const auto mine = d.engines[0]->propose(1, 1, Topic::Test, test_payload(9));
  const auto before = d.engines[0]->discarded();
  for (const auto& cf : c.confirms_sent) {
    auto forged = cf;
    CHECK_FALSE(d.engines[0]->on_confirm(d.roster, forged).result.has_value());
  }
  CHECK(d.engines[0]->discarded() > before);
  CHECK_FALSE(d.engines[0]->decided(mine.header.key));
}

TEST_CASE("equivocation detection is definitional") {
  oracle::Identities ids(2);
  Engine e(0, ids.keys[0], ids.crypto, ids.dir);
  e.begin_round(3);
  const auto d1 = test_payload(1)->digest;
  const auto d2 = test_payload(2)->digest;
  const auto a = e.sign_header({0, 3, 7, Topic::Test}, d1, nullptr).header;
  const auto b = e.sign_header({0, 3, 7, Topic::Test}, d2, nullptr).header;
  const auto other_seq = e.sign_header({0, 3, 8, Topic::Test}, d2, nullptr).header;
  CHECK(detect_equivocation(a, b, ids.dir, ids.crypto).has_value());
  CHECK_FALSE(detect_equivocation(a, other_seq, ids.dir, ids.crypto).has_value());
  CHECK_FALSE(detect_equivocation(a, a, ids.dir, ids.crypto).has_value());
  // A header signed by someone else in the leader's name.
  Engine impostor(0, ids.keys[1], ids.crypto, ids.dir);
  const auto forged = impostor.sign_header({0, 3, 7, Topic::Test}, d2, nullptr).header;
  CHECK_FALSE(detect_equivocation(a, forged, ids.dir, ids.crypto).has_value());
}

TEST_CASE("witnesses only arise against leaders that really equivocated") {
  // Every pair drawn from an honest leader's headers, plus headers forged by
  // other members, must never yield a witness.
  oracle::Identities ids(4);
  Engine leader(0, ids.keys[0], ids.crypto, ids.dir);
  leader.begin_round(1);
  std::vector<ProposeHeader> pool;
  for (std::uint64_t s = 1; s <= 5; ++s)
    pool.push_back(leader.propose(1, s, Topic::Test, test_payload(static_cast<std::uint8_t>(s))).header);
  for (NodeId forger = 1; forger < 4; ++forger) {
    Engine f(0, ids.keys[forger], ids.crypto, ids.dir);
    for (std::uint64_t s = 1; s <= 5; ++s)
      pool.push_back(f.sign_header({0, 1, s, Topic::Test}, test_payload(77)->digest, nullptr).header);
  }
  for (const auto& a : pool)
    for (const auto& b : pool) CHECK_FALSE(detect_equivocation(a, b, ids.dir, ids.crypto));
}

TEST_CASE("honest majority never confirms two digests for one instance") {
  // The leader splits the committee; whatever happens no two honest members
  // confirm different digests.
  for (std::size_t size : {4u, 5u, 7u}) {
    Cluster c(size);
    const auto a = c.engines[0]->propose(1, 1, Topic::Test, test_payload(1));
    const auto b = c.engines[0]->sign_header(a.header.key, test_payload(2)->digest, test_payload(2));
    for (NodeId i = 0; i < size; ++i) c.inbox.emplace_back(i, i % 2 ? b : a);
    c.run();
    std::set<Digest> confirmed;
    for (const auto& cf : c.confirms_sent) confirmed.insert(cf.digest);
    CHECK(confirmed.size() <= 1);
  }
}

TEST_CASE("stale rounds are discarded") {
  Cluster c(3, 2);
  Engine old(0, c.ids.keys[0], c.ids.crypto, c.ids.dir);
  old.begin_round(1);
  const auto msg = old.propose(1, 1, Topic::Test, test_payload(1));
  CHECK(c.engines[1]->on_propose(c.roster, msg, true).error == Errc::StaleRound);
}
