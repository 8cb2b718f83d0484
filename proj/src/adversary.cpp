#include "cycledger/adversary.hpp"

#include <algorithm>
#include <charconv>

#include <fmt/format.h>

namespace cycledger::adversary {

std::optional<PayloadBody> Strategy::on_propose(Topic, const PayloadBody&, Rng&) const {
  return std::nullopt;
}
void Strategy::on_vote(reputation::VoteVector&, Rng&) const {}
void Strategy::on_commitment(CommitmentTamper&, Rng&) const {}
void Strategy::on_cross_shard(CrossTamper&, Rng&) const {}
std::vector<Witness> Strategy::on_accuse(const FramingView&, Rng&) const { return {}; }

namespace {

class Honest final : public Strategy {
 public:
  std::string_view name() const override { return "Honest"; }
};

class Offline final : public Strategy {
 public:
  std::string_view name() const override { return "Offline"; }
  bool offline() const override { return true; }
};

class EquivocatingLeader final : public Strategy {
 public:
  std::string_view name() const override { return "EquivocatingLeader"; }
  std::optional<PayloadBody> on_propose(Topic topic, const PayloadBody& honest,
                                        Rng&) const override {
    if (const auto* d = std::get_if<DecisionBody>(&honest)) {
      if (topic != Topic::Decision && topic != Topic::CrossDecision) return std::nullopt;
      DecisionBody alt = *d;
      if (alt.decided.empty()) {
        ++alt.list_id;
      } else {
        alt.decided.front() ^= 1;
      }
      return alt;
    }
    if (const auto* t = std::get_if<TestBody>(&honest)) {
      TestBody alt = *t;
      alt.data.push_back(0xEE);
      return alt;
    }
    return std::nullopt;
  }
};

class ForgedMemberList final : public Strategy {
 public:
  std::string_view name() const override { return "ForgedMemberList"; }
  void on_commitment(CommitmentTamper& t, Rng& rng) const override {
    if (!t.foreign) return;
    // The outsider is registered, so the referee copy looks fine; its proof
    // is made up and only the partial set can tell.
    MemberCert fake{*t.foreign, {}};
    for (auto& b : fake.vrf.hash.bytes) b = static_cast<std::uint8_t>(rng.below(256));
    fake.vrf.proof.signer = t.foreign->pk;
    t.referee_members.push_back(*t.foreign);
    t.partial_members.push_back(*t.foreign);
    t.partial_certs.push_back(fake);
  }
};

class FalseSemiCommitment final : public Strategy {
 public:
  std::string_view name() const override { return "FalseSemiCommitment"; }
  void on_commitment(CommitmentTamper& t, Rng&) const override {
    // Hide one non-key member from the referee only.
    for (auto it = t.referee_members.rbegin(); it != t.referee_members.rend(); ++it) {
      if (std::find(t.key_members.begin(), t.key_members.end(), it->id) == t.key_members.end()) {
        t.referee_members.erase(std::next(it).base());
        return;
      }
    }
  }
};

class ConcealingCrossShardLeader final : public Strategy {
 public:
  std::string_view name() const override { return "ConcealingCrossShardLeader"; }
  void on_cross_shard(CrossTamper& t, Rng&) const override {
    if (!t.legs.empty()) t.legs.pop_back();
  }
};

class SilentCrossShardLeader final : public Strategy {
 public:
  std::string_view name() const override { return "SilentCrossShardLeader"; }
  void on_cross_shard(CrossTamper& t, Rng&) const override { t.send_to_leader = false; }
};

class InvertedVoter final : public Strategy {
 public:
  std::string_view name() const override { return "InvertedVoter"; }
  void on_vote(reputation::VoteVector& vote, Rng&) const override {
    for (auto& v : vote) v = static_cast<std::int8_t>(-v);
  }
};

class RandomVoter final : public Strategy {
 public:
  std::string_view name() const override { return "RandomVoter"; }
  void on_vote(reputation::VoteVector& vote, Rng& rng) const override {
    for (auto& v : vote) v = static_cast<std::int8_t>(static_cast<int>(rng.below(3)) - 1);
  }
};

// Tries every cheap way of fabricating evidence against an honest leader.
class FramingPartialMember final : public Strategy {
 public:
  std::string_view name() const override { return "FramingPartialMember"; }

  std::vector<Witness> on_accuse(const FramingView& v, Rng& rng) const override {
    std::vector<Witness> out;
    auto base = [&] {
      Witness w;
      w.committee = v.committee;
      w.accused = v.leader;
      return w;
    };
    auto random_digest = [&] {
      Digest d;
      for (auto& b : d.bytes) b = static_cast<std::uint8_t>(rng.below(256));
      return d;
    };
    const auto& sk = v.keys.secret_key;

    if (!v.leader_headers.empty()) {
      // A second header "from the leader", signed with our own key.
      const auto& real = v.leader_headers.front();
      auto forged = real;
      forged.digest = random_digest();
      forged.sig = v.crypto->sign(sk, forged.signed_bytes());
      Witness w = base();
      w.body = consensus::EquivocationWitness{real, forged};
      out.push_back(w);
      // Two genuine headers that do not conflict.
      w.body = consensus::EquivocationWitness{real, v.leader_headers.back()};
      out.push_back(w);
    }
    if (v.claim) {
      // Referee attestations on a different digest, all signed by us.
      std::vector<RefereeAttestation> fake;
      const Digest other = random_digest();
      for (NodeId r : v.referee) {
        RefereeAttestation a;
        a.round = v.claim->round;
        a.committee = v.committee;
        a.version = v.claim->version;
        a.leader = v.leader;
        a.digest = other;
        a.referee = r;
        a.sig = v.crypto->sign(sk, a.signed_bytes());
        fake.push_back(a);
      }
      Witness w = base();
      w.body = MismatchWitness{*v.claim, fake};
      out.push_back(w);
      // The leader's well-formed claim presented as defective.
      w.body = CertificateWitness{*v.claim};
      out.push_back(w);
      // An acknowledgement the leader never signed.
      if (!v.outsiders.empty()) {
        KeyListAckMsg ack;
        ack.round = v.round;
        ack.committee = v.committee;
        ack.leader = v.leader;
        ack.partial = v.self;
        ack.accepted = v.outsiders;
        ack.list_digest = cert_list_digest(ack.accepted);
        ack.sig = v.crypto->sign(sk, ack.signed_bytes());
        w.body = OmissionWitness{*v.claim, ack};
        out.push_back(w);
      }
    }
    return out;
  }
};

template <typename T>
StrategyPtr make() {
  return std::make_shared<const T>();
}

}  // namespace

std::vector<std::string_view> strategy_names() {
  return {"Honest",
          "EquivocatingLeader",
          "ForgedMemberList",
          "FalseSemiCommitment",
          "ConcealingCrossShardLeader",
          "SilentCrossShardLeader",
          "FramingPartialMember",
          "InvertedVoter",
          "RandomVoter",
          "Offline"};
}

StrategyPtr make_strategy(std::string_view name) {
  if (name == "Honest") return make<Honest>();
  if (name == "EquivocatingLeader") return make<EquivocatingLeader>();
  if (name == "ForgedMemberList") return make<ForgedMemberList>();
  if (name == "FalseSemiCommitment") return make<FalseSemiCommitment>();
  if (name == "ConcealingCrossShardLeader") return make<ConcealingCrossShardLeader>();
  if (name == "SilentCrossShardLeader") return make<SilentCrossShardLeader>();
  if (name == "FramingPartialMember") return make<FramingPartialMember>();
  if (name == "InvertedVoter") return make<InvertedVoter>();
  if (name == "RandomVoter") return make<RandomVoter>();
  if (name == "Offline") return make<Offline>();
  throw Error(Errc::ConfigError, fmt::format("unknown strategy '{}'", name));
}

CorruptionPlan::CorruptionPlan(std::size_t nodes, std::vector<CorruptionRequest> requests)
    : nodes_(nodes), requests_(std::move(requests)) {
  for (const auto& r : requests_) make_strategy(r.strategy);
}

std::map<NodeId, StrategyPtr> CorruptionPlan::corrupt(Round round,
                                                      const KeyAssignment& assignment) const {
  std::map<NodeId, StrategyPtr> active;
  for (const auto& req : requests_) {
    if (req.round >= round) continue;
    NodeId node = kNoNode;
    const auto& t = req.target;
    switch (t.kind) {
      case Target::Kind::Node: node = t.index; break;
      case Target::Kind::Leader:
        if (t.index < assignment.leaders.size()) node = assignment.leaders[t.index];
        break;
      case Target::Kind::Partial:
        if (t.index < assignment.partial_sets.size() &&
            t.slot < assignment.partial_sets[t.index].size()) {
          node = assignment.partial_sets[t.index][t.slot];
        }
        break;
      case Target::Kind::Referee:
        if (t.index < assignment.referee.size()) node = assignment.referee[t.index];
        break;
    }
    if (node == kNoNode || node >= nodes_) continue;
    active.emplace(node, make_strategy(req.strategy));
  }
  // t < n/3 strictly: 3t < n.
  if (3 * active.size() >= nodes_ && !active.empty()) {
    throw Error(Errc::BudgetExceeded,
                fmt::format("{} corrupted of {} nodes reaches n/3", active.size(), nodes_));
  }
  return active;
}

namespace {

std::uint32_t parse_u32(std::string_view s, std::string_view what) {
  std::uint32_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
    throw Error(Errc::ConfigError, fmt::format("bad {} '{}'", what, s));
  }
  return v;
}

}  // namespace

CorruptionRequest parse_request(std::string_view text) {
  const auto a = text.find(':');
  const auto b = a == std::string_view::npos ? a : text.find(':', a + 1);
  if (b == std::string_view::npos) {
    throw Error(Errc::ConfigError,
                fmt::format("corruption '{}' is not <round>:<target>:<strategy>", text));
  }
  CorruptionRequest req;
  req.round = parse_u32(text.substr(0, a), "round");
  const auto target = text.substr(a + 1, b - a - 1);
  req.strategy = std::string(text.substr(b + 1));
  make_strategy(req.strategy);
  auto& t = req.target;
  if (target.starts_with("node")) {
    t.kind = Target::Kind::Node;
    t.index = parse_u32(target.substr(4), "node id");
  } else if (target.starts_with("leader@")) {
    t.kind = Target::Kind::Leader;
    t.index = parse_u32(target.substr(7), "committee");
  } else if (target.starts_with("partial@")) {
    t.kind = Target::Kind::Partial;
    auto rest = target.substr(8);
    const auto dot = rest.find('.');
    t.index = parse_u32(rest.substr(0, dot), "committee");
    if (dot != std::string_view::npos) t.slot = parse_u32(rest.substr(dot + 1), "slot");
  } else if (target.starts_with("referee")) {
    t.kind = Target::Kind::Referee;
    auto rest = target.substr(7);
    if (!rest.empty()) {
      if (rest.front() != '.') throw Error(Errc::ConfigError, fmt::format("bad target '{}'", target));
      t.index = parse_u32(rest.substr(1), "referee index");
    }
  } else {
    throw Error(Errc::ConfigError, fmt::format("unknown target '{}'", target));
  }
  return req;
}

}  // namespace cycledger::adversary
