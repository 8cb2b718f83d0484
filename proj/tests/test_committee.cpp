#include <doctest.h>

#include <fmt/format.h>

#include <algorithm>
#include <set>

#include "cycledger/committee.hpp"
#include "cycledger/rng.hpp"
#include "oracles.hpp"

using namespace cycledger;
using namespace cycledger::committee;

namespace {

const Digest kRandomness = crypto::hash(std::string_view{"randomness"});
constexpr Round kRound = 1;
constexpr std::uint32_t kCommittees = 2;

MemberEntry entry_of(const oracle::Identities& ids, NodeId id) {
  return MemberEntry{id, ids.keys[id].public_key, fmt::format("node{}", id)};
}

// Committee 0 of a 40-node world: node 0 leads, 1 and 2 are its partial set,
// 37..39 form the referee, and nodes 3..36 sorted into committee 0 join with
// proofs.
struct Scene {
  oracle::Identities ids{40};
  JudgeContext ctx;
  std::vector<MemberEntry> members;
  std::vector<MemberCert> certs;
  std::vector<NodeId> outsiders;  // nodes 3..36 sorted into committee 1

  Scene() {
    ctx.crypto = &ids.crypto;
    ctx.dir = &ids.dir;
    ctx.round = kRound;
    ctx.randomness = kRandomness;
    ctx.committees = kCommittees;
    ctx.referee = consensus::Roster({37, 38, 39});
    ctx.committee = 0;
    ctx.leader = 0;
    ctx.key_members = {0, 1, 2};
    for (NodeId id : {0u, 1u, 2u}) members.push_back(entry_of(ids, id));
    for (NodeId id = 3; id < 37; ++id) {
      const auto s = crypto_sort(ids.crypto, ids.keys[id], kRound, kRandomness, kCommittees);
      if (s.committee != 0) {
        outsiders.push_back(id);
        continue;
      }
      members.push_back(entry_of(ids, id));
      certs.push_back(MemberCert{entry_of(ids, id), s.vrf});
    }
  }

  CommitmentClaim claim(std::vector<MemberEntry> list, std::vector<MemberCert> proofs,
                        NodeId signer = 0) const {
    return make_claim(ids.crypto, ids.keys[signer], 0, kRound, 0, 0, std::move(list),
                      std::move(proofs));
  }
  CommitmentClaim honest_claim() const { return claim(members, certs); }

  std::vector<RefereeAttestation> attest(const CommitmentClaim& c,
                                         std::vector<NodeId> referees) const {
    std::vector<RefereeAttestation> out;
    for (NodeId r : referees) out.push_back(make_attestation(ids.crypto, ids.keys[r], r, c));
    return out;
  }

  KeyListAckMsg ack(std::vector<MemberCert> accepted) const {
    return make_ack(ids.crypto, ids.keys[0], 0, 1, kRound, 0, std::move(accepted));
  }

  Witness witness(decltype(Witness::body) body) const {
    Witness w;
    w.committee = 0;
    w.accused = 0;
    w.body = std::move(body);
    return w;
  }
};

std::vector<Candidate> candidates(const oracle::Identities& ids, std::size_t count) {
  std::vector<Candidate> out;
  for (NodeId i = 0; i < count; ++i) out.push_back({i, ids.keys[i].public_key});
  return out;
}

}  // namespace

TEST_CASE("sortition maps the VRF output to a committee and verifies") {
  oracle::Identities ids(20);
  for (NodeId i = 0; i < 20; ++i) {
    const auto s = crypto_sort(ids.crypto, ids.keys[i], kRound, kRandomness, 7);
    CHECK(s.committee == s.vrf.hash.mod(7));
    const auto& pk = ids.keys[i].public_key;
    CHECK(verify_sortition(ids.crypto, pk, kRound, kRandomness, 7, s.committee, s.vrf));
    CHECK_FALSE(
        verify_sortition(ids.crypto, pk, kRound, kRandomness, 7, (s.committee + 1) % 7, s.vrf));
    CHECK_FALSE(verify_sortition(ids.crypto, pk, kRound + 1, kRandomness, 7, s.committee, s.vrf));
    CHECK(crypto_sort(ids.crypto, ids.keys[i], kRound, kRandomness, 1).committee == 0);
  }
  CHECK_THROWS_AS(crypto_sort(ids.crypto, ids.keys[0], kRound, kRandomness, 0), Error);
}

TEST_CASE("sortition spreads nodes uniformly over committees") {
  constexpr std::size_t n = 10000;
  constexpr unsigned m = 10;
  std::vector<std::uint64_t> counts(m, 0);
  crypto::SimCrypto crypto({});
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = crypto::derive_keypair(21, "sortition", i);
    ++counts[crypto_sort(crypto, k, kRound, kRandomness, m).committee];
  }
  const double x2 = oracle::chi_square_uniform(counts);
  INFO("chi-square " << x2);
  CHECK(x2 < oracle::chi_square_critical_999(m - 1));
}

TEST_CASE("canonical member lists ignore order and duplicates") {
  Scene s;
  auto shuffled = s.members;
  Rng rng(4);
  for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
  shuffled.push_back(shuffled.front());
  CHECK(canonical_members(shuffled) == canonical_members(s.members));
  CHECK(build_semi_commitment(shuffled) == build_semi_commitment(s.members));
  auto fewer = s.members;
  fewer.pop_back();
  CHECK(build_semi_commitment(fewer) != build_semi_commitment(s.members));
  auto moved = s.members;
  moved.back().address = "elsewhere";
  CHECK(build_semi_commitment(moved) != build_semi_commitment(s.members));
}

TEST_CASE("a well formed claim has no defect") {
  Scene s;
  REQUIRE(s.certs.size() > 3);
  REQUIRE(!s.outsiders.empty());
  const auto c = s.honest_claim();
  CHECK(c.digest == build_semi_commitment(s.members));
  CHECK_FALSE(claim_defect(c, s.ctx).has_value());
  for (const auto& cert : s.certs) CHECK(cert_valid(cert, s.ctx));
}

TEST_CASE("claim defects are detected") {
  Scene s;
  SUBCASE("forged proof") {
    auto certs = s.certs;
    certs[0].vrf.hash.bytes[5] ^= 1;
    auto d = claim_defect(s.claim(s.members, certs), s.ctx);
    REQUIRE(d.has_value());
    CHECK(d->starts_with("invalid proof"));
  }
  SUBCASE("member of another committee") {
    const NodeId x = s.outsiders[0];
    auto members = s.members;
    auto certs = s.certs;
    const auto vrf = crypto_sort(s.ids.crypto, s.ids.keys[x], kRound, kRandomness, kCommittees).vrf;
    members.push_back(entry_of(s.ids, x));
    certs.push_back(MemberCert{entry_of(s.ids, x), vrf});
    CHECK_FALSE(cert_valid(certs.back(), s.ctx));
    CHECK(claim_defect(s.claim(members, certs), s.ctx).has_value());
  }
  SUBCASE("member listed without proof") {
    auto members = s.members;
    members.push_back(entry_of(s.ids, s.outsiders[0]));
    auto d = claim_defect(s.claim(members, s.certs), s.ctx);
    REQUIRE(d.has_value());
    CHECK(d->find("without proof") != std::string::npos);
  }
  SUBCASE("proof for an unlisted member") {
    auto members = s.members;
    members.pop_back();
    CHECK(claim_defect(s.claim(members, s.certs), s.ctx) == "proof for an unlisted member");
  }
  SUBCASE("signed by someone else") {
    CHECK(claim_defect(s.claim(s.members, s.certs, 1), s.ctx) == "bad leader signature");
  }
  SUBCASE("unregistered identity") {
    s.ctx.registered = [&](NodeId id) { return id != s.certs[0].entry.id; };
    CHECK_FALSE(cert_valid(s.certs[0], s.ctx));
    CHECK(claim_defect(s.honest_claim(), s.ctx).has_value());
  }
}

TEST_CASE("attested digest needs a referee majority of valid signatures") {
  Scene s;
  const auto c = s.honest_claim();
  CHECK(attested_digest(s.attest(c, {37, 38}), s.ctx) == c.digest);
  CHECK_FALSE(attested_digest(s.attest(c, {37}), s.ctx).has_value());
  CHECK_FALSE(attested_digest(s.attest(c, {37, 37}), s.ctx).has_value());
  // A non-referee signer does not count.
  CHECK_FALSE(attested_digest(s.attest(c, {37, 5}), s.ctx).has_value());
  // A referee id with someone else's signature does not count.
  auto forged = s.attest(c, {37, 1});
  forged[1].referee = 38;
  CHECK_FALSE(attested_digest(forged, s.ctx).has_value());
  // Attestations for another version are ignored.
  s.ctx.version = 1;
  CHECK_FALSE(attested_digest(s.attest(c, {37, 38, 39}), s.ctx).has_value());
}

TEST_CASE("a partial member finds nothing against an honest leader") {
  Scene s;
  const auto c = s.honest_claim();
  const std::vector<MemberCert> some(s.certs.begin(), s.certs.begin() + 2);
  CHECK_FALSE(
      verify_commitment_as_partial(c, {s.ack(some)}, s.attest(c, {37, 38, 39}), s.ctx).has_value());
}

TEST_CASE("a partial member proves an omitted acknowledged member") {
  Scene s;
  auto members = s.members;
  auto certs = s.certs;
  const auto dropped = certs.back();
  certs.pop_back();
  members.erase(std::find(members.begin(), members.end(), dropped.entry));
  const auto c = s.claim(members, certs);
  REQUIRE_FALSE(claim_defect(c, s.ctx).has_value());
  auto w = verify_commitment_as_partial(c, {s.ack({dropped})}, {}, s.ctx);
  REQUIRE(w.has_value());
  CHECK(std::holds_alternative<OmissionWitness>(w->body));
  CHECK(validate_witness(*w, s.ctx));
  // The same ack does not convict a claim that lists the member.
  CHECK_FALSE(validate_witness(s.witness(OmissionWitness{s.honest_claim(), s.ack({dropped})}), s.ctx));
}

TEST_CASE("a partial member proves a digest mismatch") {
  Scene s;
  const auto honest = s.honest_claim();
  auto fewer = s.members;
  fewer.pop_back();
  auto fewer_certs = s.certs;
  fewer_certs.pop_back();
  const auto shown = s.claim(fewer, fewer_certs);  // copy given to the partial set
  const auto atts = s.attest(honest, {37, 38, 39});  // referee holds another digest
  auto w = verify_commitment_as_partial(shown, {}, atts, s.ctx);
  REQUIRE(w.has_value());
  CHECK(std::holds_alternative<MismatchWitness>(w->body));
  std::string why;
  CHECK(validate_witness(*w, s.ctx, &why));
}

TEST_CASE("fabricated witnesses are rejected") {
  Scene s;
  const auto honest = s.honest_claim();
  std::string why;
  SUBCASE("claim signed by the accuser") {
    auto fake = s.claim(s.members, {}, 1);
    CHECK_FALSE(validate_witness(s.witness(MismatchWitness{fake, s.attest(honest, {37, 38})}),
                                 s.ctx, &why));
    CHECK_FALSE(validate_witness(s.witness(CertificateWitness{fake}), s.ctx, &why));
  }
  SUBCASE("attestations forged by the accuser") {
    auto other = honest;
    other.digest = crypto::hash(std::string_view{"other"});
    auto atts = s.attest(other, {1, 1, 1});
    for (std::size_t i = 0; i < atts.size(); ++i) atts[i].referee = 37 + static_cast<NodeId>(i);
    CHECK_FALSE(validate_witness(s.witness(MismatchWitness{honest, atts}), s.ctx, &why));
    CHECK(why == "no referee majority");
  }
  SUBCASE("only a third of the referee") {
    auto other = honest;
    other.digest = crypto::hash(std::string_view{"other"});
    CHECK_FALSE(
        validate_witness(s.witness(MismatchWitness{honest, s.attest(other, {37})}), s.ctx, &why));
    CHECK(why == "no referee majority");
  }
  SUBCASE("claim that matches the referee") {
    CHECK_FALSE(validate_witness(
        s.witness(MismatchWitness{honest, s.attest(honest, {37, 38, 39})}), s.ctx, &why));
  }
  SUBCASE("well formed claim as certificate evidence") {
    CHECK_FALSE(validate_witness(s.witness(CertificateWitness{honest}), s.ctx, &why));
    CHECK(why == "claim is well formed");
  }
  SUBCASE("accusing someone other than the leader") {
    auto w = s.witness(CertificateWitness{honest});
    w.accused = 1;
    CHECK_FALSE(validate_witness(w, s.ctx, &why));
  }
}

TEST_CASE("leader selection breaks reputation ties by hash") {
  oracle::Identities ids(12);
  const auto all = candidates(ids, 12);
  reputation::ReputationTable reps{{0, 5.0}, {1, 3.0}, {2, 3.0}, {3, 1.0}};
  SelectionParams p;
  p.committees = 2;
  p.lambda = 2;
  p.referee_target = 2;
  p.min_referee = 1;
  const auto a = select_key_members(all, reps, kRandomness, 2, p);
  const NodeId tied = leader_tiebreak(kRandomness, ids.keys[1].public_key) <
                              leader_tiebreak(kRandomness, ids.keys[2].public_key)
                          ? 1
                          : 2;
  CHECK(a.leaders == std::vector<NodeId>{0, tied});
  // Roles are disjoint and complete.
  std::set<NodeId> seen(a.leaders.begin(), a.leaders.end());
  for (NodeId r : a.referee) CHECK(seen.insert(r).second);
  REQUIRE(a.partial_sets.size() == 2);
  for (const auto& set : a.partial_sets) {
    CHECK(set.size() == 2);
    for (NodeId x : set) CHECK(seen.insert(x).second);
  }
  CHECK(a.referee.size() >= 1);
}

TEST_CASE("selection refuses too few participants") {
  oracle::Identities ids(5);
  SelectionParams p;
  p.committees = 2;
  p.lambda = 1;
  p.min_referee = 2;
  try {
    select_key_members(candidates(ids, 5), {}, kRandomness, 2, p);
    FAIL("selection succeeded");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InsufficientParticipants);
  }
}

TEST_CASE("maximum referee difficulty admits everyone left over") {
  oracle::Identities ids(30);
  SelectionParams p;
  p.committees = 3;
  p.lambda = 2;
  p.referee_target = 5;
  p.referee_difficulty = Digest::max();
  const auto a = select_key_members(candidates(ids, 30), {}, kRandomness, 2, p);
  CHECK(a.referee.size() == 30 - 3 - 3 * 2);
}

TEST_CASE("referee size matches its target on average") {
  oracle::Identities ids(100);
  const auto all = candidates(ids, 100);
  SelectionParams p;
  p.committees = 2;
  p.lambda = 1;
  p.referee_target = 10;
  p.min_referee = 0;
  constexpr int trials = 1000;
  const double pool = 98.0;
  const double prob = 10.0 / pool;
  double sum = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto r = crypto::hash(std::string_view{fmt::format("seed {}", t)});
    sum += static_cast<double>(select_key_members(all, {}, r, 2, p).referee.size());
  }
  const double mean = sum / trials;
  const double sigma = std::sqrt(pool * prob * (1.0 - prob) / trials);
  INFO("mean referee size " << mean);
  CHECK(std::abs(mean - 10.0) < 3.0 * sigma);
}

TEST_CASE("difficulty thresholds") {
  CHECK(difficulty_for(1.0) == Digest::max());
  CHECK(difficulty_for(0.0) == Digest{});
  const auto half = difficulty_for(0.5);
  CHECK(half.bytes[0] == 0x80);
  CHECK(meets(Digest{}, half));
  CHECK_FALSE(meets(Digest::max(), half));
  CHECK_THROWS_AS(difficulty_for(-0.1), Error);
}

TEST_CASE("beacon output depends on every revealed contribution") {
  std::vector<BeaconReveal> reveals;
  for (NodeId i = 0; i < 5; ++i)
    reveals.push_back({i, crypto::hash(std::string_view{fmt::format("c{}", i)})});
  auto reversed = reveals;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(combine_reveals(reveals) == combine_reveals(reversed));
  auto fewer = reveals;
  fewer.pop_back();
  CHECK(combine_reveals(fewer) != combine_reveals(reveals));
  CHECK(beacon_commitment(1, reveals[0].contribution) !=
        beacon_commitment(1, reveals[1].contribution));
  CHECK(beacon_commitment(1, reveals[0].contribution) !=
        beacon_commitment(2, reveals[0].contribution));
}

TEST_CASE("withholding reveals gives at most one outcome per subset") {
  // The last `a` referees are corrupted and may withhold any subset.
  for (unsigned a = 0; a <= 4; ++a) {
    std::vector<BeaconReveal> honest, corrupt;
    for (NodeId i = 0; i < 5; ++i)
      honest.push_back({i, crypto::hash(std::string_view{fmt::format("h{}", i)})});
    for (NodeId i = 0; i < a; ++i)
      corrupt.push_back({10 + i, crypto::hash(std::string_view{fmt::format("x{}", i)})});
    std::set<Digest> outcomes;
    for (unsigned mask = 0; mask < (1u << a); ++mask) {
      auto r = honest;
      for (unsigned i = 0; i < a; ++i)
        if (mask & (1u << i)) r.push_back(corrupt[i]);
      outcomes.insert(combine_reveals(r));
    }
    CHECK(outcomes.size() <= (1u << a));
    CHECK(outcomes.size() >= 1);
  }
}

TEST_CASE("registration tickets") {
  oracle::Identities ids(1);
  const auto& pk = ids.keys[0].public_key;
  const auto easy = solve_ticket(3, kRandomness, pk, Digest::max());
  CHECK(easy.nonce == 0);
  CHECK(easy.attempts == 1);
  RegisterMsg msg{3, 0, pk, easy.nonce};
  CHECK_NOTHROW(check_ticket(msg, 3, kRandomness, Digest::max()));
  try {
    check_ticket(msg, 4, kRandomness, Digest::max());
    FAIL("ticket for the wrong round accepted");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BadTicket);
  }
  CHECK_THROWS_AS(check_ticket(msg, 3, kRandomness, Digest{}), Error);

  const auto d = difficulty_for(1.0 / 256.0);
  const auto t = solve_ticket(3, kRandomness, pk, d);
  msg.nonce = t.nonce;
  CHECK_NOTHROW(check_ticket(msg, 3, kRandomness, d));
  CHECK_THROWS_AS(check_ticket(msg, 3, crypto::hash(std::string_view{"other"}), d), Error);
}

TEST_CASE("ticket work is geometric with the expected mean") {
  const auto d = difficulty_for(1.0 / 256.0);
  constexpr int tickets = 2000;
  double sum = 0.0;
  for (int i = 0; i < tickets; ++i) {
    const auto k = crypto::derive_keypair(31, "ticket", static_cast<std::uint64_t>(i));
    sum += static_cast<double>(solve_ticket(3, kRandomness, k.public_key, d).attempts);
  }
  const double mean = sum / tickets;
  const double sigma = std::sqrt(255.0 * 256.0) / std::sqrt(static_cast<double>(tickets));
  INFO("mean attempts " << mean);
  CHECK(std::abs(mean - 256.0) < 3.0 * sigma);
}
