#include "cycledger/committee.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

namespace cycledger::committee {
namespace {

using crypto::ByteWriter;

bool signed_by(NodeId id, const crypto::Bytes& body, const crypto::Signature& sig,
               const JudgeContext& ctx) {
  const auto* pk = ctx.dir->key_of(id);
  return pk != nullptr && ctx.crypto->verify(*pk, body, sig);
}

}  // namespace

crypto::Bytes sortition_input(Round round, const Digest& randomness) {
  ByteWriter w;
  w.str("COMMON_MEMBER").u32(round).digest(randomness);
  return std::move(w).take();
}

Sortition crypto_sort(const crypto::CryptoProvider& crypto, const crypto::KeyPair& keys,
                      Round round, const Digest& randomness, std::uint32_t committees) {
  if (committees == 0) throw Error(Errc::DomainError, "committee count must be positive");
  const auto vrf = crypto.vrf_eval(keys.secret_key, sortition_input(round, randomness));
  return Sortition{static_cast<CommitteeId>(vrf.hash.mod(committees)), vrf};
}

bool verify_sortition(const crypto::CryptoProvider& crypto, const crypto::PublicKey& pk,
                      Round round, const Digest& randomness, std::uint32_t committees,
                      CommitteeId committee, const crypto::VrfOutput& vrf) {
  if (committees == 0 || vrf.hash.mod(committees) != committee) return false;
  return crypto.vrf_verify(pk, sortition_input(round, randomness), vrf.hash, vrf.proof);
}

std::vector<MemberEntry> canonical_members(std::vector<MemberEntry> entries) {
  std::sort(entries.begin(), entries.end(), [](const MemberEntry& a, const MemberEntry& b) {
    if (a.pk != b.pk) return a.pk < b.pk;
    return std::tie(a.address, a.id) < std::tie(b.address, b.id);
  });
  entries.erase(std::unique(entries.begin(), entries.end(),
                            [](const MemberEntry& a, const MemberEntry& b) { return a.pk == b.pk; }),
                entries.end());
  return entries;
}

Digest build_semi_commitment(const std::vector<MemberEntry>& members) {
  return member_list_digest(canonical_members(members));
}

CommitmentClaim make_claim(const crypto::CryptoProvider& crypto, const crypto::KeyPair& leader_keys,
                           NodeId leader, Round round, CommitteeId committee,
                           std::uint32_t version, std::vector<MemberEntry> members,
                           std::vector<MemberCert> certs) {
  CommitmentClaim c;
  c.round = round;
  c.committee = committee;
  c.leader = leader;
  c.version = version;
  c.members = canonical_members(std::move(members));
  c.digest = member_list_digest(c.members);
  std::sort(certs.begin(), certs.end());
  c.certs = std::move(certs);
  c.sig = crypto.sign(leader_keys.secret_key, c.signed_bytes());
  return c;
}

bool cert_valid(const MemberCert& cert, const JudgeContext& ctx) {
  const auto* pk = ctx.dir->key_of(cert.entry.id);
  if (pk == nullptr || *pk != cert.entry.pk) return false;
  if (ctx.registered && !ctx.registered(cert.entry.id)) return false;
  return verify_sortition(*ctx.crypto, cert.entry.pk, ctx.round, ctx.randomness, ctx.committees,
                          ctx.committee, cert.vrf);
}

std::optional<std::string> claim_defect(const CommitmentClaim& claim, const JudgeContext& ctx) {
  if (!signed_by(claim.leader, claim.signed_bytes(), claim.sig, ctx)) return "bad leader signature";
  if (claim.digest != member_list_digest(claim.members)) return "digest does not match list";
  if (claim.members != canonical_members(claim.members)) return "list not canonical";
  std::set<crypto::PublicKey> proven;
  for (const auto& cert : claim.certs) {
    if (!cert_valid(cert, ctx)) return fmt::format("invalid proof for node {}", cert.entry.id);
    proven.insert(cert.entry.pk);
  }
  std::set<crypto::PublicKey> listed;
  for (const auto& e : claim.members) {
    listed.insert(e.pk);
    if (proven.contains(e.pk)) continue;
    const bool key = std::find(ctx.key_members.begin(), ctx.key_members.end(), e.id) !=
                     ctx.key_members.end();
    const auto* pk = ctx.dir->key_of(e.id);
    if (!key || pk == nullptr || *pk != e.pk) {
      return fmt::format("node {} listed without proof", e.id);
    }
  }
  for (const auto& pk : proven)
    if (!listed.contains(pk)) return "proof for an unlisted member";
  return std::nullopt;
}

std::optional<Digest> attested_digest(const std::vector<RefereeAttestation>& atts,
                                      const JudgeContext& ctx) {
  std::map<Digest, std::set<NodeId>> votes;
  for (const auto& a : atts) {
    if (a.round != ctx.round || a.committee != ctx.committee || a.version != ctx.version ||
        a.leader != ctx.leader || !ctx.referee.contains(a.referee)) {
      continue;
    }
    if (!signed_by(a.referee, a.signed_bytes(), a.sig, ctx)) continue;
    votes[a.digest].insert(a.referee);
  }
  for (const auto& [d, who] : votes)
    if (who.size() >= ctx.referee.quorum()) return d;
  return std::nullopt;
}

RefereeAttestation make_attestation(const crypto::CryptoProvider& crypto,
                                    const crypto::KeyPair& keys, NodeId referee,
                                    const CommitmentClaim& claim) {
  RefereeAttestation a;
  a.round = claim.round;
  a.committee = claim.committee;
  a.version = claim.version;
  a.leader = claim.leader;
  a.digest = claim.digest;
  a.referee = referee;
  a.sig = crypto.sign(keys.secret_key, a.signed_bytes());
  return a;
}

KeyListAckMsg make_ack(const crypto::CryptoProvider& crypto, const crypto::KeyPair& leader_keys,
                       NodeId leader, NodeId partial, Round round, CommitteeId committee,
                       std::vector<MemberCert> accepted) {
  KeyListAckMsg ack;
  ack.round = round;
  ack.committee = committee;
  ack.leader = leader;
  ack.partial = partial;
  std::sort(accepted.begin(), accepted.end());
  ack.accepted = std::move(accepted);
  ack.list_digest = cert_list_digest(ack.accepted);
  ack.sig = crypto.sign(leader_keys.secret_key, ack.signed_bytes());
  return ack;
}

std::vector<Digest> derive_legs(const DecisionBody& decision, CommitteeId target,
                                std::uint32_t committees) {
  std::vector<Digest> legs;
  for (const auto& tx : decision.decided_txs()) {
    const auto shards = ledger::leg_shards(tx, decision.committee, committees);
    if (std::binary_search(shards.begin(), shards.end(), target)) legs.push_back(tx.id());
  }
  std::sort(legs.begin(), legs.end());
  return legs;
}

std::optional<std::string> cross_defect(const CrossListMsg& cross, const Digest& attested,
                                        const JudgeContext& ctx) {
  if (member_list_digest(cross.members) != attested) return "member list differs from commitment";
  const auto* body = payload_as<DecisionBody>(cross.decision.payload);
  if (body == nullptr || body->kind != ListKind::Intra || body->committee != cross.source ||
      body->round != cross.round) {
    return "payload is not the source decision";
  }
  if (cross.decision.key.topic != Topic::Decision || cross.decision.key.round != cross.round ||
      cross.decision.key.proposer != cross.leader) {
    return "certificate for another instance";
  }
  std::vector<NodeId> ids;
  for (const auto& e : cross.members) ids.push_back(e.id);
  if (!consensus::verify_certificate(cross.decision.cert, cross.decision.key,
                                     cross.decision.payload->digest, consensus::Roster(ids),
                                     *ctx.dir, *ctx.crypto)) {
    return "certificate does not verify against the member list";
  }
  auto legs = cross.legs;
  std::sort(legs.begin(), legs.end());
  if (legs != derive_legs(*body, cross.target, ctx.committees)) return "leg list misreported";
  return std::nullopt;
}

bool validate_witness(const Witness& w, const JudgeContext& ctx, std::string* reason) {
  auto fail = [&](std::string why) {
    if (reason) *reason = std::move(why);
    return false;
  };
  if (w.committee != ctx.committee || w.accused != ctx.leader)
    return fail("accused is not the current leader");
  if (const auto* e = std::get_if<consensus::EquivocationWitness>(&w.body)) {
    if (e->first.key.proposer != w.accused) return fail("headers not from the accused");
    if (e->first.key.round != ctx.round) return fail("stale round");
    if (!consensus::detect_equivocation(e->first, e->second, *ctx.dir, *ctx.crypto))
      return fail("headers do not conflict");
    return true;
  }
  if (const auto* m = std::get_if<MismatchWitness>(&w.body)) {
    const auto& c = m->claim;
    if (c.leader != w.accused || c.round != ctx.round || c.committee != ctx.committee ||
        c.version != ctx.version || !signed_by(c.leader, c.signed_bytes(), c.sig, ctx)) {
      return fail("claim not signed by the accused for this commitment");
    }
    const auto agreed = attested_digest(m->agreed, ctx);
    if (!agreed) return fail("no referee majority");
    if (*agreed == c.digest) return fail("claim matches the referee digest");
    return true;
  }
  if (const auto* c = std::get_if<CertificateWitness>(&w.body)) {
    const auto& claim = c->claim;
    if (claim.leader != w.accused || claim.round != ctx.round ||
        claim.committee != ctx.committee ||
        !signed_by(claim.leader, claim.signed_bytes(), claim.sig, ctx)) {
      return fail("claim not signed by the accused");
    }
    if (!claim_defect(claim, ctx)) return fail("claim is well formed");
    return true;
  }
  if (const auto* o = std::get_if<OmissionWitness>(&w.body)) {
    const auto& claim = o->claim;
    const auto& ack = o->ack;
    if (claim.leader != w.accused || claim.round != ctx.round ||
        claim.committee != ctx.committee ||
        !signed_by(claim.leader, claim.signed_bytes(), claim.sig, ctx)) {
      return fail("claim not signed by the accused");
    }
    if (ack.leader != w.accused || ack.round != ctx.round || ack.committee != ctx.committee ||
        ack.list_digest != cert_list_digest(ack.accepted) ||
        !signed_by(ack.leader, ack.signed_bytes(), ack.sig, ctx)) {
      return fail("acknowledgement not signed by the accused");
    }
    for (const auto& cert : ack.accepted) {
      if (!cert_valid(cert, ctx)) continue;
      const bool listed = std::any_of(claim.members.begin(), claim.members.end(),
                                      [&](const MemberEntry& e) { return e.pk == cert.entry.pk; });
      if (!listed) return true;
    }
    return fail("every acknowledged member is listed");
  }
  if (const auto* x = std::get_if<CrossWitness>(&w.body)) {
    const auto& cross = x->cross;
    if (cross.leader != w.accused || cross.source != ctx.committee || cross.round != ctx.round ||
        !signed_by(cross.leader, cross.signed_bytes(), cross.sig, ctx)) {
      return fail("cross list not signed by the accused");
    }
    const auto agreed = attested_digest(x->agreed, ctx);
    if (!agreed) return fail("no referee majority");
    if (!cross_defect(cross, *agreed, ctx)) return fail("cross list is consistent");
    return true;
  }
  return fail("unknown witness kind");
}

std::optional<Witness> verify_commitment_as_partial(
    const CommitmentClaim& claim, const std::vector<KeyListAckMsg>& acks,
    const std::vector<RefereeAttestation>& attestations, const JudgeContext& ctx) {
  Witness w;
  w.committee = ctx.committee;
  w.accused = ctx.leader;
  if (claim.leader != ctx.leader) return std::nullopt;
  if (claim_defect(claim, ctx)) {
    w.body = CertificateWitness{claim};
    if (validate_witness(w, ctx)) return w;
  }
  for (const auto& ack : acks) {
    w.body = OmissionWitness{claim, ack};
    if (validate_witness(w, ctx)) return w;
  }
  if (auto agreed = attested_digest(attestations, ctx); agreed && *agreed != claim.digest) {
    w.body = MismatchWitness{claim, attestations};
    if (validate_witness(w, ctx)) return w;
  }
  return std::nullopt;
}

Digest role_hash(Round next_round, const Digest& randomness, const crypto::PublicKey& pk,
                 Role role) {
  ByteWriter w;
  w.u32(next_round).digest(randomness).key(pk).str(to_string(role));
  return crypto::hash(w);
}

Digest leader_tiebreak(const Digest& randomness, const crypto::PublicKey& pk) {
  ByteWriter w;
  w.digest(randomness).key(pk);
  return crypto::hash(w);
}

Digest difficulty_for(double p) {
  if (!(p >= 0.0)) throw Error(Errc::DomainError, "difficulty probability must be >= 0");
  if (p >= 1.0) return Digest::max();
  // Top 64 bits carry floor(p * 2^64); the rest stay zero.
  const long double scaled = std::ldexp(static_cast<long double>(p), 64);
  const auto top = static_cast<std::uint64_t>(std::floor(scaled));
  Digest d;
  for (int i = 0; i < 8; ++i) d.bytes[i] = static_cast<std::uint8_t>(top >> (56 - 8 * i));
  return d;
}

KeyAssignment select_key_members(const std::vector<Candidate>& participants,
                                 const reputation::ReputationTable& reputations,
                                 const Digest& randomness, Round next_round,
                                 const SelectionParams& params) {
  const std::size_t m = params.committees;
  const std::size_t needed = m * (params.lambda + 1) + params.min_referee;
  if (m == 0 || participants.size() < needed) {
    throw Error(Errc::InsufficientParticipants,
                fmt::format("{} participants, need {}", participants.size(), needed));
  }
  auto rep = [&](NodeId id) {
    auto it = reputations.find(id);
    return it == reputations.end() ? 0.0 : it->second;
  };

  std::vector<Candidate> ranked = participants;
  std::map<NodeId, Digest> tiebreak;
  for (const auto& c : ranked) tiebreak[c.id] = leader_tiebreak(randomness, c.pk);
  std::sort(ranked.begin(), ranked.end(), [&](const Candidate& a, const Candidate& b) {
    const double ra = rep(a.id), rb = rep(b.id);
    if (ra != rb) return ra > rb;
    return tiebreak[a.id] < tiebreak[b.id];
  });

  KeyAssignment out;
  for (std::size_t i = 0; i < m; ++i) out.leaders.push_back(ranked[i].id);
  std::vector<Candidate> pool(ranked.begin() + static_cast<std::ptrdiff_t>(m), ranked.end());

  // Referee: difficulty filter, topped up by lowest role hash.
  const Digest ref_d = params.referee_difficulty.value_or(
      difficulty_for(static_cast<double>(params.referee_target) / static_cast<double>(pool.size())));
  std::vector<std::pair<Digest, Candidate>> ref_hashes;
  for (const auto& c : pool)
    ref_hashes.emplace_back(role_hash(next_round, randomness, c.pk, Role::Referee), c);
  std::sort(ref_hashes.begin(), ref_hashes.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::set<NodeId> taken(out.leaders.begin(), out.leaders.end());
  const std::size_t ref_cap = pool.size() - m * params.lambda;
  for (const auto& [h, c] : ref_hashes) {
    const bool pass = meets(h, ref_d);
    if (!pass && out.referee.size() >= params.min_referee) break;
    if (out.referee.size() >= ref_cap) break;
    out.referee.push_back(c.id);
    taken.insert(c.id);
  }
  std::sort(out.referee.begin(), out.referee.end());

  // Partial sets: lambda lowest role hashes per committee among nodes that
  // pass the filter; shortfalls are filled from the lowest leftover hashes.
  const Digest part_d = params.partial_difficulty.value_or(Digest::max());
  std::vector<std::pair<Digest, NodeId>> part_hashes;
  for (const auto& c : pool) {
    if (taken.contains(c.id)) continue;
    part_hashes.emplace_back(role_hash(next_round, randomness, c.pk, Role::PartialSet), c.id);
  }
  std::sort(part_hashes.begin(), part_hashes.end());
  out.partial_sets.assign(m, {});
  std::vector<NodeId> leftover;
  for (const auto& [h, id] : part_hashes) {
    auto& set = out.partial_sets[h.mod(m)];
    if (meets(h, part_d) && set.size() < params.lambda) {
      set.push_back(id);
    } else {
      leftover.push_back(id);
    }
  }
  std::size_t next = 0;
  for (auto& set : out.partial_sets) {
    while (set.size() < params.lambda) {
      if (next >= leftover.size())
        throw Error(Errc::InsufficientParticipants, "not enough nodes for partial sets");
      set.push_back(leftover[next++]);
    }
  }
  return out;
}

Digest beacon_commitment(NodeId referee, const Digest& contribution) {
  ByteWriter w;
  w.str("beacon").u32(referee).digest(contribution);
  return crypto::hash(w);
}

Digest combine_reveals(const std::vector<BeaconReveal>& reveals) {
  Digest acc;
  for (const auto& r : reveals)
    for (std::size_t i = 0; i < acc.bytes.size(); ++i) acc.bytes[i] ^= r.contribution.bytes[i];
  ByteWriter w;
  w.str("randomness").digest(acc);
  return crypto::hash(w);
}

Digest ticket_hash(Round target_round, const Digest& randomness, const crypto::PublicKey& pk,
                   std::uint64_t nonce) {
  ByteWriter w;
  w.u32(target_round).digest(randomness).key(pk).u64(nonce);
  return crypto::hash(w);
}

Ticket solve_ticket(Round target_round, const Digest& randomness, const crypto::PublicKey& pk,
                    const Digest& difficulty, std::uint64_t start_nonce) {
  Ticket t{start_nonce, 0};
  while (true) {
    ++t.attempts;
    if (meets(ticket_hash(target_round, randomness, pk, t.nonce), difficulty)) return t;
    ++t.nonce;
  }
}

void check_ticket(const RegisterMsg& msg, Round expected_round, const Digest& randomness,
                  const Digest& difficulty) {
  if (msg.target_round != expected_round) {
    throw Error(Errc::BadTicket, fmt::format("ticket for round {}, expected {}", msg.target_round,
                                             expected_round));
  }
  if (!meets(ticket_hash(msg.target_round, randomness, msg.pk, msg.nonce), difficulty)) {
    throw Error(Errc::BadTicket, fmt::format("ticket of node {} misses the difficulty", msg.node));
  }
}

}  // namespace cycledger::committee
