#include "cycledger/messages.hpp"

#include <algorithm>
#include <bit>

namespace cycledger {
namespace {

using crypto::ByteWriter;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void put_entry(ByteWriter& w, const MemberEntry& e) {
  w.u32(e.id).bytes(e.pk.bytes.bytes).str(e.address);
}

void put_cert(ByteWriter& w, const MemberCert& c) {
  put_entry(w, c.entry);
  w.digest(c.vrf.hash).signature(c.vrf.proof);
}

void put_claim(ByteWriter& w, const CommitmentClaim& c) {
  w.u32(c.round).u32(c.committee).u32(c.leader).u32(c.version).digest(c.digest);
  w.u64(c.members.size());
  for (const auto& e : c.members) put_entry(w, e);
  w.u64(c.certs.size());
  for (const auto& cert : c.certs) put_cert(w, cert);
  w.signature(c.sig);
}

void put_attestation(ByteWriter& w, const RefereeAttestation& a) {
  w.u32(a.round).u32(a.committee).u32(a.version).u32(a.leader).digest(a.digest).u32(a.referee);
  w.signature(a.sig);
}

void put_tx(ByteWriter& w, const ledger::Transaction& tx) {
  w.digest(tx.id()).u64(tx.signatures.size());
  for (const auto& s : tx.signatures) w.signature(s);
}

void put_votes(ByteWriter& w, const std::vector<VoteRecord>& votes) {
  w.u64(votes.size());
  for (const auto& v : votes) {
    w.u32(v.voter).u64(v.entries.size());
    for (auto e : v.entries) w.u8(static_cast<std::uint8_t>(e));
    w.signature(v.sig);
  }
}

void put_key(ByteWriter& w, const InstanceKey& k) {
  w.u32(k.proposer).u32(k.round).u64(k.seq).u8(static_cast<std::uint8_t>(k.topic));
}

void put_header(ByteWriter& w, const consensus::ProposeHeader& h) {
  put_key(w, h.key);
  w.digest(h.digest).signature(h.sig);
}

void put_impeach_votes(ByteWriter& w, const std::vector<ImpeachVote>& votes) {
  w.u64(votes.size());
  for (const auto& v : votes) {
    w.u32(v.round).u32(v.committee).u32(v.accused).digest(v.witness).u32(v.voter);
    w.signature(v.sig);
  }
}

std::size_t txs_size(const std::shared_ptr<const std::vector<ledger::Transaction>>& txs) {
  return txs ? txs->size() : 0;
}

std::size_t certified_weight(const CertifiedPayload& cp) {
  return (cp.payload ? cp.payload->weight : 0) + cp.cert.size();
}

}  // namespace

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Configuration: return "configuration";
    case Phase::Commitment: return "commitment";
    case Phase::Intra: return "intra";
    case Phase::Inter: return "inter";
    case Phase::Reputation: return "reputation";
    case Phase::Selection: return "selection";
    case Phase::Block: return "block";
    case Phase::Recovery: return "recovery";
  }
  return "?";
}

Digest member_list_digest(const std::vector<MemberEntry>& sorted_members) {
  ByteWriter w;
  w.str("member-list").u64(sorted_members.size());
  for (const auto& e : sorted_members) w.bytes(e.pk.bytes.bytes).str(e.address);
  return crypto::hash(w);
}

crypto::Bytes CommitmentClaim::signed_bytes() const {
  ByteWriter w;
  w.str("SEMI_COM").u32(round).u32(committee).u32(leader).u32(version).digest(digest);
  return std::move(w).take();
}

crypto::Bytes RefereeAttestation::signed_bytes() const {
  ByteWriter w;
  w.str("ATTEST").u32(round).u32(committee).u32(version).u32(leader).digest(digest).u32(referee);
  return std::move(w).take();
}

Digest cert_list_digest(const std::vector<MemberCert>& certs) {
  ByteWriter w;
  w.str("cert-list").u64(certs.size());
  for (const auto& c : certs) put_cert(w, c);
  return crypto::hash(w);
}

crypto::Bytes KeyListMsg::signed_bytes() const {
  ByteWriter w;
  w.str("KEY_LIST").u32(round).u32(committee).u32(sender).digest(cert_list_digest(certs));
  return std::move(w).take();
}

crypto::Bytes KeyListAckMsg::signed_bytes() const {
  ByteWriter w;
  w.str("KEY_LIST_ACK").u32(round).u32(committee).u32(leader).u32(partial).digest(list_digest);
  return std::move(w).take();
}

std::vector<ledger::Transaction> DecisionBody::decided_txs() const {
  std::vector<ledger::Transaction> out;
  if (!txs) return out;
  for (std::size_t i = 0; i < txs->size() && i < decided.size(); ++i)
    if (decided[i]) out.push_back((*txs)[i]);
  return out;
}

crypto::Bytes ImpeachVote::signed_bytes() const {
  ByteWriter w;
  w.str("IMPEACH").u32(round).u32(committee).u32(accused).digest(witness).u32(voter);
  return std::move(w).take();
}

crypto::Bytes CrossListMsg::signed_bytes() const {
  ByteWriter w;
  w.str("CROSS").u32(round).u32(source).u32(target).u32(leader);
  put_key(w, decision.key);
  w.digest(decision.payload ? decision.payload->digest : Digest{});
  w.digest(member_list_digest(members)).u64(legs.size());
  for (const auto& d : legs) w.digest(d);
  return std::move(w).take();
}

crypto::Bytes TxListMsg::signed_bytes() const {
  ByteWriter w;
  w.str("TX_LIST").u32(round).u32(committee).u64(list_id).u8(static_cast<std::uint8_t>(kind));
  w.u32(source).u32(leader).u64(txs_size(txs));
  if (txs)
    for (const auto& tx : *txs) w.digest(tx.id());
  return std::move(w).take();
}

crypto::Bytes vote_signed_bytes(Round round, CommitteeId committee, std::uint64_t list_id,
                                const VoteRecord& vote) {
  ByteWriter w;
  w.str("VOTE").u32(round).u32(committee).u64(list_id).u32(vote.voter).u64(vote.entries.size());
  for (auto e : vote.entries) w.u8(static_cast<std::uint8_t>(e));
  return std::move(w).take();
}

crypto::Bytes VoteMsg::signed_bytes() const {
  return vote_signed_bytes(round, committee, list_id, vote);
}

crypto::Bytes NewLeaderMsg::signed_bytes() const {
  ByteWriter w;
  w.str("NEW").u32(round).u32(committee).u32(version).u32(evicted).u32(leader).u32(referee);
  return std::move(w).take();
}

Digest Witness::digest() const {
  ByteWriter w;
  w.str("witness").u32(committee).u32(accused);
  std::visit(Overloaded{
                 [&](const consensus::EquivocationWitness& e) {
                   w.u8(0);
                   put_header(w, e.first);
                   put_header(w, e.second);
                 },
                 [&](const MismatchWitness& m) {
                   w.u8(1);
                   put_claim(w, m.claim);
                   for (const auto& a : m.agreed) put_attestation(w, a);
                 },
                 [&](const CertificateWitness& c) {
                   w.u8(2);
                   put_claim(w, c.claim);
                 },
                 [&](const OmissionWitness& o) {
                   w.u8(3);
                   put_claim(w, o.claim);
                   w.u32(o.ack.partial).digest(o.ack.list_digest).signature(o.ack.sig);
                 },
                 [&](const CrossWitness& x) {
                   w.u8(4);
                   w.raw(x.cross.signed_bytes()).signature(x.cross.sig);
                   for (const auto& a : x.agreed) put_attestation(w, a);
                 },
             },
             body);
  return crypto::hash(w);
}

std::string_view Witness::kind() const {
  static constexpr std::string_view kNames[] = {"equivocation", "commitment-mismatch",
                                                "invalid-certificate", "omission",
                                                "cross-misreport"};
  return kNames[body.index()];
}

Digest body_digest(const PayloadBody& body) {
  ByteWriter w;
  w.str("payload").u8(static_cast<std::uint8_t>(body.index()));
  std::visit(Overloaded{
                 [&](const CommitmentBody& b) { put_claim(w, b.claim); },
                 [&](const DecisionBody& b) {
                   w.u32(b.round).u32(b.committee).u64(b.list_id);
                   w.u8(static_cast<std::uint8_t>(b.kind)).u32(b.source).u64(txs_size(b.txs));
                   if (b.txs)
                     for (const auto& tx : *b.txs) put_tx(w, tx);
                   w.bytes(b.decided);
                   put_votes(w, b.votes);
                 },
                 [&](const ScoreBody& b) {
                   w.u32(b.round).u32(b.committee).digest(b.decision).u64(b.scores.size());
                   for (const auto& s : b.scores)
                     w.u32(s.node).u64(std::bit_cast<std::uint64_t>(s.score));
                 },
                 [&](const ExpelBody& b) {
                   w.u32(b.round).u32(b.committee).u32(b.version).u32(b.accused).u32(b.successor);
                   w.digest(b.witness ? b.witness->digest() : Digest{});
                   put_impeach_votes(w, b.votes);
                 },
                 [&](const BeaconBody& b) {
                   w.u32(b.round).u64(b.reveals.size());
                   for (const auto& r : b.reveals) w.u32(r.referee).digest(r.contribution);
                   w.digest(b.value);
                 },
                 [&](const BlockBody& b) { w.digest(b.block.digest()); },
                 [&](const HandoffBody& b) {
                   w.u32(b.round).u32(b.committee).digest(b.utxo_digest).u64(b.remaining.size());
                   for (const auto& tx : b.remaining) put_tx(w, tx);
                 },
                 [&](const TestBody& b) { w.bytes(b.data); },
             },
             body);
  return crypto::hash(w);
}

std::size_t body_weight(const PayloadBody& body) {
  return std::visit(
      Overloaded{
          [](const CommitmentBody& b) { return 1 + b.claim.members.size() + b.claim.certs.size(); },
          [](const DecisionBody& b) { return 1 + txs_size(b.txs) + b.votes.size(); },
          [](const ScoreBody& b) { return 1 + b.scores.size(); },
          [](const ExpelBody& b) { return 2 + b.votes.size(); },
          [](const BeaconBody& b) { return 1 + b.reveals.size(); },
          [](const BlockBody& b) {
            const auto& blk = b.block;
            std::size_t n = 1 + blk.tx_count() + blk.participants.size() + blk.reputations.size();
            n += blk.next.referee.size() + blk.next.leaders.size();
            for (const auto& p : blk.next.partial_sets) n += p.size();
            return n;
          },
          [](const HandoffBody& b) { return 1 + b.remaining.size(); },
          [](const TestBody&) -> std::size_t { return 1; },
      },
      body);
}

PayloadPtr make_payload(PayloadBody body) {
  auto p = std::make_shared<consensus::Payload>();
  p->digest = body_digest(body);
  p->weight = body_weight(body);
  p->body = std::move(body);
  return p;
}

Phase phase_of(Topic topic) {
  switch (topic) {
    case Topic::Commitment: return Phase::Commitment;
    case Topic::Decision: return Phase::Intra;
    case Topic::CrossDecision: return Phase::Inter;
    case Topic::Scores: return Phase::Reputation;
    case Topic::Accusation: return Phase::Recovery;
    case Topic::Beacon: return Phase::Selection;
    case Topic::Block: return Phase::Block;
    case Topic::Handoff: return Phase::Block;
    case Topic::Test: return Phase::Intra;
  }
  return Phase::Intra;
}

std::string_view tag_of(const Message& msg) {
  static constexpr std::string_view kTags[] = {
      "CONFIG",     "MEM_LIST",     "MEMBER",   "KEY_LIST",      "KEY_LIST_ACK",
      "PROPOSE",    "ECHO",         "CONFIRM",  "SEMI_COM",      "ATTEST",
      "TX_LIST",    "VOTE",         "REPORT",   "CROSS",         "CROSS_RESULT",
      "ACCUSE",     "WITNESS_FWD",  "IMPEACH_VOTE", "IMPEACH",   "NEW",
      "REGISTER",   "BEACON_COMMIT", "BEACON_REVEAL", "BLOCK",   "HANDOFF",
      "TIMER"};
  static_assert(std::size(kTags) == std::variant_size_v<Message>);
  return kTags[msg.index()];
}

Phase phase_of(const Message& msg) {
  return std::visit(
      Overloaded{
          [](const ConfigMsg&) { return Phase::Configuration; },
          [](const MemListMsg&) { return Phase::Configuration; },
          [](const MemberMsg&) { return Phase::Configuration; },
          [](const KeyListMsg&) { return Phase::Commitment; },
          [](const KeyListAckMsg&) { return Phase::Commitment; },
          [](const ProposeMsg& m) { return phase_of(m.header.key.topic); },
          [](const EchoMsg& m) { return phase_of(m.key.topic); },
          [](const ConfirmMsg& m) { return phase_of(m.key.topic); },
          [](const ClaimMsg&) { return Phase::Commitment; },
          [](const AttestationMsg&) { return Phase::Commitment; },
          [](const TxListMsg& m) {
            return m.kind == ListKind::Cross ? Phase::Inter : Phase::Intra;
          },
          [](const VoteMsg&) { return Phase::Intra; },
          [](const ReportMsg& m) {
            switch (m.kind) {
              case ReportKind::Intra: return Phase::Intra;
              case ReportKind::Inter: return Phase::Inter;
              case ReportKind::Score: return Phase::Reputation;
              case ReportKind::Handoff: return Phase::Block;
            }
            return Phase::Intra;
          },
          [](const CrossMsg&) { return Phase::Inter; },
          [](const CrossResultMsg&) { return Phase::Inter; },
          [](const AccuseMsg&) { return Phase::Recovery; },
          [](const WitnessForwardMsg&) { return Phase::Recovery; },
          [](const ImpeachVoteMsg&) { return Phase::Recovery; },
          [](const ImpeachMsg&) { return Phase::Recovery; },
          [](const NewLeaderMsg&) { return Phase::Recovery; },
          [](const RegisterMsg&) { return Phase::Selection; },
          [](const BeaconCommitMsg&) { return Phase::Selection; },
          [](const BeaconRevealMsg&) { return Phase::Selection; },
          [](const BlockMsg&) { return Phase::Block; },
          [](const HandoffMsg&) { return Phase::Block; },
          [](const TimerMsg&) { return Phase::Block; },
      },
      msg);
}

std::size_t weight_of(const Message& msg) {
  return std::visit(
      Overloaded{
          [](const MemListMsg& m) { return std::max<std::size_t>(1, m.certs.size()); },
          [](const KeyListMsg& m) { return std::max<std::size_t>(1, m.certs.size()); },
          [](const KeyListAckMsg& m) { return std::max<std::size_t>(1, m.accepted.size()); },
          [](const ProposeMsg& m) -> std::size_t { return m.payload ? m.payload->weight : 1; },
          [](const ConfirmMsg& m) { return 1 + m.echo_list.size(); },
          [](const ClaimMsg& m) -> std::size_t {
            return m.claim ? 1 + m.claim->members.size() + m.claim->certs.size() : 1;
          },
          [](const TxListMsg& m) {
            std::size_t n = 1 + txs_size(m.txs);
            if (m.evidence) n += certified_weight(m.evidence->decision) + m.evidence->members.size();
            return n + m.evidence_attestations.size();
          },
          [](const VoteMsg& m) { return std::max<std::size_t>(1, m.vote.entries.size()); },
          [](const ReportMsg& m) { return certified_weight(m.result); },
          [](const CrossMsg& m) -> std::size_t {
            return m.cross ? certified_weight(m.cross->decision) + m.cross->members.size() +
                                 m.cross->legs.size()
                           : 1;
          },
          [](const CrossResultMsg& m) { return certified_weight(m.result); },
          [](const ImpeachMsg& m) { return 2 + m.votes.size(); },
          [](const BlockMsg& m) { return certified_weight(m.block); },
          [](const HandoffMsg& m) { return certified_weight(m.handoff); },
          [](const auto&) -> std::size_t { return 1; },
      },
      msg);
}

}  // namespace cycledger

namespace cycledger::consensus {

Digest payload_digest(const Payload& payload) { return payload.digest; }

}  // namespace cycledger::consensus
