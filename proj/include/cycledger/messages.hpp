#pragma once

#include <cstdint>
#include <memory>
#include <string_view>
#include <variant>
#include <vector>

#include "cycledger/consensus.hpp"
#include "cycledger/ledger.hpp"
#include "cycledger/member.hpp"
#include "cycledger/reputation.hpp"

namespace cycledger {

using consensus::ConfirmMsg;
using consensus::EchoMsg;
using consensus::InstanceKey;
using consensus::PayloadPtr;
using consensus::ProposeMsg;
using consensus::Topic;
using crypto::Digest;
using crypto::Signature;

enum class Phase : std::uint8_t {
  Configuration,
  Commitment,
  Intra,
  Inter,
  Reputation,
  Selection,
  Block,
  Recovery,
};
inline constexpr std::size_t kPhaseCount = 8;
std::string_view to_string(Phase phase);

// ---- signed building blocks ------------------------------------------------

// Canonical member list digest: entries sorted by public key, each encoded as
// length-prefixed key bytes and length-prefixed address.
Digest member_list_digest(const std::vector<MemberEntry>& sorted_members);

// A leader's semi-commitment claim. The signature covers the digest only, so
// the referee copy (without proofs) and the partial-set copy (with proofs)
// carry the same signed statement when the leader is honest.
struct CommitmentClaim {
  Round round = 0;
  CommitteeId committee = 0;
  NodeId leader = kNoNode;
  std::uint32_t version = 0;  // bumps each time the committee gets a new leader
  Digest digest;
  std::vector<MemberEntry> members;
  std::vector<MemberCert> certs;  // empty on the referee copy
  Signature sig;

  crypto::Bytes signed_bytes() const;
};

struct RefereeAttestation {
  Round round = 0;
  CommitteeId committee = 0;
  std::uint32_t version = 0;
  NodeId leader = kNoNode;
  Digest digest;
  NodeId referee = kNoNode;
  Signature sig;

  crypto::Bytes signed_bytes() const;
};

struct KeyListMsg {
  Round round = 0;
  CommitteeId committee = 0;
  NodeId sender = kNoNode;
  std::vector<MemberCert> certs;
  Signature sig;

  crypto::Bytes signed_bytes() const;
};

// Leader acknowledgement of the certs it accepted from a partial member.
struct KeyListAckMsg {
  Round round = 0;
  CommitteeId committee = 0;
  NodeId leader = kNoNode;
  NodeId partial = kNoNode;
  std::vector<MemberCert> accepted;
  Digest list_digest;
  Signature sig;

  crypto::Bytes signed_bytes() const;
};
Digest cert_list_digest(const std::vector<MemberCert>& certs);

enum class ListKind : std::uint8_t { Intra, Cross };

struct VoteRecord {
  NodeId voter = kNoNode;
  reputation::VoteVector entries;
  Signature sig;
};

// ---- consensus payload bodies ----------------------------------------------

struct ImpeachVote {
  Round round = 0;
  CommitteeId committee = 0;
  NodeId accused = kNoNode;
  Digest witness;
  NodeId voter = kNoNode;
  Signature sig;

  crypto::Bytes signed_bytes() const;
};

struct CommitmentBody {
  CommitmentClaim claim;
};

struct DecisionBody {
  Round round = 0;
  CommitteeId committee = 0;
  std::uint64_t list_id = 0;
  ListKind kind = ListKind::Intra;
  CommitteeId source = 0;  // input shard for cross legs
  std::shared_ptr<const std::vector<ledger::Transaction>> txs;
  std::vector<std::uint8_t> decided;  // one flag per tx
  std::vector<VoteRecord> votes;

  std::vector<ledger::Transaction> decided_txs() const;
};

struct ScoreBody {
  Round round = 0;
  CommitteeId committee = 0;
  Digest decision;
  std::vector<reputation::ScoreEntry> scores;
};

struct Witness;
using WitnessPtr = std::shared_ptr<const Witness>;

// Referee-internal agreement to expel a leader (Accusation topic).
struct ExpelBody {
  Round round = 0;
  CommitteeId committee = 0;
  std::uint32_t version = 0;
  NodeId accused = kNoNode;
  NodeId successor = kNoNode;
  WitnessPtr witness;  // null when the leader never sent a usable claim
  std::vector<ImpeachVote> votes;
};

struct BeaconReveal {
  NodeId referee = kNoNode;
  Digest contribution;
};

struct BeaconBody {
  Round round = 0;
  std::vector<BeaconReveal> reveals;
  Digest value;
};

struct BlockBody {
  ledger::Block block;
};

struct HandoffBody {
  Round round = 0;
  CommitteeId committee = 0;
  Digest utxo_digest;
  std::vector<ledger::Transaction> remaining;
};

struct TestBody {
  std::vector<std::uint8_t> data;
};

using PayloadBody = std::variant<CommitmentBody, DecisionBody, ScoreBody, ExpelBody, BeaconBody,
                                 BlockBody, HandoffBody, TestBody>;

}  // namespace cycledger

namespace cycledger::consensus {

struct Payload {
  PayloadBody body;
  Digest digest;
  std::size_t weight = 1;
};

}  // namespace cycledger::consensus

namespace cycledger {

PayloadPtr make_payload(PayloadBody body);
Digest body_digest(const PayloadBody& body);
std::size_t body_weight(const PayloadBody& body);

template <typename T>
const T* payload_as(const PayloadPtr& p) {
  return p ? std::get_if<T>(&p->body) : nullptr;
}

// A consensus result as shipped to other committees.
struct CertifiedPayload {
  InstanceKey key;
  PayloadPtr payload;
  std::vector<ConfirmMsg> cert;
};

// ---- witnesses ---------------------------------------------------------------

struct MismatchWitness {
  CommitmentClaim claim;  // leader-signed copy held by the partial member
  std::vector<RefereeAttestation> agreed;  // referee majority on another digest
};

struct CertificateWitness {
  CommitmentClaim claim;  // copy with proofs, at least one of which fails
};

struct OmissionWitness {
  CommitmentClaim claim;
  KeyListAckMsg ack;  // leader acknowledged a cert the claim leaves out
};

struct CrossListMsg {
  Round round = 0;
  CommitteeId source = 0;
  CommitteeId target = 0;
  NodeId leader = kNoNode;
  CertifiedPayload decision;  // source committee's decision certificate
  std::vector<MemberEntry> members;  // S of the source committee
  std::vector<Digest> legs;  // ids of decided txs with outputs in the target shard
  Signature sig;

  crypto::Bytes signed_bytes() const;
};

struct CrossWitness {
  CrossListMsg cross;
  std::vector<RefereeAttestation> agreed;  // attested S digest of the source
};

struct Witness {
  CommitteeId committee = 0;
  NodeId accused = kNoNode;
  std::variant<consensus::EquivocationWitness, MismatchWitness, CertificateWitness,
               OmissionWitness, CrossWitness>
      body;

  Digest digest() const;
  std::string_view kind() const;
};

// ---- wire messages -------------------------------------------------------------

struct ConfigMsg {
  Round round = 0;
  MemberCert cert;
};

struct MemListMsg {
  Round round = 0;
  CommitteeId committee = 0;
  NodeId sender = kNoNode;
  std::vector<MemberCert> certs;
};

struct MemberMsg {
  Round round = 0;
  MemberCert cert;
};

struct ClaimMsg {
  std::shared_ptr<const CommitmentClaim> claim;
};

struct AttestationMsg {
  RefereeAttestation att;
};

struct TxListMsg {
  Round round = 0;
  CommitteeId committee = 0;
  std::uint64_t list_id = 0;
  ListKind kind = ListKind::Intra;
  CommitteeId source = 0;
  NodeId leader = kNoNode;
  std::shared_ptr<const std::vector<ledger::Transaction>> txs;
  // Cross lists carry the source evidence so members can check it.
  std::shared_ptr<const CrossListMsg> evidence;
  std::vector<RefereeAttestation> evidence_attestations;
  Signature sig;

  crypto::Bytes signed_bytes() const;
};

struct VoteMsg {
  Round round = 0;
  CommitteeId committee = 0;
  std::uint64_t list_id = 0;
  VoteRecord vote;

  crypto::Bytes signed_bytes() const;  // of the embedded vote
};
crypto::Bytes vote_signed_bytes(Round round, CommitteeId committee, std::uint64_t list_id,
                                const VoteRecord& vote);

enum class ReportKind : std::uint8_t { Intra, Inter, Score, Handoff };

struct ReportMsg {
  ReportKind kind = ReportKind::Intra;
  CommitteeId committee = 0;
  CertifiedPayload result;
};

struct CrossMsg {
  std::shared_ptr<const CrossListMsg> cross;
  NodeId forwarder = kNoNode;  // set when a partial member relays it
};

struct CrossResultMsg {
  Round round = 0;
  CommitteeId source = 0;
  CommitteeId target = 0;
  CertifiedPayload result;
};

struct AccuseMsg {
  Round round = 0;
  NodeId accuser = kNoNode;
  WitnessPtr witness;
};

// Evidence against a foreign leader, handed to that committee's partial set.
struct WitnessForwardMsg {
  Round round = 0;
  NodeId forwarder = kNoNode;
  WitnessPtr witness;
};

struct ImpeachVoteMsg {
  ImpeachVote vote;
};

struct ImpeachMsg {
  Round round = 0;
  CommitteeId committee = 0;
  std::uint32_t version = 0;
  NodeId accused = kNoNode;
  NodeId accuser = kNoNode;
  WitnessPtr witness;
  std::vector<ImpeachVote> votes;
};

struct NewLeaderMsg {
  Round round = 0;
  CommitteeId committee = 0;
  std::uint32_t version = 0;  // the new version
  NodeId evicted = kNoNode;
  NodeId leader = kNoNode;
  NodeId referee = kNoNode;
  Signature sig;

  crypto::Bytes signed_bytes() const;
};

struct RegisterMsg {
  Round target_round = 0;
  NodeId node = kNoNode;
  crypto::PublicKey pk;
  std::uint64_t nonce = 0;
};

struct BeaconCommitMsg {
  Round round = 0;
  NodeId referee = kNoNode;
  Digest commitment;
};

struct BeaconRevealMsg {
  Round round = 0;
  BeaconReveal reveal;
};

struct BlockMsg {
  CertifiedPayload block;
};

struct HandoffMsg {
  CommitteeId committee = 0;
  CertifiedPayload handoff;
};

enum class TimerKind : std::uint8_t {
  RoundStart,
  SendKeyList,
  Commit,
  ClaimDeadline,
  SlotFallback,
  IntraStart,
  VoteDeadline,
  ConsensusDeadline,
  CrossFallback,
  BeaconReveal,
  BeaconPropose,
  BlockPropose,
  Handoff,
};

struct TimerMsg {
  TimerKind kind = TimerKind::RoundStart;
  Round round = 0;
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  InstanceKey key;
  std::shared_ptr<const CrossListMsg> cross;
};

using Message =
    std::variant<ConfigMsg, MemListMsg, MemberMsg, KeyListMsg, KeyListAckMsg, ProposeMsg, EchoMsg,
                 ConfirmMsg, ClaimMsg, AttestationMsg, TxListMsg, VoteMsg, ReportMsg, CrossMsg,
                 CrossResultMsg, AccuseMsg, WitnessForwardMsg, ImpeachVoteMsg, ImpeachMsg,
                 NewLeaderMsg, RegisterMsg, BeaconCommitMsg, BeaconRevealMsg, BlockMsg, HandoffMsg,
                 TimerMsg>;

std::string_view tag_of(const Message& msg);
Phase phase_of(const Message& msg);
// Size in list entries, used for weighted complexity counting.
std::size_t weight_of(const Message& msg);
Phase phase_of(Topic topic);

}  // namespace cycledger
