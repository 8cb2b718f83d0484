#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cycledger/consensus.hpp"
#include "cycledger/messages.hpp"
#include "cycledger/reputation.hpp"

namespace cycledger::committee {

using crypto::Digest;

// ---- sortition ---------------------------------------------------------------

struct Sortition {
  CommitteeId committee = 0;
  crypto::VrfOutput vrf;
};

crypto::Bytes sortition_input(Round round, const Digest& randomness);
Sortition crypto_sort(const crypto::CryptoProvider& crypto, const crypto::KeyPair& keys,
                      Round round, const Digest& randomness, std::uint32_t committees);
// True iff the proof verifies and maps the holder to `committee`.
bool verify_sortition(const crypto::CryptoProvider& crypto, const crypto::PublicKey& pk,
                      Round round, const Digest& randomness, std::uint32_t committees,
                      CommitteeId committee, const crypto::VrfOutput& vrf);

// ---- member lists ------------------------------------------------------------

// Sorted ascending by public key bytes, duplicates removed.
std::vector<MemberEntry> canonical_members(std::vector<MemberEntry> entries);
Digest build_semi_commitment(const std::vector<MemberEntry>& members);

CommitmentClaim make_claim(const crypto::CryptoProvider& crypto, const crypto::KeyPair& leader_keys,
                           NodeId leader, Round round, CommitteeId committee,
                           std::uint32_t version, std::vector<MemberEntry> members,
                           std::vector<MemberCert> certs);

// What an observer needs to judge evidence against committee `committee`.
struct JudgeContext {
  const crypto::CryptoProvider* crypto = nullptr;
  const consensus::Directory* dir = nullptr;
  Round round = 0;
  Digest randomness;
  std::uint32_t committees = 1;
  consensus::Roster referee;
  CommitteeId committee = 0;
  NodeId leader = kNoNode;      // current leader of the committee
  std::uint32_t version = 0;    // current commitment version
  std::vector<NodeId> key_members;  // members admitted without a sortition proof
  std::function<bool(NodeId)> registered;
};

// Checks one cert: registered identity with the directory key and a
// sortition proof for the committee in the context.
bool cert_valid(const MemberCert& cert, const JudgeContext& ctx);

// Empty when the claim is well formed: signed by its leader, digest equal to
// the canonical member list, every proof-less member a key member, every
// cert valid and listed.
std::optional<std::string> claim_defect(const CommitmentClaim& claim, const JudgeContext& ctx);

// Digest agreed by more than half of the referee for (round, committee,
// version, leader), if any.
std::optional<Digest> attested_digest(const std::vector<RefereeAttestation>& atts,
                                      const JudgeContext& ctx);

RefereeAttestation make_attestation(const crypto::CryptoProvider& crypto,
                                    const crypto::KeyPair& keys, NodeId referee,
                                    const CommitmentClaim& claim);

KeyListAckMsg make_ack(const crypto::CryptoProvider& crypto, const crypto::KeyPair& leader_keys,
                       NodeId leader, NodeId partial, Round round, CommitteeId committee,
                       std::vector<MemberCert> accepted);

// Legs of a certified decision towards `target`: ids of decided txs with an
// output in that shard.
std::vector<Digest> derive_legs(const DecisionBody& decision, CommitteeId target,
                                std::uint32_t committees);

// Empty when a CROSS message is consistent with the attested member list of
// its source committee.
std::optional<std::string> cross_defect(const CrossListMsg& cross, const Digest& attested,
                                        const JudgeContext& ctx);

// Objective witness check. `reason` receives a short explanation on failure.
bool validate_witness(const Witness& w, const JudgeContext& ctx, std::string* reason = nullptr);

// Partial-member audit of the leader's claim against what it has seen:
// the claim with proofs, acknowledgements from the leader, and referee
// attestations for the committee.
std::optional<Witness> verify_commitment_as_partial(
    const CommitmentClaim& claim, const std::vector<KeyListAckMsg>& acks,
    const std::vector<RefereeAttestation>& attestations, const JudgeContext& ctx);

// ---- key member selection ----------------------------------------------------

struct Candidate {
  NodeId id = kNoNode;
  crypto::PublicKey pk;
};

struct SelectionParams {
  std::uint32_t committees = 1;
  std::uint32_t lambda = 1;
  std::uint32_t referee_target = 1;  // expected referee size
  std::uint32_t min_referee = 1;
  std::optional<Digest> referee_difficulty;  // overrides the retargeted value
  std::optional<Digest> partial_difficulty;
};

Digest role_hash(Round next_round, const Digest& randomness, const crypto::PublicKey& pk,
                 Role role);
Digest leader_tiebreak(const Digest& randomness, const crypto::PublicKey& pk);
// Threshold d with Pr[H <= d] = p for uniform H (to 2^-64).
Digest difficulty_for(double p);
inline bool meets(const Digest& h, const Digest& difficulty) { return h <= difficulty; }

// Top-m reputation leaders; referee by difficulty filter (topped up to
// min_referee by lowest hash); lambda partial members per committee by role
// hash. Throws InsufficientParticipants.
KeyAssignment select_key_members(const std::vector<Candidate>& participants,
                                 const reputation::ReputationTable& reputations,
                                 const Digest& randomness, Round next_round,
                                 const SelectionParams& params);

// ---- randomness --------------------------------------------------------------

Digest beacon_commitment(NodeId referee, const Digest& contribution);
// Hash of the XOR of the contributions whose reveal matches a commitment.
Digest combine_reveals(const std::vector<BeaconReveal>& reveals);

// ---- registration ------------------------------------------------------------

Digest ticket_hash(Round target_round, const Digest& randomness, const crypto::PublicKey& pk,
                   std::uint64_t nonce);

struct Ticket {
  std::uint64_t nonce = 0;
  std::uint64_t attempts = 0;
};

Ticket solve_ticket(Round target_round, const Digest& randomness, const crypto::PublicKey& pk,
                    const Digest& difficulty, std::uint64_t start_nonce = 0);
// Throws BadTicket.
void check_ticket(const RegisterMsg& msg, Round expected_round, const Digest& randomness,
                  const Digest& difficulty);

}  // namespace cycledger::committee
