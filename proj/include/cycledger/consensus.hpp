#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "cycledger/crypto.hpp"
#include "cycledger/types.hpp"

namespace cycledger::consensus {

using crypto::Digest;
using crypto::Signature;

// What an inside-committee consensus instance is agreeing on.
enum class Topic : std::uint8_t {
  Commitment,
  Decision,
  CrossDecision,
  Scores,
  Accusation,
  Beacon,
  Block,
  Handoff,
  Test,
};

std::string_view to_string(Topic topic);

struct InstanceKey {
  NodeId proposer = kNoNode;
  Round round = 0;
  std::uint64_t seq = 0;
  Topic topic = Topic::Test;

  auto operator<=>(const InstanceKey&) const = default;
};

// Immutable consensus payload; defined with the wire messages.
struct Payload;
using PayloadPtr = std::shared_ptr<const Payload>;
// Digest fixed when the payload was built by make_payload.
Digest payload_digest(const Payload& payload);

// SIG_l<PROPOSE, r, sn, H(M)>.
struct ProposeHeader {
  InstanceKey key;
  Digest digest;
  Signature sig;

  crypto::Bytes signed_bytes() const;
  bool operator==(const ProposeHeader&) const = default;
};

struct ProposeMsg {
  ProposeHeader header;
  PayloadPtr payload;
};

// SIG_i<ECHO, r, sn, H(M), i> plus the relayed leader header.
struct EchoMsg {
  InstanceKey key;
  Digest digest;
  NodeId voter = kNoNode;
  Signature sig;
  ProposeHeader relayed;

  crypto::Bytes signed_bytes() const;
};

// SIG_i<CONFIRM, r, sn, H(M), i> with the echoes that justified it.
struct ConfirmMsg {
  InstanceKey key;
  Digest digest;
  NodeId voter = kNoNode;
  Signature sig;
  std::vector<EchoMsg> echo_list;

  crypto::Bytes signed_bytes() const;
};

struct ConsensusResult {
  InstanceKey key;
  Digest digest;
  PayloadPtr payload;
  std::vector<ConfirmMsg> sig_list;
};

// Two leader-signed PROPOSE headers with equal (round, seq) and different
// digests.
struct EquivocationWitness {
  ProposeHeader first;
  ProposeHeader second;
};

// The PKI: node id to public key, known to every participant.
class Directory {
 public:
  Directory() = default;
  explicit Directory(std::vector<crypto::PublicKey> keys) : keys_(std::move(keys)) {}

  const crypto::PublicKey* key_of(NodeId id) const {
    return id < keys_.size() ? &keys_[id] : nullptr;
  }
  std::size_t size() const { return keys_.size(); }

 private:
  std::vector<crypto::PublicKey> keys_;
};

// Committee view used for quorum counting: strictly more than half of the
// full roster, silent members included.
class Roster {
 public:
  Roster() = default;
  explicit Roster(std::vector<NodeId> members);

  bool contains(NodeId id) const;
  std::size_t size() const { return members_.size(); }
  std::size_t quorum() const { return members_.size() / 2 + 1; }
  const std::vector<NodeId>& members() const { return members_; }

 private:
  std::vector<NodeId> members_;  // sorted, unique
};

bool verify_header(const ProposeHeader& h, const Directory& dir,
                   const crypto::CryptoProvider& crypto);
bool verify_echo(const EchoMsg& e, const Directory& dir, const crypto::CryptoProvider& crypto);
bool verify_confirm(const ConfirmMsg& c, const Directory& dir,
                    const crypto::CryptoProvider& crypto);

// True iff `cert` holds valid confirms for (key, digest) from more than half
// of `roster`.
bool verify_certificate(const std::vector<ConfirmMsg>& cert, const InstanceKey& key,
                        const Digest& digest, const Roster& roster, const Directory& dir,
                        const crypto::CryptoProvider& crypto);

// Witness iff both headers verify under the same proposer's key and share
// (round, seq) with different digests.
std::optional<EquivocationWitness> detect_equivocation(const ProposeHeader& a,
                                                       const ProposeHeader& b,
                                                       const Directory& dir,
                                                       const crypto::CryptoProvider& crypto);

// Per-node PROPOSE -> ECHO -> CONFIRM state machine. The engine never touches
// the network; the host broadcasts what it returns and loops its own messages
// back in.
class Engine {
 public:
  struct Output {
    std::optional<EchoMsg> echo;        // broadcast to the roster
    std::optional<ConfirmMsg> confirm;  // send to the proposer
    std::optional<ConsensusResult> result;
    std::optional<EquivocationWitness> witness;
    std::optional<Errc> error;
    bool locked = false;  // this node just crossed the echo quorum
  };

  Engine(NodeId self, crypto::KeyPair keys, const crypto::CryptoProvider& crypto,
         const Directory& dir);

  NodeId self() const { return self_; }
  Round round() const { return round_; }
  // Drops all state from earlier rounds.
  void begin_round(Round r);

  // Leader side. Throws DuplicateSeq when seq was already used this round.
  ProposeMsg propose(Round r, std::uint64_t seq, Topic topic, PayloadPtr payload);
  // A proposal with an arbitrary digest, used by adversarial leaders.
  ProposeMsg sign_header(const InstanceKey& key, const Digest& digest, PayloadPtr payload) const;

  Output on_propose(const Roster& roster, const ProposeMsg& msg, bool payload_acceptable);
  Output on_echo(const Roster& roster, const EchoMsg& msg);
  Output on_confirm(const Roster& roster, const ConfirmMsg& msg);

  // Called at the instance deadline. Returns true if the instance (as
  // proposer) ended without a result; it is then closed.
  bool expire(const InstanceKey& key);
  bool decided(const InstanceKey& key) const;
  bool aborted(const InstanceKey& key) const;
  std::uint64_t next_seq() const { return next_seq_; }
  // Held leader payload for a digest, if any.
  PayloadPtr payload_for(const InstanceKey& key, const Digest& digest) const;

  std::uint64_t discarded() const { return discarded_; }

 private:
  struct Instance {
    std::optional<ProposeHeader> header;  // first leader header seen
    PayloadPtr payload;
    bool echoed = false;
    bool confirmed = false;
    bool aborted = false;
    std::map<Digest, std::map<NodeId, EchoMsg>> echoes;
    // proposer side
    bool mine = false;
    Digest proposed;
    PayloadPtr proposed_payload;
    std::map<NodeId, ConfirmMsg> confirms;
    bool decided = false;
    bool expired = false;
  };

  Output absorb_header(Instance& inst, const ProposeHeader& h);
  void maybe_confirm(const Roster& roster, const InstanceKey& key, Instance& inst,
                     const Digest& digest, Output& out);

  NodeId self_;
  crypto::KeyPair keys_;
  const crypto::CryptoProvider& crypto_;
  const Directory& dir_;
  Round round_ = 0;
  std::uint64_t next_seq_ = 1;
  std::set<std::uint64_t> used_seqs_;
  std::map<InstanceKey, Instance> instances_;
  std::uint64_t discarded_ = 0;
};

}  // namespace cycledger::consensus
