#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cycledger/consensus.hpp"
#include "cycledger/messages.hpp"
#include "cycledger/rng.hpp"

namespace cycledger::adversary {

// Leader-side view of the two commitment copies before signing.
struct CommitmentTamper {
  std::vector<MemberEntry> referee_members;
  std::vector<MemberEntry> partial_members;
  std::vector<MemberCert> partial_certs;
  std::vector<NodeId> key_members;  // never removed by strategies
  // A registered node outside the committee the leader may smuggle in.
  std::optional<MemberEntry> foreign;
};

// Leader-side view of one outgoing cross-shard list.
struct CrossTamper {
  std::vector<Digest> legs;
  bool send_to_leader = true;
  bool send_to_partial = true;
};

// Material a corrupted partial member can draw on when framing its leader.
struct FramingView {
  Round round = 0;
  CommitteeId committee = 0;
  NodeId self = kNoNode;
  NodeId leader = kNoNode;
  std::uint32_t version = 0;
  const crypto::CryptoProvider* crypto = nullptr;
  crypto::KeyPair keys;
  std::vector<consensus::ProposeHeader> leader_headers;
  std::optional<CommitmentClaim> claim;
  std::vector<NodeId> referee;
  std::vector<MemberCert> outsiders;  // certs the leader never saw
};

class Strategy {
 public:
  virtual ~Strategy() = default;
  virtual std::string_view name() const = 0;

  // Drops every outbound message.
  virtual bool offline() const { return false; }
  // Leader: a conflicting body shown to half of the roster.
  virtual std::optional<PayloadBody> on_propose(Topic topic, const PayloadBody& honest,
                                                Rng& rng) const;
  // Member: rewrites its vote before signing.
  virtual void on_vote(reputation::VoteVector& vote, Rng& rng) const;
  virtual void on_commitment(CommitmentTamper& t, Rng& rng) const;
  virtual void on_cross_shard(CrossTamper& t, Rng& rng) const;
  // Partial member: fabricated witnesses against its leader.
  virtual std::vector<Witness> on_accuse(const FramingView& view, Rng& rng) const;
};

using StrategyPtr = std::shared_ptr<const Strategy>;

std::vector<std::string_view> strategy_names();
// Throws ConfigError for an unknown name.
StrategyPtr make_strategy(std::string_view name);

// Who a corruption request points at; resolved against the assignment of the
// round the corruption becomes active.
struct Target {
  enum class Kind : std::uint8_t { Node, Leader, Partial, Referee } kind = Kind::Node;
  std::uint32_t index = 0;  // node id, committee id, or referee position
  std::uint32_t slot = 0;   // partial-set position
};

struct CorruptionRequest {
  Round round = 0;  // requested at the start of this round
  Target target;
  std::string strategy;
};

struct ActiveCorruption {
  NodeId node = kNoNode;
  StrategyPtr strategy;
};

class CorruptionPlan {
 public:
  CorruptionPlan() = default;
  CorruptionPlan(std::size_t nodes, std::vector<CorruptionRequest> requests);

  const std::vector<CorruptionRequest>& requests() const { return requests_; }
  // Requests from rounds before `round` are active. Resolves targets with
  // `assignment`; throws BudgetExceeded once the active set reaches n/3.
  std::map<NodeId, StrategyPtr> corrupt(Round round, const KeyAssignment& assignment) const;

 private:
  std::size_t nodes_ = 0;
  std::vector<CorruptionRequest> requests_;
};

// Parses `<round>:<target>:<strategy>` where target is `node<i>`,
// `leader@<k>`, `partial@<k>[.<slot>]` or `referee[.<i>]`.
CorruptionRequest parse_request(std::string_view text);

// Shared state among colluding corrupted nodes.
struct Blackboard {
  std::map<NodeId, std::vector<consensus::ProposeHeader>> headers;  // by proposer
  std::map<CommitteeId, CommitmentClaim> claims;
  std::map<CommitteeId, std::vector<MemberCert>> seen_certs;
};

}  // namespace cycledger::adversary
