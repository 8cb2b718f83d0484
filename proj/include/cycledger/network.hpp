#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <string_view>
#include <vector>

#include "cycledger/messages.hpp"
#include "cycledger/rng.hpp"
#include "cycledger/types.hpp"

namespace cycledger::net {

enum class ChannelClass : std::uint8_t { IntraCommittee, KeyLink, PartialSync, Local };
std::string_view to_string(ChannelClass c);

using MessagePtr = std::shared_ptr<const Message>;

struct Envelope {
  NodeId from = kNoNode;
  NodeId to = kNoNode;
  MessagePtr payload;
  Tick sent_at = 0;
  Tick deliver_at = 0;
  ChannelClass cls = ChannelClass::Local;
  std::uint64_t sequence = 0;
};

enum class DelayPolicy : std::uint8_t { Random, Max, Min };

struct NetworkParams {
  Tick delta = 1;
  Tick gamma = 3;
  Tick partial_sync_cap = 30;  // PartialSync delays fall in (0, cap]
  DelayPolicy policy = DelayPolicy::Random;
};

// Who may talk to whom this round. Nodes inside one committee (leader,
// partial set and commons alike) are fully connected, as are referee members
// among themselves; key members link to each other and to the referee.
class Topology {
 public:
  explicit Topology(std::size_t nodes = 0) { reset(nodes); }

  void reset(std::size_t nodes);
  void set_committee(NodeId id, CommitteeId k);
  void set_key(NodeId id) { key_.at(id) = true; }
  void set_referee(NodeId id) { referee_.at(id) = true; }

  std::size_t size() const { return committee_.size(); }
  std::optional<CommitteeId> committee(NodeId id) const;
  bool is_key(NodeId id) const { return key_.at(id); }
  bool is_referee(NodeId id) const { return referee_.at(id); }

  // Channel for a message, or nullopt when there is no link for it.
  std::optional<ChannelClass> classify(NodeId from, NodeId to, const Message& msg) const;

 private:
  static constexpr CommitteeId kNone = static_cast<CommitteeId>(-1);
  std::vector<CommitteeId> committee_;
  std::vector<bool> key_;
  std::vector<bool> referee_;
};

// Adversarial control over a corrupted sender's envelope: return nullopt to
// drop it or a delivery time within the class bound.
using AdversaryHook = std::function<std::optional<Tick>(const Envelope&)>;

class SimNetwork {
 public:
  SimNetwork(std::size_t nodes, NetworkParams params, std::uint64_t seed);

  Topology& topology() { return topology_; }
  const Topology& topology() const { return topology_; }
  const NetworkParams& params() const { return params_; }
  Tick bound(ChannelClass c) const;

  void set_corrupted(std::vector<bool> corrupted) { corrupted_ = std::move(corrupted); }
  void set_adversary(AdversaryHook hook) { adversary_ = std::move(hook); }
  void set_trace(std::ostream* out) { trace_ = out; }

  // Throws UnknownNode or NoChannel.
  void send(NodeId from, NodeId to, MessagePtr msg);
  // Same as send per target; the sender itself is skipped.
  void broadcast(NodeId from, std::span<const NodeId> targets, const MessagePtr& msg);
  // Local wake-up for `node` at absolute time `at` (clamped to now).
  void timer(NodeId node, Tick at, MessagePtr msg);

  // Advances to the next delivery time and returns everything due then, in
  // sequence order. Empty when nothing is pending.
  std::vector<Envelope> step();

  Tick now() const { return now_; }
  bool idle() const { return queue_.empty(); }
  std::size_t pending() const { return queue_.size(); }
  std::optional<Tick> next_time() const;

  std::uint64_t delivered() const { return delivered_; }
  std::uint64_t dropped() const { return dropped_; }
  std::uint64_t bound_violations() const { return violations_; }

 private:
  struct Later {
    bool operator()(const Envelope& a, const Envelope& b) const {
      if (a.deliver_at != b.deliver_at) return a.deliver_at > b.deliver_at;
      return a.sequence > b.sequence;
    }
  };

  void enqueue(Envelope env);

  Topology topology_;
  NetworkParams params_;
  Rng rng_;
  std::vector<bool> corrupted_;
  AdversaryHook adversary_;
  std::ostream* trace_ = nullptr;
  std::priority_queue<Envelope, std::vector<Envelope>, Later> queue_;
  Tick now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t delivered_ = 0;
  std::uint64_t dropped_ = 0;
  std::uint64_t violations_ = 0;
};

}  // namespace cycledger::net
