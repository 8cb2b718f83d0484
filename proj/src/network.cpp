#include "cycledger/network.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace cycledger::net {

std::string_view to_string(ChannelClass c) {
  switch (c) {
    case ChannelClass::IntraCommittee: return "intra";
    case ChannelClass::KeyLink: return "key";
    case ChannelClass::PartialSync: return "psync";
    case ChannelClass::Local: return "local";
  }
  return "?";
}

void Topology::reset(std::size_t nodes) {
  committee_.assign(nodes, kNone);
  key_.assign(nodes, false);
  referee_.assign(nodes, false);
}

void Topology::set_committee(NodeId id, CommitteeId k) { committee_.at(id) = k; }

std::optional<CommitteeId> Topology::committee(NodeId id) const {
  if (id >= committee_.size() || committee_[id] == kNone) return std::nullopt;
  return committee_[id];
}

std::optional<ChannelClass> Topology::classify(NodeId from, NodeId to, const Message& msg) const {
  if (from == to) return ChannelClass::Local;
  if (referee_[from] && referee_[to]) return ChannelClass::IntraCommittee;
  if (committee_[from] != kNone && committee_[from] == committee_[to])
    return ChannelClass::IntraCommittee;
  const bool fk = key_[from], tk = key_[to];
  if ((fk && (tk || referee_[to])) || (tk && referee_[from])) return ChannelClass::KeyLink;
  // Messages that cross committee boundaries by design ride the slow network.
  if (std::holds_alternative<RegisterMsg>(msg) || std::holds_alternative<BlockMsg>(msg) ||
      std::holds_alternative<NewLeaderMsg>(msg) || std::holds_alternative<HandoffMsg>(msg)) {
    return ChannelClass::PartialSync;
  }
  return std::nullopt;
}

SimNetwork::SimNetwork(std::size_t nodes, NetworkParams params, std::uint64_t seed)
    : topology_(nodes),
      params_(params),
      rng_(Rng::derive(seed, "network")),
      corrupted_(nodes, false) {
  if (params_.delta < 1 || params_.gamma < params_.delta || params_.partial_sync_cap < 1) {
    throw Error(Errc::ConfigError, "network bounds must satisfy 1 <= delta <= gamma");
  }
}

Tick SimNetwork::bound(ChannelClass c) const {
  switch (c) {
    case ChannelClass::IntraCommittee: return params_.delta;
    case ChannelClass::KeyLink: return params_.gamma;
    case ChannelClass::PartialSync: return params_.partial_sync_cap;
    case ChannelClass::Local: return 0;
  }
  return 0;
}

void SimNetwork::send(NodeId from, NodeId to, MessagePtr msg) {
  if (from >= topology_.size() || to >= topology_.size()) {
    throw Error(Errc::UnknownNode, fmt::format("send {} -> {}", from, to));
  }
  auto cls = topology_.classify(from, to, *msg);
  if (!cls || *cls == ChannelClass::Local) {
    throw Error(Errc::NoChannel, fmt::format("no link {} -> {} for {}", from, to, tag_of(*msg)));
  }
  const Tick cap = bound(*cls);
  Tick delay = 1;
  switch (params_.policy) {
    case DelayPolicy::Random: delay = rng_.between(1, cap); break;
    case DelayPolicy::Max: delay = cap; break;
    case DelayPolicy::Min: delay = 1; break;
  }
  Envelope env{from, to, std::move(msg), now_, now_ + delay, *cls, 0};
  if (corrupted_[from] && adversary_) {
    auto at = adversary_(env);
    if (!at) {
      ++dropped_;
      return;
    }
    env.deliver_at = std::clamp<Tick>(*at, now_ + 1, now_ + cap);
  }
  enqueue(std::move(env));
}

void SimNetwork::broadcast(NodeId from, std::span<const NodeId> targets, const MessagePtr& msg) {
  for (NodeId to : targets)
    if (to != from) send(from, to, msg);
}

void SimNetwork::timer(NodeId node, Tick at, MessagePtr msg) {
  if (node >= topology_.size()) throw Error(Errc::UnknownNode, fmt::format("timer {}", node));
  enqueue(Envelope{node, node, std::move(msg), now_, std::max(at, now_), ChannelClass::Local, 0});
}

void SimNetwork::enqueue(Envelope env) {
  env.sequence = next_seq_++;
  queue_.push(std::move(env));
}

std::optional<Tick> SimNetwork::next_time() const {
  if (queue_.empty()) return std::nullopt;
  return queue_.top().deliver_at;
}

std::vector<Envelope> SimNetwork::step() {
  std::vector<Envelope> out;
  if (queue_.empty()) return out;
  now_ = queue_.top().deliver_at;
  while (!queue_.empty() && queue_.top().deliver_at == now_) {
    out.push_back(queue_.top());
    queue_.pop();
  }
  for (const auto& env : out) {
    if (env.cls == ChannelClass::Local) continue;
    ++delivered_;
    const Tick d = env.deliver_at - env.sent_at;
    if (d < 1 || d > bound(env.cls)) ++violations_;
    if (trace_) {
      *trace_ << env.deliver_at << '\t' << env.from << '\t' << env.to << '\t'
              << to_string(env.cls) << '\t' << tag_of(*env.payload) << '\n';
    }
  }
  return out;
}

}  // namespace cycledger::net
