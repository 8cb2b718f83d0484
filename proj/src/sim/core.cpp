#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "world.hpp"

namespace cycledger::sim {

std::string_view to_string(MetricRole role) {
  switch (role) {
    case MetricRole::Common: return "common";
    case MetricRole::Key: return "key";
    case MetricRole::Referee: return "referee";
  }
  return "?";
}

Tick RunConfig::min_round_budget() const {
  const Tick cap = partial_sync_cap > 0 ? partial_sync_cap : 10 * gamma;
  return 80 * delta + 22 * gamma + cap;
}

RunConfig RunConfig::resolved() const {
  auto bad = [](std::string_view field, std::string_view why) {
    throw Error(Errc::ConfigError, fmt::format("{}: {}", field, why));
  };
  RunConfig r = *this;
  if (r.n == 0) bad("n", "must be positive");
  if (r.m == 0) bad("m", "must be positive");
  if (r.lambda == 0) bad("lambda", "must be >= 1");
  if (r.rounds == 0) bad("rounds", "must be >= 1");
  if (r.delta < 1) bad("delta", "must be >= 1 tick");
  if (r.gamma < r.delta) bad("gamma", "must be >= delta");
  if (r.partial_sync_cap == 0) r.partial_sync_cap = 10 * r.gamma;
  if (r.partial_sync_cap < 1) bad("partial_sync_cap", "must be positive");
  if (r.c == 0) r.c = r.n / (r.m + 1);
  if (r.c == 0) bad("c", "n / (m + 1) is zero; set c explicitly");
  if (r.min_referee == 0) r.min_referee = (r.c + 1) / 2;
  if (r.users == 0) r.users = 4 * r.m * std::max<std::uint32_t>(r.tx_budget, 1) + 16;
  if (r.coins_per_user == 0) bad("coins_per_user", "must be positive");
  const std::uint64_t needed = std::uint64_t{r.m} * (r.lambda + 1) + r.min_referee;
  if (r.n < needed) {
    bad("n", fmt::format("{} nodes cannot fill {} committees with lambda = {} and a referee of {}",
                         r.n, r.m, r.lambda, r.min_referee));
  }
  for (double p : {r.p_cross, r.invalid_rate})
    if (!(p >= 0.0 && p <= 1.0)) bad("p_cross/invalid_rate", "must lie in [0, 1]");
  if (!(r.pow_probability > 0.0 && r.pow_probability <= 1.0))
    bad("pow_probability", "must lie in (0, 1]");
  if (!(r.corrupt_fraction >= 0.0) || 3.0 * r.corrupt_fraction >= 1.0)
    bad("corrupt_fraction", "must lie in [0, 1/3)");
  adversary::make_strategy(r.corrupt_strategy);
  const Tick min_budget = r.min_round_budget();
  if (r.round_budget == 0) r.round_budget = std::max<Tick>(200, min_budget);
  if (r.round_budget < min_budget)
    bad("round_budget", fmt::format("{} ticks is below the minimum {}", r.round_budget, min_budget));
  return r;
}

World::World(const RunConfig& cfg, std::ostream* trace) : cfg_(cfg.resolved()), trace_(trace) {
  const Tick d = cfg_.delta, g = cfg_.gamma;
  sched_.config_close = 6 * d;
  sched_.commit = 8 * d;
  sched_.claim_deadline = 8 * d + 2 * g + d;
  sched_.intra = 8 * d + 6 * g;
  sched_.window = 6 * d;
  sched_.fallback = 2 * g;
  sched_.block = cfg_.round_budget - (cfg_.partial_sync_cap + 4 * g + 12 * d);
  sched_.beacon_propose = sched_.block - 8 * d;
  sched_.beacon_reveal = sched_.block - 12 * d;

  std::vector<crypto::KeyPair> registry;
  std::vector<crypto::PublicKey> pks;
  for (NodeId i = 0; i < cfg_.n; ++i) {
    node_keys_.push_back(crypto::derive_keypair(cfg_.seed, "node", i));
    pks.push_back(node_keys_.back().public_key);
  }
  WorkloadParams wp;
  wp.committees = cfg_.m;
  wp.users = cfg_.users;
  wp.coins_per_user = cfg_.coins_per_user;
  wp.p_cross = cfg_.p_cross;
  wp.invalid_rate = cfg_.invalid_rate;
  workload_ = std::make_unique<Workload>(wp, cfg_.seed);
  registry = node_keys_;
  registry.insert(registry.end(), workload_->users().begin(), workload_->users().end());
  crypto_ = std::make_unique<crypto::SimCrypto>(registry);
  dir_ = consensus::Directory(pks);

  net::NetworkParams np;
  np.delta = cfg_.delta;
  np.gamma = cfg_.gamma;
  np.partial_sync_cap = cfg_.partial_sync_cap;
  np.policy = cfg_.policy;
  net_ = std::make_unique<net::SimNetwork>(cfg_.n, np, cfg_.seed);
  net_->set_trace(trace_);
  net_->set_adversary([this](const net::Envelope& env) -> std::optional<Tick> {
    auto it = corrupted_.find(env.from);
    if (it != corrupted_.end() && it->second->offline()) return std::nullopt;
    return env.deliver_at;
  });

  plan_ = adversary::CorruptionPlan(cfg_.n, cfg_.corruption);
  if (cfg_.corrupt_fraction > 0.0) {
    Rng rng = Rng::derive(cfg_.seed, "corrupt-fraction");
    std::vector<NodeId> ids(cfg_.n);
    for (NodeId i = 0; i < cfg_.n; ++i) ids[i] = i;
    rng.shuffle(ids);
    const auto count = static_cast<std::size_t>(std::floor(cfg_.corrupt_fraction * cfg_.n));
    fraction_corrupted_.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(count));
  }
}

void World::genesis() {
  ledger::Block g;
  g.round = 0;
  crypto::ByteWriter w;
  w.str("genesis").u64(cfg_.seed);
  const Digest r0 = crypto::hash(w);
  std::vector<committee::Candidate> all;
  for (NodeId i = 0; i < cfg_.n; ++i) {
    all.push_back({i, node_keys_[i].public_key});
    g.participants.push_back(i);
    g.reputations.emplace_back(i, 0.0);
  }
  committee::SelectionParams sp;
  sp.committees = cfg_.m;
  sp.lambda = cfg_.lambda;
  sp.referee_target = cfg_.c;
  sp.min_referee = cfg_.min_referee;
  g.next = committee::select_key_members(all, {}, r0, 1, sp);
  crypto::ByteWriter w1;
  w1.str("randomness").digest(r0).u32(1);
  g.next_randomness = crypto::hash(w1);
  result_.chain.push_back(g);
  state_ = workload_->genesis_state();
}

RunResult World::run() {
  genesis();
  for (Round r = 1; r <= cfg_.rounds; ++r) {
    setup_round(r);
    start_round();
    const Tick end = round_start_ + cfg_.round_budget;
    while (auto next = net_->next_time()) {
      if (*next >= end) break;
      for (const auto& env : net_->step()) deliver(env);
    }
    finish_round();
    if (!metrics_.block_produced) break;
  }
  result_.bound_violations = net_->bound_violations();
  std::set<Digest> packed;
  for (const auto& b : result_.chain)
    for (const auto& set : b.tx_sets)
      for (const auto& tx : set.txs) packed.insert(tx.id());
  for (const auto& id : workload_->submitted_valid())
    if (!packed.contains(id)) ++result_.unpacked_valid;
  result_.cross_submitted = workload_->cross_submitted();
  return std::move(result_);
}

void World::setup_round(Round r) {
  round_ = r;
  round_start_ = static_cast<Tick>(r - 1) * cfg_.round_budget;
  const auto& prev = result_.chain.back();
  assignment_ = prev.next;
  randomness_ = prev.next_randomness;
  participants_ = {prev.participants.begin(), prev.participants.end()};
  reputation_.clear();
  for (const auto& [id, w] : prev.reputations) reputation_[id] = w;

  corrupted_ = plan_.corrupt(r, assignment_);
  if (r >= 1) {
    for (NodeId id : fraction_corrupted_)
      corrupted_.emplace(id, adversary::make_strategy(cfg_.corrupt_strategy));
  }
  if (3 * corrupted_.size() >= cfg_.n && !corrupted_.empty()) {
    throw Error(Errc::BudgetExceeded,
                fmt::format("{} corrupted of {} nodes reaches n/3", corrupted_.size(), cfg_.n));
  }
  std::vector<bool> flags(cfg_.n, false);
  for (const auto& [id, _] : corrupted_) flags[id] = true;
  net_->set_corrupted(flags);

  auto& topo = net_->topology();
  topo.reset(cfg_.n);
  nodes_.clear();
  nodes_.resize(cfg_.n);
  for (NodeId i = 0; i < cfg_.n; ++i) {
    auto& n = nodes_[i];
    n.id = i;
    n.keys = node_keys_[i];
    n.engine = std::make_unique<consensus::Engine>(i, n.keys, *crypto_, dir_);
    n.engine->begin_round(r);
    n.rng = Rng::derive(cfg_.seed, "node", (std::uint64_t{r} << 32) | i);
    if (auto it = corrupted_.find(i); it != corrupted_.end()) n.strategy = it->second;
    n.leader_of = assignment_.leaders;
    n.version_of.assign(cfg_.m, 0);
  }
  for (NodeId id : assignment_.referee) {
    nodes_[id].role = Role::Referee;
    topo.set_referee(id);
  }
  for (CommitteeId k = 0; k < cfg_.m; ++k) {
    auto& l = nodes_[assignment_.leaders[k]];
    l.role = Role::Leader;
    l.committee = k;
    l.leading = true;
    for (NodeId p : assignment_.partial_sets[k]) {
      nodes_[p].role = Role::PartialSet;
      nodes_[p].committee = k;
    }
  }
  for (auto& n : nodes_) {
    if (n.role == Role::Idle && participants_.contains(n.id)) {
      n.role = Role::Common;
      n.sortition = committee::crypto_sort(*crypto_, n.keys, r, randomness_, cfg_.m);
      n.committee = n.sortition->committee;
    }
    if (n.in_committee()) topo.set_committee(n.id, n.committee);
    if (n.is_key()) topo.set_key(n.id);
  }

  intake_.assign(cfg_.m, {});
  std::size_t submitted = 0;
  for (CommitteeId k = 0; k < cfg_.m; ++k) {
    intake_[k] = workload_->intake(k, cfg_.tx_budget, state_, *crypto_);
    submitted += intake_[k].size();
  }

  metrics_ = RoundMetrics{};
  metrics_.round = r;
  metrics_.txs_submitted = submitted;
  node_counts_.assign(cfg_.n, {});
  post_state_.reset();
  post_state_for_.reset();
  block_acceptors_.clear();
  block_by_digest_.clear();
  scores_by_block_.clear();
  proposed_scores_.clear();
  evicted_slots_.clear();

  // Ground truth on sampling failures, for comparison with the analysis.
  std::vector<std::size_t> size(cfg_.m, 0), bad(cfg_.m, 0);
  for (const auto& n : nodes_) {
    if (!n.in_committee()) continue;
    ++size[n.committee];
    if (n.corrupted()) ++bad[n.committee];
  }
  for (CommitteeId k = 0; k < cfg_.m; ++k) {
    if (size[k] > 0 && 2 * bad[k] >= size[k]) ++metrics_.insecure_committees;
    const auto& ps = assignment_.partial_sets[k];
    if (std::all_of(ps.begin(), ps.end(), [&](NodeId p) { return nodes_[p].corrupted(); }))
      ++metrics_.insecure_partial_sets;
  }
  std::size_t bad_ref = 0;
  for (NodeId id : assignment_.referee) bad_ref += nodes_[id].corrupted() ? 1 : 0;
  metrics_.insecure_referee = 2 * bad_ref >= assignment_.referee.size();
  for (const auto& n : nodes_) {
    if (n.role == Role::Idle) continue;
    ++metrics_.role_nodes[static_cast<std::size_t>(metric_role(n.id))];
  }
}

void World::start_round() {
  for (auto& n : nodes_) {
    TimerMsg t;
    t.kind = TimerKind::RoundStart;
    timer(n, 0, t);
  }
}

MetricRole World::metric_role(NodeId id) const {
  switch (nodes_[id].role) {
    case Role::Referee: return MetricRole::Referee;
    case Role::Leader:
    case Role::PartialSet: return MetricRole::Key;
    default: return MetricRole::Common;
  }
}

void World::count(const net::Envelope& env) {
  const auto phase = static_cast<std::size_t>(phase_of(*env.payload));
  const double units = static_cast<double>(weight_of(*env.payload));
  for (NodeId id : {env.from, env.to}) {
    node_counts_[id][0][phase] += 1.0;
    node_counts_[id][1][phase] += units;
  }
}

void World::deliver(const net::Envelope& env) {
  auto& n = nodes_[env.to];
  if (env.cls == net::ChannelClass::Local) {
    on_timer(n, std::get<TimerMsg>(*env.payload));
    return;
  }
  count(env);
  const NodeId from = env.from;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ConfigMsg>) on_config(n, from, m);
        else if constexpr (std::is_same_v<T, MemListMsg>) on_mem_list(n, from, m);
        else if constexpr (std::is_same_v<T, MemberMsg>) on_member(n, from, m);
        else if constexpr (std::is_same_v<T, KeyListMsg>) on_key_list(n, from, m);
        else if constexpr (std::is_same_v<T, KeyListAckMsg>) on_key_list_ack(n, from, m);
        else if constexpr (std::is_same_v<T, consensus::ProposeMsg>) cs_on_propose(n, m);
        else if constexpr (std::is_same_v<T, consensus::EchoMsg>) cs_on_echo(n, m);
        else if constexpr (std::is_same_v<T, consensus::ConfirmMsg>) cs_on_confirm(n, m);
        else if constexpr (std::is_same_v<T, ClaimMsg>) on_claim(n, from, m);
        else if constexpr (std::is_same_v<T, AttestationMsg>) on_attestation(n, m);
        else if constexpr (std::is_same_v<T, TxListMsg>) on_tx_list(n, from, m);
        else if constexpr (std::is_same_v<T, VoteMsg>) on_vote(n, m);
        else if constexpr (std::is_same_v<T, ReportMsg>) on_report(n, from, m);
        else if constexpr (std::is_same_v<T, CrossMsg>) on_cross(n, from, m);
        else if constexpr (std::is_same_v<T, CrossResultMsg>) on_cross_result(n, m);
        else if constexpr (std::is_same_v<T, AccuseMsg>) on_accuse(n, from, m);
        else if constexpr (std::is_same_v<T, WitnessForwardMsg>) on_witness_forward(n, m);
        else if constexpr (std::is_same_v<T, ImpeachVoteMsg>) on_impeach_vote(n, m);
        else if constexpr (std::is_same_v<T, ImpeachMsg>) on_impeach(n, m);
        else if constexpr (std::is_same_v<T, NewLeaderMsg>) on_new_leader(n, m);
        else if constexpr (std::is_same_v<T, RegisterMsg>) on_register(n, from, m);
        else if constexpr (std::is_same_v<T, BeaconCommitMsg>) {
          if (n.role == Role::Referee && m.round == round_)
            n.beacon_commits.emplace(m.referee, m.commitment);
        } else if constexpr (std::is_same_v<T, BeaconRevealMsg>) {
          if (n.role == Role::Referee && m.round == round_)
            n.reveals.emplace(m.reveal.referee, m.reveal.contribution);
        } else if constexpr (std::is_same_v<T, BlockMsg>) on_block(n, from, m);
        else if constexpr (std::is_same_v<T, HandoffMsg>) on_handoff(n, m);
        else if constexpr (std::is_same_v<T, TimerMsg>) on_timer(n, m);
      },
      *env.payload);
}

void World::send_ptr(NodeState& from, NodeId to, const MessagePtr& msg) {
  net_->send(from.id, to, msg);
}

void World::send(NodeState& from, NodeId to, Message msg) {
  send_ptr(from, to, std::make_shared<const Message>(std::move(msg)));
}

void World::multicast(NodeState& from, const std::vector<NodeId>& to, Message msg) {
  auto ptr = std::make_shared<const Message>(std::move(msg));
  net_->broadcast(from.id, to, ptr);
}

void World::timer(NodeState& node, Tick offset, TimerMsg t) {
  t.round = round_;
  net_->timer(node.id, std::max(now(), t0()) + offset, std::make_shared<const Message>(std::move(t)));
}

// ---- views -----------------------------------------------------------------

std::vector<NodeId> World::key_members_of(CommitteeId k) const {
  std::vector<NodeId> out{assignment_.leaders[k]};
  out.insert(out.end(), assignment_.partial_sets[k].begin(), assignment_.partial_sets[k].end());
  return out;
}

std::vector<NodeId> World::all_key_members() const {
  std::vector<NodeId> out;
  for (CommitteeId k = 0; k < cfg_.m; ++k) {
    auto km = key_members_of(k);
    out.insert(out.end(), km.begin(), km.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

MemberEntry World::entry_of(NodeId id) const {
  return MemberEntry{id, node_keys_[id].public_key, fmt::format("node-{}", id)};
}

Roster World::committee_roster(const NodeState& n) const {
  std::vector<NodeId> ids = key_members_of(n.committee);
  for (const auto& [_, cert] : n.view) ids.push_back(cert.entry.id);
  ids.push_back(n.id);
  return Roster(std::move(ids));
}

std::vector<NodeId> World::committee_targets(const NodeState& n) const {
  std::vector<NodeId> out;
  const auto roster = committee_roster(n);
  for (NodeId id : roster.members())
    if (id != n.id) out.push_back(id);
  return out;
}

Roster World::roster_for(const NodeState& n, Topic topic) const {
  switch (topic) {
    case Topic::Commitment:
    case Topic::Accusation:
    case Topic::Beacon:
    case Topic::Block: return Roster(assignment_.referee);
    default: return committee_roster(n);
  }
}

committee::JudgeContext World::judge(const NodeState& n, CommitteeId k) const {
  committee::JudgeContext ctx;
  ctx.crypto = crypto_.get();
  ctx.dir = &dir_;
  ctx.round = round_;
  ctx.randomness = randomness_;
  ctx.committees = cfg_.m;
  ctx.referee = Roster(assignment_.referee);
  ctx.committee = k;
  ctx.leader = n.leader_of[k];
  ctx.version = n.version_of[k];
  ctx.key_members = key_members_of(k);
  ctx.registered = [this](NodeId id) { return registered(id); };
  return ctx;
}

// ---- consensus hosting -----------------------------------------------------------

consensus::InstanceKey World::cs_propose(NodeState& n, Topic topic, PayloadBody body) {
  const auto roster = roster_for(n, topic);
  std::vector<NodeId> targets;
  for (NodeId id : roster.members())
    if (id != n.id) targets.push_back(id);

  std::optional<PayloadBody> alt;
  if (n.strategy) alt = n.strategy->on_propose(topic, body, n.rng);
  auto payload = make_payload(std::move(body));
  auto msg = n.engine->propose(round_, n.engine->next_seq(), topic, payload);
  const auto key = msg.header.key;
  if (alt) {
    // Conflicting versions to the two halves of the roster.
    auto alt_payload = make_payload(std::move(*alt));
    auto alt_msg = n.engine->sign_header(key, alt_payload->digest, alt_payload);
    const auto half = static_cast<std::ptrdiff_t>(targets.size() / 2);
    multicast(n, {targets.begin(), targets.begin() + half}, msg);
    multicast(n, {targets.begin() + half, targets.end()}, alt_msg);
  } else {
    multicast(n, targets, msg);
  }
  TimerMsg t;
  t.kind = TimerKind::ConsensusDeadline;
  t.key = key;
  timer(n, sched_.window, t);
  cs_on_propose(n, msg);
  return key;
}

void World::cs_on_propose(NodeState& n, const consensus::ProposeMsg& m) {
  const auto topic = m.header.key.topic;
  const auto roster = roster_for(n, topic);
  if (!roster.contains(n.id)) return;
  if (n.corrupted()) board_.headers[m.header.key.proposer].push_back(m.header);
  const bool ok = m.payload && m.payload->digest == m.header.digest &&
                  cs_acceptable(n, m);
  auto out = n.engine->on_propose(roster, m, ok);
  cs_output(n, roster, std::move(out), m.header.key);
  if (n.strategy && n.role == Role::PartialSet && topic == Topic::Decision) frame(n);
}

void World::cs_on_echo(NodeState& n, const consensus::EchoMsg& m) {
  const auto roster = roster_for(n, m.key.topic);
  if (!roster.contains(n.id)) return;
  auto out = n.engine->on_echo(roster, m);
  cs_output(n, roster, std::move(out), m.key);
}

void World::cs_on_confirm(NodeState& n, const consensus::ConfirmMsg& m) {
  const auto roster = roster_for(n, m.key.topic);
  auto out = n.engine->on_confirm(roster, m);
  cs_output(n, roster, std::move(out), m.key);
}

void World::cs_output(NodeState& n, const Roster& roster, consensus::Engine::Output out,
                      const consensus::InstanceKey& key) {
  if (out.witness) {
    const bool committee_topic = key.topic == Topic::Decision || key.topic == Topic::CrossDecision ||
                                 key.topic == Topic::Scores || key.topic == Topic::Handoff;
    if (committee_topic && n.in_committee()) {
      Witness w;
      w.committee = n.committee;
      w.accused = key.proposer;
      w.body = *out.witness;
      raise_witness(n, w);
    }
  }
  if (out.echo) {
    std::vector<NodeId> targets;
    for (NodeId id : roster.members())
      if (id != n.id) targets.push_back(id);
    multicast(n, targets, *out.echo);
    cs_on_echo(n, *out.echo);
  }
  if (out.locked && out.confirm) cs_locked(n, key, out.confirm->digest);
  if (out.confirm) {
    if (key.proposer == n.id) {
      cs_on_confirm(n, *out.confirm);
    } else {
      send(n, key.proposer, *out.confirm);
    }
  }
  if (out.result) cs_result(n, *out.result);
}

bool World::cs_acceptable(NodeState& n, const consensus::ProposeMsg& m) {
  const auto& key = m.header.key;
  const auto& body = m.payload->body;
  switch (key.topic) {
    case Topic::Commitment: {
      const auto* b = std::get_if<CommitmentBody>(&body);
      if (!b || n.role != Role::Referee) return false;
      const auto& c = b->claim;
      if (c.committee >= cfg_.m || c.leader != n.leader_of[c.committee] ||
          c.version != n.version_of[c.committee]) {
        return false;
      }
      auto& slot = n.slots[{c.committee, c.version}];
      if (slot.expel_locked) return false;
      return referee_claim_ok(n, c);
    }
    case Topic::Accusation: {
      const auto* b = std::get_if<ExpelBody>(&body);
      return b && n.role == Role::Referee && expel_acceptable(n, *b);
    }
    case Topic::Beacon: {
      const auto* b = std::get_if<BeaconBody>(&body);
      return b && n.role == Role::Referee && beacon_acceptable(n, *b);
    }
    case Topic::Block: {
      const auto* b = std::get_if<BlockBody>(&body);
      if (!b || n.role != Role::Referee || n.block_locked) return false;
      auto mine = build_block(n);
      return mine && *mine == b->block;
    }
    case Topic::Decision:
    case Topic::CrossDecision: {
      const auto* b = std::get_if<DecisionBody>(&body);
      if (!b || !n.in_committee() || key.proposer != n.leader_of[n.committee]) return false;
      return decision_acceptable(n, m, *b);
    }
    case Topic::Scores: {
      const auto* b = std::get_if<ScoreBody>(&body);
      if (!b || !n.in_committee() || key.proposer != n.leader_of[n.committee]) return false;
      return scores_acceptable(n, *b);
    }
    case Topic::Handoff: {
      const auto* b = std::get_if<HandoffBody>(&body);
      if (!b || !n.in_committee() || key.proposer != n.leader_of[n.committee]) return false;
      return handoff_acceptable(n, *b);
    }
    case Topic::Test: return true;
  }
  return false;
}

void World::cs_result(NodeState& n, const consensus::ConsensusResult& r) {
  switch (r.key.topic) {
    case Topic::Decision:
    case Topic::CrossDecision: {
      auto it = n.instance_list.find(r.key);
      if (it == n.instance_list.end()) return;
      auto p = n.pipelines.find(it->second);
      if (p != n.pipelines.end()) on_decision(n, p->second, r);
      return;
    }
    case Topic::Scores: {
      if (!n.leading || n.leader_of[n.committee] != n.id) return;
      ReportMsg rep{ReportKind::Score, n.committee, CertifiedPayload{r.key, r.payload, r.sig_list}};
      multicast(n, referee(), rep);
      return;
    }
    case Topic::Handoff: {
      ReportMsg rep{ReportKind::Handoff, n.committee,
                    CertifiedPayload{r.key, r.payload, r.sig_list}};
      multicast(n, referee(), rep);
      return;
    }
    case Topic::Block: {
      // Certified block: every referee member spreads it.
      block_by_digest_.emplace(r.digest, r.payload);
      if (auto it = proposed_scores_.find(r.key); it != proposed_scores_.end()) {
        scores_by_block_.emplace(r.digest, std::move(it->second));
        proposed_scores_.erase(it);
      }
      BlockMsg msg{CertifiedPayload{r.key, r.payload, r.sig_list}};
      multicast(n, referee(), msg);
      on_block(n, n.id, msg);
      return;
    }
    default: return;
  }
}

void World::cs_locked(NodeState& n, const consensus::InstanceKey& key, const Digest& digest) {
  auto payload = n.engine->payload_for(key, digest);
  if (!payload) return;
  switch (key.topic) {
    case Topic::Commitment: {
      const auto* b = payload_as<CommitmentBody>(payload);
      if (!b || n.role != Role::Referee) return;
      const auto& c = b->claim;
      auto& slot = n.slots[{c.committee, c.version}];
      if (slot.commit_locked || slot.expel_locked) return;
      slot.commit_locked = true;
      slot.locked = std::make_shared<const CommitmentClaim>(c);
      multicast(n, all_key_members(),
                AttestationMsg{committee::make_attestation(*crypto_, n.keys, n.id, c)});
      return;
    }
    case Topic::Accusation: {
      if (const auto* b = payload_as<ExpelBody>(payload)) on_expel_locked(n, *b);
      return;
    }
    case Topic::Beacon: {
      if (const auto* b = payload_as<BeaconBody>(payload); b && !n.beacon) n.beacon = b->value;
      return;
    }
    case Topic::Block: on_block_locked(n, key, digest); return;
    case Topic::Decision:
    case Topic::CrossDecision: n.decisions[digest] = payload; return;
    default: return;
  }
}

void World::cs_timeout(NodeState& n, const consensus::InstanceKey& key) {
  // Silent proposers are not counted.
  if (n.engine->expire(key) && !n.corrupted()) ++metrics_.no_quorum;
}

void World::on_timer(NodeState& n, const TimerMsg& t) {
  if (t.round != round_) return;
  switch (t.kind) {
    case TimerKind::RoundStart: {
      // Every participant registers for the next round.
      const Digest d = committee::difficulty_for(cfg_.pow_probability);
      const auto ticket = committee::solve_ticket(round_ + 1, randomness_, n.keys.public_key, d,
                                                  n.rng.next());
      multicast(n, referee(), RegisterMsg{round_ + 1, n.id, n.keys.public_key, ticket.nonce});
      if (n.role == Role::Idle) return;
      if (n.role == Role::Referee) {
        RegisterMsg self{round_ + 1, n.id, n.keys.public_key, ticket.nonce};
        on_register(n, n.id, self);
        beacon_commit(n);
        TimerMsg r;
        r.kind = TimerKind::BeaconReveal;
        timer(n, sched_.beacon_reveal, r);
        r.kind = TimerKind::BeaconPropose;
        timer(n, sched_.beacon_propose, r);
        r.kind = TimerKind::BlockPropose;
        timer(n, sched_.block, r);
        for (CommitteeId k = 0; k < cfg_.m; ++k) {
          TimerMsg c;
          c.kind = TimerKind::ClaimDeadline;
          c.a = k;
          c.b = 0;
          timer(n, sched_.claim_deadline, c);
        }
      } else if (n.role == Role::Common) {
        ConfigMsg cfg{round_, MemberCert{entry_of(n.id), n.sortition->vrf}};
        multicast(n, key_members_of(n.committee), cfg);
      } else if (n.role == Role::PartialSet) {
        TimerMsg k;
        k.kind = TimerKind::SendKeyList;
        timer(n, sched_.config_close, k);
      } else if (n.role == Role::Leader) {
        TimerMsg k;
        k.kind = TimerKind::Commit;
        timer(n, sched_.commit, k);
        k.kind = TimerKind::IntraStart;
        k.b = 0;
        timer(n, sched_.intra, k);
      }
      return;
    }
    case TimerKind::SendKeyList: send_key_list(n); return;
    case TimerKind::Commit:
      if (n.leading && n.leading_version == 0) leader_commit(n);
      return;
    case TimerKind::ClaimDeadline: {
      const SlotKey key{static_cast<CommitteeId>(t.a), static_cast<std::uint32_t>(t.b)};
      auto& slot = n.slots[key];
      slot.deadline_passed = true;
      if (!slot.claim) arm_slot_fallback(n, key);
      referee_try_propose(n, key);
      return;
    }
    case TimerKind::SlotFallback:
      referee_slot_timer(n, {static_cast<CommitteeId>(t.a), static_cast<std::uint32_t>(t.b)},
                         static_cast<std::uint32_t>(t.key.seq));
      return;
    case TimerKind::IntraStart:
      if (n.leading && n.leading_version == t.b && n.leader_of[n.committee] == n.id)
        leader_start_intra(n);
      return;
    case TimerKind::VoteDeadline: leader_close_votes(n, t.a); return;
    case TimerKind::ConsensusDeadline: cs_timeout(n, t.key); return;
    case TimerKind::CrossFallback: cross_fallback(n, t.cross); return;
    case TimerKind::BeaconReveal: beacon_reveal(n); return;
    case TimerKind::BeaconPropose:
      n.beacon_attempt = static_cast<std::uint32_t>(t.a);
      beacon_propose(n);
      return;
    case TimerKind::BlockPropose:
      n.block_attempt = static_cast<std::uint32_t>(t.a);
      block_propose(n);
      return;
    case TimerKind::Handoff: start_handoff(n); return;
  }
}

const ledger::UtxoSet& World::post_state(const Digest& d) {
  if (!post_state_ || post_state_for_ != d) {
    post_state_ = state_;
    ledger::apply_block(*post_state_, payload_as<BlockBody>(block_by_digest_.at(d))->block);
    post_state_for_ = d;
  }
  return *post_state_;
}

void World::finish_round() {
  // The round's block is the certified one most nodes accepted.
  const ledger::Block* block = nullptr;
  Digest block_digest;
  std::size_t best = 0;
  for (const auto& [d, payload] : block_by_digest_) {
    const auto* b = payload_as<BlockBody>(payload);
    const std::size_t acc = block_acceptors_.contains(d) ? block_acceptors_.at(d) : 0;
    if (b && (!block || acc > best)) {
      block = &b->block;
      block_digest = d;
      best = acc;
    }
  }
  if (block_by_digest_.size() > 1)
    result_.failures.push_back(fmt::format("round {}: {} certified blocks", round_,
                                           block_by_digest_.size()));

  std::set<Digest> packed;
  if (block) {
    metrics_.block_produced = true;
    std::set<Digest> spent;
    std::uint64_t before = state_.total();
    for (const auto& set : block->tx_sets) {
      for (const auto& tx : set.txs) {
        packed.insert(tx.id());
        for (const auto& in : tx.inputs) {
          if (!state_.contains(in) || !spent.insert(in).second) result_.double_spend_free = false;
        }
        if (!ledger::leg_shards(tx, set.committee, cfg_.m).empty()) ++metrics_.cross_shard;
      }
    }
    const ledger::UtxoSet next = post_state(block_digest);
    if (next.total() + block->total_fees != before) result_.conservation_ok = false;
    state_ = next;
    metrics_.txs_packed = block->tx_count();
    metrics_.fees = block->total_fees;
    result_.cross_packed += metrics_.cross_shard;

    reputation::ReputationTable after;
    for (const auto& [id, w] : block->reputations) after[id] = w;
    const std::vector<NodeId> parts(participants_.begin(), participants_.end());
    const auto rewards =
        reputation::distribute_rewards(static_cast<double>(block->total_fees), after, parts);
    const auto& scores = scores_by_block_[block_digest];
    for (NodeId id : parts) {
      ReputationRow row;
      row.round = round_;
      row.node = id;
      row.role = nodes_[id].role;
      row.before = reputation_.contains(id) ? reputation_.at(id) : 0.0;
      row.score = scores.contains(id) ? scores.at(id) : 0.0;
      row.after = block->reputation_of(id);
      row.reward = rewards.contains(id) ? rewards.at(id) : 0.0;
      metrics_.rewards += row.reward;
      result_.reputation.push_back(row);
    }
    result_.chain.push_back(*block);
  } else {
    result_.failures.push_back(fmt::format("round {}: no certified block", round_));
  }

  for (CommitteeId k = 0; k < cfg_.m; ++k) {
    std::vector<ledger::Transaction> left;
    for (const auto& tx : intake_[k])
      if (!packed.contains(tx.id())) left.push_back(tx);
    for (const auto& tx : left) {
      if (ledger::validate(tx, state_, *crypto_)) {
        ++metrics_.remaining;
      } else {
        ++metrics_.dropped;
      }
    }
    workload_->carry_over(k, left, state_, *crypto_);
  }

  for (NodeId id = 0; id < cfg_.n; ++id) {
    if (nodes_[id].role == Role::Idle) continue;
    const auto role = static_cast<std::size_t>(metric_role(id));
    for (std::size_t p = 0; p < kPhaseCount; ++p) {
      metrics_.messages[role][p] += node_counts_[id][0][p];
      metrics_.units[role][p] += node_counts_[id][1][p];
    }
  }
  for (std::size_t role = 0; role < kMetricRoles; ++role) {
    const auto count = static_cast<double>(metrics_.role_nodes[role]);
    if (count == 0) continue;
    for (std::size_t p = 0; p < kPhaseCount; ++p) {
      metrics_.messages[role][p] /= count;
      metrics_.units[role][p] /= count;
    }
  }
  result_.rounds.push_back(metrics_);
}

std::string chain_dump(const std::vector<ledger::Block>& chain) {
  std::string out;
  for (const auto& b : chain) {
    std::string evicted;
    for (NodeId id : b.evicted) evicted += fmt::format("{}{}", evicted.empty() ? "" : ",", id);
    out += fmt::format(
        "round={} digest={} txs={} fees={} participants={} referee={} randomness={} "
        "evicted=[{}]\n",
        b.round, b.digest().hex(), b.tx_count(), b.total_fees, b.participants.size(),
        b.next.referee.size(), b.next_randomness.hex(), evicted);
  }
  return out;
}

RunResult run(const RunConfig& config, std::ostream* trace) {
  World world(config, trace);
  return world.run();
}

}  // namespace cycledger::sim
