#include <algorithm>

#include <fmt/format.h>

#include "world.hpp"

namespace cycledger::sim {
namespace {

bool contains(const std::vector<NodeId>& v, NodeId id) {
  return std::find(v.begin(), v.end(), id) != v.end();
}

}  // namespace

// ---- intake at the referee ---------------------------------------------------------

void World::on_register(NodeState& n, NodeId from, const RegisterMsg& m) {
  if (n.role != Role::Referee || m.node != from) return;
  const auto* pk = dir_.key_of(m.node);
  if (!pk || *pk != m.pk) return;
  try {
    committee::check_ticket(m, round_ + 1, randomness_,
                            committee::difficulty_for(cfg_.pow_probability));
  } catch (const Error&) {
    return;
  }
  n.registrations.emplace(m.node, m);
}

bool World::certified_ok(const NodeState& n, CommitteeId k, const CertifiedPayload& cp) const {
  if (!cp.payload || cp.key.round != round_) return false;
  const auto roster = committed_roster(n, k, cp.key.proposer);
  if (!roster) return false;
  return consensus::verify_certificate(cp.cert, cp.key, cp.payload->digest, *roster, dir_,
                                       *crypto_);
}

std::optional<Roster> World::committed_roster(const NodeState& n, CommitteeId k,
                                              NodeId leader) const {
  for (const auto& [key, slot] : n.slots) {
    if (key.committee != k) continue;
    const CommitmentClaim* claim = nullptr;
    if (slot.locked && slot.locked->leader == leader) claim = slot.locked.get();
    if (!claim) continue;
    std::vector<NodeId> ids;
    for (const auto& e : claim->members) ids.push_back(e.id);
    return Roster(std::move(ids));
  }
  // Key members know their own committee's roster without a referee lock.
  if (n.in_committee() && n.committee == k) return committee_roster(n);
  return std::nullopt;
}

void World::on_report(NodeState& n, NodeId from, const ReportMsg& m) {
  if (n.role != Role::Referee || m.committee >= cfg_.m) return;
  const auto& cp = m.result;
  if (!cp.payload) return;
  const Digest d = cp.payload->digest;
  if (n.reports.contains(d)) return;
  const Topic want = m.kind == ReportKind::Intra   ? Topic::Decision
                     : m.kind == ReportKind::Inter ? Topic::CrossDecision
                     : m.kind == ReportKind::Score ? Topic::Scores
                                                   : Topic::Handoff;
  if (cp.key.topic != want || !certified_ok(n, m.committee, cp)) return;
  n.reports.emplace(d, m);
  // Keep referee views aligned for block validation.
  if (!contains(referee(), from)) {
    multicast(n, referee(), m);
  }
  if (m.kind == ReportKind::Handoff && n.block_accepted && n.handoffs_forwarded.insert(d).second) {
    auto it = block_by_digest_.find(n.accepted_block);
    if (it == block_by_digest_.end()) return;
    const auto& next = payload_as<BlockBody>(it->second)->block.next;
    multicast(n, next.partial_sets[m.committee], HandoffMsg{m.committee, cp});
  }
}

// ---- randomness ------------------------------------------------------------------

void World::beacon_commit(NodeState& n) {
  crypto::ByteWriter w;
  w.str("contribution").u64(n.rng.next()).u64(n.rng.next()).u32(n.id);
  n.contribution = crypto::hash(w);
  BeaconCommitMsg msg{round_, n.id, committee::beacon_commitment(n.id, n.contribution)};
  n.beacon_commits.emplace(n.id, msg.commitment);
  multicast(n, referee(), msg);
}

void World::beacon_reveal(NodeState& n) {
  BeaconRevealMsg msg{round_, BeaconReveal{n.id, n.contribution}};
  n.reveals.emplace(n.id, n.contribution);
  multicast(n, referee(), msg);
}

void World::beacon_propose(NodeState& n) {
  if (n.beacon) return;
  const auto& ref = referee();
  if (n.beacon_attempt == 0) {
    // One retry with the next referee member if the first proposer stalls.
    TimerMsg t;
    t.kind = TimerKind::BeaconPropose;
    t.a = 1;
    timer(n, 3 * cfg_.delta, t);
  }
  if (ref[(round_ + n.beacon_attempt) % ref.size()] != n.id) return;
  BeaconBody body{round_, {}, {}};
  for (const auto& [id, c] : n.reveals) {
    auto it = n.beacon_commits.find(id);
    if (it != n.beacon_commits.end() && it->second == committee::beacon_commitment(id, c))
      body.reveals.push_back({id, c});
  }
  body.value = committee::combine_reveals(body.reveals);
  cs_propose(n, Topic::Beacon, std::move(body));
}

bool World::beacon_acceptable(NodeState& n, const BeaconBody& b) {
  if (b.round != round_ || n.beacon) return false;
  std::set<NodeId> seen;
  for (const auto& r : b.reveals) {
    auto it = n.beacon_commits.find(r.referee);
    if (it == n.beacon_commits.end() || it->second != committee::beacon_commitment(r.referee, r.contribution))
      return false;
    if (!seen.insert(r.referee).second) return false;
  }
  if (seen.size() < Roster(referee()).quorum()) return false;
  // A proposer may not drop reveals to steer the outcome.
  for (const auto& [id, c] : n.reveals) {
    auto it = n.beacon_commits.find(id);
    if (it != n.beacon_commits.end() && it->second == committee::beacon_commitment(id, c) &&
        !seen.contains(id))
      return false;
  }
  return b.value == committee::combine_reveals(b.reveals);
}

// ---- block -------------------------------------------------------------------------

std::optional<ledger::Block> World::build_block(NodeState& n,
                                               std::map<NodeId, double>* scores_out) {
  std::vector<std::pair<Digest, const ReportMsg*>> intra, inter;
  std::map<CommitteeId, const ReportMsg*> score_for;
  for (const auto& [d, r] : n.reports) {
    if (r.kind == ReportKind::Intra) intra.emplace_back(d, &r);
    if (r.kind == ReportKind::Inter) inter.emplace_back(d, &r);
    if (r.kind == ReportKind::Score) {
      // One score list per committee: the latest leader's.
      auto& slot = score_for[r.committee];
      if (!slot || n.leader_of[r.committee] == r.result.key.proposer) slot = &r;
    }
  }
  std::sort(intra.begin(), intra.end(), [](const auto& a, const auto& b) {
    return std::tie(a.second->committee, a.first) < std::tie(b.second->committee, b.first);
  });
  std::vector<ledger::DecisionSubmission> subs;
  for (const auto& [_, r] : intra) {
    const auto* body = payload_as<DecisionBody>(r->result.payload);
    subs.push_back({r->committee, body->decided_txs()});
  }
  std::set<std::pair<Digest, CommitteeId>> confirmed;
  for (const auto& [_, r] : inter) {
    const auto* body = payload_as<DecisionBody>(r->result.payload);
    for (const auto& tx : body->decided_txs()) confirmed.insert({tx.id(), r->committee});
  }
  const auto pack =
      ledger::pack_transactions(state_, std::move(subs), confirmed, cfg_.block_cap, *crypto_);

  ledger::Block b;
  b.round = round_;
  b.tx_sets = pack.sets;
  b.total_fees = pack.fees;
  b.evicted = {n.evicted.begin(), n.evicted.end()};
  if (n.beacon) {
    b.next_randomness = *n.beacon;
  } else {
    crypto::ByteWriter w;
    w.str("fallback-randomness").digest(randomness_).u32(round_);
    b.next_randomness = crypto::hash(w);
  }

  reputation::ReputationTable table = reputation_;
  std::map<NodeId, double> scores;
  for (const auto& [_, r] : score_for) {
    const auto* body = payload_as<ScoreBody>(r->result.payload);
    reputation::update_reputation(table, body->scores, true);
    for (const auto& e : body->scores) scores[e.node] += e.score;
  }
  for (NodeId id : b.evicted) table[id] = reputation::punish_leader(table[id]);

  std::vector<committee::Candidate> cands;
  for (const auto& [id, reg] : n.registrations) {
    cands.push_back({id, reg.pk});
    b.participants.push_back(id);
  }
  for (NodeId id : b.participants) table.try_emplace(id, 0.0);
  for (const auto& [id, w] : table) b.reputations.emplace_back(id, w);

  committee::SelectionParams sp;
  sp.committees = cfg_.m;
  sp.lambda = cfg_.lambda;
  sp.referee_target = cfg_.c;
  sp.min_referee = cfg_.min_referee;
  try {
    b.next = committee::select_key_members(cands, table, b.next_randomness, round_ + 1, sp);
  } catch (const Error& e) {
    auto line = fmt::format("round {}: {}", round_, e.what());
    if (std::find(result_.failures.begin(), result_.failures.end(), line) == result_.failures.end())
      result_.failures.push_back(std::move(line));
    return std::nullopt;
  }
  if (scores_out) *scores_out = std::move(scores);
  return b;
}

void World::block_propose(NodeState& n) {
  if (n.block_locked) return;
  TimerMsg t;
  t.kind = TimerKind::BlockPropose;
  t.a = n.block_attempt + 1;
  timer(n, sched_.window, t);
  const auto& ref = referee();
  if (ref[(round_ + n.block_attempt) % ref.size()] != n.id) return;
  std::map<NodeId, double> scores;
  if (auto b = build_block(n, &scores)) {
    auto key = cs_propose(n, Topic::Block, BlockBody{std::move(*b)});
    proposed_scores_[key] = std::move(scores);
  }
}

void World::on_block_locked(NodeState& n, const consensus::InstanceKey&, const Digest&) {
  n.block_locked = true;
}

void World::on_block(NodeState& n, NodeId from, const BlockMsg& m) {
  (void)from;
  if (n.block_accepted) return;
  const auto& cp = m.block;
  const auto* body = payload_as<BlockBody>(cp.payload);
  if (!body || cp.key.topic != Topic::Block || cp.key.round != round_) return;
  if (body->block.round != round_) return;
  if (!consensus::verify_certificate(cp.cert, cp.key, cp.payload->digest, Roster(referee()), dir_,
                                     *crypto_))
    return;
  block_by_digest_.emplace(cp.payload->digest, cp.payload);
  accept_block(n, cp.payload);
  if (n.role == Role::Referee && !n.block_forwarded) {
    n.block_forwarded = true;
    std::vector<NodeId> all;
    for (NodeId id = 0; id < cfg_.n; ++id)
      if (id != n.id && !contains(referee(), id)) all.push_back(id);
    multicast(n, all, m);
    multicast(n, referee(), m);
  } else if (n.leading && n.leader_of[n.committee] == n.id) {
    // Commons would otherwise wait on the slow network.
    multicast(n, committee_targets(n), m);
  }
}

void World::accept_block(NodeState& n, const PayloadPtr& payload) {
  n.block_accepted = true;
  n.accepted_block = payload->digest;
  ++block_acceptors_[payload->digest];
  if (n.leading && n.leader_of[n.committee] == n.id) {
    TimerMsg t;
    t.kind = TimerKind::Handoff;
    timer(n, cfg_.delta, t);
  }
}

void World::start_handoff(NodeState& n) {
  if (n.handoff_started || !n.block_accepted) return;
  n.handoff_started = true;
  const auto& block = payload_as<BlockBody>(block_by_digest_.at(n.accepted_block))->block;
  const auto& post = post_state(n.accepted_block);
  std::vector<ledger::Transaction> decided;
  for (const auto& [_, p] : n.pipelines) {
    if (p.kind != ListKind::Intra || !p.decided) continue;
    auto txs = payload_as<DecisionBody>(p.decision)->decided_txs();
    decided.insert(decided.end(), txs.begin(), txs.end());
  }
  HandoffBody body{round_, n.committee, post.shard_digest(n.committee),
                   ledger::remaining_transactions(decided, block, post, *crypto_)};
  cs_propose(n, Topic::Handoff, std::move(body));
}

bool World::handoff_acceptable(NodeState& n, const HandoffBody& b) {
  if (b.round != round_ || b.committee != n.committee || !n.block_accepted) return false;
  const auto& block = payload_as<BlockBody>(block_by_digest_.at(n.accepted_block))->block;
  const auto& post = post_state(n.accepted_block);
  if (b.utxo_digest != post.shard_digest(n.committee)) return false;
  std::set<Digest> packed;
  for (const auto& set : block.tx_sets)
    for (const auto& tx : set.txs) packed.insert(tx.id());
  return std::all_of(b.remaining.begin(), b.remaining.end(), [&](const ledger::Transaction& tx) {
    return !packed.contains(tx.id()) && ledger::validate(tx, post, *crypto_);
  });
}

void World::on_handoff(NodeState& n, const HandoffMsg& m) {
  // Next-round partial members keep nothing beyond what the next block
  // already fixes; the message is counted for the complexity figures.
  (void)n;
  (void)m;
}

}  // namespace cycledger::sim
