#include <algorithm>

#include <fmt/format.h>

#include "world.hpp"

namespace cycledger::sim {
namespace {

reputation::DecisionVector as_vector(const std::vector<std::uint8_t>& decided) {
  reputation::DecisionVector u;
  for (auto d : decided) u.push_back(d ? 1 : -1);
  return u;
}

}  // namespace

// ---- intra-committee lists ------------------------------------------------------

void World::leader_start_intra(NodeState& n) {
  if (!intake_[n.committee].empty())
    start_list(n, ListKind::Intra, n.committee, intake_[n.committee], nullptr);
  auto deferred = std::move(n.cross_deferred);
  n.cross_deferred.clear();
  for (const auto& c : deferred) process_cross(n, c);
}

void World::start_list(NodeState& n, ListKind kind, CommitteeId source,
                       std::vector<ledger::Transaction> txs,
                       std::shared_ptr<const CrossListMsg> ev) {
  // The leader version in the high bits keeps a successor's ids distinct.
  const std::uint64_t id = (std::uint64_t{n.leading_version} << 32) | n.next_list++;
  TxListMsg m;
  m.round = round_;
  m.committee = n.committee;
  m.list_id = id;
  m.kind = kind;
  m.source = source;
  m.leader = n.id;
  m.txs = std::make_shared<const std::vector<ledger::Transaction>>(std::move(txs));
  m.evidence = ev;
  if (ev) {
    if (auto atts = attestations_for(n, source)) m.evidence_attestations = *atts;
  }
  m.sig = crypto_->sign(n.keys.secret_key, m.signed_bytes());

  Pipeline& p = n.pipelines[id];
  p.list_id = id;
  p.kind = kind;
  p.source = source;
  p.txs = m.txs;
  p.evidence = ev;
  multicast(n, committee_targets(n), m);
  on_tx_list(n, n.id, m);
  TimerMsg t;
  t.kind = TimerKind::VoteDeadline;
  t.a = id;
  timer(n, sched_.window, t);
}

void World::on_tx_list(NodeState& n, NodeId from, const TxListMsg& m) {
  if (m.round != round_ || !n.in_committee() || m.committee != n.committee) return;
  if (from != m.leader || from != n.leader_of[n.committee] || !m.txs) return;
  if (!crypto_->verify(*dir_.key_of(from), m.signed_bytes(), m.sig)) return;
  if (n.lists.contains(m.list_id)) return;
  n.lists[m.list_id] = m;

  reputation::VoteVector vote(m.txs->size(), -1);
  if (m.kind == ListKind::Intra) {
    for (std::size_t i = 0; i < m.txs->size(); ++i) {
      const auto& tx = (*m.txs)[i];
      const auto shard = ledger::input_shard(tx, state_);
      vote[i] = shard == n.committee && ledger::validate(tx, state_, *crypto_) ? 1 : -1;
    }
  } else {
    if (!m.evidence) return;
    n.cross_seen.insert({m.source, m.evidence->decision.payload->digest});
    if (cross_evidence_ok(n, *m.evidence, m.evidence_attestations)) {
      const auto* body = payload_as<DecisionBody>(m.evidence->decision.payload);
      const auto legs = committee::derive_legs(*body, n.committee, cfg_.m);
      for (std::size_t i = 0; i < m.txs->size(); ++i) {
        const auto& tx = (*m.txs)[i];
        const bool leg = std::binary_search(legs.begin(), legs.end(), tx.id());
        vote[i] = leg && ledger::validate(tx, state_, *crypto_) ? 1 : -1;
      }
    }
  }
  if (n.strategy) n.strategy->on_vote(vote, n.rng);
  VoteMsg v{round_, n.committee, m.list_id, VoteRecord{n.id, std::move(vote), {}}};
  v.vote.sig = crypto_->sign(n.keys.secret_key, v.signed_bytes());
  if (from == n.id) {
    on_vote(n, v);
  } else {
    send(n, from, std::move(v));
  }
}

void World::on_vote(NodeState& n, const VoteMsg& m) {
  if (m.round != round_ || m.committee != n.committee) return;
  auto it = n.pipelines.find(m.list_id);
  if (it == n.pipelines.end() || it->second.proposed) return;
  auto& p = it->second;
  if (m.vote.entries.size() != p.txs->size()) return;
  if (!committee_roster(n).contains(m.vote.voter)) return;
  if (!crypto_->verify(*dir_.key_of(m.vote.voter), m.signed_bytes(), m.vote.sig)) return;
  p.votes.emplace(m.vote.voter, m.vote);
}

void World::leader_close_votes(NodeState& n, std::uint64_t list_id) {
  auto it = n.pipelines.find(list_id);
  if (it == n.pipelines.end() || it->second.proposed) return;
  if (n.leader_of[n.committee] != n.id) return;
  auto& p = it->second;
  p.proposed = true;
  const auto roster = committee_roster(n);
  std::vector<std::uint32_t> yes(p.txs->size(), 0);
  DecisionBody body;
  body.round = round_;
  body.committee = n.committee;
  body.list_id = list_id;
  body.kind = p.kind;
  body.source = p.source;
  body.txs = p.txs;
  for (const auto& [_, v] : p.votes) {
    body.votes.push_back(v);
    for (std::size_t i = 0; i < yes.size(); ++i) yes[i] += v.entries[i] > 0 ? 1 : 0;
  }
  for (auto u : reputation::decision_vector(yes, static_cast<std::uint32_t>(roster.size())))
    body.decided.push_back(u > 0 ? 1 : 0);
  const Topic topic = p.kind == ListKind::Intra ? Topic::Decision : Topic::CrossDecision;
  n.instance_list[{n.id, round_, n.engine->next_seq(), topic}] = list_id;
  cs_propose(n, topic, std::move(body));
}

bool World::decision_acceptable(NodeState& n, const consensus::ProposeMsg& m,
                                const DecisionBody& b) {
  if (b.round != round_ || b.committee != n.committee || !b.txs) return false;
  if ((b.kind == ListKind::Intra) != (m.header.key.topic == Topic::Decision)) return false;
  auto it = n.lists.find(b.list_id);
  if (it == n.lists.end()) return false;
  const auto& list = it->second;
  if (list.leader != m.header.key.proposer || list.kind != b.kind || list.source != b.source ||
      *list.txs != *b.txs || b.decided.size() != b.txs->size()) {
    return false;
  }
  const auto roster = committee_roster(n);
  std::set<NodeId> voters;
  std::vector<std::uint32_t> yes(b.txs->size(), 0);
  for (const auto& v : b.votes) {
    if (!roster.contains(v.voter) || !voters.insert(v.voter).second) return false;
    if (v.entries.size() != yes.size()) return false;
    if (!crypto_->verify(*dir_.key_of(v.voter),
                         vote_signed_bytes(round_, n.committee, b.list_id, v), v.sig))
      return false;
    for (std::size_t i = 0; i < yes.size(); ++i) yes[i] += v.entries[i] > 0 ? 1 : 0;
  }
  const auto u = reputation::decision_vector(yes, static_cast<std::uint32_t>(roster.size()));
  return u == as_vector(b.decided);
}

bool World::scores_acceptable(NodeState& n, const ScoreBody& b) {
  if (b.round != round_ || b.committee != n.committee) return false;
  auto it = n.decisions.find(b.decision);
  if (it == n.decisions.end()) return false;
  const auto* d = payload_as<DecisionBody>(it->second);
  if (!d || d->kind != ListKind::Intra || b.scores.size() != d->votes.size()) return false;
  const auto u = as_vector(d->decided);
  for (std::size_t i = 0; i < b.scores.size(); ++i) {
    if (b.scores[i].node != d->votes[i].voter ||
        b.scores[i].score != reputation::score(d->votes[i].entries, u))
      return false;
  }
  return true;
}

void World::on_decision(NodeState& n, Pipeline& p, const consensus::ConsensusResult& r) {
  if (p.decided) return;
  p.decided = true;
  p.decision = r.payload;
  p.certified = CertifiedPayload{r.key, r.payload, r.sig_list};
  const auto* body = payload_as<DecisionBody>(r.payload);
  if (p.kind == ListKind::Intra) {
    multicast(n, referee(), ReportMsg{ReportKind::Intra, n.committee, p.certified});
    ScoreBody scores{round_, n.committee, r.digest, {}};
    const auto u = as_vector(body->decided);
    for (const auto& v : body->votes)
      scores.scores.push_back({v.voter, reputation::score(v.entries, u)});
    cs_propose(n, Topic::Scores, std::move(scores));
    send_cross(n, p);
  } else {
    multicast(n, referee(), ReportMsg{ReportKind::Inter, n.committee, p.certified});
    const NodeId back = n.leader_of[p.source];
    if (back != n.id)
      send(n, back, CrossResultMsg{round_, p.source, n.committee, p.certified});
  }
}

// ---- cross-shard legs -----------------------------------------------------------

void World::send_cross(NodeState& n, const Pipeline& p) {
  const auto* body = payload_as<DecisionBody>(p.decision);
  if (!body || !n.my_claim) return;
  for (CommitteeId j = 0; j < cfg_.m; ++j) {
    if (j == n.committee) continue;
    adversary::CrossTamper t;
    t.legs = committee::derive_legs(*body, j, cfg_.m);
    if (t.legs.empty()) continue;
    if (n.strategy) n.strategy->on_cross_shard(t, n.rng);
    auto cross = std::make_shared<CrossListMsg>();
    cross->round = round_;
    cross->source = n.committee;
    cross->target = j;
    cross->leader = n.id;
    cross->decision = p.certified;
    cross->members = n.my_claim->members;
    cross->legs = t.legs;
    cross->sig = crypto_->sign(n.keys.secret_key, cross->signed_bytes());
    std::shared_ptr<const CrossListMsg> ptr = cross;
    if (t.send_to_leader) send(n, n.leader_of[j], CrossMsg{ptr, kNoNode});
    if (t.send_to_partial) multicast(n, assignment_.partial_sets[j], CrossMsg{ptr, kNoNode});
  }
}

void World::on_cross(NodeState& n, NodeId from, const CrossMsg& m) {
  if (!m.cross || m.cross->round != round_ || !n.is_key() || m.cross->target != n.committee)
    return;
  if (m.forwarder != kNoNode && m.forwarder != from) return;
  if (n.leading && n.leader_of[n.committee] == n.id) {
    process_cross(n, m.cross);
    return;
  }
  if (n.role == Role::PartialSet && m.forwarder == kNoNode) {
    TimerMsg t;
    t.kind = TimerKind::CrossFallback;
    t.cross = m.cross;
    timer(n, sched_.fallback, t);
  }
}

void World::cross_fallback(NodeState& n, const std::shared_ptr<const CrossListMsg>& cross) {
  if (n.cross_seen.contains({cross->source, cross->decision.payload->digest})) return;
  const NodeId leader = n.leader_of[n.committee];
  if (leader == n.id) {
    process_cross(n, cross);
  } else {
    send(n, leader, CrossMsg{cross, n.id});
  }
}

std::optional<std::vector<RefereeAttestation>> World::attestations_for(const NodeState& n,
                                                                       CommitteeId k) const {
  auto acc = n.accepted.find(k);
  if (acc == n.accepted.end()) return std::nullopt;
  auto it = n.atts.find({k, acc->second.first});
  if (it == n.atts.end()) return std::nullopt;
  return it->second;
}

bool World::cross_evidence_ok(const NodeState& n, const CrossListMsg& cross,
                              const std::vector<RefereeAttestation>& atts) const {
  if (atts.empty() || cross.round != round_ || cross.target != n.committee) return false;
  if (!crypto_->verify(*dir_.key_of(cross.leader), cross.signed_bytes(), cross.sig)) return false;
  auto ctx = judge(n, cross.source);
  ctx.leader = cross.leader;
  ctx.version = atts.front().version;
  const auto agreed = committee::attested_digest(atts, ctx);
  if (!agreed) return false;
  const auto* body = payload_as<DecisionBody>(cross.decision.payload);
  if (!body) return false;
  // Legs are taken from the certified payload, so a misreported leg list
  // does not block the honest part of the transfer.
  CrossListMsg fixed = cross;
  fixed.legs = committee::derive_legs(*body, cross.target, cfg_.m);
  return !committee::cross_defect(fixed, *agreed, ctx);
}

void World::process_cross(NodeState& n, const std::shared_ptr<const CrossListMsg>& cross) {
  const auto key = std::make_pair(cross->source, cross->decision.payload->digest);
  if (n.cross_handled.contains(key)) return;
  const auto atts = attestations_for(n, cross->source);
  if (!atts || n.leader_of[n.committee] != n.id || now() - t0() < sched_.intra) {
    n.cross_deferred.push_back(cross);
    return;
  }
  if (!cross_evidence_ok(n, *cross, *atts)) return;
  n.cross_handled.insert(key);
  auto ctx = judge(n, cross->source);
  ctx.leader = cross->leader;
  ctx.version = atts->front().version;
  const auto agreed = committee::attested_digest(*atts, ctx);
  if (committee::cross_defect(*cross, *agreed, ctx)) {
    Witness w;
    w.committee = cross->source;
    w.accused = cross->leader;
    w.body = CrossWitness{*cross, *atts};
    multicast(n, assignment_.partial_sets[cross->source],
              WitnessForwardMsg{round_, n.id, std::make_shared<const Witness>(std::move(w))});
  }
  const auto* body = payload_as<DecisionBody>(cross->decision.payload);
  const auto legs = committee::derive_legs(*body, n.committee, cfg_.m);
  std::vector<ledger::Transaction> txs;
  for (const auto& tx : body->decided_txs())
    if (std::binary_search(legs.begin(), legs.end(), tx.id())) txs.push_back(tx);
  start_list(n, ListKind::Cross, cross->source, std::move(txs), cross);
}

void World::on_cross_result(NodeState& n, const CrossResultMsg& m) {
  // The source leader only learns the outcome; packing relies on the
  // referee's copy of the inter-committee report.
  (void)n;
  (void)m;
}

}  // namespace cycledger::sim
