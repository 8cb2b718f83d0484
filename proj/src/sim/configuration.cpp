#include <algorithm>

#include <fmt/format.h>

#include "world.hpp"

namespace cycledger::sim {
namespace {

bool contains(const std::vector<NodeId>& v, NodeId id) {
  return std::find(v.begin(), v.end(), id) != v.end();
}

const CommitmentClaim* witness_claim(const Witness& w) {
  if (const auto* x = std::get_if<MismatchWitness>(&w.body)) return &x->claim;
  if (const auto* x = std::get_if<CertificateWitness>(&w.body)) return &x->claim;
  if (const auto* x = std::get_if<OmissionWitness>(&w.body)) return &x->claim;
  return nullptr;
}

}  // namespace

// ---- member discovery --------------------------------------------------------

void World::on_config(NodeState& n, NodeId from, const ConfigMsg& m) {
  if (m.round != round_ || !n.is_key() || m.cert.entry.id != from) return;
  if (!committee::cert_valid(m.cert, judge(n, n.committee))) return;
  n.view[m.cert.entry.pk] = m.cert;
  if (n.corrupted()) board_.seen_certs[n.committee].push_back(m.cert);
  MemListMsg reply{round_, n.committee, n.id, {}};
  for (const auto& [_, cert] : n.view) reply.certs.push_back(cert);
  send(n, from, std::move(reply));
}

void World::on_mem_list(NodeState& n, NodeId from, const MemListMsg& m) {
  if (m.round != round_ || n.role != Role::Common || m.committee != n.committee) return;
  if (!contains(key_members_of(n.committee), from)) return;
  const auto ctx = judge(n, n.committee);
  for (const auto& cert : m.certs) {
    const NodeId id = cert.entry.id;
    if (id == n.id || !committee::cert_valid(cert, ctx)) continue;
    n.view[cert.entry.pk] = cert;
    if (n.greeted.insert(id).second) send(n, id, MemberMsg{round_, MemberCert{entry_of(n.id), n.sortition->vrf}});
  }
}

void World::on_member(NodeState& n, NodeId from, const MemberMsg& m) {
  if (m.round != round_ || !n.in_committee() || m.cert.entry.id != from) return;
  if (!committee::cert_valid(m.cert, judge(n, n.committee))) return;
  n.view[m.cert.entry.pk] = m.cert;
  n.greeted.insert(from);
}

void World::send_key_list(NodeState& n) {
  n.config_closed = true;
  KeyListMsg m{round_, n.committee, n.id, {}, {}};
  for (const auto& [_, cert] : n.view) m.certs.push_back(cert);
  m.sig = crypto_->sign(n.keys.secret_key, m.signed_bytes());
  if (n.leader_of[n.committee] != n.id) send(n, n.leader_of[n.committee], std::move(m));
}

void World::on_key_list(NodeState& n, NodeId from, const KeyListMsg& m) {
  if (m.round != round_ || !n.leading || m.sender != from || m.committee != n.committee) return;
  if (!contains(assignment_.partial_sets[n.committee], from)) return;
  if (!crypto_->verify(*dir_.key_of(from), m.signed_bytes(), m.sig)) return;
  const auto ctx = judge(n, n.committee);
  std::vector<MemberCert> accepted;
  for (const auto& cert : m.certs) {
    if (!committee::cert_valid(cert, ctx)) continue;
    n.view[cert.entry.pk] = cert;
    accepted.push_back(cert);
  }
  send(n, from,
       committee::make_ack(*crypto_, n.keys, n.id, from, round_, n.committee, std::move(accepted)));
}

void World::on_key_list_ack(NodeState& n, NodeId from, const KeyListAckMsg& m) {
  if (m.round != round_ || n.role != Role::PartialSet || m.partial != n.id) return;
  if (m.committee != n.committee || m.leader != from) return;
  n.acks.push_back(m);
}

// ---- commitment ----------------------------------------------------------------

void World::leader_commit(NodeState& n) {
  const CommitteeId k = n.committee;
  const auto keys = key_members_of(k);
  adversary::CommitmentTamper t;
  t.key_members = keys;
  for (NodeId id : keys) t.referee_members.push_back(entry_of(id));
  for (const auto& [_, cert] : n.view) {
    if (contains(keys, cert.entry.id)) continue;
    t.referee_members.push_back(cert.entry);
    t.partial_certs.push_back(cert);
  }
  t.partial_members = t.referee_members;
  if (n.strategy) {
    for (const auto& other : nodes_) {
      if (other.role == Role::Common && other.committee != k) {
        t.foreign = entry_of(other.id);
        break;
      }
    }
    n.strategy->on_commitment(t, n.rng);
  }
  const auto version = n.leading_version;
  auto for_referee = std::make_shared<const CommitmentClaim>(committee::make_claim(
      *crypto_, n.keys, n.id, round_, k, version, t.referee_members, {}));
  auto for_partial = std::make_shared<const CommitmentClaim>(committee::make_claim(
      *crypto_, n.keys, n.id, round_, k, version, t.partial_members, t.partial_certs));
  n.my_claim = for_partial;
  if (n.corrupted()) board_.claims[k] = *for_partial;
  multicast(n, referee(), ClaimMsg{for_referee});
  std::vector<NodeId> partial;
  for (NodeId id : assignment_.partial_sets[k])
    if (id != n.id) partial.push_back(id);
  multicast(n, partial, ClaimMsg{for_partial});
}

bool World::referee_claim_ok(const NodeState& n, const CommitmentClaim& c) const {
  if (c.round != round_ || c.committee >= cfg_.m) return false;
  (void)n;
  const auto* pk = dir_.key_of(c.leader);
  if (!pk || !crypto_->verify(*pk, c.signed_bytes(), c.sig)) return false;
  if (c.members != committee::canonical_members(c.members)) return false;
  if (c.digest != member_list_digest(c.members)) return false;
  const auto keys = key_members_of(c.committee);
  for (NodeId id : keys) {
    if (std::none_of(c.members.begin(), c.members.end(),
                     [&](const MemberEntry& e) { return e.id == id; }))
      return false;
  }
  for (const auto& e : c.members) {
    const auto* epk = dir_.key_of(e.id);
    if (!epk || *epk != e.pk || !registered(e.id)) return false;
  }
  return true;
}

void World::on_claim(NodeState& n, NodeId from, const ClaimMsg& m) {
  if (!m.claim || m.claim->round != round_ || m.claim->leader != from) return;
  const auto& c = *m.claim;
  if (c.committee >= cfg_.m || n.leader_of[c.committee] != from ||
      n.version_of[c.committee] != c.version) {
    return;
  }
  if (n.role == Role::Referee) {
    auto& slot = n.slots[{c.committee, c.version}];
    if (slot.claim) return;
    slot.claim = m.claim;
    if (!referee_claim_ok(n, c)) slot.defect = "malformed claim";
    arm_slot_fallback(n, {c.committee, c.version});
    referee_try_propose(n, {c.committee, c.version});
    return;
  }
  if (n.role == Role::PartialSet && n.committee == c.committee) {
    if (n.held_claims.contains(c.version)) return;
    n.held_claims[c.version] = m.claim;
    partial_audit(n, c.version);
  }
}

void World::referee_try_propose(NodeState& n, const SlotKey& key) {
  auto& slot = n.slots[key];
  if (slot.expel_locked || slot.proposed.contains(slot.attempt)) return;
  const auto& ref = referee();
  if (ref[(key.committee + key.version + slot.attempt) % ref.size()] != n.id) return;
  if (key.version != n.version_of[key.committee]) return;
  const NodeId accused = n.leader_of[key.committee];
  const auto& ps = assignment_.partial_sets[key.committee];
  const NodeId successor = key.version < ps.size() ? ps[key.version] : kNoNode;
  if (slot.impeach) {
    if (successor == kNoNode) return;
    slot.proposed.insert(slot.attempt);
    cs_propose(n, Topic::Accusation,
               ExpelBody{round_, key.committee, key.version, accused, successor,
                         slot.impeach->witness, slot.impeach->votes});
    return;
  }
  if (slot.commit_locked) return;
  if (slot.claim && !slot.defect) {
    slot.proposed.insert(slot.attempt);
    cs_propose(n, Topic::Commitment, CommitmentBody{*slot.claim});
  } else if (slot.deadline_passed && successor != kNoNode) {
    slot.proposed.insert(slot.attempt);
    cs_propose(n, Topic::Accusation,
               ExpelBody{round_, key.committee, key.version, accused, successor, nullptr, {}});
  }
}

void World::referee_slot_timer(NodeState& n, const SlotKey& key, std::uint32_t attempt) {
  auto& slot = n.slots[key];
  if (slot.attempt != attempt || slot.expel_locked) return;
  if (slot.commit_locked && !slot.impeach) return;
  if (key.version != n.version_of[key.committee]) return;
  ++slot.attempt;
  arm_slot_fallback(n, key);
  referee_try_propose(n, key);
}

// Duplicate timers for one attempt are harmless: only the first advances it.
void World::arm_slot_fallback(NodeState& n, const SlotKey& key) {
  TimerMsg t;
  t.kind = TimerKind::SlotFallback;
  t.a = key.committee;
  t.b = key.version;
  t.key.seq = n.slots[key].attempt;
  timer(n, sched_.window, t);
}

void World::on_attestation(NodeState& n, const AttestationMsg& m) {
  const auto& a = m.att;
  if (a.round != round_ || a.committee >= cfg_.m || !n.is_key()) return;
  if (!contains(referee(), a.referee)) return;
  auto& list = n.atts[{a.committee, a.version}];
  if (std::any_of(list.begin(), list.end(),
                  [&](const RefereeAttestation& x) { return x.referee == a.referee; }))
    return;
  if (!crypto_->verify(*dir_.key_of(a.referee), a.signed_bytes(), a.sig)) return;
  list.push_back(a);
  // Signatures are checked on arrival, so counting here is enough.
  const auto same = std::count_if(list.begin(), list.end(), [&](const RefereeAttestation& x) {
    return x.digest == a.digest && x.leader == a.leader;
  });
  if (static_cast<std::size_t>(same) < referee().size() / 2 + 1) return;
  const std::optional<Digest> agreed = a.digest;
  auto it = n.accepted.find(a.committee);
  if (it != n.accepted.end() && it->second.first >= a.version) return;
  n.accepted[a.committee] = {a.version, *agreed};
  if (n.role == Role::PartialSet && a.committee == n.committee) partial_audit(n, a.version);
  if (n.leading && !n.cross_deferred.empty()) {
    auto deferred = std::move(n.cross_deferred);
    n.cross_deferred.clear();
    for (const auto& c : deferred) process_cross(n, c);
  }
}

void World::partial_audit(NodeState& n, std::uint32_t version) {
  if (version != n.version_of[n.committee]) return;
  auto it = n.held_claims.find(version);
  if (it == n.held_claims.end()) return;
  const auto ctx = judge(n, n.committee);
  const auto atts_it = n.atts.find({n.committee, version});
  const std::vector<RefereeAttestation> none;
  const auto& atts = atts_it == n.atts.end() ? none : atts_it->second;
  if (auto w = committee::verify_commitment_as_partial(*it->second, n.acks, atts, ctx))
    start_impeachment(n, std::make_shared<const Witness>(std::move(*w)));
}

// ---- impeachment -----------------------------------------------------------------

void World::raise_witness(NodeState& n, const Witness& w) {
  auto ptr = std::make_shared<const Witness>(w);
  if (n.role == Role::PartialSet && n.committee == w.committee) {
    start_impeachment(n, ptr);
    return;
  }
  if (!n.accused.insert(ptr->digest()).second) return;
  WitnessForwardMsg fwd{round_, n.id, ptr};
  std::vector<NodeId> to;
  for (NodeId id : assignment_.partial_sets[w.committee])
    if (id != n.id) to.push_back(id);
  multicast(n, to, fwd);
}

void World::start_impeachment(NodeState& n, WitnessPtr w, bool checked) {
  const Digest d = w->digest();
  if (n.impeach.contains(d)) return;
  if (checked && !committee::validate_witness(*w, judge(n, n.committee))) return;
  n.accused.insert(d);
  if (checked && witness_seen_.insert(d).second) ++metrics_.witnesses;
  ImpeachVote vote{round_, n.committee, w->accused, d, n.id, {}};
  vote.sig = crypto_->sign(n.keys.secret_key, vote.signed_bytes());
  n.voted.insert(d);
  auto& entry = n.impeach[d];
  entry.first = w;
  entry.second[n.id] = vote;
  multicast(n, committee_targets(n), AccuseMsg{round_, n.id, w});
  on_impeach_vote(n, ImpeachVoteMsg{vote});
}

void World::on_accuse(NodeState& n, NodeId from, const AccuseMsg& m) {
  if (m.round != round_ || !m.witness || !n.in_committee() || m.accuser != from) return;
  if (!contains(assignment_.partial_sets[n.committee], from)) return;
  const Digest d = m.witness->digest();
  if (n.voted.contains(d)) return;
  if (!committee::validate_witness(*m.witness, judge(n, n.committee))) return;
  n.voted.insert(d);
  ImpeachVote vote{round_, n.committee, m.witness->accused, d, n.id, {}};
  vote.sig = crypto_->sign(n.keys.secret_key, vote.signed_bytes());
  send(n, from, ImpeachVoteMsg{vote});
}

void World::on_witness_forward(NodeState& n, const WitnessForwardMsg& m) {
  if (m.round != round_ || !m.witness) return;
  if (n.role != Role::PartialSet || n.committee != m.witness->committee) return;
  start_impeachment(n, m.witness);
}

void World::on_impeach_vote(NodeState& n, const ImpeachVoteMsg& m) {
  const auto& v = m.vote;
  auto it = n.impeach.find(v.witness);
  if (it == n.impeach.end() || v.round != round_ || v.committee != n.committee) return;
  auto& [witness, votes] = it->second;
  // Count against the list the referee will use.
  Roster roster = committee_roster(n);
  if (const auto* claim = witness_claim(*witness)) {
    std::vector<NodeId> ids;
    for (const auto& e : claim->members) ids.push_back(e.id);
    roster = Roster(std::move(ids));
  }
  if (!roster.contains(v.voter)) return;
  if (!crypto_->verify(*dir_.key_of(v.voter), v.signed_bytes(), v.sig)) return;
  votes[v.voter] = v;
  if (votes.size() < roster.quorum() || n.impeach_sent.contains(v.witness)) return;
  n.impeach_sent.insert(v.witness);
  ImpeachMsg msg{round_, n.committee, n.version_of[n.committee], witness->accused, n.id, witness,
                 {}};
  for (const auto& [_, vote] : votes) msg.votes.push_back(vote);
  multicast(n, referee(), msg);
}

void World::on_impeach(NodeState& n, const ImpeachMsg& m) {
  if (n.role != Role::Referee || m.round != round_ || m.committee >= cfg_.m || !m.witness) return;
  const SlotKey key{m.committee, m.version};
  auto& slot = n.slots[key];
  if (slot.impeach || slot.expel_locked || m.version != n.version_of[m.committee]) return;
  ExpelBody probe{round_, m.committee, m.version, m.accused, kNoNode, m.witness, m.votes};
  if (!expel_acceptable(n, probe)) return;
  slot.impeach = m;
  arm_slot_fallback(n, key);
  referee_try_propose(n, key);
}

bool World::expel_acceptable(NodeState& n, const ExpelBody& b) {
  if (b.round != round_ || b.committee >= cfg_.m) return false;
  const CommitteeId k = b.committee;
  if (b.version != n.version_of[k] || b.accused != n.leader_of[k]) return false;
  const auto& ps = assignment_.partial_sets[k];
  const NodeId successor = b.version < ps.size() ? ps[b.version] : kNoNode;
  if (b.successor != kNoNode && b.successor != successor) return false;
  auto& slot = n.slots[{k, b.version}];
  if (!b.witness) {
    // Only a leader that never delivered a usable claim is expelled without
    // evidence.
    return slot.deadline_passed && !slot.commit_locked && (!slot.claim || slot.defect);
  }
  if (!committee::validate_witness(*b.witness, judge(n, k))) return false;
  // Claim-based evidence names the member list the votes are counted
  // against; other evidence uses the locked commitment.
  std::optional<Roster> roster;
  if (const auto* claim = witness_claim(*b.witness)) {
    std::vector<NodeId> ids;
    for (const auto& e : claim->members) ids.push_back(e.id);
    roster = Roster(std::move(ids));
  } else {
    roster = committed_roster(n, k, b.accused);
  }
  if (!roster) return false;
  std::set<NodeId> voters;
  for (const auto& v : b.votes) {
    if (v.round != round_ || v.committee != k || v.accused != b.accused ||
        v.witness != b.witness->digest() || !roster->contains(v.voter))
      continue;
    if (!crypto_->verify(*dir_.key_of(v.voter), v.signed_bytes(), v.sig)) continue;
    voters.insert(v.voter);
  }
  return voters.size() >= roster->quorum();
}

void World::on_expel_locked(NodeState& n, const ExpelBody& b) {
  if (n.role != Role::Referee) return;
  auto& slot = n.slots[{b.committee, b.version}];
  if (slot.expel_locked || b.version != n.version_of[b.committee]) return;
  slot.expel_locked = true;
  const CommitteeId k = b.committee;
  const std::uint32_t next = b.version + 1;
  n.evicted.insert(b.accused);
  n.version_of[k] = next;
  n.leader_of[k] = b.successor;

  if (evicted_slots_.insert({k, b.version}).second) {
    Eviction ev{round_, k, b.accused, b.successor,
                b.witness ? std::string(b.witness->kind()) : "invalid-claim",
                nodes_[b.accused].corrupted(), now() - t0()};
    ++metrics_.evictions;
    if (!ev.leader_corrupted) ++metrics_.honest_evictions;
    result_.evictions.push_back(std::move(ev));
  }

  NewLeaderMsg msg{round_, k, next, b.accused, b.successor, n.id, {}};
  msg.sig = crypto_->sign(n.keys.secret_key, msg.signed_bytes());
  std::set<NodeId> to;
  if (auto roster = committed_roster(n, k, b.accused))
    for (NodeId id : roster->members()) to.insert(id);
  for (NodeId id : all_key_members()) to.insert(id);
  to.erase(n.id);
  multicast(n, {to.begin(), to.end()}, msg);

  // The successor's claim is due once it has heard of its promotion.
  TimerMsg t;
  t.kind = TimerKind::ClaimDeadline;
  t.a = k;
  t.b = next;
  timer(n, cfg_.partial_sync_cap + 3 * cfg_.gamma + cfg_.delta, t);
}

void World::on_new_leader(NodeState& n, const NewLeaderMsg& m) {
  if (m.round != round_ || m.committee >= cfg_.m || !contains(referee(), m.referee)) return;
  if (!crypto_->verify(*dir_.key_of(m.referee), m.signed_bytes(), m.sig)) return;
  const CommitteeId k = m.committee;
  if (m.version <= n.version_of[k]) return;
  auto& votes = n.new_votes[{k, m.version}];
  if (!votes.emplace(m.referee, m.leader).second) return;
  // Commons only hear from the referee over the slow network, so the new
  // leader passes the notices on inside its committee.
  if (m.leader == n.id && n.in_committee() && n.committee == k)
    multicast(n, committee_targets(n), m);
  std::size_t same = 0;
  for (const auto& [_, leader] : votes) same += leader == m.leader ? 1 : 0;
  if (same >= Roster(referee()).quorum()) adopt_leader(n, k, m.version, m.leader);
}

void World::adopt_leader(NodeState& n, CommitteeId k, std::uint32_t version, NodeId leader) {
  if (version <= n.version_of[k]) return;
  n.evicted.insert(n.leader_of[k]);
  n.version_of[k] = version;
  n.leader_of[k] = leader;
  if (!n.in_committee() || n.committee != k) return;
  if (n.leading && n.id != leader) n.leading = false;
  if (n.id == leader) {
    n.leading = true;
    n.leading_version = version;
    leader_commit(n);
    TimerMsg t;
    t.kind = TimerKind::IntraStart;
    t.b = version;
    timer(n, 6 * cfg_.gamma, t);
  } else if (n.role == Role::PartialSet) {
    partial_audit(n, version);
  }
}

void World::frame(NodeState& n) {
  if (n.framed) return;
  n.framed = true;
  adversary::FramingView v;
  v.round = round_;
  v.committee = n.committee;
  v.self = n.id;
  v.leader = n.leader_of[n.committee];
  v.version = n.version_of[n.committee];
  v.crypto = crypto_.get();
  v.keys = n.keys;
  if (auto it = board_.headers.find(v.leader); it != board_.headers.end())
    v.leader_headers = it->second;
  if (auto it = n.held_claims.find(v.version); it != n.held_claims.end()) {
    v.claim = *it->second;
    for (const auto& [pk, cert] : n.view) {
      if (std::none_of(v.claim->members.begin(), v.claim->members.end(),
                       [&](const MemberEntry& e) { return e.pk == pk; }))
        v.outsiders.push_back(cert);
    }
  }
  v.referee = referee();
  for (auto& w : n.strategy->on_accuse(v, n.rng)) {
    auto ptr = std::make_shared<const Witness>(std::move(w));
    start_impeachment(n, ptr, false);
    // Push the fabricated case to the referee without waiting for votes.
    ImpeachMsg msg{round_, n.committee, v.version, v.leader, n.id, ptr, {}};
    msg.votes.push_back(n.impeach[ptr->digest()].second.at(n.id));
    multicast(n, referee(), msg);
  }
}

}  // namespace cycledger::sim
