#include "cycledger/consensus.hpp"

#include <algorithm>

namespace cycledger::consensus {
namespace {

void write_key(crypto::ByteWriter& w, const InstanceKey& k) {
  w.u32(k.proposer).u32(k.round).u64(k.seq).u8(static_cast<std::uint8_t>(k.topic));
}

}  // namespace

std::string_view to_string(Topic topic) {
  switch (topic) {
    case Topic::Commitment: return "commitment";
    case Topic::Decision: return "decision";
    case Topic::CrossDecision: return "cross-decision";
    case Topic::Scores: return "scores";
    case Topic::Accusation: return "accusation";
    case Topic::Beacon: return "beacon";
    case Topic::Block: return "block";
    case Topic::Handoff: return "handoff";
    case Topic::Test: return "test";
  }
  return "?";
}

crypto::Bytes ProposeHeader::signed_bytes() const {
  crypto::ByteWriter w;
  w.str("PROPOSE");
  write_key(w, key);
  w.digest(digest);
  return std::move(w).take();
}

crypto::Bytes EchoMsg::signed_bytes() const {
  crypto::ByteWriter w;
  w.str("ECHO");
  write_key(w, key);
  w.digest(digest).u32(voter);
  return std::move(w).take();
}

crypto::Bytes ConfirmMsg::signed_bytes() const {
  crypto::ByteWriter w;
  w.str("CONFIRM");
  write_key(w, key);
  w.digest(digest).u32(voter);
  return std::move(w).take();
}

Roster::Roster(std::vector<NodeId> members) : members_(std::move(members)) {
  std::sort(members_.begin(), members_.end());
  members_.erase(std::unique(members_.begin(), members_.end()), members_.end());
}

bool Roster::contains(NodeId id) const {
  return std::binary_search(members_.begin(), members_.end(), id);
}

namespace {

bool signed_by(NodeId id, const crypto::Bytes& body, const crypto::Signature& sig,
               const Directory& dir, const crypto::CryptoProvider& crypto) {
  const auto* pk = dir.key_of(id);
  return pk != nullptr && crypto.verify(*pk, body, sig);
}

}  // namespace

bool verify_header(const ProposeHeader& h, const Directory& dir,
                   const crypto::CryptoProvider& crypto) {
  return signed_by(h.key.proposer, h.signed_bytes(), h.sig, dir, crypto);
}

bool verify_echo(const EchoMsg& e, const Directory& dir, const crypto::CryptoProvider& crypto) {
  return signed_by(e.voter, e.signed_bytes(), e.sig, dir, crypto);
}

bool verify_confirm(const ConfirmMsg& c, const Directory& dir,
                    const crypto::CryptoProvider& crypto) {
  return signed_by(c.voter, c.signed_bytes(), c.sig, dir, crypto);
}

bool verify_certificate(const std::vector<ConfirmMsg>& cert, const InstanceKey& key,
                        const Digest& digest, const Roster& roster, const Directory& dir,
                        const crypto::CryptoProvider& crypto) {
  std::set<NodeId> voters;
  for (const auto& c : cert) {
    if (c.key != key || c.digest != digest || !roster.contains(c.voter)) continue;
    if (voters.contains(c.voter) || !verify_confirm(c, dir, crypto)) continue;
    voters.insert(c.voter);
  }
  return voters.size() >= roster.quorum();
}

std::optional<EquivocationWitness> detect_equivocation(const ProposeHeader& a,
                                                       const ProposeHeader& b,
                                                       const Directory& dir,
                                                       const crypto::CryptoProvider& crypto) {
  if (a.key.proposer != b.key.proposer || a.key.round != b.key.round ||
      a.key.seq != b.key.seq || a.digest == b.digest) {
    return std::nullopt;
  }
  if (!verify_header(a, dir, crypto) || !verify_header(b, dir, crypto)) return std::nullopt;
  return EquivocationWitness{a, b};
}

Engine::Engine(NodeId self, crypto::KeyPair keys, const crypto::CryptoProvider& crypto,
               const Directory& dir)
    : self_(self), keys_(keys), crypto_(crypto), dir_(dir) {}

void Engine::begin_round(Round r) {
  if (r == round_ && !instances_.empty()) return;
  round_ = r;
  next_seq_ = 1;
  used_seqs_.clear();
  instances_.clear();
}

ProposeMsg Engine::sign_header(const InstanceKey& key, const Digest& digest,
                               PayloadPtr payload) const {
  ProposeMsg msg;
  msg.header.key = key;
  msg.header.digest = digest;
  msg.header.sig = crypto_.sign(keys_.secret_key, msg.header.signed_bytes());
  msg.payload = std::move(payload);
  return msg;
}

ProposeMsg Engine::propose(Round r, std::uint64_t seq, Topic topic, PayloadPtr payload) {
  if (r != round_) begin_round(r);
  if (!used_seqs_.insert(seq).second) {
    throw Error(Errc::DuplicateSeq, "sequence number reused within the round");
  }
  next_seq_ = std::max(next_seq_, seq + 1);
  const InstanceKey key{self_, r, seq, topic};
  const Digest d = payload_digest(*payload);
  auto& inst = instances_[key];
  inst.mine = true;
  inst.proposed = d;
  inst.proposed_payload = payload;
  return sign_header(key, d, std::move(payload));
}

Engine::Output Engine::absorb_header(Instance& inst, const ProposeHeader& h) {
  Output out;
  if (!inst.header) {
    inst.header = h;
    return out;
  }
  if (inst.header->digest == h.digest) return out;
  if (auto w = detect_equivocation(*inst.header, h, dir_, crypto_)) {
    out.witness = std::move(w);
    inst.aborted = true;
  }
  return out;
}

Engine::Output Engine::on_propose(const Roster& roster, const ProposeMsg& msg,
                                  bool payload_acceptable) {
  Output out;
  const auto& h = msg.header;
  if (h.key.round != round_) {
    ++discarded_;
    out.error = Errc::StaleRound;
    return out;
  }
  if (!roster.contains(self_) || !verify_header(h, dir_, crypto_)) {
    ++discarded_;
    out.error = Errc::UnknownNode;
    return out;
  }
  if (!msg.payload || payload_digest(*msg.payload) != h.digest) {
    ++discarded_;
    out.error = Errc::BadDigest;
    return out;
  }
  auto& inst = instances_[h.key];
  if (inst.aborted) return out;
  out = absorb_header(inst, h);
  if (inst.aborted || inst.header->digest != h.digest) return out;
  if (!inst.payload) inst.payload = msg.payload;
  if (inst.echoed || !payload_acceptable) return out;
  inst.echoed = true;
  EchoMsg e;
  e.key = h.key;
  e.digest = h.digest;
  e.voter = self_;
  e.relayed = h;
  e.sig = crypto_.sign(keys_.secret_key, e.signed_bytes());
  out.echo = e;
  // Echoes may have outrun the proposal itself.
  maybe_confirm(roster, h.key, inst, h.digest, out);
  return out;
}

void Engine::maybe_confirm(const Roster& roster, const InstanceKey& key, Instance& inst,
                           const Digest& digest, Output& out) {
  if (inst.confirmed || inst.aborted) return;
  const auto it = inst.echoes.find(digest);
  if (it == inst.echoes.end() || it->second.size() < roster.quorum()) return;
  // Only confirm the digest this node actually holds the proposal for.
  if (!inst.echoed || !inst.header || inst.header->digest != digest || !inst.payload) return;
  inst.confirmed = true;
  out.locked = true;
  ConfirmMsg c;
  c.key = key;
  c.digest = digest;
  c.voter = self_;
  c.sig = crypto_.sign(keys_.secret_key, c.signed_bytes());
  c.echo_list.reserve(it->second.size());
  for (const auto& [_, echo] : it->second) c.echo_list.push_back(echo);
  out.confirm = std::move(c);
}

Engine::Output Engine::on_echo(const Roster& roster, const EchoMsg& msg) {
  Output out;
  if (msg.key.round != round_) {
    ++discarded_;
    out.error = Errc::StaleRound;
    return out;
  }
  if (!roster.contains(msg.voter) || !verify_echo(msg, dir_, crypto_)) {
    ++discarded_;
    out.error = Errc::UnknownNode;
    return out;
  }
  auto& inst = instances_[msg.key];
  if (inst.aborted) return out;
  // The relayed header lets members spot a leader who showed others a
  // different proposal.
  if (msg.relayed.key == msg.key && msg.relayed.digest == msg.digest &&
      verify_header(msg.relayed, dir_, crypto_)) {
    out = absorb_header(inst, msg.relayed);
    if (inst.aborted) return out;
  } else {
    ++discarded_;
    return out;
  }
  inst.echoes[msg.digest].emplace(msg.voter, msg);
  maybe_confirm(roster, msg.key, inst, msg.digest, out);
  return out;
}

Engine::Output Engine::on_confirm(const Roster& roster, const ConfirmMsg& msg) {
  Output out;
  if (msg.key.round != round_ || msg.key.proposer != self_) {
    ++discarded_;
    out.error = Errc::StaleRound;
    return out;
  }
  auto it = instances_.find(msg.key);
  if (it == instances_.end() || !it->second.mine) {
    ++discarded_;
    return out;
  }
  auto& inst = it->second;
  if (inst.decided || inst.expired || inst.aborted) return out;
  if (msg.digest != inst.proposed || !roster.contains(msg.voter) ||
      !verify_confirm(msg, dir_, crypto_)) {
    ++discarded_;
    return out;
  }
  inst.confirms.emplace(msg.voter, msg);
  if (inst.confirms.size() < roster.quorum()) return out;
  inst.decided = true;
  ConsensusResult res;
  res.key = msg.key;
  res.digest = inst.proposed;
  res.payload = inst.proposed_payload;
  res.sig_list.reserve(inst.confirms.size());
  for (const auto& [_, c] : inst.confirms) res.sig_list.push_back(c);
  out.result = std::move(res);
  return out;
}

bool Engine::expire(const InstanceKey& key) {
  auto it = instances_.find(key);
  if (it == instances_.end()) return false;
  auto& inst = it->second;
  if (!inst.mine || inst.decided || inst.expired) return false;
  inst.expired = true;
  return true;
}

bool Engine::decided(const InstanceKey& key) const {
  auto it = instances_.find(key);
  return it != instances_.end() && it->second.decided;
}

bool Engine::aborted(const InstanceKey& key) const {
  auto it = instances_.find(key);
  return it != instances_.end() && it->second.aborted;
}

PayloadPtr Engine::payload_for(const InstanceKey& key, const Digest& digest) const {
  auto it = instances_.find(key);
  if (it == instances_.end()) return nullptr;
  if (it->second.mine && it->second.proposed == digest) return it->second.proposed_payload;
  if (it->second.header && it->second.header->digest == digest) return it->second.payload;
  return nullptr;
}

}  // namespace cycledger::consensus
