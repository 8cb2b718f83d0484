#include "cycledger/ledger.hpp"

#include <algorithm>
#include <bit>

namespace cycledger::ledger {

crypto::Bytes Transaction::body() const {
  crypto::ByteWriter w;
  w.str("tx").u64(inputs.size());
  for (const auto& in : inputs) w.digest(in);
  w.u64(outputs.size());
  for (const auto& out : outputs) w.key(out.owner).u64(out.amount);
  w.u64(nonce);
  return std::move(w).take();
}

Digest Transaction::id() const { return crypto::hash(body()); }

std::uint64_t Transaction::output_total() const {
  std::uint64_t sum = 0;
  for (const auto& o : outputs) sum += o.amount;
  return sum;
}

Digest utxo_id(const Digest& tx_id, std::uint32_t output_index) {
  crypto::ByteWriter w;
  w.str("utxo").digest(tx_id).u32(output_index);
  return crypto::hash(w);
}

CommitteeId shard_of(const PublicKey& owner, std::uint32_t committees) {
  // Keys are hash outputs already, so their value is uniform over shards.
  return static_cast<CommitteeId>(owner.bytes.mod(committees));
}

const Utxo* UtxoSet::find(const Digest& id) const {
  auto it = utxos_.find(id);
  return it == utxos_.end() ? nullptr : &it->second;
}

void UtxoSet::add(const Utxo& u) { utxos_[u.id] = u; }

std::uint64_t UtxoSet::total() const {
  std::uint64_t sum = 0;
  for (const auto& [_, u] : utxos_) sum += u.amount;
  return sum;
}

std::uint64_t UtxoSet::shard_total(CommitteeId shard) const {
  std::uint64_t sum = 0;
  for (const auto& [_, u] : utxos_)
    if (u.shard == shard) sum += u.amount;
  return sum;
}

Digest UtxoSet::shard_digest(CommitteeId shard) const {
  crypto::ByteWriter w;
  w.str("utxo-list").u32(shard);
  for (const auto& [id, u] : utxos_) {
    if (u.shard != shard) continue;
    w.digest(id).key(u.owner).u64(u.amount);
  }
  return crypto::hash(w);
}

std::vector<Utxo> UtxoSet::outputs_of(const Transaction& tx) const {
  std::vector<Utxo> out;
  const Digest id = tx.id();
  for (std::uint32_t i = 0; i < tx.outputs.size(); ++i) {
    const auto& o = tx.outputs[i];
    out.push_back(Utxo{utxo_id(id, i), o.owner, o.amount, shard_of(o.owner, committees_)});
  }
  return out;
}

void UtxoSet::apply(const Transaction& tx) {
  for (const auto& in : tx.inputs) utxos_.erase(in);
  for (const auto& u : outputs_of(tx)) utxos_[u.id] = u;
}

TxCheck check_transaction(const Transaction& tx, const UtxoSet& state,
                          const crypto::CryptoProvider& crypto) {
  if (tx.inputs.empty()) return {false, 0, "no inputs"};
  if (tx.signatures.size() != tx.inputs.size()) return {false, 0, "signature count mismatch"};
  std::set<Digest> seen;
  std::uint64_t in_total = 0;
  const auto body = tx.body();
  for (std::size_t i = 0; i < tx.inputs.size(); ++i) {
    if (!seen.insert(tx.inputs[i]).second) return {false, 0, "duplicate input"};
    const Utxo* u = state.find(tx.inputs[i]);
    if (u == nullptr) return {false, 0, "input missing or spent"};
    if (!crypto.verify(u->owner, body, tx.signatures[i])) return {false, 0, "bad signature"};
    in_total += u->amount;
  }
  const std::uint64_t out_total = tx.output_total();
  if (out_total > in_total) return {false, 0, "outputs exceed inputs"};
  return {true, in_total - out_total, {}};
}

std::optional<CommitteeId> input_shard(const Transaction& tx, const UtxoSet& state) {
  std::optional<CommitteeId> shard;
  for (const auto& in : tx.inputs) {
    const Utxo* u = state.find(in);
    if (u == nullptr) return std::nullopt;
    if (shard && *shard != u->shard) return std::nullopt;
    shard = u->shard;
  }
  return shard;
}

std::vector<CommitteeId> leg_shards(const Transaction& tx, CommitteeId source,
                                    std::uint32_t committees) {
  std::set<CommitteeId> legs;
  for (const auto& o : tx.outputs) {
    CommitteeId s = shard_of(o.owner, committees);
    if (s != source) legs.insert(s);
  }
  return {legs.begin(), legs.end()};
}

namespace {

void encode_assignment(crypto::ByteWriter& w, const KeyAssignment& a) {
  w.u64(a.referee.size());
  for (auto id : a.referee) w.u32(id);
  w.u64(a.leaders.size());
  for (auto id : a.leaders) w.u32(id);
  w.u64(a.partial_sets.size());
  for (const auto& ps : a.partial_sets) {
    w.u64(ps.size());
    for (auto id : ps) w.u32(id);
  }
}

}  // namespace

Digest Block::digest() const {
  crypto::ByteWriter w;
  w.str("block").u32(round).u64(tx_sets.size());
  for (const auto& set : tx_sets) {
    w.u32(set.committee).u64(set.txs.size());
    for (const auto& tx : set.txs) w.digest(tx.id());
  }
  w.digest(next_randomness).u64(participants.size());
  for (auto id : participants) w.u32(id);
  w.u64(reputations.size());
  for (const auto& [id, rep] : reputations) w.u32(id).u64(std::bit_cast<std::uint64_t>(rep));
  encode_assignment(w, next);
  w.u64(evicted.size());
  for (auto id : evicted) w.u32(id);
  w.u64(total_fees);
  return crypto::hash(w);
}

std::size_t Block::tx_count() const {
  std::size_t n = 0;
  for (const auto& s : tx_sets) n += s.txs.size();
  return n;
}

double Block::reputation_of(NodeId id) const {
  auto it = std::lower_bound(reputations.begin(), reputations.end(), id,
                             [](const auto& p, NodeId v) { return p.first < v; });
  return (it != reputations.end() && it->first == id) ? it->second : 0.0;
}

PackResult pack_transactions(const UtxoSet& pre, std::vector<DecisionSubmission> submissions,
                             const std::set<std::pair<Digest, CommitteeId>>& confirmed_legs,
                             std::size_t cap, const crypto::CryptoProvider& crypto) {
  std::stable_sort(submissions.begin(), submissions.end(),
                   [](const auto& a, const auto& b) { return a.committee < b.committee; });
  PackResult result;
  std::set<Digest> packed_ids;
  std::set<Digest> spent;
  std::size_t packed = 0;
  for (const auto& sub : submissions) {
    PackedSet* set = nullptr;
    for (const auto& tx : sub.decided) {
      const Digest id = tx.id();
      if (packed_ids.contains(id)) continue;  // duplicate submission
      auto check = check_transaction(tx, pre, crypto);
      bool conflict = std::any_of(tx.inputs.begin(), tx.inputs.end(),
                                  [&](const Digest& in) { return spent.contains(in); });
      auto source = input_shard(tx, pre);
      if (!check.valid || conflict || !source || *source != sub.committee) {
        result.dropped.push_back(tx);
        continue;
      }
      auto legs = leg_shards(tx, *source, pre.committees());
      bool legs_ok = std::all_of(legs.begin(), legs.end(), [&](CommitteeId leg) {
        return confirmed_legs.contains({id, leg});
      });
      if (!legs_ok) {
        result.dropped.push_back(tx);
        continue;
      }
      if (cap != 0 && packed >= cap) {
        result.remaining.push_back(tx);
        continue;
      }
      if (set == nullptr) {
        result.sets.push_back(PackedSet{sub.committee, {}});
        set = &result.sets.back();
      }
      set->txs.push_back(tx);
      packed_ids.insert(id);
      spent.insert(tx.inputs.begin(), tx.inputs.end());
      result.fees += check.fee;
      if (!legs.empty()) ++result.cross_shard;
      ++packed;
    }
  }
  return result;
}

std::uint64_t apply_block(UtxoSet& state, const Block& block) {
  std::uint64_t fees = 0;
  for (const auto& set : block.tx_sets) {
    for (const auto& tx : set.txs) {
      std::uint64_t in_total = 0;
      for (const auto& in : tx.inputs)
        if (const Utxo* u = state.find(in)) in_total += u->amount;
      fees += in_total - std::min(in_total, tx.output_total());
      state.apply(tx);
    }
  }
  return fees;
}

std::vector<Transaction> remaining_transactions(const std::vector<Transaction>& decided,
                                                const Block& block, const UtxoSet& post,
                                                const crypto::CryptoProvider& crypto) {
  std::set<Digest> packed;
  for (const auto& set : block.tx_sets)
    for (const auto& tx : set.txs) packed.insert(tx.id());
  std::vector<Transaction> out;
  for (const auto& tx : decided)
    if (!packed.contains(tx.id()) && validate(tx, post, crypto)) out.push_back(tx);
  return out;
}

void sign_inputs(Transaction& tx, const UtxoSet& state,
                 const std::map<PublicKey, crypto::SecretKey>& wallet,
                 const crypto::CryptoProvider& crypto) {
  tx.signatures.clear();
  const auto body = tx.body();
  for (const auto& in : tx.inputs) {
    const Utxo* u = state.find(in);
    auto key = u ? wallet.find(u->owner) : wallet.end();
    if (key == wallet.end()) {
      tx.signatures.push_back(crypto::Signature{});
      continue;
    }
    tx.signatures.push_back(crypto.sign(key->second, body));
  }
}

}  // namespace cycledger::ledger
