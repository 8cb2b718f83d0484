#include "cycledger/workload.hpp"

#include <algorithm>

namespace cycledger {

Workload::Workload(WorkloadParams params, std::uint64_t seed)
    : params_(params), rng_(Rng::derive(seed, "workload")), by_shard_(params.committees) {
  for (std::uint32_t i = 0; i < params_.users; ++i) {
    auto kp = crypto::derive_keypair(seed, "user", i);
    wallet_[kp.public_key] = kp.secret_key;
    by_shard_[ledger::shard_of(kp.public_key, params_.committees)].push_back(users_.size());
    users_.push_back(kp);
  }
}

ledger::UtxoSet Workload::genesis_state() const {
  ledger::UtxoSet state(params_.committees);
  for (std::size_t u = 0; u < users_.size(); ++u) {
    for (std::uint32_t c = 0; c < params_.coins_per_user; ++c) {
      crypto::ByteWriter w;
      w.str("genesis-coin").u64(u).u32(c);
      const auto& pk = users_[u].public_key;
      state.add(ledger::Utxo{crypto::hash(w), pk, params_.coin_amount,
                             ledger::shard_of(pk, params_.committees)});
    }
  }
  return state;
}

std::optional<ledger::Transaction> Workload::generate(CommitteeId k, const ledger::UtxoSet& state,
                                                      const crypto::CryptoProvider& crypto) {
  // Spendable, unreserved outputs of shard k, in id order for determinism.
  std::vector<const ledger::Utxo*> spendable;
  for (const auto& [id, u] : state.all())
    if (u.shard == k && !reserved_.contains(id)) spendable.push_back(&u);
  if (spendable.empty()) return std::nullopt;
  const auto& input = *spendable[rng_.below(spendable.size())];

  const bool cross = params_.committees > 1 && rng_.chance(params_.p_cross);
  std::vector<std::size_t> candidates;
  for (CommitteeId s = 0; s < params_.committees; ++s) {
    if ((s != k) != cross) continue;
    candidates.insert(candidates.end(), by_shard_[s].begin(), by_shard_[s].end());
  }
  if (candidates.empty()) return std::nullopt;
  const auto& to = users_[candidates[rng_.below(candidates.size())]].public_key;

  ledger::Transaction tx;
  tx.inputs = {input.id};
  tx.nonce = nonce_++;
  if (input.amount >= 3) {
    const std::uint64_t pay = input.amount / 2;
    tx.outputs = {{to, pay}, {input.owner, input.amount - pay - 1}};
  } else {
    tx.outputs = {{to, input.amount}};
  }
  const bool invalid = rng_.chance(params_.invalid_rate);
  if (invalid) {
    // Over-spend by one unit; the signature stays genuine.
    tx.outputs.front().amount += input.amount;
  }
  ledger::sign_inputs(tx, state, wallet_, crypto);
  if (invalid) {
    invalid_.insert(tx.id());
  } else {
    reserved_.insert(input.id);
    valid_.insert(tx.id());
    if (!ledger::leg_shards(tx, k, params_.committees).empty()) ++cross_;
  }
  return tx;
}

std::vector<ledger::Transaction> Workload::intake(CommitteeId k, std::size_t budget,
                                                  const ledger::UtxoSet& state,
                                                  const crypto::CryptoProvider& crypto) {
  std::vector<ledger::Transaction> out;
  auto& q = queue_[k];
  while (!q.empty() && out.size() < budget) {
    out.push_back(std::move(q.front()));
    q.pop_front();
  }
  while (out.size() < budget) {
    auto tx = generate(k, state, crypto);
    if (!tx) break;
    out.push_back(std::move(*tx));
  }
  return out;
}

void Workload::carry_over(CommitteeId k, const std::vector<ledger::Transaction>& txs,
                          const ledger::UtxoSet& state, const crypto::CryptoProvider& crypto) {
  auto& q = queue_[k];
  for (auto it = txs.rbegin(); it != txs.rend(); ++it) {
    const bool valid = ledger::validate(*it, state, crypto);
    if (valid && valid_.contains(it->id())) {
      q.push_front(*it);
    } else {
      for (const auto& in : it->inputs) reserved_.erase(in);
    }
  }
}

}  // namespace cycledger
