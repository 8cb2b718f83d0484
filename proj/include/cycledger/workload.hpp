#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <vector>

#include "cycledger/ledger.hpp"
#include "cycledger/rng.hpp"

namespace cycledger {

struct WorkloadParams {
  std::uint32_t committees = 1;
  std::uint32_t users = 64;
  std::uint32_t coins_per_user = 2;
  std::uint64_t coin_amount = 1000;
  double p_cross = 0.2;
  double invalid_rate = 0.0;
};

// Synthetic users submitting payments. Every generated valid transaction
// spends a confirmed output that no other pending transaction holds, so
// valid submissions never conflict with each other.
class Workload {
 public:
  Workload(WorkloadParams params, std::uint64_t seed);

  const std::vector<crypto::KeyPair>& users() const { return users_; }
  const std::map<crypto::PublicKey, crypto::SecretKey>& wallet() const { return wallet_; }
  ledger::UtxoSet genesis_state() const;

  // Up to `budget` transactions for shard `k`: carried-over ones first, then
  // fresh ones generated against `state`.
  std::vector<ledger::Transaction> intake(CommitteeId k, std::size_t budget,
                                          const ledger::UtxoSet& state,
                                          const crypto::CryptoProvider& crypto);

  // Returns unpacked transactions to the head of their shard queue if they
  // still validate; others release their reservations.
  void carry_over(CommitteeId k, const std::vector<ledger::Transaction>& txs,
                  const ledger::UtxoSet& state, const crypto::CryptoProvider& crypto);

  const std::set<crypto::Digest>& submitted_valid() const { return valid_; }
  const std::set<crypto::Digest>& submitted_invalid() const { return invalid_; }
  // Valid submissions whose outputs cross shards.
  std::size_t cross_submitted() const { return cross_; }

 private:
  std::optional<ledger::Transaction> generate(CommitteeId k, const ledger::UtxoSet& state,
                                              const crypto::CryptoProvider& crypto);

  WorkloadParams params_;
  Rng rng_;
  std::vector<crypto::KeyPair> users_;
  std::vector<std::vector<std::size_t>> by_shard_;
  std::map<crypto::PublicKey, crypto::SecretKey> wallet_;
  std::map<CommitteeId, std::deque<ledger::Transaction>> queue_;
  std::set<crypto::Digest> reserved_;
  std::set<crypto::Digest> valid_;
  std::set<crypto::Digest> invalid_;
  std::size_t cross_ = 0;
  std::uint64_t nonce_ = 0;
};

}  // namespace cycledger
