#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "cycledger/adversary.hpp"
#include "cycledger/ledger.hpp"
#include "cycledger/messages.hpp"
#include "cycledger/network.hpp"

namespace cycledger::sim {

struct RunConfig {
  std::uint32_t n = 120;
  std::uint32_t m = 4;
  std::uint32_t c = 0;  // referee target and nominal committee size; 0 = n / (m + 1)
  std::uint32_t lambda = 5;
  Tick delta = 1;
  Tick gamma = 3;
  Tick partial_sync_cap = 0;  // 0 = 10 * gamma
  Tick round_budget = 0;      // 0 = smallest budget that fits every phase, at least 200
  std::uint32_t rounds = 3;
  std::uint32_t tx_budget = 32;
  std::size_t block_cap = 0;  // 0 = unlimited
  std::uint64_t seed = 0;
  net::DelayPolicy policy = net::DelayPolicy::Random;
  std::uint32_t min_referee = 0;  // 0 = ceil(c / 2)
  std::uint32_t users = 0;        // 0 = 8 * m * tx_budget / 2 + 16
  std::uint32_t coins_per_user = 2;
  double p_cross = 0.2;
  double invalid_rate = 0.0;
  double pow_probability = 1.0;  // chance that one PoW attempt succeeds
  std::vector<adversary::CorruptionRequest> corruption;
  double corrupt_fraction = 0.0;  // random nodes corrupted from round 1
  std::string corrupt_strategy = "Offline";

  // Fills derived defaults and checks every field. Throws ConfigError.
  RunConfig resolved() const;
  Tick min_round_budget() const;
};

enum class MetricRole : std::uint8_t { Common, Key, Referee };
inline constexpr std::size_t kMetricRoles = 3;
std::string_view to_string(MetricRole role);

using PhaseTable = std::array<std::array<double, kPhaseCount>, kMetricRoles>;

struct RoundMetrics {
  Round round = 0;
  std::size_t txs_submitted = 0;
  std::size_t txs_packed = 0;
  std::size_t cross_shard = 0;
  std::size_t remaining = 0;
  std::size_t dropped = 0;
  std::size_t evictions = 0;
  std::size_t honest_evictions = 0;
  std::size_t witnesses = 0;
  std::size_t no_quorum = 0;
  std::uint64_t fees = 0;
  double rewards = 0.0;
  std::size_t insecure_committees = 0;
  std::size_t insecure_partial_sets = 0;
  bool insecure_referee = false;
  bool block_produced = false;
  std::array<std::size_t, kMetricRoles> role_nodes{};
  PhaseTable messages{};  // per node of the role, sent plus received
  PhaseTable units{};     // same, weighted by list entries
};

struct Eviction {
  Round round = 0;
  CommitteeId committee = 0;
  NodeId leader = kNoNode;
  NodeId successor = kNoNode;
  std::string kind;  // witness kind, or "invalid-claim"
  bool leader_corrupted = false;
  Tick at = 0;
};

struct ReputationRow {
  Round round = 0;
  NodeId node = kNoNode;
  Role role = Role::Idle;
  double before = 0.0;
  double score = 0.0;
  double after = 0.0;
  double reward = 0.0;
};

struct RunResult {
  std::vector<ledger::Block> chain;  // chain[0] is the genesis block
  std::vector<RoundMetrics> rounds;
  std::vector<Eviction> evictions;
  std::vector<ReputationRow> reputation;
  std::vector<std::string> failures;  // human-readable failure events
  bool double_spend_free = true;
  bool conservation_ok = true;
  std::uint64_t bound_violations = 0;
  std::size_t unpacked_valid = 0;       // valid submissions never packed
  std::size_t cross_submitted = 0;
  std::size_t cross_packed = 0;
};

RunResult run(const RunConfig& config, std::ostream* trace = nullptr);

// One block per line; stable across runs with the same inputs.
std::string chain_dump(const std::vector<ledger::Block>& chain);

}  // namespace cycledger::sim
