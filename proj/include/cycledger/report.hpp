#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "cycledger/probability.hpp"
#include "cycledger/simulation.hpp"

namespace cycledger::report {

// ---- configuration -------------------------------------------------------------

// Sets one `key = value` field. Throws ConfigError naming the field.
void apply_setting(sim::RunConfig& cfg, std::string_view key, std::string_view value);
// Flat `key = value` lines; `#` starts a comment. Throws ConfigError.
void load_config(sim::RunConfig& cfg, std::istream& in);
void load_config_file(sim::RunConfig& cfg, const std::string& path);

// ---- CSV -------------------------------------------------------------------------

std::string metrics_csv(const std::vector<sim::RoundMetrics>& rounds);
std::string reputation_csv(const std::vector<sim::ReputationRow>& rows);
std::string evictions_csv(const std::vector<sim::Eviction>& evictions);
std::string failure_csv(const std::vector<prob::FailureRow>& rows);

// ---- complexity ------------------------------------------------------------------

enum class Sweep : std::uint8_t { CommitteeSize, Committees };
std::string_view to_string(Sweep s);

// Per-node weighted message load of one (role, phase) at one sweep point.
struct ComplexityPoint {
  Sweep sweep = Sweep::CommitteeSize;
  double x = 0.0;
  sim::MetricRole role = sim::MetricRole::Common;
  Phase phase = Phase::Configuration;
  double load = 0.0;
};

struct ComplexitySlope {
  Sweep sweep = Sweep::CommitteeSize;
  sim::MetricRole role = sim::MetricRole::Common;
  Phase phase = Phase::Configuration;
  double slope = 0.0;
  double expected = 0.0;  // NaN when no prediction applies
};

struct ComplexityPlan {
  std::vector<std::uint32_t> committee_sizes{8, 16, 32};  // with m fixed
  std::uint32_t fixed_m = 4;
  std::uint32_t lambda_c = 2;
  std::vector<std::uint32_t> committee_counts{16, 32, 64};  // with c fixed
  std::uint32_t fixed_c = 8;
  std::uint32_t lambda_m = 4;
  std::uint32_t rounds = 1;
  std::uint64_t seed = 1;
  std::uint32_t seeds = 1;  // runs per sweep value, from seed upward
};

// Runs both sweeps; one point per (sweep value, role, phase).
std::vector<ComplexityPoint> complexity_sweep(const ComplexityPlan& plan);
// Log-log slopes per (sweep, role, phase). Throws InsufficientData when a
// series has fewer than three distinct x values.
std::vector<ComplexitySlope> complexity_report(const std::vector<ComplexityPoint>& points);
std::string complexity_csv(const std::vector<ComplexitySlope>& slopes);

// Growth exponents predicted for per-node load.
double expected_slope(Sweep sweep, sim::MetricRole role, Phase phase);

}  // namespace cycledger::report
