#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <span>
#include <vector>

namespace cycledger::prob {

// Pr[X >= ceil(c/2)] for X ~ Hypergeometric(population n, t marked, c draws),
// summed in log space via log-gamma.
double hypergeom_tail(std::uint64_t n, std::uint64_t t, std::uint64_t c);

// Same sum with exact big-integer binomials.
mpq_class hypergeom_tail_exact(std::uint64_t n, std::uint64_t t, std::uint64_t c);

// e^{-c/12}.
double chernoff_bound(double c);

// f^lambda.
double partial_set_failure(double f, unsigned lambda);
mpq_class partial_set_failure_exact(const mpq_class& f, unsigned lambda);

// m * (e^{-c/12} + (1/3)^lambda): per-round failure union bound.
double round_failure(std::uint64_t m, double c, unsigned lambda);

// Parses "8e-20", "1/3", "0.25" into an exact rational.
mpq_class parse_exact(const std::string& text);

struct MonteCarloResult {
  std::uint64_t trials = 0;
  std::uint64_t failures = 0;
  double rate = 0.0;
  double sigma = 0.0;  // binomial standard error of `rate` around `expected`
};

// Samples committees of size c without replacement from n nodes, t of them
// corrupted; a sample fails when it holds at least ceil(c/2) corrupted nodes.
// `sigma` is computed from the exact tail so callers can test agreement.
MonteCarloResult monte_carlo_committee(std::uint64_t n, std::uint64_t t, std::uint64_t c,
                                       std::uint64_t trials, std::uint64_t seed);

struct FailureRow {
  std::uint64_t c = 0;
  double exact_tail = 0.0;
  double chernoff = 0.0;
};

// Single-committee failure curve over the given committee sizes.
std::vector<FailureRow> failure_sweep(std::uint64_t n, std::uint64_t t,
                                      std::span<const std::uint64_t> sizes);

// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> xs, std::span<const double> ys);

}  // namespace cycledger::prob
