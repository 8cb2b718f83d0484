// Acceptance suite. Prints one PASS/FAIL line per criterion; an optional
// argument selects a single criterion (e.g. `acceptance AC5`).

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "cycledger/adversary.hpp"
#include "cycledger/probability.hpp"
#include "cycledger/report.hpp"
#include "cycledger/reputation.hpp"
#include "cycledger/rng.hpp"
#include "cycledger/simulation.hpp"
#include "oracles.hpp"

using namespace cycledger;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Outcome exact_tail_value() {
  const auto start = std::chrono::steady_clock::now();
  const double tail = prob::hypergeom_tail(2000, 666, 240);
  const double elapsed = seconds_since(start);
  const double reference = oracle::exact_tail(2000, 666, 240).get_d();
  const bool agrees = std::abs(tail - reference) <= 1e-9 * reference;
  return {tail > 0.0 && tail < 2.1e-9 && elapsed < 1.0 && agrees,
          fmt::format("tail={:.6g} reference={:.6g} target<2.1e-09 time={:.3f}s", tail,
                      reference, elapsed)};
}

Outcome bound_dominance() {
  std::string detail;
  bool pass = true;
  for (std::uint64_t n : {600u, 2000u}) {
    const std::uint64_t t = n / 3 - 1;
    std::uint64_t worst_c = 0, violations = 0;
    double worst_ratio = 0.0;
    for (std::uint64_t c = 30; c <= 300; ++c) {
      const double ratio = prob::hypergeom_tail(n, t, c) / std::exp(-static_cast<double>(c) / 12.0);
      if (ratio > 1.0) ++violations;
      if (ratio > worst_ratio) {
        worst_ratio = ratio;
        worst_c = c;
      }
    }
    pass = pass && violations == 0;
    detail += fmt::format("n={}: {} of 271 sizes exceed the bound (worst tail/bound={:.3g} at c={}); ",
                          n, violations, worst_ratio, worst_c);
  }
  std::vector<std::uint64_t> sizes;
  for (std::uint64_t c = 30; c <= 300; c += 30) sizes.push_back(c);
  const auto rows = prob::failure_sweep(2000, 666, sizes);
  bool monotone = true;
  for (std::size_t i = 1; i < rows.size(); ++i)
    monotone = monotone && rows[i].exact_tail < rows[i - 1].exact_tail;
  detail += fmt::format("curve monotone={}", monotone);
  return {pass && monotone, detail};
}

Outcome partial_set_math() {
  const mpq_class f(1, 3);
  const mpq_class single = prob::partial_set_failure_exact(f, 40);
  mpz_class three_40;
  mpz_ui_pow_ui(three_40.get_mpz_t(), 3, 40);
  const bool agrees = single == mpq_class(1, three_40);
  const mpq_class union_bound = 20 * single;
  const bool below = single < prob::parse_exact("8e-20");
  const bool union_ok = union_bound <= prob::parse_exact("2e-18");
  return {agrees && below && union_ok,
          fmt::format("(1/3)^40={:.6g} (<8e-20: {}), 20*(1/3)^40={:.6g} (<=2e-18: {})",
                      single.get_d(), below, union_bound.get_d(), union_ok)};
}

Outcome monte_carlo_agreement() {
  const auto start = std::chrono::steady_clock::now();
  constexpr std::uint64_t trials = 1000000;
  const auto r = prob::monte_carlo_committee(60, 20, 10, trials, 1);
  const double elapsed = seconds_since(start);
  const double p = oracle::exact_tail(60, 20, 10).get_d();
  const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
  const double z = (r.rate - p) / sigma;
  return {std::abs(z) <= 3.0 && elapsed < 30.0,
          fmt::format("rate={:.6f} exact={:.6f} z={:.2f} time={:.2f}s", r.rate, p, z, elapsed)};
}

Outcome honest_end_to_end() {
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    sim::RunConfig cfg;
    cfg.n = 120;
    cfg.m = 4;
    cfg.lambda = 5;
    cfg.rounds = 5;
    cfg.tx_budget = 32;
    cfg.seed = seed;
    const auto r = sim::run(cfg);
    double worst = 0.0;
    std::size_t submitted = 0, packed = 0;
    for (const auto& m : r.rounds) {
      const double fees = static_cast<double>(m.fees);
      worst = std::max(worst, std::abs(m.rewards - fees) / std::max(1.0, fees));
      submitted += m.txs_submitted;
      packed += m.txs_packed;
    }
    const bool ok = r.unpacked_valid == 0 && r.double_spend_free && r.conservation_ok &&
                    worst <= 1e-9 && r.rounds.size() == 5;
    pass = pass && ok;
    detail += fmt::format("seed {}: packed {}/{} unpacked_valid={} double_spend_free={} "
                          "conserved={} reward_err={:.2g}; ",
                          seed, packed, submitted, r.unpacked_valid, r.double_spend_free,
                          r.conservation_ok, worst);
  }
  return {pass, detail};
}

Outcome recovery_completeness() {
  bool pass = true;
  std::string detail;
  for (const char* strategy : {"EquivocatingLeader", "ForgedMemberList",
                               "ConcealingCrossShardLeader", "FalseSemiCommitment"}) {
    int ok = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      sim::RunConfig cfg;
      cfg.seed = seed;
      cfg.rounds = 1;
      const auto k = static_cast<CommitteeId>(seed % cfg.m);
      cfg.corruption = {adversary::parse_request(fmt::format("0:leader@{}:{}", k, strategy))};
      const auto r = sim::run(cfg);
      const bool evicted = std::any_of(r.evictions.begin(), r.evictions.end(), [&](const auto& e) {
        return e.round == 1 && e.committee == k && e.leader_corrupted;
      });
      if (evicted && r.rounds.at(0).block_produced) ++ok;
    }
    pass = pass && ok == 100;
    detail += fmt::format("{} {}/100; ", strategy, ok);
  }
  return {pass, detail};
}

Outcome recovery_soundness() {
  std::size_t honest = 0, attempts = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    sim::RunConfig cfg;
    cfg.seed = seed;
    cfg.rounds = 1;
    const auto k = seed % cfg.m;
    // Two framers in one partial set, plus one in another committee.
    cfg.corruption = {
        adversary::parse_request(fmt::format("0:partial@{}.0:FramingPartialMember", k)),
        adversary::parse_request(fmt::format("0:partial@{}.1:FramingPartialMember", k)),
        adversary::parse_request(fmt::format("0:partial@{}.2:FramingPartialMember", (k + 1) % cfg.m))};
    const auto r = sim::run(cfg);
    for (const auto& e : r.evictions) {
      ++attempts;
      if (!e.leader_corrupted) ++honest;
    }
  }
  return {honest == 0,
          fmt::format("honest leaders evicted in 100 framed runs: {} (evictions total {})", honest,
                      attempts)};
}

Outcome cross_shard_fallback() {
  int ok = 0;
  std::size_t cross = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    sim::RunConfig cfg;
    cfg.seed = seed;
    cfg.rounds = 1;
    const auto k = seed % cfg.m;
    cfg.corruption = {
        adversary::parse_request(fmt::format("0:leader@{}:SilentCrossShardLeader", k))};
    const auto r = sim::run(cfg);
    cross += r.cross_packed;
    if (r.cross_submitted > 0 && r.cross_packed == r.cross_submitted &&
        r.rounds.at(0).block_produced) {
      ++ok;
    }
  }
  return {ok == 100, fmt::format("{}/100 runs packed every cross-shard tx in round 1 ({} total)",
                                 ok, cross)};
}

Outcome scoring_and_rewards() {
  using reputation::VoteVector;
  const VoteVector u{1, -1, 1, 1, -1};
  const VoteVector neg{-1, 1, -1, -1, 1};
  bool ok = std::abs(reputation::score(u, u) - 1.0) <= 1e-12;
  ok = ok && std::abs(reputation::score(neg, u) + 1.0) <= 1e-12;
  ok = ok && std::abs(reputation::score(VoteVector{1, 1, 0}, VoteVector{1, 1, 1}) -
                      2.0 / std::sqrt(6.0)) <= 1e-12;
  ok = ok && reputation::score(VoteVector{0, 0, 0}, VoteVector{1, -1, 1}) == 0.0;
  const bool g0 = reputation::map_reputation(0.0) == 1.0;
  const bool punish = reputation::punish_leader(8.0) == 2.0;
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(100);
    reputation::ReputationTable table;
    std::vector<NodeId> ids;
    for (NodeId i = 0; i < n; ++i) {
      ids.push_back(i);
      table[i] = (rng.unit() - 0.5) * 60.0;
    }
    const double fees = 1.0 + static_cast<double>(rng.below(1000000));
    double sum = 0.0;
    for (const auto& [_, x] : reputation::distribute_rewards(fees, table, ids)) sum += x;
    worst = std::max(worst, std::abs(sum - fees) / fees);
  }
  return {ok && g0 && punish && worst <= 1e-9,
          fmt::format("score examples={} g(0)=1:{} punish(8)=2:{} worst conservation error={:.2g}",
                      ok, g0, punish, worst)};
}

Outcome complexity_slopes() {
  const auto start = std::chrono::steady_clock::now();
  report::ComplexityPlan plan;
  plan.rounds = 2;
  plan.seeds = 3;
  const auto slopes = report::complexity_report(report::complexity_sweep(plan));
  const double elapsed = seconds_since(start);
  struct Expect {
    report::Sweep sweep;
    sim::MetricRole role;
    Phase phase;
    double slope;
  };
  const Expect expects[] = {
      {report::Sweep::CommitteeSize, sim::MetricRole::Common, Phase::Configuration, 1.0},
      {report::Sweep::CommitteeSize, sim::MetricRole::Key, Phase::Configuration, 2.0},
      {report::Sweep::Committees, sim::MetricRole::Referee, Phase::Commitment, 2.0}};
  bool pass = elapsed < 300.0;
  std::string detail;
  for (const auto& e : expects) {
    auto it = std::find_if(slopes.begin(), slopes.end(), [&](const auto& s) {
      return s.sweep == e.sweep && s.role == e.role && s.phase == e.phase;
    });
    const bool found = it != slopes.end();
    const double got = found ? it->slope : std::nan("");
    pass = pass && found && std::abs(got - e.slope) <= 0.3;
    detail += fmt::format("{}/{} in {}: {:.3f} (expect {:.0f}); ", to_string(e.role),
                          to_string(e.phase), to_string(e.sweep), got, e.slope);
  }
  detail += fmt::format("time={:.1f}s", elapsed);
  return {pass, detail};
}

Outcome determinism() {
  bool pass = true;
  std::string detail;
  sim::RunConfig honest;
  honest.seed = 42;
  honest.rounds = 3;
  sim::RunConfig hostile = honest;
  hostile.corrupt_fraction = 0.25;
  hostile.corrupt_strategy = "EquivocatingLeader";
  for (const auto* cfg : {&honest, &hostile}) {
    const auto a = sim::run(*cfg);
    const auto b = sim::run(*cfg);
    const bool same = sim::chain_dump(a.chain) == sim::chain_dump(b.chain) &&
                      report::metrics_csv(a.rounds) == report::metrics_csv(b.rounds);
    pass = pass && same;
    detail += fmt::format("{}: identical={} ({} blocks); ",
                          cfg->corrupt_fraction > 0 ? "adversarial" : "honest", same, a.chain.size());
  }
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::function<Outcome()>> criteria{
      {"AC1", exact_tail_value},      {"AC2", bound_dominance},
      {"AC3", partial_set_math},      {"AC4", monte_carlo_agreement},
      {"AC5", honest_end_to_end},     {"AC6", recovery_completeness},
      {"AC7", recovery_soundness},    {"AC8", cross_shard_fallback},
      {"AC9", scoring_and_rewards},   {"AC10", complexity_slopes},
      {"AC11", determinism}};
  const std::string filter = argc > 1 ? argv[1] : "";
  if (!filter.empty() && !criteria.contains(filter)) {
    fmt::print(stderr, "unknown criterion '{}'; expected AC1..AC11\n", filter);
    return 2;
  }
  int failed = 0;
  for (int i = 1; i <= 11; ++i) {
    const auto name = fmt::format("AC{}", i);
    if (!filter.empty() && name != filter) continue;
    Outcome out;
    try {
      out = criteria.at(name)();
    } catch (const std::exception& e) {
      out = {false, fmt::format("error: {}", e.what())};
    }
    fmt::print("{} {} {}\n", name, out.pass ? "PASS" : "FAIL", out.detail);
    std::fflush(stdout);
    if (!out.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
