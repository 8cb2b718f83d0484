#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cycledger/probability.hpp"
#include "cycledger/report.hpp"
#include "cycledger/simulation.hpp"

using namespace cycledger;

namespace {

// "-" or empty writes to standard output.
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::ConfigError, fmt::format("cannot write {}", path));
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sharded ledger simulator and security calculators"};
  app.require_subcommand(1);

  // ---- run
  auto* run = app.add_subcommand("run", "Simulate seeded protocol rounds");
  std::string config_path, metrics_path = "-", chain_path, reputation_path, evictions_path,
                           trace_path;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;
  run->add_option("--config", config_path, "key = value configuration file");
  run->add_option("--seed", seed, "Run seed")->required();
  run->add_option("--set", overrides, "Override a field, e.g. --set rounds=5")->take_all();
  run->add_option("--metrics", metrics_path, "Per-round metrics CSV ('-' for stdout)");
  run->add_option("--chain", chain_path, "Chain dump file");
  run->add_option("--reputation", reputation_path, "Reputation CSV");
  run->add_option("--evictions", evictions_path, "Eviction CSV");
  run->add_option("--trace", trace_path, "Message trace file");

  // ---- prob
  auto* prob_cmd = app.add_subcommand("prob", "Exact sampling-failure calculators");
  std::uint64_t pn = 2000, pt = 666, pc = 240, pm = 20;
  unsigned plambda = 40;
  bool exact = false, fig4 = false;
  prob_cmd->add_option("--n", pn, "Population");
  prob_cmd->add_option("--t", pt, "Corrupted nodes");
  prob_cmd->add_option("--c", pc, "Committee size");
  prob_cmd->add_option("--m", pm, "Committees");
  prob_cmd->add_option("--lambda", plambda, "Partial-set size");
  prob_cmd->add_flag("--exact", exact, "Also print the exact rational tail");
  prob_cmd->add_flag("--fig4", fig4, "Failure curve over c = 30, 60, ..., 300 as CSV");

  // ---- mc
  auto* mc = app.add_subcommand("mc", "Monte Carlo committee sampling");
  std::uint64_t mn = 60, mt = 20, mcs = 10, trials = 1000000, mc_seed = 0;
  mc->add_option("--n", mn, "Population");
  mc->add_option("--t", mt, "Corrupted nodes");
  mc->add_option("--c", mcs, "Committee size");
  mc->add_option("--trials", trials, "Samples");
  mc->add_option("--seed", mc_seed, "Sampling seed")->required();

  // ---- complexity
  auto* cx = app.add_subcommand("complexity", "Message-load growth exponents");
  report::ComplexityPlan plan;
  std::string points_path;
  cx->add_option("--seed", plan.seed, "Run seed")->required();
  cx->add_option("--rounds", plan.rounds, "Rounds per sweep point");
  cx->add_option("--seeds", plan.seeds, "Runs per sweep value, from --seed upward");
  cx->add_option("--c-values", plan.committee_sizes, "Committee sizes for the c sweep");
  cx->add_option("--m-values", plan.committee_counts, "Committee counts for the m sweep");
  cx->add_option("--points", points_path, "Raw per-point loads CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) {
      sim::RunConfig cfg;
      if (!config_path.empty()) report::load_config_file(cfg, config_path);
      for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos)
          throw Error(Errc::ConfigError, fmt::format("--set {}: expected key=value", o));
        report::apply_setting(cfg, o.substr(0, eq), o.substr(eq + 1));
      }
      cfg.seed = seed;
      std::optional<std::ofstream> trace;
      if (!trace_path.empty()) {
        trace.emplace(trace_path);
        if (!*trace) throw Error(Errc::ConfigError, fmt::format("cannot write {}", trace_path));
      }
      const auto result = sim::run(cfg, trace ? &*trace : nullptr);
      emit(metrics_path, report::metrics_csv(result.rounds));
      if (!chain_path.empty()) emit(chain_path, sim::chain_dump(result.chain));
      if (!reputation_path.empty()) emit(reputation_path, report::reputation_csv(result.reputation));
      if (!evictions_path.empty()) emit(evictions_path, report::evictions_csv(result.evictions));
      for (const auto& f : result.failures) std::cerr << "failure: " << f << '\n';
      if (!result.double_spend_free) std::cerr << "failure: double spend detected\n";
      if (!result.conservation_ok) std::cerr << "failure: value not conserved\n";
      return result.double_spend_free && result.conservation_ok ? 0 : 2;
    }
    if (*prob_cmd) {
      if (fig4) {
        std::vector<std::uint64_t> sizes;
        for (std::uint64_t c = 30; c <= 300; c += 30) sizes.push_back(c);
        std::cout << report::failure_csv(prob::failure_sweep(pn, pt, sizes));
        return 0;
      }
      const double tail = prob::hypergeom_tail(pn, pt, pc);
      fmt::print("hypergeom_tail({}, {}, {}) = {:.6e}\n", pn, pt, pc, tail);
      fmt::print("chernoff_bound({}) = {:.6e}\n", pc, prob::chernoff_bound(static_cast<double>(pc)));
      fmt::print("partial_set_failure(1/3, {}) = {:.6e}\n", plambda,
                 prob::partial_set_failure(1.0 / 3.0, plambda));
      fmt::print("round_failure({}, {}, {}) = {:.6e}\n", pm, pc, plambda,
                 prob::round_failure(pm, static_cast<double>(pc), plambda));
      fmt::print("committee union bound m * tail = {:.6e}\n", static_cast<double>(pm) * tail);
      if (exact) {
        const auto q = prob::hypergeom_tail_exact(pn, pt, pc);
        fmt::print("exact tail = {:.6e} ({} digit denominator)\n", q.get_d(),
                   q.get_den().get_str().size());
      }
      return 0;
    }
    if (*mc) {
      const auto r = prob::monte_carlo_committee(mn, mt, mcs, trials, mc_seed);
      const double exact_tail = prob::hypergeom_tail(mn, mt, mcs);
      fmt::print("trials,failures,rate,exact,sigma,z\n{},{},{:.6e},{:.6e},{:.6e},{:.3f}\n",
                 r.trials, r.failures, r.rate, exact_tail, r.sigma,
                 r.sigma > 0 ? (r.rate - exact_tail) / r.sigma : 0.0);
      return 0;
    }
    if (*cx) {
      const auto points = report::complexity_sweep(plan);
      if (!points_path.empty()) {
        std::string csv = "sweep,x,role,phase,load\n";
        for (const auto& p : points)
          csv += fmt::format("{},{},{},{},{:.6g}\n", report::to_string(p.sweep), p.x,
                             sim::to_string(p.role), to_string(p.phase), p.load);
        emit(points_path, csv);
      }
      std::cout << report::complexity_csv(report::complexity_report(points));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
