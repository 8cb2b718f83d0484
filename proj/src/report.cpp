#include "cycledger/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include <fmt/format.h>

namespace cycledger::report {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(std::string_view key, std::string_view value, std::string_view why) {
  throw Error(Errc::ConfigError, fmt::format("{} = '{}': {}", key, value, why));
}

template <typename T>
T parse_int(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) bad(key, value, "expected an integer");
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  try {
    std::size_t used = 0;
    const std::string s(value);
    const double v = std::stod(s, &used);
    if (used != s.size()) bad(key, value, "expected a number");
    return v;
  } catch (const std::logic_error&) {
    bad(key, value, "expected a number");
  }
}

}  // namespace

void apply_setting(sim::RunConfig& cfg, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  if (key == "n") cfg.n = parse_int<std::uint32_t>(key, value);
  else if (key == "m") cfg.m = parse_int<std::uint32_t>(key, value);
  else if (key == "c") cfg.c = parse_int<std::uint32_t>(key, value);
  else if (key == "lambda") cfg.lambda = parse_int<std::uint32_t>(key, value);
  else if (key == "delta") cfg.delta = parse_int<Tick>(key, value);
  else if (key == "gamma") cfg.gamma = parse_int<Tick>(key, value);
  else if (key == "partial_sync_cap") cfg.partial_sync_cap = parse_int<Tick>(key, value);
  else if (key == "round_budget") cfg.round_budget = parse_int<Tick>(key, value);
  else if (key == "rounds") cfg.rounds = parse_int<std::uint32_t>(key, value);
  else if (key == "tx_budget") cfg.tx_budget = parse_int<std::uint32_t>(key, value);
  else if (key == "block_cap") cfg.block_cap = parse_int<std::size_t>(key, value);
  else if (key == "seed") cfg.seed = parse_int<std::uint64_t>(key, value);
  else if (key == "min_referee") cfg.min_referee = parse_int<std::uint32_t>(key, value);
  else if (key == "users") cfg.users = parse_int<std::uint32_t>(key, value);
  else if (key == "coins_per_user") cfg.coins_per_user = parse_int<std::uint32_t>(key, value);
  else if (key == "p_cross") cfg.p_cross = parse_double(key, value);
  else if (key == "invalid_rate") cfg.invalid_rate = parse_double(key, value);
  else if (key == "pow_probability") cfg.pow_probability = parse_double(key, value);
  else if (key == "corrupt_fraction") cfg.corrupt_fraction = parse_double(key, value);
  else if (key == "corrupt_strategy") cfg.corrupt_strategy = std::string(value);
  else if (key == "delay") {
    if (value == "random") cfg.policy = net::DelayPolicy::Random;
    else if (value == "max") cfg.policy = net::DelayPolicy::Max;
    else if (value == "min") cfg.policy = net::DelayPolicy::Min;
    else bad(key, value, "expected random, max or min");
  } else if (key == "corrupt") {
    try {
      cfg.corruption.push_back(adversary::parse_request(value));
    } catch (const Error& e) {
      bad(key, value, e.what());
    }
  } else {
    bad(key, value, "unknown field");
  }
}

void load_config(sim::RunConfig& cfg, std::istream& in) {
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    std::string_view v(line);
    if (auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
    v = trim(v);
    if (v.empty()) continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos)
      throw Error(Errc::ConfigError, fmt::format("line {}: expected key = value", no));
    apply_setting(cfg, v.substr(0, eq), v.substr(eq + 1));
  }
}

void load_config_file(sim::RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, fmt::format("cannot open config file {}", path));
  load_config(cfg, in);
}

std::string metrics_csv(const std::vector<sim::RoundMetrics>& rounds) {
  std::string out =
      "round,txs_submitted,txs_packed,cross_shard,remaining,dropped,evictions,honest_evictions,"
      "witnesses,no_quorum,fees,rewards,insecure_committees,insecure_partial_sets,"
      "insecure_referee,block_produced";
  constexpr sim::MetricRole roles[] = {sim::MetricRole::Common, sim::MetricRole::Key,
                                       sim::MetricRole::Referee};
  for (const char* kind : {"msgs", "units"})
    for (auto r : roles)
      for (std::size_t p = 0; p < kPhaseCount; ++p)
        out += fmt::format(",{}_{}_{}", kind, to_string(r), to_string(static_cast<Phase>(p)));
  out += '\n';
  for (const auto& m : rounds) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{:.9g},{},{},{},{}", m.round,
                       m.txs_submitted, m.txs_packed, m.cross_shard, m.remaining, m.dropped,
                       m.evictions, m.honest_evictions, m.witnesses, m.no_quorum, m.fees,
                       m.rewards, m.insecure_committees, m.insecure_partial_sets,
                       m.insecure_referee ? 1 : 0, m.block_produced ? 1 : 0);
    for (const auto* table : {&m.messages, &m.units})
      for (std::size_t r = 0; r < sim::kMetricRoles; ++r)
        for (std::size_t p = 0; p < kPhaseCount; ++p) out += fmt::format(",{:.6g}", (*table)[r][p]);
    out += '\n';
  }
  return out;
}

std::string reputation_csv(const std::vector<sim::ReputationRow>& rows) {
  std::string out = "round,node,role,before,score,after,reward\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{:.12g},{:.12g},{:.12g},{:.12g}\n", r.round, r.node,
                       to_string(r.role), r.before, r.score, r.after, r.reward);
  return out;
}

std::string evictions_csv(const std::vector<sim::Eviction>& evictions) {
  std::string out = "round,committee,leader,successor,kind,leader_corrupted,at\n";
  for (const auto& e : evictions)
    out += fmt::format("{},{},{},{},{},{},{}\n", e.round, e.committee, e.leader, e.successor,
                       e.kind, e.leader_corrupted ? 1 : 0, e.at);
  return out;
}

std::string failure_csv(const std::vector<prob::FailureRow>& rows) {
  std::string out = "c,exact_tail,chernoff_bound\n";
  for (const auto& r : rows) out += fmt::format("{},{:.6e},{:.6e}\n", r.c, r.exact_tail, r.chernoff);
  return out;
}

std::string_view to_string(Sweep s) {
  return s == Sweep::CommitteeSize ? "c" : "m";
}

double expected_slope(Sweep sweep, sim::MetricRole role, Phase phase) {
  const double none = std::numeric_limits<double>::quiet_NaN();
  if (sweep == Sweep::CommitteeSize && phase == Phase::Configuration) {
    if (role == sim::MetricRole::Common) return 1.0;
    if (role == sim::MetricRole::Key) return 2.0;
  }
  if (sweep == Sweep::Committees && phase == Phase::Commitment && role == sim::MetricRole::Referee)
    return 2.0;
  return none;
}

std::vector<ComplexityPoint> complexity_sweep(const ComplexityPlan& plan) {
  std::vector<ComplexityPoint> out;
  auto collect = [&](Sweep sweep, double x, const sim::RunConfig& cfg) {
    const auto result = sim::run(cfg);
    const std::size_t rounds = std::max<std::size_t>(result.rounds.size(), 1);
    for (std::size_t r = 0; r < sim::kMetricRoles; ++r) {
      for (std::size_t p = 0; p < kPhaseCount; ++p) {
        double sum = 0.0;
        for (const auto& m : result.rounds) sum += m.units[r][p];
        out.push_back({sweep, x, static_cast<sim::MetricRole>(r), static_cast<Phase>(p),
                       sum / static_cast<double>(rounds)});
      }
    }
  };
  for (auto c : plan.committee_sizes) {
    sim::RunConfig cfg;
    cfg.m = plan.fixed_m;
    cfg.c = c;
    cfg.n = (plan.fixed_m + 1) * c;
    cfg.lambda = plan.lambda_c;
    cfg.rounds = plan.rounds;
    cfg.tx_budget = 8;
    for (std::uint32_t i = 0; i < plan.seeds; ++i) {
      cfg.seed = plan.seed + i;
      collect(Sweep::CommitteeSize, c, cfg);
    }
  }
  for (auto m : plan.committee_counts) {
    sim::RunConfig cfg;
    cfg.m = m;
    cfg.c = plan.fixed_c;
    cfg.n = (m + 1) * plan.fixed_c;
    cfg.lambda = plan.lambda_m;
    cfg.rounds = plan.rounds;
    cfg.tx_budget = 8;
    for (std::uint32_t i = 0; i < plan.seeds; ++i) {
      cfg.seed = plan.seed + i;
      collect(Sweep::Committees, m, cfg);
    }
  }
  return out;
}

std::vector<ComplexitySlope> complexity_report(const std::vector<ComplexityPoint>& points) {
  using Key = std::tuple<Sweep, sim::MetricRole, Phase>;
  std::map<Key, std::pair<std::vector<double>, std::vector<double>>> series;
  for (const auto& p : points) {
    auto& [xs, ys] = series[{p.sweep, p.role, p.phase}];
    xs.push_back(p.x);
    ys.push_back(p.load);
  }
  std::vector<ComplexitySlope> out;
  for (const auto& [key, xy] : series) {
    const auto& [xs, ys] = xy;
    const auto [sweep, role, phase] = key;
    if (std::set<double>(xs.begin(), xs.end()).size() < 3) {
      throw Error(Errc::InsufficientData,
                  fmt::format("{} sweep needs three distinct points", to_string(sweep)));
    }
    // Roles that never touch a phase have nothing to regress.
    if (std::any_of(ys.begin(), ys.end(), [](double y) { return !(y > 0.0); })) continue;
    out.push_back({sweep, role, phase, prob::loglog_slope(xs, ys),
                   expected_slope(sweep, role, phase)});
  }
  if (out.empty()) throw Error(Errc::InsufficientData, "no series with positive load");
  return out;
}

std::string complexity_csv(const std::vector<ComplexitySlope>& slopes) {
  std::string out = "sweep,role,phase,slope,expected,within_tolerance\n";
  for (const auto& s : slopes) {
    const bool has = !std::isnan(s.expected);
    out += fmt::format("{},{},{},{:.4f},{},{}\n", to_string(s.sweep), to_string(s.role),
                       to_string(s.phase), s.slope, has ? fmt::format("{:.1f}", s.expected) : "",
                       has ? (std::abs(s.slope - s.expected) <= 0.3 ? "yes" : "no") : "");
  }
  return out;
}

}  // namespace cycledger::report
