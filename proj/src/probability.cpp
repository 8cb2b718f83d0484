#include "cycledger/probability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cycledger/rng.hpp"
#include "cycledger/types.hpp"

namespace cycledger::prob {

namespace {

void check_domain(std::uint64_t n, std::uint64_t t, std::uint64_t c) {
  if (t > n) throw Error(Errc::DomainError, "t must not exceed n");
  if (c < 1 || c > n) throw Error(Errc::DomainError, "c must lie in [1, n]");
}

double log_choose(std::uint64_t a, std::uint64_t b) {
  return std::lgamma(static_cast<double>(a) + 1.0) - std::lgamma(static_cast<double>(b) + 1.0) -
         std::lgamma(static_cast<double>(a - b) + 1.0);
}

std::uint64_t half_up(std::uint64_t c) { return (c + 1) / 2; }

}  // namespace

double hypergeom_tail(std::uint64_t n, std::uint64_t t, std::uint64_t c) {
  check_domain(n, t, c);
  const std::uint64_t lo = std::max(half_up(c), c > n - t ? c - (n - t) : 0);
  const std::uint64_t hi = std::min(c, t);
  if (lo > hi) return 0.0;
  const double denom = log_choose(n, c);
  std::vector<double> terms;
  terms.reserve(hi - lo + 1);
  for (std::uint64_t x = lo; x <= hi; ++x)
    terms.push_back(log_choose(t, x) + log_choose(n - t, c - x) - denom);
  const double peak = *std::max_element(terms.begin(), terms.end());
  double sum = 0.0;
  for (double v : terms) sum += std::exp(v - peak);
  return std::min(1.0, std::exp(peak) * sum);
}

mpq_class hypergeom_tail_exact(std::uint64_t n, std::uint64_t t, std::uint64_t c) {
  check_domain(n, t, c);
  auto choose = [](std::uint64_t a, std::uint64_t b) {
    mpz_class r;
    mpz_bin_uiui(r.get_mpz_t(), a, b);
    return r;
  };
  mpz_class num = 0;
  for (std::uint64_t x = half_up(c); x <= c; ++x) {
    if (x > t || c - x > n - t) continue;
    num += choose(t, x) * choose(n - t, c - x);
  }
  mpq_class q(num, choose(n, c));
  q.canonicalize();
  return q;
}

double chernoff_bound(double c) {
  if (!(c > 0.0)) throw Error(Errc::DomainError, "committee size must be positive");
  return std::exp(-c / 12.0);
}

double partial_set_failure(double f, unsigned lambda) {
  if (f < 0.0 || f > 1.0) throw Error(Errc::DomainError, "f must lie in [0, 1]");
  if (lambda < 1) throw Error(Errc::DomainError, "lambda must be >= 1");
  return std::pow(f, static_cast<double>(lambda));
}

mpq_class partial_set_failure_exact(const mpq_class& f, unsigned lambda) {
  if (f < 0 || f > 1) throw Error(Errc::DomainError, "f must lie in [0, 1]");
  if (lambda < 1) throw Error(Errc::DomainError, "lambda must be >= 1");
  mpz_class num, den;
  mpz_pow_ui(num.get_mpz_t(), f.get_num_mpz_t(), lambda);
  mpz_pow_ui(den.get_mpz_t(), f.get_den_mpz_t(), lambda);
  mpq_class q(num, den);
  q.canonicalize();
  return q;
}

double round_failure(std::uint64_t m, double c, unsigned lambda) {
  return static_cast<double>(m) * (chernoff_bound(c) + partial_set_failure(1.0 / 3.0, lambda));
}

namespace {

// Base 10 only: the default base would read a leading zero as octal.
mpz_class parse_integer(const std::string& digits, const std::string& text) {
  const auto body = digits.find_first_not_of("+-") == 1 ? digits.substr(1) : digits;
  if (body.empty() || body.find_first_not_of("0123456789") != std::string::npos)
    throw Error(Errc::DomainError, "cannot parse number: " + text);
  return mpz_class(digits.front() == '+' ? body : digits, 10);
}

}  // namespace

mpq_class parse_exact(const std::string& text) {
  auto slash = text.find('/');
  if (slash != std::string::npos) {
    mpz_class den = parse_integer(text.substr(slash + 1), text);
    if (den == 0) throw Error(Errc::DomainError, "zero denominator in " + text);
    mpq_class q(parse_integer(text.substr(0, slash), text), den);
    q.canonicalize();
    return q;
  }
  std::string mantissa = text;
  long exponent = 0;
  auto e = text.find_first_of("eE");
  if (e != std::string::npos) {
    mantissa = text.substr(0, e);
    exponent = parse_integer(text.substr(e + 1), text).get_si();
  }
  auto dot = mantissa.find('.');
  if (dot != std::string::npos) {
    exponent -= static_cast<long>(mantissa.size() - dot - 1);
    mantissa.erase(dot, 1);
  }
  const mpz_class value = parse_integer(mantissa, text);
  mpz_class scale;
  mpz_ui_pow_ui(scale.get_mpz_t(), 10, static_cast<unsigned long>(std::labs(exponent)));
  mpq_class q = exponent >= 0 ? mpq_class(value * scale) : mpq_class(value, scale);
  q.canonicalize();
  return q;
}

MonteCarloResult monte_carlo_committee(std::uint64_t n, std::uint64_t t, std::uint64_t c,
                                       std::uint64_t trials, std::uint64_t seed) {
  check_domain(n, t, c);
  if (trials == 0) throw Error(Errc::DomainError, "trials must be positive");
  Rng rng(seed);
  std::vector<std::uint32_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0u);
  const std::uint64_t threshold = half_up(c);
  MonteCarloResult r;
  r.trials = trials;
  for (std::uint64_t trial = 0; trial < trials; ++trial) {
    std::uint64_t bad = 0;
    for (std::uint64_t i = 0; i < c; ++i) {
      std::uint64_t j = i + rng.below(n - i);
      std::swap(pool[i], pool[j]);
      if (pool[i] < t) ++bad;
    }
    if (bad >= threshold) ++r.failures;
  }
  r.rate = static_cast<double>(r.failures) / static_cast<double>(trials);
  const double p = hypergeom_tail(n, t, c);
  r.sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
  return r;
}

std::vector<FailureRow> failure_sweep(std::uint64_t n, std::uint64_t t,
                                      std::span<const std::uint64_t> sizes) {
  std::vector<FailureRow> rows;
  for (auto c : sizes)
    rows.push_back(FailureRow{c, hypergeom_tail(n, t, c), chernoff_bound(static_cast<double>(c))});
  return rows;
}

double loglog_slope(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw Error(Errc::InsufficientData, "need at least two paired samples");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] <= 0 || ys[i] <= 0) throw Error(Errc::InsufficientData, "non-positive sample");
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(ys.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double dx = std::log(xs[i]) - mx;
    sxy += dx * (std::log(ys[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0) throw Error(Errc::InsufficientData, "x values must differ");
  return sxy / sxx;
}

}  // namespace cycledger::prob
