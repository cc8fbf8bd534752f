#pragma once

// Independent reference implementations used only by tests. Everything here
// deliberately avoids the library's code paths: extended-precision series
// and continued fractions instead of std::erfc, direct Eq-by-Eq summation
// instead of the library's truncated/renormalized vectors, exhaustive rule
// enumeration instead of the MAP shortcut.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace oracle {

/// exp(x) via range reduction to |r| <= ln2/2 and a Taylor series.
inline long double exp_ld(long double x) {
  constexpr long double ln2 = 0.693147180559945309417232121458176568L;
  if (x < -11500.0L) return 0.0L;
  const long double k = std::floor(x / ln2 + 0.5L);
  const long double r = x - k * ln2;
  long double term = 1.0L;
  long double sum = 1.0L;
  for (int n = 1; n <= 34; ++n) {
    term *= r / static_cast<long double>(n);
    sum += term;
  }
  return std::ldexp(sum, static_cast<int>(k));
}

/// erfc(x) for x >= 0: positive-term series below 2, modified Lentz
/// continued fraction above.
inline long double erfc_ld(long double x) {
  if (x < 0.0L) throw std::invalid_argument("erfc_ld: x must be >= 0");
  constexpr long double two_over_sqrt_pi = 1.128379167095512573896158903122L;
  const long double x2 = x * x;
  if (x < 2.0L) {
    // erf(x) = 2/sqrt(pi) * e^{-x^2} * sum_n (2x^2)^n x / (2n+1)!!
    long double term = x;
    long double sum = x;
    for (int n = 1; n <= 120; ++n) {
      term *= 2.0L * x2 / static_cast<long double>(2 * n + 1);
      sum += term;
      if (term < sum * 1e-24L) break;
    }
    return 1.0L - two_over_sqrt_pi * exp_ld(-x2) * sum;
  }
  // erfc(x) = e^{-x^2}/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
  constexpr long double tiny = 1e-40L;
  long double f = x;
  long double c = x;
  long double d = 0.0L;
  for (int k = 1; k <= 300; ++k) {
    const long double a = 0.5L * static_cast<long double>(k);
    d = x + a * d;
    if (d == 0.0L) d = tiny;
    c = x + a / c;
    if (c == 0.0L) c = tiny;
    d = 1.0L / d;
    const long double delta = c * d;
    f *= delta;
    if (std::fabs(delta - 1.0L) < 1e-24L) break;
  }
  return 0.5L * two_over_sqrt_pi * exp_ld(-x2) / f;
}

inline double sql(double alpha_sq) {
  return static_cast<double>(0.5L * erfc_ld(std::sqrt(2.0L * static_cast<long double>(alpha_sq))));
}

/// Stable Helstrom form; independent of the library through exp_ld. The
/// direct 1 - e subtraction limits validity to alpha_sq >= ~1e-3, which the
/// test grids respect.
inline double helstrom(double alpha_sq) {
  const long double e = exp_ld(-4.0L * static_cast<long double>(alpha_sq));
  const long double one_minus_e = 1.0L - e;
  return static_cast<double>(e / (2.0L * (1.0L + std::sqrt(one_minus_e))));
}

/// Poisson pmf in extended precision: naive factorial form at small n,
/// log-space above.
inline long double poisson_pmf_ld(long double mean, long long n) {
  if (mean == 0.0L) return n == 0 ? 1.0L : 0.0L;
  if (n <= 20) {
    long double factorial = 1.0L;
    for (long long i = 2; i <= n; ++i) factorial *= static_cast<long double>(i);
    return std::pow(mean, static_cast<long double>(n)) * exp_ld(-mean) / factorial;
  }
  const long double nd = static_cast<long double>(n);
  return exp_ld(nd * std::log(mean) - mean - std::lgamma(nd + 1.0L));
}

struct BranchMeans {
  long double n_plus;
  long double n_minus;
};

inline BranchMeans branch_means(double alpha, double beta, double transmissivity,
                                double visibility) {
  const long double a = alpha;
  const long double b = beta;
  const long double t = transmissivity;
  const long double xi = visibility;
  const long double base = t * a * a + b * b;
  const long double cross = 2.0L * xi * std::sqrt(t) * a * b;
  return BranchMeans{base + cross, std::fmax(0.0L, base - cross)};
}

inline long long error_sum_cap(const BranchMeans& means) {
  const long double top = std::fmax(means.n_plus, means.n_minus);
  return static_cast<long long>(std::ceil(top + 40.0L * std::sqrt(top) + 150.0L));
}

/// Ideal-counter discrimination error by direct summation over the photon
/// number. Summing min(p+, p-) is algebraically identical to
/// 1 - (1/2) sum max(p+, p-) for unit-total branches and keeps every digit
/// when the overlap is tiny.
inline double ideal_counter_error(double alpha, double beta, double transmissivity,
                                  double visibility) {
  const BranchMeans means = branch_means(alpha, beta, transmissivity, visibility);
  const long long cap = error_sum_cap(means);
  long double acc = 0.0L;
  for (long long n = 0; n <= cap; ++n) {
    acc += std::fmin(poisson_pmf_ld(means.n_plus, n), poisson_pmf_ld(means.n_minus, n));
  }
  return static_cast<double>(0.5L * acc);
}

/// The literal max form; well-conditioned only when the result is far above
/// the extended-precision epsilon. Used to cross-check the min-form identity.
inline double ideal_counter_error_max_form(double alpha, double beta, double transmissivity,
                                           double visibility) {
  const BranchMeans means = branch_means(alpha, beta, transmissivity, visibility);
  const long long cap = error_sum_cap(means);
  long double acc = 0.0L;
  for (long long n = 0; n <= cap; ++n) {
    acc += std::fmax(poisson_pmf_ld(means.n_plus, n), poisson_pmf_ld(means.n_minus, n));
  }
  return static_cast<double>(1.0L - 0.5L * acc);
}

/// Recurrence-based variant of ideal_counter_error, cheap enough for dense
/// grids; validated against the factorial/log-space form in the tests.
inline double ideal_counter_error_fast(double alpha, double beta, double transmissivity,
                                       double visibility) {
  const BranchMeans means = branch_means(alpha, beta, transmissivity, visibility);
  const long long cap = error_sum_cap(means);
  long double p_plus = exp_ld(-means.n_plus);
  long double p_minus = exp_ld(-means.n_minus);
  long double acc = std::fmin(p_plus, p_minus);
  for (long long n = 1; n <= cap; ++n) {
    const long double nd = static_cast<long double>(n);
    p_plus *= means.n_plus / nd;
    p_minus *= means.n_minus / nd;
    acc += std::fmin(p_plus, p_minus);
  }
  return static_cast<double>(0.5L * acc);
}

/// Minimum error probability over every deterministic decision rule on k
/// outcomes (2^k rules); equal priors. Branches must each sum to one.
inline double brute_force_min_error(const std::vector<double>& p_plus,
                                    const std::vector<double>& p_minus) {
  const std::size_t k = p_plus.size();
  if (k != p_minus.size() || k == 0 || k > 20) {
    throw std::invalid_argument("brute_force_min_error: need 1..20 equal-size outcomes");
  }
  double best = 1.0;
  for (std::uint64_t rule = 0; rule < (std::uint64_t{1} << k); ++rule) {
    double err = 0.0;
    for (std::size_t o = 0; o < k; ++o) {
      const bool decide_plus = (rule >> o) & 1u;
      err += decide_plus ? 0.5 * p_minus[o] : 0.5 * p_plus[o];
    }
    if (err < best) best = err;
  }
  return best;
}

struct GridMin {
  double beta;
  double value;
};

/// Dense grid argmin of the ideal-counter error over beta in [0, b_max].
inline GridMin dense_grid_min(double alpha, double transmissivity, double visibility,
                              std::size_t points, double b_max) {
  GridMin best{0.0, 2.0};
  for (std::size_t i = 0; i < points; ++i) {
    const double beta = b_max * static_cast<double>(i) / static_cast<double>(points - 1);
    const double value = ideal_counter_error_fast(alpha, beta, transmissivity, visibility);
    if (value < best.value) best = GridMin{beta, value};
  }
  return best;
}

}  // namespace oracle
