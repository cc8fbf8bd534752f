#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "tesrx/discriminator.hpp"
#include "tesrx/photon_statistics.hpp"

namespace tesrx {

/// Result of a displacement search: the minimizing amplitude, the error
/// probability there, and how many objective evaluations the search spent.
struct Optimum {
  double beta_opt;
  double p_err_min;
  std::uint64_t evaluations;
};

namespace detail {

/// P(n <= k) for Poisson(mean); ascending recurrence from n = 0.
inline double poisson_head(std::size_t k, double mean) {
  if (mean == 0.0) return 1.0;
  double term = std::exp(-mean);
  double acc = term;
  for (std::size_t n = 1; n <= k; ++n) {
    term *= mean / static_cast<double>(n);
    acc += term;
    if (term == 0.0) break;
  }
  return acc;
}

/// P(n > k) for Poisson(mean) as a direct sum of positive terms, avoiding
/// the cancellation of 1 - CDF when the tail is far below 1e-16.
inline double poisson_tail(std::size_t k, double mean) {
  if (mean == 0.0) return 0.0;
  const double first_n = static_cast<double>(k) + 1.0;
  double term = std::exp(first_n * std::log(mean) - mean - std::lgamma(first_n + 1.0));
  double acc = 0.0;
  const std::size_t n_stop =
      k + 1 + static_cast<std::size_t>(mean + 12.0 * std::sqrt(mean) + 60.0);
  for (std::size_t n = k + 1; n <= n_stop; ++n) {
    acc += term;
    if (term == 0.0 || (static_cast<double>(n) > mean && term < acc * 1e-18)) break;
    term *= mean / (static_cast<double>(n) + 1.0);
  }
  return acc;
}

}  // namespace detail

/// Finds the displacement amplitude minimizing the ideal-counter error
/// probability over beta in [0, 2 alpha + 3], localized to within `tol`.
///
/// The MAP error is the lower envelope over count thresholds k of the smooth
/// branch errors
///
///   g_k(beta) = (1/2) [ P(n <= k | N_plus) + P(n > k | N_minus) ],
///
/// because Poisson likelihood ratios are monotone in n, so the optimal
/// decision region for "-" is always {n <= k}. Near-degenerate branch minima
/// occur at realistic visibilities and a coarse scan of the envelope alone
/// can refine into the wrong one, so each branch is minimized separately
/// (coarse grid, then golden-section on every local bracket) and the best
/// branch wins. Ties prefer the smaller beta. The returned p_err_min is the
/// full objective re-evaluated at beta_opt.
inline Optimum optimal_displacement(double alpha, const ReceiverParams& params,
                                    double tol = 1e-4) {
  if (!std::isfinite(alpha) || alpha < 0.0) {
    throw std::invalid_argument("optimal_displacement: alpha must be finite and >= 0");
  }
  if (!std::isfinite(tol) || tol <= 0.0) {
    throw std::invalid_argument("optimal_displacement: tol must be finite and > 0");
  }
  params.validate();

  std::uint64_t evals = 0;
  if (alpha == 0.0) {
    // Identical conditionals for every beta; the objective is flat at 1/2.
    const double p = expected_error_ideal_counter(0.0, 0.0, params, false);
    return Optimum{0.0, p, ++evals};
  }

  const double b_max = 2.0 * alpha + 3.0;
  // The optimal threshold never exceeds the largest mean in range.
  const std::size_t k_max =
      static_cast<std::size_t>(std::ceil(displaced_means(alpha, b_max, params).n_plus)) + 10;

  auto branch_error = [&](std::size_t k, double beta) {
    const DisplacedMeans m = displaced_means(alpha, beta, params);
    ++evals;
    const double v =
        0.5 * (detail::poisson_head(k, m.n_plus) + detail::poisson_tail(k, m.n_minus));
    if (!std::isfinite(v)) {
      throw std::runtime_error("optimal_displacement: objective not finite at beta = " +
                               std::to_string(beta) + ", threshold = " + std::to_string(k));
    }
    return v;
  };

  double best_val = std::numeric_limits<double>::infinity();
  double best_beta = 0.0;
  auto consider = [&](double val, double beta) {
    if (val < best_val || (val == best_val && beta < best_beta)) {
      best_val = val;
      best_beta = beta;
    }
  };

  constexpr double inv_phi = 0.61803398874989485;
  auto golden_refine = [&](std::size_t k, double a, double b) {
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = branch_error(k, x1);
    double f2 = branch_error(k, x2);
    consider(f1, x1);
    consider(f2, x2);
    while (b - a > tol) {
      if (f1 <= f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - inv_phi * (b - a);
        f1 = branch_error(k, x1);
        consider(f1, x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + inv_phi * (b - a);
        f2 = branch_error(k, x2);
        consider(f2, x2);
      }
    }
  };

  constexpr std::size_t grid_n = 200;
  std::vector<double> g(grid_n);
  const double step = b_max / static_cast<double>(grid_n - 1);
  for (std::size_t k = 0; k <= k_max; ++k) {
    std::size_t grid_best = 0;
    for (std::size_t i = 0; i < grid_n; ++i) {
      g[i] = branch_error(k, step * static_cast<double>(i));
      if (g[i] < g[grid_best]) grid_best = i;
    }
    bool refined = false;
    for (std::size_t i = 0; i < grid_n; ++i) {
      const bool local_min = (i == 0 || g[i] <= g[i - 1]) &&
                             (i + 1 == grid_n || g[i] <= g[i + 1]);
      const bool strict = (i > 0 && g[i] < g[i - 1]) ||
                          (i + 1 < grid_n && g[i] < g[i + 1]);
      if (local_min && (strict || i == grid_best)) {
        const double lo = (i == 0) ? 0.0 : step * static_cast<double>(i - 1);
        const double hi = (i + 1 == grid_n) ? b_max : step * static_cast<double>(i + 1);
        consider(g[i], step * static_cast<double>(i));
        golden_refine(k, lo, hi);
        refined = true;
      }
    }
    if (!refined) consider(g[grid_best], step * static_cast<double>(grid_best));
  }

  const double p_min = expected_error_ideal_counter(alpha, best_beta, params, false);
  ++evals;
  return Optimum{best_beta, p_min, evals};
}

}  // namespace tesrx
