#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tesrx/photon_statistics.hpp"

namespace tesrx {

/// Hypothesis label for the binary phase-encoded alphabet {+alpha, -alpha}.
enum class Decision { plus, minus };

/// Pair of outcome distributions P(o | +alpha) and P(o | -alpha) over a
/// common finite outcome index (photon number, histogram bin, ...).
///
/// The validating constructor expects each branch already normalized within
/// 1e-9 and renormalizes exactly; from_weights accepts arbitrary nonnegative
/// weights with positive total.
class ConditionalDistribution {
 public:
  ConditionalDistribution(std::vector<double> p_plus, std::vector<double> p_minus)
      : plus_(std::move(p_plus)), minus_(std::move(p_minus)) {
    check_shape();
    normalize_branch(plus_, true);
    normalize_branch(minus_, true);
  }

  static ConditionalDistribution from_weights(std::vector<double> w_plus,
                                              std::vector<double> w_minus) {
    ConditionalDistribution c(unchecked{}, std::move(w_plus), std::move(w_minus));
    c.check_shape();
    c.normalize_branch(c.plus_, false);
    c.normalize_branch(c.minus_, false);
    return c;
  }

  std::size_t outcome_count() const { return plus_.size(); }
  double p_plus(std::size_t outcome) const { return plus_[outcome]; }
  double p_minus(std::size_t outcome) const { return minus_[outcome]; }
  const std::vector<double>& plus() const { return plus_; }
  const std::vector<double>& minus() const { return minus_; }

 private:
  struct unchecked {};
  ConditionalDistribution(unchecked, std::vector<double> p, std::vector<double> m)
      : plus_(std::move(p)), minus_(std::move(m)) {}

  void check_shape() const {
    if (plus_.empty() || plus_.size() != minus_.size()) {
      throw std::invalid_argument(
          "ConditionalDistribution: branches must be non-empty and equally sized");
    }
    for (std::size_t i = 0; i < plus_.size(); ++i) {
      if (!std::isfinite(plus_[i]) || plus_[i] < 0.0 || !std::isfinite(minus_[i]) ||
          minus_[i] < 0.0) {
        throw std::invalid_argument(
            "ConditionalDistribution: entries must be finite and >= 0");
      }
    }
  }

  static void normalize_branch(std::vector<double>& p, bool require_unit) {
    double sum = 0.0;
    for (double v : p) sum += v;
    if (require_unit && std::abs(sum - 1.0) > 1e-9) {
      throw std::invalid_argument("ConditionalDistribution: branch sums to " +
                                  std::to_string(sum) + ", expected 1 within 1e-9");
    }
    if (sum <= 0.0) {
      throw std::invalid_argument("ConditionalDistribution: branch has zero total weight");
    }
    if (sum != 1.0) {
      for (double& v : p) v /= sum;
    }
  }

  std::vector<double> plus_;
  std::vector<double> minus_;
};

/// Maximum a posteriori decision for equal priors: pick the hypothesis with
/// the larger conditional probability of the observed outcome, plus on ties.
inline Decision map_decide(std::size_t outcome, const ConditionalDistribution& cond) {
  if (outcome >= cond.outcome_count()) {
    throw std::out_of_range("map_decide: outcome " + std::to_string(outcome) +
                            " outside support of size " +
                            std::to_string(cond.outcome_count()));
  }
  return cond.p_plus(outcome) >= cond.p_minus(outcome) ? Decision::plus : Decision::minus;
}

/// Equal-prior MAP error probability,
///
///   P_err = 1 - (1/2) sum_o max(P(o|+), P(o|-)) = (1/2) sum_o min(P(o|+), P(o|-)).
///
/// The two forms agree exactly for normalized branches; the min form is a sum
/// of nonnegative terms, so it stays fully accurate when the overlap is many
/// orders of magnitude below 1 (the max form loses everything past 1e-16).
inline double error_probability(const ConditionalDistribution& cond) {
  double overlap = 0.0;
  for (std::size_t o = 0; o < cond.outcome_count(); ++o) {
    overlap += std::min(cond.p_plus(o), cond.p_minus(o));
  }
  return 0.5 * overlap;
}

/// Discrimination error of the displacement receiver with an ideal
/// photon-number-resolving counter: Poisson statistics at the displaced
/// means, MAP decision on the photon number. `with_dark` additionally mixes
/// the receiver's dark-count components into both branches.
inline double expected_error_ideal_counter(double alpha, double beta,
                                           const ReceiverParams& params,
                                           bool with_dark = false) {
  const DisplacedMeans means = displaced_means(alpha, beta, params);
  std::size_t n_cap =
      std::max(default_photon_cutoff(means.n_plus), default_photon_cutoff(means.n_minus));
  if (with_dark && params.dark_high_rate > 0.0) {
    n_cap = std::max(n_cap, static_cast<std::size_t>(params.dark_high_threshold) + 15);
  }
  PhotonDistribution p_plus = poisson_distribution(means.n_plus, n_cap);
  PhotonDistribution p_minus = poisson_distribution(means.n_minus, n_cap);
  if (with_dark) {
    p_plus = augment_dark_counts(p_plus, params);
    p_minus = augment_dark_counts(p_minus, params);
  }
  return error_probability(
      ConditionalDistribution(p_plus.probabilities(), p_minus.probabilities()));
}

}  // namespace tesrx
