#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tesrx {

/// Physical imperfections of the displacement receiver.
///
/// Defaults reproduce the reference operating point: interference
/// transmissivity T = 0.982, mode-overlap visibility xi = 0.9985, detection
/// efficiency eta = 0.98, no dark counts. Dark counts split into a low-energy
/// component (few-photon events) and a high-energy component (events above
/// `dark_high_threshold` photons); both are per-shot rates.
struct ReceiverParams {
  double transmissivity = 0.982;
  double visibility = 0.9985;
  double efficiency = 0.98;
  double dark_low_rate = 0.0;
  double dark_high_rate = 0.0;
  int dark_high_threshold = 15;

  void validate() const {
    auto in_unit = [](double v) { return std::isfinite(v) && v > 0.0 && v <= 1.0; };
    if (!in_unit(transmissivity)) {
      throw std::invalid_argument("ReceiverParams: transmissivity must be in (0, 1], got " +
                                  std::to_string(transmissivity));
    }
    if (!std::isfinite(visibility) || visibility < 0.0 || visibility > 1.0) {
      throw std::invalid_argument("ReceiverParams: visibility must be in [0, 1], got " +
                                  std::to_string(visibility));
    }
    if (!in_unit(efficiency)) {
      throw std::invalid_argument("ReceiverParams: efficiency must be in (0, 1], got " +
                                  std::to_string(efficiency));
    }
    auto rate_ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (!rate_ok(dark_low_rate) || !rate_ok(dark_high_rate) ||
        dark_low_rate + dark_high_rate >= 1.0) {
      throw std::invalid_argument(
          "ReceiverParams: dark rates must be >= 0 and sum below 1");
    }
    if (dark_high_threshold < 1) {
      throw std::invalid_argument("ReceiverParams: dark_high_threshold must be >= 1, got " +
                                  std::to_string(dark_high_threshold));
    }
  }
};

/// Mean photon numbers at the detector after displacing the signal
/// (+alpha or -alpha) by beta:
///
///   N_pm = T alpha^2 + beta^2 +- 2 xi sqrt(T) alpha beta.
///
/// Detection efficiency is deliberately absent here; it enters only through
/// the rescaled comparison axis in the experiment layer.
struct DisplacedMeans {
  double n_plus;
  double n_minus;
};

inline DisplacedMeans displaced_means(double alpha, double beta, const ReceiverParams& params) {
  if (!std::isfinite(alpha) || alpha < 0.0 || !std::isfinite(beta) || beta < 0.0) {
    throw std::invalid_argument("displaced_means: amplitudes must be finite and >= 0");
  }
  params.validate();
  const double base = params.transmissivity * alpha * alpha + beta * beta;
  const double cross =
      2.0 * params.visibility * std::sqrt(params.transmissivity) * alpha * beta;
  // base >= cross holds mathematically (AM-GM with xi, sqrt(T) <= 1); the
  // clamp only absorbs last-ulp rounding at exact-nulling points.
  return DisplacedMeans{base + cross, std::max(0.0, base - cross)};
}

/// Probability distribution over photon number n = 0..n_max.
///
/// Construction validates (finite, nonnegative, total within 1e-9 of one)
/// and then renormalizes exactly, so downstream code may rely on the entries
/// summing to one at working precision.
class PhotonDistribution {
 public:
  explicit PhotonDistribution(std::vector<double> probabilities)
      : p_(std::move(probabilities)) {
    if (p_.empty()) {
      throw std::invalid_argument("PhotonDistribution: empty probability vector");
    }
    double sum = 0.0;
    for (double v : p_) {
      if (!std::isfinite(v) || v < 0.0) {
        throw std::invalid_argument("PhotonDistribution: entries must be finite and >= 0");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw std::invalid_argument("PhotonDistribution: probabilities sum to " +
                                  std::to_string(sum) + ", expected 1 within 1e-9");
    }
    if (sum != 1.0) {
      for (double& v : p_) v /= sum;
    }
  }

  std::size_t n_max() const { return p_.size() - 1; }
  const std::vector<double>& probabilities() const { return p_; }
  double operator[](std::size_t n) const { return p_[n]; }

  double mean() const {
    double m = 0.0;
    for (std::size_t n = 1; n < p_.size(); ++n) m += static_cast<double>(n) * p_[n];
    return m;
  }

 private:
  std::vector<double> p_;
};

/// Truncation point keeping the omitted Poisson tail below ~1e-12:
/// n_max = max(30, ceil(mean + 12 sqrt(mean))).
inline std::size_t default_photon_cutoff(double mean) {
  if (!std::isfinite(mean) || mean < 0.0) {
    throw std::invalid_argument("default_photon_cutoff: mean must be finite and >= 0");
  }
  const double cut = std::ceil(mean + 12.0 * std::sqrt(mean));
  return static_cast<std::size_t>(std::max(30.0, cut));
}

/// Poisson distribution truncated at n_max and renormalized.
///
/// Entries come from the log-space form exp(n ln(mean) - mean - lgamma(n+1)),
/// stable for any mean a double can hold. mean = 0 yields the point mass at
/// n = 0. Throws if the requested truncation discards more than 1e-9 of the
/// untruncated mass.
inline PhotonDistribution poisson_distribution(double mean, std::size_t n_max) {
  if (!std::isfinite(mean) || mean < 0.0) {
    throw std::invalid_argument("poisson_distribution: mean must be finite and >= 0");
  }
  std::vector<double> p(n_max + 1, 0.0);
  if (mean == 0.0) {
    p[0] = 1.0;
    return PhotonDistribution(std::move(p));
  }
  const double log_mean = std::log(mean);
  double sum = 0.0;
  for (std::size_t n = 0; n <= n_max; ++n) {
    const double nd = static_cast<double>(n);
    p[n] = std::exp(nd * log_mean - mean - std::lgamma(nd + 1.0));
    sum += p[n];
  }
  if (sum < 1.0 - 1e-9) {
    throw std::invalid_argument("poisson_distribution: n_max = " + std::to_string(n_max) +
                                " truncates more than 1e-9 of mass at mean = " +
                                std::to_string(mean));
  }
  return PhotonDistribution(std::move(p));
}

/// Spectral weights of the low-energy dark component: mass on n = 1, 2, 3
/// proportional to 2^-n.
inline const std::vector<double>& default_dark_low_weights() {
  static const std::vector<double> w{4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0};
  return w;
}

/// Mixes per-shot dark events into a photon-number distribution.
///
/// The low-energy component adds `dark_low_rate` mass over small n with the
/// given weights (weights[i] belongs to n = i + 1); the high-energy component
/// spreads `dark_high_rate` uniformly over n in (threshold, n_max]. If the
/// input support ends at or below the threshold it is extended to
/// threshold + 15 so the high-energy mass has bins to land in; the extension
/// depends only on (n_max, params), keeping paired conditionals aligned.
/// The result is renormalized. Both rates zero returns the input unchanged.
inline PhotonDistribution augment_dark_counts(
    const PhotonDistribution& base, const ReceiverParams& params,
    const std::vector<double>& low_weights = default_dark_low_weights()) {
  params.validate();
  const double low = params.dark_low_rate;
  const double high = params.dark_high_rate;
  if (low == 0.0 && high == 0.0) return base;

  if (low_weights.empty()) {
    throw std::invalid_argument("augment_dark_counts: low_weights must be non-empty");
  }
  double wsum = 0.0;
  for (double w : low_weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw std::invalid_argument("augment_dark_counts: low_weights must be finite and >= 0");
    }
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9) {
    throw std::invalid_argument("augment_dark_counts: low_weights must sum to 1");
  }

  const std::size_t threshold = static_cast<std::size_t>(params.dark_high_threshold);
  std::size_t n_max = base.n_max();
  if (high > 0.0 && n_max <= threshold) n_max = threshold + 15;
  if (low > 0.0) n_max = std::max(n_max, low_weights.size());

  std::vector<double> p(n_max + 1, 0.0);
  std::copy(base.probabilities().begin(), base.probabilities().end(), p.begin());
  if (low > 0.0) {
    for (std::size_t i = 0; i < low_weights.size(); ++i) p[i + 1] += low * low_weights[i];
  }
  if (high > 0.0) {
    const std::size_t bins = n_max - threshold;
    const double share = high / static_cast<double>(bins);
    for (std::size_t n = threshold + 1; n <= n_max; ++n) p[n] += share;
  }
  const double total = 1.0 + low + high;
  for (double& v : p) v /= total;
  return PhotonDistribution(std::move(p));
}

}  // namespace tesrx
