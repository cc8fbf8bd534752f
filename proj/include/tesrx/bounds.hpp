#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace tesrx {

/// Mean photon number |alpha|^2 of a coherent signal state.
///
/// Value type used wherever an interface wants "signal strength" rather than
/// a bare field amplitude; construction rejects negative or non-finite input.
class SignalIntensity {
 public:
  explicit SignalIntensity(double alpha_sq) : alpha_sq_(alpha_sq) {
    if (!std::isfinite(alpha_sq) || alpha_sq < 0.0) {
      throw std::invalid_argument("SignalIntensity: alpha_sq must be finite and >= 0, got " +
                                  std::to_string(alpha_sq));
    }
  }

  double value() const { return alpha_sq_; }
  double amplitude() const { return std::sqrt(alpha_sq_); }

 private:
  double alpha_sq_;
};

/// Shot-noise-limited (homodyne) error probability for discriminating
/// {+alpha, -alpha} with equal priors:
///
///   P_SQL = (1 - erf(sqrt(2) |alpha|)) / 2 = erfc(sqrt(2 |alpha|^2)) / 2.
///
/// erfc keeps full relative accuracy at large intensity, where the
/// 1 - erf form loses every significant digit.
inline double sql_error(SignalIntensity intensity) {
  return 0.5 * std::erfc(std::sqrt(2.0 * intensity.value()));
}

/// Helstrom bound, the quantum-mechanical minimum error probability:
///
///   P_Hel = (1 - sqrt(1 - exp(-4 |alpha|^2))) / 2.
///
/// Evaluated as e / (2 (1 + sqrt(1 - e))) with e = exp(-4 |alpha|^2) and
/// 1 - e = -expm1(-4 |alpha|^2), which is exact at both ends: 0.5 at zero
/// intensity, and proportional to e/4 without cancellation at large
/// intensity.
inline double helstrom_error(SignalIntensity intensity) {
  const double x = -4.0 * intensity.value();
  const double e = std::exp(x);
  const double one_minus_e = -std::expm1(x);
  return e / (2.0 * (1.0 + std::sqrt(one_minus_e)));
}

/// Error-probability ratio expressed in decibels:
///
///   improvement_db = 10 log10(p_reference / p_err).
///
/// Positive when p_err beats the reference. Both arguments must lie in
/// (0, 1]; a zero error probability has no finite dB representation and is
/// the caller's case to handle.
inline double improvement_db(double p_err, double p_reference) {
  if (!std::isfinite(p_err) || p_err <= 0.0 || p_err > 1.0) {
    throw std::invalid_argument("improvement_db: p_err must be in (0, 1], got " +
                                std::to_string(p_err));
  }
  if (!std::isfinite(p_reference) || p_reference <= 0.0 || p_reference > 1.0) {
    throw std::invalid_argument("improvement_db: p_reference must be in (0, 1], got " +
                                std::to_string(p_reference));
  }
  return 10.0 * std::log10(p_reference / p_err);
}

}  // namespace tesrx
