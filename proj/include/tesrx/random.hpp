#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace tesrx {

/// Counter-based deterministic random stream (splitmix64 core).
///
/// A stream is addressed by (master_seed, phase, index). Consecutive draws
/// advance the counter by the splitmix increment; distinct stream addresses
/// start 2^20 increments apart, so streams of fewer than 2^20 draws never
/// overlap. Results depend only on the address and the draw sequence, never
/// on threads or scheduling: parallel code gets reproducibility by giving
/// each unit of work (one trial, one prep trace) its own stream index.
class RandomStream {
 public:
  /// Stream phases reserved by the experiment layer.
  enum : std::uint64_t { phase_filter = 1, phase_train = 2, phase_eval = 3 };

  RandomStream(std::uint64_t master_seed, std::uint64_t phase, std::uint64_t index) {
    const std::uint64_t stream_id = phase * (1ull << 40) + index;
    state_ = mix(master_seed) + stream_id * (kGamma << 20);
  }

  std::uint64_t next_u64() {
    state_ += kGamma;
    return mix(state_);
  }

  /// Uniform double in [0, 1), 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_below: n must be > 0");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal deviate; Box-Muller with the spare cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    const double t = 2.0 * kPi * uniform();
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  /// Poisson deviate by multiplicative inversion; means above 400 are split
  /// into chunks so exp(-mean) stays comfortably inside double range.
  std::uint64_t poisson(double mean) {
    if (!std::isfinite(mean) || mean < 0.0) {
      throw std::invalid_argument("RandomStream::poisson: mean must be finite and >= 0");
    }
    std::uint64_t n = 0;
    while (mean > 400.0) {
      n += poisson_small(400.0);
      mean -= 400.0;
    }
    return n + poisson_small(mean);
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
  static constexpr double kPi = 3.14159265358979323846;

  static std::uint64_t mix(std::uint64_t z) {
    z += kGamma;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t poisson_small(double mean) {
    if (mean <= 0.0) return 0;
    const double limit = std::exp(-mean);
    std::uint64_t k = 0;
    double product = 1.0;
    do {
      ++k;
      product *= uniform_pos();
    } while (product > limit);
    return k - 1;
  }

  std::uint64_t state_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace tesrx
