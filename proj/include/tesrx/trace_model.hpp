#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tesrx/detail/format.hpp"
#include "tesrx/discriminator.hpp"
#include "tesrx/random.hpp"

namespace tesrx {

/// Sampled detector voltage pulse: L values at uniform period dt.
struct Trace {
  std::vector<double> samples;
  double dt = 0.0;
};

/// Synthetic response of the energy-resolving sensor.
///
/// A detection event of n photons produces effective_amplitude(n) times the
/// unit-energy reference pulse plus additive white Gaussian noise. The
/// response is linear (gain per photon) up to the knee n_sat and compressed
/// by `compression` above it, modeling the loss of single-photon energy
/// resolution at large n. The default noise RMS puts the single-photon score
/// separation at 6 sigma.
struct TesResponseModel {
  std::vector<double> pulse_template;  // unit energy: sum(h^2) * dt = 1
  double dt = 1.0 / 256.0;
  double gain = 1.0;
  double noise_rms = 8.0 / 3.0;
  double n_sat = 15.0;
  double compression = 0.5;

  /// Difference-of-exponentials pulse (rise 0.1, fall 0.3 of the pulse
  /// length) sampled at 256 points and normalized to unit energy.
  static TesResponseModel standard() {
    constexpr std::size_t length = 256;
    constexpr double tau_r = 0.1;
    constexpr double tau_f = 0.3;
    TesResponseModel model;
    model.dt = 1.0 / static_cast<double>(length);
    model.pulse_template.resize(length);
    double energy = 0.0;
    for (std::size_t i = 0; i < length; ++i) {
      const double t = (static_cast<double>(i) + 0.5) * model.dt;
      const double h = std::exp(-t / tau_f) - std::exp(-t / tau_r);
      model.pulse_template[i] = h;
      energy += h * h * model.dt;
    }
    const double scale = 1.0 / std::sqrt(energy);
    for (double& h : model.pulse_template) h *= scale;
    return model;
  }

  double effective_amplitude(std::uint64_t n_photons) const {
    const double n = static_cast<double>(n_photons);
    if (n <= n_sat) return gain * n;
    return gain * (n_sat + (n - n_sat) * compression);
  }

  void validate() const {
    if (pulse_template.empty()) {
      throw std::invalid_argument("TesResponseModel: empty pulse template");
    }
    for (double h : pulse_template) {
      if (!std::isfinite(h)) {
        throw std::invalid_argument("TesResponseModel: template samples must be finite");
      }
    }
    if (!std::isfinite(dt) || dt <= 0.0) {
      throw std::invalid_argument("TesResponseModel: dt must be finite and > 0");
    }
    if (!std::isfinite(gain) || gain <= 0.0) {
      throw std::invalid_argument("TesResponseModel: gain must be finite and > 0");
    }
    if (!std::isfinite(noise_rms) || noise_rms < 0.0) {
      throw std::invalid_argument("TesResponseModel: noise_rms must be finite and >= 0");
    }
    if (!std::isfinite(n_sat) || n_sat < 1.0) {
      throw std::invalid_argument("TesResponseModel: n_sat must be finite and >= 1");
    }
    if (!std::isfinite(compression) || compression < 0.0 || compression > 1.0) {
      throw std::invalid_argument("TesResponseModel: compression must be in [0, 1]");
    }
  }
};

/// Scoring template V0; non-zero by construction.
class MatchedFilter {
 public:
  MatchedFilter(std::vector<double> samples, double dt)
      : samples_(std::move(samples)), dt_(dt) {
    if (samples_.empty()) {
      throw std::invalid_argument("MatchedFilter: empty template");
    }
    if (!std::isfinite(dt_) || dt_ <= 0.0) {
      throw std::invalid_argument("MatchedFilter: dt must be finite and > 0");
    }
    double energy = 0.0;
    for (double v : samples_) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("MatchedFilter: samples must be finite");
      }
      energy += v * v;
    }
    if (energy <= 0.0) {
      throw std::invalid_argument("MatchedFilter: template has zero energy");
    }
  }

  const std::vector<double>& samples() const { return samples_; }
  double dt() const { return dt_; }

 private:
  std::vector<double> samples_;
  double dt_;
};

/// Voltage trace of an n-photon detection event: scaled reference pulse plus
/// per-sample white Gaussian noise. Zero noise RMS draws nothing from rng.
inline Trace simulate_trace(std::uint64_t n_photons, const TesResponseModel& model,
                            RandomStream& rng) {
  model.validate();
  const double amp = model.effective_amplitude(n_photons);
  Trace trace;
  trace.dt = model.dt;
  trace.samples.resize(model.pulse_template.size());
  if (model.noise_rms == 0.0) {
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
      trace.samples[i] = amp * model.pulse_template[i];
    }
  } else {
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
      trace.samples[i] = amp * model.pulse_template[i] + model.noise_rms * rng.gaussian();
    }
  }
  return trace;
}

/// Pointwise mean of a non-empty, uniformly shaped trace collection.
inline MatchedFilter build_matched_filter(const std::vector<Trace>& traces) {
  if (traces.empty()) {
    throw std::invalid_argument("build_matched_filter: empty trace collection");
  }
  const std::size_t length = traces.front().samples.size();
  const double dt = traces.front().dt;
  std::vector<double> mean(length, 0.0);
  for (const Trace& t : traces) {
    if (t.samples.size() != length || t.dt != dt) {
      throw std::invalid_argument("build_matched_filter: traces must share length and dt");
    }
    for (std::size_t i = 0; i < length; ++i) mean[i] += t.samples[i];
  }
  const double inv = 1.0 / static_cast<double>(traces.size());
  for (double& v : mean) v *= inv;
  return MatchedFilter(std::move(mean), dt);
}

/// Discretized inner product s = sum_i V(t_i) V0(t_i) dt; linear in the trace.
inline double filter_score(const Trace& trace, const MatchedFilter& filter) {
  if (trace.samples.size() != filter.samples().size() || trace.dt != filter.dt()) {
    throw std::invalid_argument("filter_score: trace and filter must share length and dt");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    acc += trace.samples[i] * filter.samples()[i];
  }
  return acc * trace.dt;
}

/// Binning policy for empirical score distributions: Freedman-Diaconis width
/// from the pooled scores, clamped to [min_bins, max_bins]; `smoothing`
/// pseudo-counts per bin keep trained branches strictly positive.
struct HistogramConfig {
  std::size_t min_bins = 200;
  std::size_t max_bins = 100000;
  double smoothing = 0.5;
};

/// Uniform-bin score histogram over two branches sharing the same edges.
class ScoreHistogram {
 public:
  static ScoreHistogram from_scores(const std::vector<double>& scores_plus,
                                    const std::vector<double>& scores_minus,
                                    const HistogramConfig& config) {
    if (scores_plus.empty() || scores_minus.empty()) {
      throw std::invalid_argument("ScoreHistogram: score collections must be non-empty");
    }
    if (config.min_bins < 1 || config.max_bins < config.min_bins) {
      throw std::invalid_argument("ScoreHistogram: invalid bin limits");
    }
    if (!std::isfinite(config.smoothing) || config.smoothing < 0.0) {
      throw std::invalid_argument("ScoreHistogram: smoothing must be finite and >= 0");
    }

    std::vector<double> pooled;
    pooled.reserve(scores_plus.size() + scores_minus.size());
    auto append = [&pooled](const std::vector<double>& scores) {
      for (double s : scores) {
        if (!std::isfinite(s)) {
          throw std::invalid_argument("ScoreHistogram: scores must be finite");
        }
        pooled.push_back(s);
      }
    };
    append(scores_plus);
    append(scores_minus);
    std::sort(pooled.begin(), pooled.end());

    const double lo = pooled.front();
    double hi = pooled.back();
    if (hi == lo) hi = lo + 1.0;  // degenerate pool; any positive width works

    const double iqr = quantile(pooled, 0.75) - quantile(pooled, 0.25);
    const double fd_width =
        2.0 * iqr / std::cbrt(static_cast<double>(pooled.size()));
    std::size_t bins = config.min_bins;
    if (fd_width > 0.0) {
      const double wanted = std::ceil((hi - lo) / fd_width);
      if (wanted > static_cast<double>(config.max_bins)) {
        bins = config.max_bins;
      } else {
        bins = std::max(config.min_bins, static_cast<std::size_t>(wanted));
      }
    }

    ScoreHistogram hist;
    hist.lo_ = lo;
    hist.width_ = (hi - lo) / static_cast<double>(bins);
    hist.counts_plus_.assign(bins, 0);
    hist.counts_minus_.assign(bins, 0);
    for (double s : scores_plus) ++hist.counts_plus_[hist.bin_of(s)];
    for (double s : scores_minus) ++hist.counts_minus_[hist.bin_of(s)];
    return hist;
  }

  std::size_t bin_count() const { return counts_plus_.size(); }
  const std::vector<std::uint64_t>& counts_plus() const { return counts_plus_; }
  const std::vector<std::uint64_t>& counts_minus() const { return counts_minus_; }

  /// Bin index of a score; out-of-range scores clamp to the nearest edge bin.
  std::size_t bin_of(double score) const {
    const double offset = (score - lo_) / width_;
    if (offset <= 0.0) return 0;
    const std::size_t idx = static_cast<std::size_t>(offset);
    return std::min(idx, counts_plus_.size() - 1);
  }

  double bin_center(std::size_t index) const {
    return lo_ + (static_cast<double>(index) + 0.5) * width_;
  }

  std::vector<double> bin_edges() const {
    std::vector<double> edges(bin_count() + 1);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      edges[i] = lo_ + static_cast<double>(i) * width_;
    }
    return edges;
  }

  /// Smoothed per-branch probabilities over the common bins.
  ConditionalDistribution to_conditional(double smoothing) const {
    std::vector<double> w_plus(bin_count());
    std::vector<double> w_minus(bin_count());
    for (std::size_t i = 0; i < bin_count(); ++i) {
      w_plus[i] = static_cast<double>(counts_plus_[i]) + smoothing;
      w_minus[i] = static_cast<double>(counts_minus_[i]) + smoothing;
    }
    return ConditionalDistribution::from_weights(std::move(w_plus), std::move(w_minus));
  }

 private:
  static double quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t below = static_cast<std::size_t>(pos);
    if (below + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - static_cast<double>(below);
    return sorted[below] + frac * (sorted[below + 1] - sorted[below]);
  }

  double lo_ = 0.0;
  double width_ = 1.0;
  std::vector<std::uint64_t> counts_plus_;
  std::vector<std::uint64_t> counts_minus_;
};

/// Empirical P(s | +) and P(s | -) on common bins with additive smoothing.
inline ConditionalDistribution estimate_conditional(const std::vector<double>& scores_plus,
                                                    const std::vector<double>& scores_minus,
                                                    const HistogramConfig& config) {
  return ScoreHistogram::from_scores(scores_plus, scores_minus, config)
      .to_conditional(config.smoothing);
}

/// Calibration helper: assigns each score to round(s / spacing) and tallies.
/// Scores rounding below zero count as n = 0. Not part of the discrimination
/// path, which consumes scores directly.
inline std::vector<std::uint64_t> bin_scores_to_photon_numbers(
    const std::vector<double>& scores, double spacing) {
  if (!std::isfinite(spacing) || spacing <= 0.0) {
    throw std::invalid_argument("bin_scores_to_photon_numbers: spacing must be > 0");
  }
  std::vector<std::uint64_t> counts;
  for (double s : scores) {
    if (!std::isfinite(s)) {
      throw std::invalid_argument("bin_scores_to_photon_numbers: scores must be finite");
    }
    const long long n = std::llround(s / spacing);
    const std::size_t idx = n < 0 ? 0 : static_cast<std::size_t>(n);
    if (idx >= counts.size()) counts.resize(idx + 1, 0);
    ++counts[idx];
  }
  return counts;
}

/// Binary trace dump: header (magic "TES1", u32 length, f32 dt, u32 count)
/// followed by count * length little-endian float32 samples.
inline void dump_traces(const std::string& path, const std::vector<Trace>& traces) {
  static_assert(std::endian::native == std::endian::little,
                "trace dump assumes a little-endian host");
  if (traces.empty()) {
    throw std::invalid_argument("dump_traces: empty trace collection");
  }
  const std::size_t length = traces.front().samples.size();
  const double dt = traces.front().dt;
  for (const Trace& t : traces) {
    if (t.samples.size() != length || t.dt != dt) {
      throw std::invalid_argument("dump_traces: traces must share length and dt");
    }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("dump_traces: cannot open '" + path + "' for writing");
  }
  auto put_u32 = [&out](std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  auto put_f32 = [&out](float v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  constexpr std::uint32_t magic = 0x31534554u;  // "TES1"
  put_u32(magic);
  put_u32(static_cast<std::uint32_t>(length));
  put_f32(static_cast<float>(dt));
  put_u32(static_cast<std::uint32_t>(traces.size()));
  for (const Trace& t : traces) {
    for (double v : t.samples) put_f32(static_cast<float>(v));
  }
  if (!out) {
    throw std::runtime_error("dump_traces: write failed for '" + path + "'");
  }
}

/// CSV export of a score histogram: bin_center,count_plus,count_minus.
inline void write_score_histogram_csv(const std::string& path, const ScoreHistogram& hist) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_score_histogram_csv: cannot open '" + path +
                             "' for writing");
  }
  out << "bin_center,count_plus,count_minus\n";
  for (std::size_t i = 0; i < hist.bin_count(); ++i) {
    out << detail::format_g12(hist.bin_center(i)) << ',' << hist.counts_plus()[i] << ','
        << hist.counts_minus()[i] << '\n';
  }
  if (!out) {
    throw std::runtime_error("write_score_histogram_csv: write failed for '" + path + "'");
  }
}

}  // namespace tesrx
