#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tesrx/bounds.hpp"
#include "tesrx/detail/format.hpp"
#include "tesrx/discriminator.hpp"
#include "tesrx/optimizer.hpp"
#include "tesrx/photon_statistics.hpp"
#include "tesrx/random.hpp"
#include "tesrx/trace_model.hpp"

namespace tesrx {

/// How the displacement amplitude is chosen for a run.
struct BetaPolicy {
  enum class Kind { fixed, optimize };
  Kind kind = Kind::optimize;
  double value = 0.0;

  static BetaPolicy fixed(double beta) { return BetaPolicy{Kind::fixed, beta}; }
  static BetaPolicy optimize() { return BetaPolicy{Kind::optimize, 0.0}; }
};

enum class DetectorMode { ideal_counter, trace_model };

/// Full description of one discrimination run. The seed is an ordinary
/// field with no entropy fallback: equal configs produce equal results,
/// bit for bit, regardless of worker count.
struct ExperimentConfig {
  double alpha_sq = 1.5;
  BetaPolicy beta{};
  ReceiverParams params{};
  DetectorMode mode = DetectorMode::ideal_counter;
  std::uint64_t training_trials = 1000000;
  std::uint64_t evaluation_trials = 1000000;
  std::optional<TesResponseModel> tes{};  // trace mode only; standard() when absent
  double filter_mean = 3.0;
  std::size_t filter_traces = 1000;
  HistogramConfig hist{};
  std::uint64_t seed = 0;
  unsigned workers = 1;

  void validate() const {
    if (!std::isfinite(alpha_sq) || alpha_sq < 0.0) {
      throw std::invalid_argument("ExperimentConfig: alpha_sq must be finite and >= 0");
    }
    if (beta.kind == BetaPolicy::Kind::fixed &&
        (!std::isfinite(beta.value) || beta.value < 0.0)) {
      throw std::invalid_argument("ExperimentConfig: fixed beta must be finite and >= 0");
    }
    params.validate();
    if (training_trials < 1 || evaluation_trials < 1) {
      throw std::invalid_argument("ExperimentConfig: trial counts must be >= 1");
    }
    if (workers < 1) {
      throw std::invalid_argument("ExperimentConfig: workers must be >= 1");
    }
    if (mode == DetectorMode::ideal_counter && tes.has_value()) {
      throw std::invalid_argument(
          "ExperimentConfig: trace response model given in ideal-counter mode");
    }
    if (tes.has_value()) tes->validate();
    if (!std::isfinite(filter_mean) || filter_mean < 0.0) {
      throw std::invalid_argument("ExperimentConfig: filter_mean must be finite and >= 0");
    }
    if (filter_traces < 1) {
      throw std::invalid_argument("ExperimentConfig: filter_traces must be >= 1");
    }
  }
};

/// One row of output: the estimate, its counting-statistics uncertainty, and
/// the reference bounds evaluated at the efficiency-rescaled intensity.
struct ExperimentResult {
  double alpha_sq;
  double alpha_sq_rescaled;
  double beta_sq;
  double p_err;
  double p_err_stderr;
  double p_sql;
  double p_helstrom;
  double improvement_db;  // NaN when no errors were observed
  std::uint64_t trials;
  std::uint64_t seed;
};

namespace detail {

/// Runs body(worker, first_trial, last_trial) over a block partition of
/// [0, trials). The partition depends only on (trials, workers); outputs the
/// caller merges in worker order are therefore reproducible.
template <typename Body>
void parallel_trials(std::uint64_t trials, unsigned workers, Body&& body) {
  if (workers <= 1 || trials < workers) {
    body(0u, std::uint64_t{0}, trials);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    const std::uint64_t first = trials * w / workers;
    const std::uint64_t last = trials * (w + 1) / workers;
    pool.emplace_back([&body, w, first, last] { body(w, first, last); });
  }
  for (std::thread& t : pool) t.join();
}

/// Inverse-CDF sample from a normalized probability vector.
inline std::size_t sample_index(const std::vector<double>& probs, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

/// Photon number of one shot: Poisson signal mixed with the dark-count
/// components, mirroring augment_dark_counts (high-energy events land
/// uniformly on (threshold, high_support_max]).
inline std::uint64_t sample_photon_count(double mean, const ReceiverParams& params,
                                         std::uint64_t high_support_max,
                                         RandomStream& rng) {
  const double low = params.dark_low_rate;
  const double high = params.dark_high_rate;
  if (low == 0.0 && high == 0.0) return rng.poisson(mean);
  const double u = rng.uniform() * (1.0 + low + high);
  if (u < 1.0) return rng.poisson(mean);
  if (u < 1.0 + low) {
    const std::vector<double>& w = default_dark_low_weights();
    const double v = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc += w[i];
      if (v < acc) return i + 1;
    }
    return w.size();
  }
  const std::uint64_t threshold = static_cast<std::uint64_t>(params.dark_high_threshold);
  return threshold + 1 + rng.uniform_below(high_support_max - threshold);
}

/// Common truncation for both branches, covering the dark-count support.
inline std::size_t common_photon_cap(const DisplacedMeans& means,
                                     const ReceiverParams& params) {
  std::size_t cap = std::max(default_photon_cutoff(means.n_plus),
                             default_photon_cutoff(means.n_minus));
  if (params.dark_high_rate > 0.0) {
    cap = std::max(cap, static_cast<std::size_t>(params.dark_high_threshold) + 15);
  }
  return cap;
}

inline double stderr_estimate(std::uint64_t errors, std::uint64_t trials) {
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(errors) / n;
  if (errors == 0 || errors == trials) {
    // Clopper-Pearson 95% upper bound on the distance from the boundary.
    return 1.0 - std::pow(0.025, 1.0 / n);
  }
  return std::sqrt(p * (1.0 - p) / n);
}

}  // namespace detail

/// Runs one end-to-end discrimination experiment.
///
/// Ideal-counter mode samples photon numbers from the analytic conditionals
/// (dark counts included) and decides MAP against the same conditionals.
/// Trace mode first builds the matched filter from `filter_traces` prep
/// pulses at `filter_mean` photons, then estimates score conditionals on the
/// training trials, freezes them, and evaluates on independent trials;
/// evaluation scores outside the trained range clamp to the nearest bin.
///
/// Every trial owns the random stream addressed by (seed, phase, trial
/// index), so the outcome of a trial never depends on worker count; tallies
/// and score collections merge in worker order, which reproduces trial order
/// under the block partition.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const double alpha = std::sqrt(config.alpha_sq);
  const double beta = config.beta.kind == BetaPolicy::Kind::fixed
                          ? config.beta.value
                          : optimal_displacement(alpha, config.params).beta_opt;

  const DisplacedMeans means = displaced_means(alpha, beta, config.params);
  const std::size_t n_cap = detail::common_photon_cap(means, config.params);
  const std::uint64_t trials = config.evaluation_trials;
  std::vector<std::uint64_t> error_tally(config.workers, 0);

  if (config.mode == DetectorMode::ideal_counter) {
    const PhotonDistribution p_plus =
        augment_dark_counts(poisson_distribution(means.n_plus, n_cap), config.params);
    const PhotonDistribution p_minus =
        augment_dark_counts(poisson_distribution(means.n_minus, n_cap), config.params);
    const ConditionalDistribution cond(p_plus.probabilities(), p_minus.probabilities());

    detail::parallel_trials(
        trials, config.workers,
        [&](unsigned w, std::uint64_t first, std::uint64_t last) {
          std::uint64_t local = 0;
          for (std::uint64_t t = first; t < last; ++t) {
            RandomStream rng(config.seed, RandomStream::phase_eval, t);
            const bool sent_plus = rng.uniform() < 0.5;
            const std::vector<double>& branch = sent_plus ? cond.plus() : cond.minus();
            const std::size_t n = detail::sample_index(branch, rng.uniform());
            const bool decided_plus = map_decide(n, cond) == Decision::plus;
            if (decided_plus != sent_plus) ++local;
          }
          error_tally[w] = local;
        });
  } else {
    const TesResponseModel model =
        config.tes.has_value() ? *config.tes : TesResponseModel::standard();
    model.validate();
    const std::uint64_t high_support_max = n_cap;

    // Matched filter from prep pulses; cheap enough to keep single-threaded.
    std::vector<Trace> prep(config.filter_traces);
    for (std::size_t i = 0; i < prep.size(); ++i) {
      RandomStream rng(config.seed, RandomStream::phase_filter, i);
      prep[i] = simulate_trace(rng.poisson(config.filter_mean), model, rng);
    }
    const MatchedFilter filter = build_matched_filter(prep);

    auto run_trial = [&](std::uint64_t phase, std::uint64_t t, bool& sent_plus) {
      RandomStream rng(config.seed, phase, t);
      sent_plus = rng.uniform() < 0.5;
      const std::uint64_t n = detail::sample_photon_count(
          sent_plus ? means.n_plus : means.n_minus, config.params, high_support_max, rng);
      return filter_score(simulate_trace(n, model, rng), filter);
    };

    struct ScoreBlock {
      std::vector<double> plus;
      std::vector<double> minus;
    };
    std::vector<ScoreBlock> blocks(config.workers);
    detail::parallel_trials(
        config.training_trials, config.workers,
        [&](unsigned w, std::uint64_t first, std::uint64_t last) {
          ScoreBlock& block = blocks[w];
          for (std::uint64_t t = first; t < last; ++t) {
            bool sent_plus = false;
            const double s = run_trial(RandomStream::phase_train, t, sent_plus);
            (sent_plus ? block.plus : block.minus).push_back(s);
          }
        });
    std::vector<double> train_plus;
    std::vector<double> train_minus;
    for (ScoreBlock& block : blocks) {
      train_plus.insert(train_plus.end(), block.plus.begin(), block.plus.end());
      train_minus.insert(train_minus.end(), block.minus.begin(), block.minus.end());
      block.plus.clear();
      block.minus.clear();
    }
    if (train_plus.empty() || train_minus.empty()) {
      throw std::runtime_error(
          "run_experiment: a branch received no training samples; raise training_trials");
    }
    const ScoreHistogram hist =
        ScoreHistogram::from_scores(train_plus, train_minus, config.hist);
    const ConditionalDistribution cond = hist.to_conditional(config.hist.smoothing);

    detail::parallel_trials(
        trials, config.workers,
        [&](unsigned w, std::uint64_t first, std::uint64_t last) {
          std::uint64_t local = 0;
          for (std::uint64_t t = first; t < last; ++t) {
            bool sent_plus = false;
            const double s = run_trial(RandomStream::phase_eval, t, sent_plus);
            const bool decided_plus =
                map_decide(hist.bin_of(s), cond) == Decision::plus;
            if (decided_plus != sent_plus) ++local;
          }
          error_tally[w] = local;
        });
  }

  std::uint64_t errors = 0;
  for (std::uint64_t e : error_tally) errors += e;

  ExperimentResult result{};
  result.alpha_sq = config.alpha_sq;
  result.alpha_sq_rescaled = config.alpha_sq / config.params.efficiency;
  result.beta_sq = beta * beta;
  result.p_err = static_cast<double>(errors) / static_cast<double>(trials);
  result.p_err_stderr = detail::stderr_estimate(errors, trials);
  result.p_sql = sql_error(SignalIntensity(result.alpha_sq_rescaled));
  result.p_helstrom = helstrom_error(SignalIntensity(result.alpha_sq_rescaled));
  result.improvement_db = result.p_err > 0.0
                              ? improvement_db(result.p_err, result.p_sql)
                              : std::numeric_limits<double>::quiet_NaN();
  result.trials = trials;
  result.seed = config.seed;
  return result;
}

/// Error probability versus displacement around the optimum: evaluates the
/// experiment at beta = multiplier * beta_opt for each grid value. All points
/// share the master seed (common random numbers across the sweep).
inline std::vector<ExperimentResult> sweep_beta(double alpha_sq,
                                                const std::vector<double>& relative_grid,
                                                const ExperimentConfig& base) {
  if (relative_grid.empty()) {
    throw std::invalid_argument("sweep_beta: empty grid");
  }
  for (double m : relative_grid) {
    if (!std::isfinite(m) || m <= 0.0) {
      throw std::invalid_argument("sweep_beta: grid multipliers must be finite and > 0");
    }
  }
  ExperimentConfig config = base;
  config.alpha_sq = alpha_sq;
  config.beta = BetaPolicy::optimize();
  config.validate();
  const double beta_opt =
      optimal_displacement(std::sqrt(alpha_sq), config.params).beta_opt;

  std::vector<ExperimentResult> results;
  results.reserve(relative_grid.size());
  for (double m : relative_grid) {
    config.beta = BetaPolicy::fixed(m * beta_opt);
    results.push_back(run_experiment(config));
  }
  return results;
}

/// Error probability versus signal intensity at the per-intensity optimal
/// displacement, with SQL/Helstrom references at the rescaled intensity.
inline std::vector<ExperimentResult> sweep_alpha(const std::vector<double>& grid,
                                                 const ExperimentConfig& base) {
  if (grid.empty()) {
    throw std::invalid_argument("sweep_alpha: empty grid");
  }
  for (double a : grid) {
    if (!std::isfinite(a) || a < 0.0) {
      throw std::invalid_argument("sweep_alpha: intensities must be finite and >= 0");
    }
  }
  std::vector<ExperimentResult> results;
  results.reserve(grid.size());
  ExperimentConfig config = base;
  config.beta = BetaPolicy::optimize();
  for (double a : grid) {
    config.alpha_sq = a;
    results.push_back(run_experiment(config));
  }
  return results;
}

enum class OutputFormat { csv, json };

namespace detail {

inline std::string improvement_field_csv(double v) {
  return std::isnan(v) ? std::string("nan") : format_g12(v);
}

inline std::string improvement_field_json(double v) {
  return std::isnan(v) ? std::string("null") : format_g12(v);
}

inline void write_results(std::ostream& out, const std::vector<ExperimentResult>& results,
                          OutputFormat format) {
  if (format == OutputFormat::csv) {
    out << "alpha_sq,alpha_sq_rescaled,beta_sq,p_err,p_err_stderr,p_sql,p_helstrom,"
           "improvement_db,trials,seed\n";
    for (const ExperimentResult& r : results) {
      out << format_g12(r.alpha_sq) << ',' << format_g12(r.alpha_sq_rescaled) << ','
          << format_g12(r.beta_sq) << ',' << format_g12(r.p_err) << ','
          << format_g12(r.p_err_stderr) << ',' << format_g12(r.p_sql) << ','
          << format_g12(r.p_helstrom) << ',' << improvement_field_csv(r.improvement_db)
          << ',' << r.trials << ',' << r.seed << '\n';
    }
    return;
  }
  out << "[\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const ExperimentResult& r = results[i];
    out << "  {\"alpha_sq\": " << format_g12(r.alpha_sq)
        << ", \"alpha_sq_rescaled\": " << format_g12(r.alpha_sq_rescaled)
        << ", \"beta_sq\": " << format_g12(r.beta_sq)
        << ", \"p_err\": " << format_g12(r.p_err)
        << ", \"p_err_stderr\": " << format_g12(r.p_err_stderr)
        << ", \"p_sql\": " << format_g12(r.p_sql)
        << ", \"p_helstrom\": " << format_g12(r.p_helstrom)
        << ", \"improvement_db\": " << improvement_field_json(r.improvement_db)
        << ", \"trials\": " << r.trials << ", \"seed\": " << r.seed << "}"
        << (i + 1 < results.size() ? ",\n" : "\n");
  }
  out << "]\n";
}

}  // namespace detail

/// Serializes results as CSV or a JSON array with 12 significant digits.
/// path "-" writes to standard output.
inline void emit_results(const std::vector<ExperimentResult>& results, OutputFormat format,
                         const std::string& path) {
  if (path == "-") {
    detail::write_results(std::cout, results, format);
    if (!std::cout) {
      throw std::runtime_error("emit_results: write to standard output failed");
    }
    return;
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("emit_results: cannot open '" + path + "' for writing");
  }
  detail::write_results(out, results, format);
  if (!out) {
    throw std::runtime_error("emit_results: write failed for '" + path + "'");
  }
}

}  // namespace tesrx
