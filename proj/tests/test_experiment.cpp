#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "support/oracles.hpp"
#include "tesrx/bounds.hpp"
#include "tesrx/discriminator.hpp"
#include "tesrx/experiment.hpp"
#include "tesrx/optimizer.hpp"

using tesrx::BetaPolicy;
using tesrx::DetectorMode;
using tesrx::ExperimentConfig;
using tesrx::ExperimentResult;
using tesrx::OutputFormat;
using tesrx::ReceiverParams;
using tesrx::SignalIntensity;

namespace {

constexpr double kReferenceError = 0.00437814122465658;

// Fixed displacement at the reference operating point used throughout.
ExperimentConfig reference_config(std::uint64_t seed, std::uint64_t trials) {
  ExperimentConfig config;
  config.alpha_sq = 1.5;
  config.beta = BetaPolicy::fixed(std::sqrt(1.51));
  config.params.visibility = 0.998;
  config.evaluation_trials = trials;
  config.seed = seed;
  return config;
}

bool results_equal(const ExperimentResult& a, const ExperimentResult& b) {
  return a.alpha_sq == b.alpha_sq && a.alpha_sq_rescaled == b.alpha_sq_rescaled &&
         a.beta_sq == b.beta_sq && a.p_err == b.p_err &&
         a.p_err_stderr == b.p_err_stderr && a.p_sql == b.p_sql &&
         a.p_helstrom == b.p_helstrom && a.trials == b.trials && a.seed == b.seed &&
         (a.improvement_db == b.improvement_db ||
          (std::isnan(a.improvement_db) && std::isnan(b.improvement_db)));
}

}  // namespace

TEST_CASE("experiment config validation", "[experiment]") {
  auto reject = [](auto setter) {
    ExperimentConfig bad;
    setter(bad);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  };
  reject([](ExperimentConfig& c) { c.alpha_sq = -1.0; });
  reject([](ExperimentConfig& c) { c.beta = BetaPolicy::fixed(-0.5); });
  reject([](ExperimentConfig& c) { c.evaluation_trials = 0; });
  reject([](ExperimentConfig& c) { c.training_trials = 0; });
  reject([](ExperimentConfig& c) { c.workers = 0; });
  reject([](ExperimentConfig& c) { c.filter_mean = -1.0; });
  reject([](ExperimentConfig& c) { c.filter_traces = 0; });
  reject([](ExperimentConfig& c) { c.params.transmissivity = 0.0; });
  // A trace response model makes no sense for the ideal counter.
  reject([](ExperimentConfig& c) { c.tes = tesrx::TesResponseModel::standard(); });

  ExperimentConfig ok;
  ok.mode = DetectorMode::trace_model;
  ok.tes = tesrx::TesResponseModel::standard();
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("zero signal is indistinguishable", "[experiment]") {
  ExperimentConfig config;
  config.alpha_sq = 0.0;
  config.beta = BetaPolicy::fixed(0.0);
  config.evaluation_trials = 100000;
  config.seed = 2;
  const ExperimentResult r = tesrx::run_experiment(config);
  CHECK_THAT(r.p_err, Catch::Matchers::WithinAbs(0.5, 3.0 * 1.59e-3));
  CHECK(r.p_sql == 0.5);
}

TEST_CASE("ideal-counter estimate matches the analytic error", "[experiment]") {
  const ExperimentResult r = tesrx::run_experiment(reference_config(1, 1000000));
  const double sigma = std::sqrt(kReferenceError * (1.0 - kReferenceError) / 1e6);
  CHECK_THAT(r.p_err, Catch::Matchers::WithinAbs(kReferenceError, 3.0 * sigma));

  SECTION("result fields are consistent with each other") {
    CHECK(r.alpha_sq == 1.5);
    CHECK(r.alpha_sq_rescaled == 1.5 / 0.98);
    CHECK(r.beta_sq == std::sqrt(1.51) * std::sqrt(1.51));
    CHECK(r.trials == 1000000);
    CHECK(r.seed == 1);
    CHECK(r.p_sql == tesrx::sql_error(SignalIntensity(r.alpha_sq_rescaled)));
    CHECK(r.p_helstrom == tesrx::helstrom_error(SignalIntensity(r.alpha_sq_rescaled)));
    CHECK(r.improvement_db == tesrx::improvement_db(r.p_err, r.p_sql));
    const double expected_stderr =
        std::sqrt(r.p_err * (1.0 - r.p_err) / static_cast<double>(r.trials));
    CHECK_THAT(r.p_err_stderr, Catch::Matchers::WithinRel(expected_stderr, 1e-12));
    CHECK(r.p_err < r.p_sql);   // sub-SQL at this operating point
    CHECK(r.p_err > r.p_helstrom);
  }
}

TEST_CASE("experiments are reproducible and worker-invariant", "[experiment]") {
  SECTION("ideal counter") {
    ExperimentConfig config = reference_config(17, 30000);
    const ExperimentResult first = tesrx::run_experiment(config);
    const ExperimentResult second = tesrx::run_experiment(config);
    CHECK(results_equal(first, second));

    config.workers = 3;
    const ExperimentResult parallel = tesrx::run_experiment(config);
    CHECK(results_equal(first, parallel));
  }

  SECTION("trace model") {
    ExperimentConfig config = reference_config(23, 20000);
    config.mode = DetectorMode::trace_model;
    config.training_trials = 20000;
    const ExperimentResult serial = tesrx::run_experiment(config);

    config.workers = 2;
    const ExperimentResult parallel = tesrx::run_experiment(config);
    CHECK(results_equal(serial, parallel));
  }
}

TEST_CASE("zero observed errors report a confidence-bound stderr", "[experiment]") {
  ExperimentConfig config;
  config.alpha_sq = 25.0;
  config.beta = BetaPolicy::optimize();
  config.evaluation_trials = 1000;
  config.seed = 3;
  const ExperimentResult r = tesrx::run_experiment(config);
  CHECK(r.p_err == 0.0);
  CHECK(std::isnan(r.improvement_db));
  CHECK(r.beta_sq > 0.0);
  CHECK_THAT(r.p_err_stderr,
             Catch::Matchers::WithinRel(1.0 - std::pow(0.025, 1.0 / 1000.0), 1e-12));
}

TEST_CASE("trace mode agrees with the ideal counter when noise vanishes",
          "[experiment]") {
  ExperimentConfig ideal = reference_config(11, 100000);
  const ExperimentResult r_ideal = tesrx::run_experiment(ideal);

  ExperimentConfig trace = reference_config(12, 100000);
  trace.mode = DetectorMode::trace_model;
  trace.training_trials = 100000;
  tesrx::TesResponseModel exact = tesrx::TesResponseModel::standard();
  exact.noise_rms = 0.0;
  exact.n_sat = 1e9;
  trace.tes = exact;
  const ExperimentResult r_trace = tesrx::run_experiment(trace);

  const double combined =
      std::sqrt(r_ideal.p_err_stderr * r_ideal.p_err_stderr +
                r_trace.p_err_stderr * r_trace.p_err_stderr);
  CHECK_THAT(r_trace.p_err, Catch::Matchers::WithinAbs(r_ideal.p_err, 3.0 * combined));
}

TEST_CASE("trace mode needs training samples in both branches", "[experiment]") {
  ExperimentConfig config = reference_config(5, 10);
  config.mode = DetectorMode::trace_model;
  config.training_trials = 1;
  CHECK_THROWS_AS(tesrx::run_experiment(config), std::runtime_error);
}

TEST_CASE("estimates stay within counting statistics across seeds", "[experiment]") {
  // 50 independent replicas; the 2-sigma band should capture the vast
  // majority and the 3-sigma band essentially all of them.
  constexpr std::uint64_t trials = 20000;
  const double sigma =
      std::sqrt(kReferenceError * (1.0 - kReferenceError) / static_cast<double>(trials));
  int within_two = 0;
  int within_three = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const ExperimentResult r = tesrx::run_experiment(reference_config(seed, trials));
    const double dev = std::abs(r.p_err - kReferenceError);
    if (dev <= 2.0 * sigma) ++within_two;
    if (dev <= 3.0 * sigma) ++within_three;
  }
  CHECK(within_two >= 44);
  CHECK(within_three >= 48);
}

TEST_CASE("sweep_beta pivots around the optimal displacement", "[experiment]") {
  ExperimentConfig base;
  base.evaluation_trials = 200000;
  base.seed = 31;

  SECTION("unit multiplier reproduces the optimize policy") {
    ExperimentConfig direct = base;
    direct.alpha_sq = 1.5;
    direct.beta = BetaPolicy::optimize();
    direct.evaluation_trials = 20000;
    ExperimentConfig small = base;
    small.evaluation_trials = 20000;
    const ExperimentResult r_direct = tesrx::run_experiment(direct);
    const auto swept = tesrx::sweep_beta(1.5, {1.0}, small);
    REQUIRE(swept.size() == 1);
    CHECK(results_equal(r_direct, swept[0]));
  }

  SECTION("estimates track the analytic curve and dip at the optimum") {
    const std::vector<double> grid = {0.5, 0.75, 1.0, 1.25, 1.5};
    const auto results = tesrx::sweep_beta(1.5, grid, base);
    REQUIRE(results.size() == grid.size());
    std::size_t argmin = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
      const double p_true = oracle::ideal_counter_error_fast(
          std::sqrt(1.5), std::sqrt(results[i].beta_sq), 0.982, 0.9985);
      const double sigma = std::sqrt(p_true * (1.0 - p_true) / 200000.0);
      CHECK_THAT(results[i].p_err, Catch::Matchers::WithinAbs(p_true, 3.2 * sigma));
      if (results[i].p_err < results[argmin].p_err) argmin = i;
    }
    CHECK(argmin == 2);
    // The grid ratios are exact: beta_sq scales with the square of the
    // multiplier around the shared optimum.
    CHECK_THAT(results[0].beta_sq * 4.0,
               Catch::Matchers::WithinRel(results[2].beta_sq, 1e-12));
  }

  SECTION("degenerate zero-signal sweep is flat at one half") {
    ExperimentConfig small = base;
    small.evaluation_trials = 100000;
    const auto results = tesrx::sweep_beta(0.0, {0.5, 1.0, 2.0}, small);
    for (const ExperimentResult& r : results) {
      CHECK(r.beta_sq == 0.0);
      CHECK_THAT(r.p_err, Catch::Matchers::WithinAbs(0.5, 3.0 * 1.59e-3));
    }
  }

  SECTION("rejections") {
    CHECK_THROWS_AS(tesrx::sweep_beta(1.5, {}, base), std::invalid_argument);
    CHECK_THROWS_AS(tesrx::sweep_beta(1.5, {1.0, 0.0}, base), std::invalid_argument);
    CHECK_THROWS_AS(tesrx::sweep_beta(1.5, {1.0, -0.3}, base), std::invalid_argument);
  }
}

TEST_CASE("sweep_alpha optimizes per intensity", "[experiment]") {
  ExperimentConfig base;
  base.evaluation_trials = 200000;
  base.seed = 37;

  SECTION("endpoints behave as expected") {
    const auto results = tesrx::sweep_alpha({0.0, 1.5}, base);
    REQUIRE(results.size() == 2);
    CHECK(results[0].alpha_sq == 0.0);
    CHECK(results[1].alpha_sq == 1.5);
    CHECK(results[0].beta_sq == 0.0);
    CHECK(std::abs(results[0].improvement_db) <= 0.05);
    CHECK(results[1].improvement_db >= 1.0);
    CHECK(results[1].improvement_db <= 4.5);
    const double sigma = std::sqrt(0.00358 * (1.0 - 0.00358) / 200000.0);
    CHECK_THAT(results[1].p_err,
               Catch::Matchers::WithinAbs(0.00357968230523, 3.2 * sigma));
  }

  SECTION("rejections") {
    CHECK_THROWS_AS(tesrx::sweep_alpha({}, base), std::invalid_argument);
    CHECK_THROWS_AS(tesrx::sweep_alpha({1.0, -0.5}, base), std::invalid_argument);
  }
}

TEST_CASE("optimized analytic error decreases with signal strength", "[experiment]") {
  const ReceiverParams params;
  double previous = 1.0;
  for (double alpha_sq : {0.1, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0}) {
    const auto opt = tesrx::optimal_displacement(std::sqrt(alpha_sq), params);
    CHECK(opt.p_err_min < previous);
    previous = opt.p_err_min;
  }
}

TEST_CASE("high-threshold dark counts floor the error curve", "[experiment]") {
  ReceiverParams dark;
  dark.dark_high_rate = 3e-8;

  auto error_at = [&dark](double alpha_sq) {
    // Displacement chosen for the clean receiver; dark counts enter only
    // through the error evaluation.
    const double beta =
        tesrx::optimal_displacement(std::sqrt(alpha_sq), ReceiverParams{}).beta_opt;
    return tesrx::expected_error_ideal_counter(std::sqrt(alpha_sq), beta, dark, true);
  };

  const double p3 = error_at(3.0);
  const double p4 = error_at(4.0);
  const double p9 = error_at(9.0);
  const double p12 = error_at(12.0);

  const double early_slope = std::abs(p4 - p3);
  const double late_slope = std::abs(p12 - p9) / 3.0;
  CHECK(late_slope < 1e-3 * early_slope);
  // The floor sits at half the dark rate.
  CHECK(p12 > 0.95 * 1.5e-8);
  CHECK(p12 < 1.05 * 1.5e-8);
  CHECK(p9 < p4);
}

TEST_CASE("result serialization", "[experiment]") {
  ExperimentConfig config;
  config.alpha_sq = 25.0;
  config.beta = BetaPolicy::optimize();
  config.evaluation_trials = 1000;
  config.seed = 3;
  const ExperimentResult zero_err = tesrx::run_experiment(config);
  const ExperimentResult normal = tesrx::run_experiment(reference_config(7, 20000));
  const std::vector<ExperimentResult> results = {normal, zero_err};

  SECTION("CSV") {
    const std::string path = "results_test.csv";
    tesrx::emit_results(results, OutputFormat::csv, path);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header ==
          "alpha_sq,alpha_sq_rescaled,beta_sq,p_err,p_err_stderr,p_sql,p_helstrom,"
          "improvement_db,trials,seed");
    std::vector<std::string> rows;
    std::string line;
    while (std::getline(in, line)) rows.push_back(line);
    REQUIRE(rows.size() == 2);
    for (const std::string& row : rows) {
      CHECK(std::count(row.begin(), row.end(), ',') == 9);
    }
    // Round-trip the first field: values are emitted with 12 significant
    // digits.
    std::stringstream first_row(rows[0]);
    std::string field;
    std::getline(first_row, field, ',');
    CHECK_THAT(std::stod(field), Catch::Matchers::WithinRel(1.5, 1e-11));
    // The zero-error row reports improvement as nan.
    CHECK(rows[1].find(",nan,") != std::string::npos);
    in.close();
    std::remove(path.c_str());
  }

  SECTION("JSON") {
    const std::string path = "results_test.json";
    tesrx::emit_results(results, OutputFormat::json, path);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    CHECK(text.front() == '[');
    CHECK(text.find("\"alpha_sq\": 1.5,") != std::string::npos);
    CHECK(text.find("\"improvement_db\": null") != std::string::npos);
    CHECK(text.find("\"trials\": 20000") != std::string::npos);
    CHECK(text.rfind("]\n") == text.size() - 2);
    in.close();
    std::remove(path.c_str());
  }

  SECTION("unwritable path") {
    CHECK_THROWS_AS(
        tesrx::emit_results(results, OutputFormat::csv, "/nonexistent_dir_tesrx/r.csv"),
        std::runtime_error);
  }
}
