// Command-line front end: analytic bounds, displacement/intensity sweeps,
// single simulate runs from a config file, and trace dumps.
//
// Exit codes: 0 success, 1 usage/configuration error, 2 runtime error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tesrx/tesrx.hpp"

namespace {

std::vector<double> parse_csv_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) {
        ++used;
      }
      if (used != item.size()) throw std::invalid_argument(item);
      values.push_back(v);
    } catch (const std::exception&) {
      throw std::invalid_argument("cannot parse '" + item + "' as a number");
    }
  }
  if (values.empty()) {
    throw std::invalid_argument("empty list: '" + text + "'");
  }
  return values;
}

void write_bounds_csv(const std::vector<double>& grid, const std::string& path) {
  std::ostringstream body;
  body << "alpha_sq,p_sql,p_helstrom\n";
  for (double a : grid) {
    const tesrx::SignalIntensity intensity(a);
    body << tesrx::detail::format_g12(a) << ','
         << tesrx::detail::format_g12(tesrx::sql_error(intensity)) << ','
         << tesrx::detail::format_g12(tesrx::helstrom_error(intensity)) << '\n';
  }
  if (path == "-") {
    std::cout << body.str();
    return;
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  out << body.str();
  if (!out) {
    throw std::runtime_error("write failed for '" + path + "'");
  }
}

struct CommonOptions {
  tesrx::ExperimentConfig config;
  std::string mode = "ideal";
  std::string out = "-";
  std::string format = "csv";
  tesrx::TesResponseModel tes = tesrx::TesResponseModel::standard();
  std::vector<CLI::Option*> tes_options;
};

void add_receiver_options(CLI::App* cmd, CommonOptions& opts) {
  tesrx::ReceiverParams& p = opts.config.params;
  cmd->add_option("--transmissivity", p.transmissivity,
                  "Interference beam-splitter transmissivity T")
      ->capture_default_str();
  cmd->add_option("--visibility", p.visibility, "Mode-overlap visibility xi")
      ->capture_default_str();
  cmd->add_option("--efficiency", p.efficiency,
                  "Detection efficiency eta (rescales the comparison axis)")
      ->capture_default_str();
  cmd->add_option("--dark-low", p.dark_low_rate, "Per-shot low-energy dark rate")
      ->capture_default_str();
  cmd->add_option("--dark-high", p.dark_high_rate, "Per-shot high-energy dark rate")
      ->capture_default_str();
  cmd->add_option("--dark-threshold", p.dark_high_threshold,
                  "Photon number above which high-energy dark events spread")
      ->capture_default_str();
}

void add_run_options(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--mode", opts.mode, "Detector mode")
      ->check(CLI::IsMember({"ideal", "trace"}))
      ->capture_default_str();
  cmd->add_option("--trials", opts.config.evaluation_trials, "Evaluation trials")
      ->capture_default_str();
  cmd->add_option("--training-trials", opts.config.training_trials,
                  "Training trials (trace mode)")
      ->capture_default_str();
  cmd->add_option("--seed", opts.config.seed, "Master random seed")->required();
  cmd->add_option("--workers", opts.config.workers, "Parallel worker count")
      ->capture_default_str();
  cmd->add_option("--out", opts.out, "Output path, - for stdout")->capture_default_str();
  cmd->add_option("--format", opts.format, "Output format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  add_receiver_options(cmd, opts);

  auto& tes_opts = opts.tes_options;
  tes_opts.push_back(cmd->add_option("--gain", opts.tes.gain, "Detector gain per photon")
                         ->capture_default_str());
  tes_opts.push_back(
      cmd->add_option("--noise-rms", opts.tes.noise_rms, "Per-sample noise RMS")
          ->capture_default_str());
  tes_opts.push_back(cmd->add_option("--n-sat", opts.tes.n_sat, "Saturation knee")
                         ->capture_default_str());
  tes_opts.push_back(
      cmd->add_option("--compression", opts.tes.compression, "Compression above the knee")
          ->capture_default_str());
  tes_opts.push_back(
      cmd->add_option("--filter-mean", opts.config.filter_mean,
                      "Mean photon number of matched-filter prep pulses")
          ->capture_default_str());
  tes_opts.push_back(cmd->add_option("--filter-traces", opts.config.filter_traces,
                                     "Matched-filter prep trace count")
                         ->capture_default_str());
}

void finalize_mode(CommonOptions& opts) {
  if (opts.mode == "trace") {
    opts.config.mode = tesrx::DetectorMode::trace_model;
    opts.config.tes = opts.tes;
    return;
  }
  opts.config.mode = tesrx::DetectorMode::ideal_counter;
  for (const CLI::Option* opt : opts.tes_options) {
    if (opt->count() > 0) {
      throw std::invalid_argument("option " + opt->get_name() +
                                  " requires --mode trace");
    }
  }
}

tesrx::OutputFormat parse_format(const std::string& format) {
  return format == "json" ? tesrx::OutputFormat::json : tesrx::OutputFormat::csv;
}

// --- simulate config file -------------------------------------------------

std::map<std::string, std::string> read_key_value_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open config file '" + path + "'");
  }
  std::map<std::string, std::string> entries;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": expected key = value");
    }
    if (!entries.emplace(key, value).second) {
      throw std::invalid_argument(path + ": duplicate key '" + key + "'");
    }
  }
  return entries;
}

class ConfigReader {
 public:
  explicit ConfigReader(std::map<std::string, std::string> entries)
      : entries_(std::move(entries)) {}

  std::optional<std::string> take(const std::string& key) {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    std::string value = it->second;
    entries_.erase(it);
    return value;
  }

  template <typename T, typename Parse>
  void load(const std::string& key, T& target, Parse parse) {
    if (const auto value = take(key)) target = parse(*value, key);
  }

  void finish() const {
    if (entries_.empty()) return;
    std::string keys;
    for (const auto& [key, value] : entries_) {
      if (!keys.empty()) keys += ", ";
      keys += key;
    }
    throw std::invalid_argument("unknown config keys: " + keys);
  }

 private:
  std::map<std::string, std::string> entries_;
};

double parse_double(const std::string& value, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + value +
                                "' as a number");
  }
}

std::uint64_t parse_u64(const std::string& value, const std::string& key) {
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(value, &used);
    if (used != value.size() || value.front() == '-') throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + value +
                                "' as a nonnegative integer");
  }
}

int run_simulate(const std::string& config_path) {
  ConfigReader reader(read_key_value_file(config_path));
  tesrx::ExperimentConfig config;
  tesrx::TesResponseModel tes = tesrx::TesResponseModel::standard();
  bool tes_touched = false;
  std::string out = "-";
  std::string format = "csv";

  auto as_double = [](const std::string& v, const std::string& k) {
    return parse_double(v, k);
  };
  auto as_u64 = [](const std::string& v, const std::string& k) { return parse_u64(v, k); };
  auto as_int = [&](const std::string& v, const std::string& k) {
    return static_cast<int>(parse_u64(v, k));
  };
  auto as_size = [&](const std::string& v, const std::string& k) {
    return static_cast<std::size_t>(parse_u64(v, k));
  };
  auto as_unsigned = [&](const std::string& v, const std::string& k) {
    return static_cast<unsigned>(parse_u64(v, k));
  };
  auto as_string = [](const std::string& v, const std::string&) { return v; };

  reader.load("alpha_sq", config.alpha_sq, as_double);

  if (const auto beta = reader.take("beta")) {
    if (*beta == "optimize") {
      config.beta = tesrx::BetaPolicy::optimize();
    } else {
      config.beta = tesrx::BetaPolicy::fixed(parse_double(*beta, "beta"));
    }
  }
  if (const auto beta_sq = reader.take("beta_sq")) {
    if (config.beta.kind == tesrx::BetaPolicy::Kind::fixed) {
      throw std::invalid_argument("config keys 'beta' and 'beta_sq' are exclusive");
    }
    const double b2 = parse_double(*beta_sq, "beta_sq");
    if (b2 < 0.0) throw std::invalid_argument("config key 'beta_sq' must be >= 0");
    config.beta = tesrx::BetaPolicy::fixed(std::sqrt(b2));
  }

  std::string mode = "ideal";
  reader.load("mode", mode, as_string);
  if (mode != "ideal" && mode != "trace") {
    throw std::invalid_argument("config key 'mode' must be ideal or trace");
  }

  reader.load("training_trials", config.training_trials, as_u64);
  reader.load("evaluation_trials", config.evaluation_trials, as_u64);
  reader.load("workers", config.workers, as_unsigned);

  const auto seed = reader.take("seed");
  if (!seed) {
    throw std::invalid_argument("config file must set 'seed' explicitly");
  }
  config.seed = parse_u64(*seed, "seed");

  tesrx::ReceiverParams& p = config.params;
  reader.load("transmissivity", p.transmissivity, as_double);
  reader.load("visibility", p.visibility, as_double);
  reader.load("efficiency", p.efficiency, as_double);
  reader.load("dark_low_rate", p.dark_low_rate, as_double);
  reader.load("dark_high_rate", p.dark_high_rate, as_double);
  reader.load("dark_high_threshold", p.dark_high_threshold, as_int);

  for (const char* key : {"gain", "noise_rms", "n_sat", "compression"}) {
    if (const auto value = reader.take(key)) {
      tes_touched = true;
      const double v = parse_double(*value, key);
      if (std::string(key) == "gain") tes.gain = v;
      if (std::string(key) == "noise_rms") tes.noise_rms = v;
      if (std::string(key) == "n_sat") tes.n_sat = v;
      if (std::string(key) == "compression") tes.compression = v;
    }
  }
  reader.load("filter_mean", config.filter_mean, as_double);
  reader.load("filter_traces", config.filter_traces, as_size);
  reader.load("min_bins", config.hist.min_bins, as_size);
  reader.load("smoothing", config.hist.smoothing, as_double);

  reader.load("out", out, as_string);
  reader.load("format", format, as_string);
  if (format != "csv" && format != "json") {
    throw std::invalid_argument("config key 'format' must be csv or json");
  }
  reader.finish();

  if (mode == "trace") {
    config.mode = tesrx::DetectorMode::trace_model;
    config.tes = tes;
  } else {
    config.mode = tesrx::DetectorMode::ideal_counter;
    if (tes_touched) {
      throw std::invalid_argument("trace response keys require mode = trace");
    }
  }

  const tesrx::ExperimentResult result = tesrx::run_experiment(config);
  tesrx::emit_results({result}, parse_format(format), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Displacement-receiver discrimination simulator"};
  app.require_subcommand(1);

  // bounds
  auto* bounds_cmd =
      app.add_subcommand("bounds", "Analytic SQL and Helstrom error probabilities");
  std::string bounds_grid;
  std::string bounds_out = "-";
  bounds_cmd->add_option("--alpha-sq-grid", bounds_grid, "Comma-separated intensities")
      ->required();
  bounds_cmd->add_option("--out", bounds_out, "Output path, - for stdout")
      ->capture_default_str();

  // sweep-beta
  auto* sweep_beta_cmd = app.add_subcommand(
      "sweep-beta", "Error probability versus displacement around the optimum");
  double sb_alpha_sq = 1.5;
  std::string sb_grid;
  CommonOptions sb_opts;
  sweep_beta_cmd->add_option("--alpha-sq", sb_alpha_sq, "Signal intensity |alpha|^2")
      ->required();
  sweep_beta_cmd
      ->add_option("--grid", sb_grid, "Comma-separated multipliers of beta_opt")
      ->required();
  add_run_options(sweep_beta_cmd, sb_opts);

  // sweep-alpha
  auto* sweep_alpha_cmd = app.add_subcommand(
      "sweep-alpha", "Error probability versus intensity at the optimal displacement");
  std::string sa_grid;
  CommonOptions sa_opts;
  bool sa_optimize = true;
  sweep_alpha_cmd->add_option("--grid", sa_grid, "Comma-separated intensities")
      ->required();
  sweep_alpha_cmd->add_flag("--optimize", sa_optimize,
                            "Optimize beta per intensity (always on; accepted for "
                            "symmetry with scripts)");
  add_run_options(sweep_alpha_cmd, sa_opts);

  // simulate
  auto* simulate_cmd =
      app.add_subcommand("simulate", "Single run described by a key = value config file");
  std::string sim_config_path;
  simulate_cmd->add_option("--config", sim_config_path, "Config file path")->required();

  // traces
  auto* traces_cmd = app.add_subcommand(
      "traces", "Dump simulated detector traces in the binary trace format");
  std::uint64_t tr_photons = 1;
  std::size_t tr_count = 1000;
  std::uint64_t tr_seed = 0;
  bool tr_seed_set = false;
  std::string tr_out;
  double tr_noise = tesrx::TesResponseModel::standard().noise_rms;
  traces_cmd->add_option("--photons", tr_photons, "Photon number per trace")
      ->capture_default_str();
  traces_cmd->add_option("--count", tr_count, "Number of traces")->capture_default_str();
  traces_cmd->add_option("--noise-rms", tr_noise, "Per-sample noise RMS")
      ->capture_default_str();
  traces_cmd->add_option_function<std::uint64_t>(
                "--seed",
                [&](std::uint64_t v) {
                  tr_seed = v;
                  tr_seed_set = true;
                },
                "Master random seed")
      ->required();
  traces_cmd->add_option("--out", tr_out, "Output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (bounds_cmd->parsed()) {
      write_bounds_csv(parse_csv_list(bounds_grid), bounds_out);
    } else if (sweep_beta_cmd->parsed()) {
      finalize_mode(sb_opts);
      const auto results =
          tesrx::sweep_beta(sb_alpha_sq, parse_csv_list(sb_grid), sb_opts.config);
      tesrx::emit_results(results, parse_format(sb_opts.format), sb_opts.out);
    } else if (sweep_alpha_cmd->parsed()) {
      finalize_mode(sa_opts);
      (void)sa_optimize;  // beta is always optimized per intensity
      const auto results = tesrx::sweep_alpha(parse_csv_list(sa_grid), sa_opts.config);
      tesrx::emit_results(results, parse_format(sa_opts.format), sa_opts.out);
    } else if (simulate_cmd->parsed()) {
      return run_simulate(sim_config_path);
    } else if (traces_cmd->parsed()) {
      (void)tr_seed_set;
      tesrx::TesResponseModel model = tesrx::TesResponseModel::standard();
      model.noise_rms = tr_noise;
      std::vector<tesrx::Trace> traces(tr_count);
      for (std::size_t i = 0; i < traces.size(); ++i) {
        tesrx::RandomStream rng(tr_seed, tesrx::RandomStream::phase_filter, i);
        traces[i] = tesrx::simulate_trace(tr_photons, model, rng);
      }
      tesrx::dump_traces(tr_out, traces);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
