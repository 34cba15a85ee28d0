// ionfit command-line front end.

#include "ionfit/ensemble.hpp"
#include "ionfit/errors.hpp"
#include "ionfit/experiments.hpp"
#include "ionfit/fitting.hpp"
#include "ionfit/io.hpp"
#include "ionfit/protocol.hpp"
#include "ionfit/simulator.hpp"
#include "ionfit/svg.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ionfit::IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << contents)) throw ionfit::IoError("cannot write " + path.string());
}

// Options shared by the single-task subcommands. A --config file supplies
// defaults under the same names; explicit flags win.
struct TaskOptions {
  std::string model = "beattie";
  std::string params;
  std::string protocol = "d1";
  std::vector<std::string> validation;
  std::vector<std::string> data;       // name=path or path
  std::vector<std::string> estimates;  // protocol=path
  std::string truth;
  double sigma = ionfit::kReferenceNoiseSigma * std::sqrt(0.1);
  std::uint64_t seed = 1;
  std::optional<double> fixed_g;
  std::optional<int> starts;
  std::optional<long> max_evals;
  std::string band_center = "midpoint";
  bool paper_scale = false;
  std::optional<double> sample_rate;
  std::string out = ".";
  ionfit::FitConfig fit;
};

void apply_task_config(const fs::path& path, TaskOptions& o, const CLI::App& cmd) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path.string() + ": expected a JSON object");
  static const std::set<std::string> known = {"model", "params", "protocol", "validation", "data", "estimates",
                                              "truth", "sigma",  "seed",     "fixed_g",    "band_center",
                                              "paper_scale", "sample_rate", "out", "fit"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError(path.string() + ": unknown key '" + key + "'");
  }
  auto given = [&](const char* flag) { return cmd.count(flag) > 0; };
  try {
    if (j.contains("model") && !given("--model")) o.model = j["model"].get<std::string>();
    if (j.contains("params") && !given("--params")) o.params = j["params"].get<std::string>();
    if (j.contains("protocol") && !given("--protocol")) o.protocol = j["protocol"].get<std::string>();
    if (j.contains("validation") && !given("--validation")) o.validation = j["validation"].get<std::vector<std::string>>();
    if (j.contains("data") && !given("--data")) o.data = j["data"].get<std::vector<std::string>>();
    if (j.contains("estimates") && !given("--estimate")) o.estimates = j["estimates"].get<std::vector<std::string>>();
    if (j.contains("truth") && !given("--truth")) o.truth = j["truth"].get<std::string>();
    if (j.contains("sigma") && !given("--sigma")) o.sigma = j["sigma"].get<double>();
    if (j.contains("seed") && !given("--seed")) o.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("fixed_g") && !given("--fixed-g")) o.fixed_g = j["fixed_g"].get<double>();
    if (j.contains("band_center") && !given("--band-center")) o.band_center = j["band_center"].get<std::string>();
    if (j.contains("paper_scale") && !given("--paper-scale")) o.paper_scale = j["paper_scale"].get<bool>();
    if (j.contains("sample_rate") && !given("--sample-rate")) o.sample_rate = j["sample_rate"].get<double>();
    if (j.contains("out") && !given("--out")) o.out = j["out"].get<std::string>();
    if (j.contains("fit")) o.fit = ionfit::fit_config_from_json(j["fit"].dump());
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const ionfit::ParseError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ionfit::Protocol load_protocol(const TaskOptions& o, const std::string& name) {
  auto p = ionfit::resolve_protocol(name, o.paper_scale ? ionfit::ProtocolScale::paper : ionfit::ProtocolScale::desk);
  if (o.sample_rate) p = p.with_sample_rate(*o.sample_rate);
  return p;
}

ionfit::ParameterSet load_params(const TaskOptions& o, const ionfit::MarkovModel& model) {
  if (!o.params.empty()) return ionfit::load_parameter_file(o.params);
  return ionfit::builtin_model(model.name()).defaults;
}

std::pair<std::string, std::string> split_labelled(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) return {fs::path(s).stem().string(), s};
  return {s.substr(0, eq), s.substr(eq + 1)};
}

void add_task_options(CLI::App& cmd, TaskOptions& o, std::string& config_path) {
  cmd.add_option("--config", config_path, "JSON file with defaults for these options");
  cmd.add_option("--model", o.model, "Builtin model name or model-definition file");
  cmd.add_option("--params", o.params, "Parameter file (kinetic values then g); defaults to the builtin values");
  cmd.add_option("--protocol", o.protocol, "Builtin protocol name or protocol file");
  cmd.add_flag("--paper-scale", o.paper_scale, "10 kHz sampling and full-length protocols");
  cmd.add_option("--sample-rate", o.sample_rate, "Sampling rate in Hz");
  cmd.add_option("--out", o.out, "Output directory");
}

int run_simulate(const TaskOptions& o, bool noisy) {
  const auto model = ionfit::resolve_model(o.model);
  const auto params = load_params(o, model);
  const auto protocol = load_protocol(o, o.protocol);
  ionfit::Trace trace = ionfit::simulate(model, params, protocol);
  if (noisy) ionfit::add_noise(trace, {o.sigma, o.seed});
  const fs::path path = fs::path(o.out) / (protocol.name() + ".csv");
  ionfit::save_trace(trace, path);
  std::cout << path.string() << "\n";
  return ionfit::kExitSuccess;
}

int run_fit(TaskOptions o) {
  const auto model = ionfit::resolve_model(o.model);
  const auto protocol = load_protocol(o, o.protocol);
  if (o.data.size() != 1) throw ConfigError("fit needs exactly one --data trace");
  const auto data = ionfit::load_trace(split_labelled(o.data.front()).second);
  if (o.starts) o.fit.n_starts = *o.starts;
  if (o.max_evals) o.fit.max_evals = *o.max_evals;
  o.fit.seed = o.seed;

  ionfit::ParameterSet reference = o.params.empty() ? ionfit::ParameterSet{} : ionfit::load_parameter_file(o.params);
  if (reference.kinetic.empty()) {
    const auto names = ionfit::builtin_model_names();
    if (std::find(names.begin(), names.end(), model.name()) != names.end()) {
      reference = ionfit::builtin_model(model.name()).defaults;
    } else {
      reference.kinetic.assign(model.n_kinetic_params(), 1.0);
      reference.conductance = 0.1;
    }
  }
  const auto objective = o.fixed_g ? ionfit::Objective::fixed_conductance(model, protocol, data, *o.fixed_g)
                                   : ionfit::Objective::all_free(model, protocol, data, reference);
  const auto result = ionfit::fit(objective, o.fit);
  const fs::path dir(o.out);
  write_file(dir / ("fit_" + protocol.name() + ".json"), ionfit::fit_result_to_json(result));
  ionfit::save_parameter_file(result.params, dir / ("params_" + protocol.name() + ".json"));
  std::printf("rmse %.6g after %ld evaluations (best start %d)\n", result.rmse, result.n_evals,
              result.best_start_index);
  return result.converged ? ionfit::kExitSuccess : ionfit::kExitPartialFailure;
}

std::vector<ionfit::Estimate> load_estimates(const TaskOptions& o) {
  if (o.estimates.empty()) throw ConfigError("no --estimate files given");
  std::vector<ionfit::Estimate> out;
  for (const auto& e : o.estimates) {
    const auto [label, path] = split_labelled(e);
    out.push_back({label, ionfit::load_parameter_file(path)});
  }
  return out;
}

int run_crossval(const TaskOptions& o) {
  const auto model = ionfit::resolve_model(o.model);
  const auto estimates = load_estimates(o);
  std::vector<ionfit::Protocol> protocols;
  std::map<std::string, ionfit::Trace> datasets;
  for (const auto& d : o.data) {
    const auto [label, path] = split_labelled(d);
    protocols.push_back(load_protocol(o, label));
    datasets[label] = ionfit::load_trace(path);
  }
  if (protocols.empty()) throw ConfigError("crossval needs --data name=path for each validation protocol");
  const auto cv = ionfit::crossval_matrix(estimates, model, protocols, datasets);
  std::string csv = "train";
  for (const auto& v : cv.validate) csv += "," + v;
  csv += "\n";
  for (Eigen::Index r = 0; r < cv.rmse.rows(); ++r) {
    csv += cv.train[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < cv.rmse.cols(); ++c) {
      char buf[32];
      std::snprintf(buf, sizeof buf, ",%.17g", cv.rmse(r, c));
      csv += buf;
    }
    csv += "\n";
  }
  const fs::path dir(o.out);
  write_file(dir / "crossval.csv", csv);
  write_file(dir / "crossval.svg", ionfit::svg::heatmap(cv.rmse, cv.train, cv.validate, "Cross-validation rmse (nA)"));
  std::printf("mean rmse %.6g\n", cv.mean());
  return ionfit::kExitSuccess;
}

int run_ensemble(const TaskOptions& o) {
  const auto model = ionfit::resolve_model(o.model);
  const auto estimates = load_estimates(o);
  const auto protocol = load_protocol(o, o.protocol);
  const auto center = ionfit::band_center_from_string(o.band_center);
  const auto band = ionfit::prediction_band(estimates, model, protocol, center);
  std::optional<ionfit::Trace> truth;
  if (!o.truth.empty()) truth = ionfit::load_trace(o.truth);

  std::ostringstream csv;
  csv.precision(17);
  csv << "time_ms,lower,upper," << ionfit::to_string(center) << (truth ? ",truth" : "") << "\n";
  for (std::size_t i = 0; i < band.size(); ++i) {
    csv << band.times[i] << ',' << band.lower[i] << ',' << band.upper[i] << ',' << band.center[i];
    if (truth) csv << ',' << truth->values.at(i);
    csv << "\n";
  }
  const fs::path dir(o.out);
  write_file(dir / ("band_" + protocol.name() + ".csv"), csv.str());
  ionfit::svg::Axes axes;
  axes.title = "Prediction band on " + protocol.name();
  axes.x_label = "time (ms)";
  axes.y_label = "current (nA)";
  std::optional<std::vector<double>> truth_values;
  if (truth) truth_values = truth->values;
  write_file(dir / ("band_" + protocol.name() + ".svg"),
             ionfit::svg::band(band.times, band.lower, band.upper, band.center, truth_values, axes));
  std::printf("mean width %.6g", band.mean_width());
  if (truth) {
    const auto cov = ionfit::coverage_report(band, *truth);
    std::printf(", coverage %.4f", cov.fraction_inside);
  }
  std::printf("\n");
  return ionfit::kExitSuccess;
}

struct ExperimentOptions {
  std::string config;
  bool paper_scale = false;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 0;
  bool verbose = false;
};

int run_case(ionfit::CaseKind kind, const ExperimentOptions& o) {
  ionfit::ExperimentConfig config;
  if (o.config.empty()) {
    config = ionfit::default_config(kind);
  } else {
    try {
      config = ionfit::load_config(o.config);
    } catch (const ionfit::Error& e) {
      throw ConfigError(e.what());
    }
    if (config.kind != kind && !(kind == ionfit::CaseKind::case2 && config.kind == ionfit::CaseKind::custom)) {
      throw ConfigError("config file describes '" + ionfit::to_string(config.kind) + "', not '" +
                        ionfit::to_string(kind) + "'");
    }
  }
  if (o.paper_scale) config.paper_scale = true;
  if (o.seed) config.master_seed = *o.seed;
  if (!o.out.empty()) config.output_dir = o.out;
  if (o.jobs > 0) config.jobs = o.jobs;
  if (o.verbose) config.verbose = true;

  ionfit::ExperimentBundle bundle;
  try {
    bundle = ionfit::run_experiment(config);
  } catch (const ionfit::ParseError& e) {
    throw ConfigError(e.what());
  } catch (const ionfit::LookupError& e) {
    throw ConfigError(e.what());
  }
  const auto files = ionfit::write_report(bundle, config.output_dir);
  for (const auto& f : bundle.failures) std::cerr << "failed: " << f.task << ": " << f.message << "\n";
  std::printf("%zu files written to %s\n", files.size(), config.output_dir.string().c_str());
  return ionfit::bundle_exit_code(bundle);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fit ion-channel Markov models across protocols and compare their predictions"};
  app.set_version_flag("--version", ionfit::library_version());
  app.require_subcommand(1);

  TaskOptions task;
  std::string task_config;
  ExperimentOptions experiment;

  auto* simulate = app.add_subcommand("simulate", "Noise-free model output for one protocol");
  add_task_options(*simulate, task, task_config);

  auto* generate = app.add_subcommand("generate", "Synthetic data: model output plus Gaussian noise");
  add_task_options(*generate, task, task_config);
  generate->add_option("--sigma", task.sigma, "Noise standard deviation (nA)");
  generate->add_option("--seed", task.seed, "Noise seed");

  auto* fit = app.add_subcommand("fit", "Fit a model to one trace");
  add_task_options(*fit, task, task_config);
  fit->add_option("--data", task.data, "Trace CSV");
  fit->add_option("--seed", task.seed, "Optimiser seed");
  fit->add_option("--fixed-g", task.fixed_g, "Hold the conductance at this value (uS)");
  fit->add_option("--starts", task.starts, "Number of optimiser starts");
  fit->add_option("--max-evals", task.max_evals, "Evaluation budget per start");

  auto* crossval = app.add_subcommand("crossval", "Cross-validation matrix of estimates against datasets");
  add_task_options(*crossval, task, task_config);
  crossval->add_option("--estimate", task.estimates, "protocol=parameter-file, one per training protocol");
  crossval->add_option("--data", task.data, "protocol=trace.csv, one per validation protocol");

  auto* ensemble = app.add_subcommand("ensemble", "Spread-of-predictions band on a validation protocol");
  add_task_options(*ensemble, task, task_config);
  ensemble->add_option("--estimate", task.estimates, "protocol=parameter-file, one per training protocol");
  ensemble->add_option("--truth", task.truth, "Noise-free reference trace for coverage");
  ensemble->add_option("--band-center", task.band_center, "midpoint, median or mean");

  std::vector<std::pair<CLI::App*, ionfit::CaseKind>> cases;
  for (const auto& [name, kind, help] :
       {std::tuple{"toy", ionfit::CaseKind::toy, "Two-exponential toy study over four observation designs"},
        std::tuple{"case1", ionfit::CaseKind::case1, "Conductance-restricted fits swept over lambda"},
        std::tuple{"case2", ionfit::CaseKind::case2, "Correct and discrepant model fits to Wang-model data"}}) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("--config", experiment.config, "Experiment config (JSON)");
    cmd->add_flag("--paper-scale", experiment.paper_scale, "10 kHz sampling and full-length protocols");
    cmd->add_option("--seed", experiment.seed, "Master seed");
    cmd->add_option("--out", experiment.out, "Output directory");
    cmd->add_option("--jobs", experiment.jobs, "Worker threads (default: IONFIT_JOBS or all cores)");
    cmd->add_flag("-v,--verbose", experiment.verbose, "Progress on stderr");
    cases.emplace_back(cmd, kind);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ionfit::kExitSuccess : ionfit::kExitConfigError;
  }

  try {
    for (auto* cmd : {simulate, generate, fit, crossval, ensemble}) {
      if (cmd->parsed() && !task_config.empty()) apply_task_config(task_config, task, *cmd);
    }
    if (simulate->parsed()) return run_simulate(task, false);
    if (generate->parsed()) return run_simulate(task, true);
    if (fit->parsed()) return run_fit(task);
    if (crossval->parsed()) return run_crossval(task);
    if (ensemble->parsed()) return run_ensemble(task);
    for (const auto& [cmd, kind] : cases) {
      if (cmd->parsed()) return run_case(kind, experiment);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return ionfit::kExitConfigError;
  } catch (const ionfit::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return ionfit::kExitConfigError;
  } catch (const ionfit::LookupError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return ionfit::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ionfit::kExitTotalFailure;
  }
  return ionfit::kExitConfigError;
}
