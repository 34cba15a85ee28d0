#include "ionfit/experiments.hpp"

#include "ionfit/errors.hpp"
#include "ionfit/io.hpp"
#include "ionfit/rng.hpp"
#include "ionfit/svg.hpp"
#include "json_util.hpp"
#include "text_util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

namespace ionfit {

using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

std::mutex log_mutex;

void log_line(const ExperimentConfig& config, const std::string& line) {
  if (!config.verbose) return;
  const std::lock_guard lock(log_mutex);
  std::fprintf(stderr, "[ionfit] %s\n", line.c_str());
}

std::string lambda_label(double lambda) { return "lambda=" + format_double(lambda); }

std::string file_stem(std::string_view label) {
  std::string out(label);
  for (char& c : out) {
    if (c == '=' || c == '/' || c == ' ') c = '_';
  }
  return out;
}

template <typename T>
T read_key(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("experiment config: key '") + key + "': " + e.what());
  }
}

void validate(const ExperimentConfig& c) {
  if (c.kind != CaseKind::toy) {
    if (c.training_protocols.empty()) throw ParseError("experiment config: no training protocols");
    if (c.validation_protocols.empty()) throw ParseError("experiment config: no validation protocols");
    if (c.fit_models.empty()) throw ParseError("experiment config: no fit models");
    std::set<std::string> names(c.training_protocols.begin(), c.training_protocols.end());
    if (names.size() != c.training_protocols.size()) throw ParseError("experiment config: duplicate training protocol");
  }
  if (c.n_repeats < 1) throw ParseError("experiment config: n_repeats must be at least 1");
  if (c.sigma && !(*c.sigma >= 0.0)) throw ParseError("experiment config: sigma must be non-negative");
  if (c.sample_rate && !(*c.sample_rate > 0.0)) throw ParseError("experiment config: sample_rate must be positive");
  if (c.kind == CaseKind::case1) {
    if (c.lambdas.empty()) throw ParseError("experiment config: no lambdas");
    try {
      (void)lambda_sweep_order(c.lambdas);
    } catch (const Error& e) {
      throw ParseError(std::string("experiment config: lambdas: ") + e.what());
    }
  }
  if (c.cross_seed_random_starts < 0) throw ParseError("experiment config: cross_seed_random_starts is negative");
  if (!(c.toy_sigma >= 0.0)) throw ParseError("experiment config: toy_sigma must be non-negative");
}

json config_json(const ExperimentConfig& c, bool for_hash) {
  json j;
  j["case"] = to_string(c.kind);
  j["dgp_model"] = c.dgp_model;
  j["fit_models"] = c.fit_models;
  j["training_protocols"] = c.training_protocols;
  j["validation_protocols"] = c.validation_protocols;
  j["n_repeats"] = c.n_repeats;
  j["sigma"] = c.sigma ? json(*c.sigma) : json(nullptr);
  j["sample_rate"] = c.sample_rate ? json(*c.sample_rate) : json(nullptr);
  j["paper_scale"] = c.paper_scale;
  j["lambdas"] = c.lambdas;
  j["fit"] = fit_config_json(c.fit);
  j["cross_seed"] = c.cross_seed;
  j["cross_seed_random_starts"] = c.cross_seed_random_starts;
  j["band_center"] = to_string(c.band_center);
  j["master_seed"] = c.master_seed;
  j["dgp_params"] = c.dgp_params ? json(*c.dgp_params) : json(nullptr);
  j["toy_sigma"] = c.toy_sigma;
  if (!for_hash) {
    j["output_dir"] = c.output_dir.generic_string();
    j["jobs"] = c.jobs;
    j["verbose"] = c.verbose;
  }
  return j;
}

json matrix_json(const CrossvalMatrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rmse.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.rmse.cols(); ++c) row.push_back(m.rmse(r, c));
    rows.push_back(std::move(row));
  }
  return {{"train", m.train}, {"validate", m.validate}, {"rmse", std::move(rows)}, {"mean", m.mean()}};
}

std::string crossval_csv(const CrossvalMatrix& m) {
  std::string out = "train";
  for (const auto& v : m.validate) out += "," + v;
  out += "\n";
  for (Eigen::Index r = 0; r < m.rmse.rows(); ++r) {
    out += m.train[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < m.rmse.cols(); ++c) out += "," + format_double(m.rmse(r, c));
    out += "\n";
  }
  return out;
}

ParameterSet dgp_parameters(const ExperimentConfig& config, const MarkovModel& model) {
  ParameterSet p;
  if (config.dgp_params) {
    p = ParameterSet::from_flat(*config.dgp_params);
  } else {
    p = builtin_model(config.dgp_model).defaults;
  }
  if (p.kinetic.size() != model.n_kinetic_params()) {
    throw ArityError("dgp_params has " + std::to_string(p.kinetic.size()) + " kinetic values, model '" +
                     model.name() + "' needs " + std::to_string(model.n_kinetic_params()));
  }
  return p;
}

/// Protocols, truth and noisy datasets shared by the fitting cases.
struct Setup {
  MarkovModel dgp_model;
  ParameterSet dgp_params;
  std::vector<Protocol> training;
  std::vector<Protocol> validation;
  std::vector<Protocol> columns;  // validation then training
};

Setup prepare(const ExperimentConfig& config, ExperimentBundle& bundle) {
  validate(config);
  Setup s{resolve_model(config.dgp_model), {}, {}, {}, {}};
  s.dgp_params = dgp_parameters(config, s.dgp_model);
  const auto scale = effective_scale(config);
  const double rate = effective_sample_rate(config);
  for (const auto& name : config.training_protocols) {
    s.training.push_back(resolve_protocol(name, scale).with_sample_rate(rate));
  }
  for (const auto& name : config.validation_protocols) {
    s.validation.push_back(resolve_protocol(name, scale).with_sample_rate(rate));
  }
  s.columns = s.validation;
  for (const auto& p : s.training) {
    if (std::none_of(s.columns.begin(), s.columns.end(), [&](const Protocol& q) { return q.name() == p.name(); })) {
      s.columns.push_back(p);
    }
  }

  bundle.config = config;
  bundle.config_hash = config_hash(config);
  bundle.sigma = effective_sigma(config);
  bundle.sample_rate = rate;
  for (const auto& p : s.training) bundle.training.push_back(p.name());
  for (const auto& p : s.validation) bundle.validation.push_back(p.name());
  for (const auto& p : s.columns) bundle.crossval_columns.push_back(p.name());

  for (const auto& p : s.columns) bundle.truth[p.name()] = simulate(s.dgp_model, s.dgp_params, p);
  bundle.data.resize(static_cast<std::size_t>(config.n_repeats));
  for (std::size_t r = 0; r < bundle.data.size(); ++r) {
    for (const auto& p : s.columns) {
      Trace z = bundle.truth.at(p.name());
      add_noise(z, {bundle.sigma, data_seed(config, p.name(), r)});
      bundle.data[r][p.name()] = std::move(z);
    }
  }
  return s;
}

std::uint64_t fit_seed(const ExperimentConfig& config, std::string_view branch, std::size_t repeat,
                       std::string_view protocol) {
  return derive_seed(config.master_seed, {seed_tag("fit"), seed_tag(branch), repeat, seed_tag(protocol)});
}

/// Crossval matrices and bands for every repeat of a branch.
void evaluate_branch(Branch& branch, const MarkovModel& model, const Setup& setup, ExperimentBundle& bundle, int jobs) {
  const std::size_t n_rep = branch.fits.size();
  branch.crossval.assign(n_rep, std::nullopt);
  for (const auto& v : setup.validation) {
    branch.bands[v.name()].assign(n_rep, std::nullopt);
    branch.coverage[v.name()].assign(n_rep, std::nullopt);
  }
  std::vector<std::string> errors(n_rep);
  parallel_for(jobs, n_rep, [&](std::size_t r) {
    try {
      const auto estimates = branch.estimates(r);
      if (estimates.empty()) return;
      if (estimates.size() == setup.training.size()) {
        branch.crossval[r] = crossval_matrix(estimates, model, setup.columns, bundle.data[r]);
      }
      for (const auto& v : setup.validation) {
        auto band = prediction_band(estimates, model, v, bundle.config.band_center);
        branch.coverage[v.name()][r] = coverage_report(band, bundle.truth.at(v.name()));
        branch.bands[v.name()][r] = std::move(band);
      }
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  });
  std::vector<CrossvalMatrix> complete;
  for (std::size_t r = 0; r < n_rep; ++r) {
    if (!errors[r].empty()) {
      bundle.failures.push_back({branch.label + "/repeat " + std::to_string(r) + "/evaluate", errors[r]});
    }
    if (branch.crossval[r]) complete.push_back(*branch.crossval[r]);
  }
  if (!complete.empty()) branch.crossval_mean = average_crossval(complete);
}

struct FitTask {
  std::size_t repeat = 0;
  std::size_t protocol = 0;
};

ParameterSet fit_reference(const MarkovModel& model, double g) {
  ParameterSet p;
  const auto names = builtin_model_names();
  if (std::find(names.begin(), names.end(), model.name()) != names.end()) {
    p = builtin_model(model.name()).defaults;
  } else {
    p.kinetic.assign(model.n_kinetic_params(), 1.0);
  }
  p.conductance = g;
  return p;
}

}  // namespace

std::string to_string(CaseKind kind) {
  switch (kind) {
    case CaseKind::toy: return "toy";
    case CaseKind::case1: return "case1";
    case CaseKind::case2: return "case2";
    case CaseKind::custom: return "custom";
  }
  return "unknown";
}

CaseKind case_kind_from_string(std::string_view s) {
  if (s == "toy") return CaseKind::toy;
  if (s == "case1") return CaseKind::case1;
  if (s == "case2") return CaseKind::case2;
  if (s == "custom") return CaseKind::custom;
  throw ParseError("unknown case '" + std::string(s) + "' (expected toy, case1, case2 or custom)");
}

ExperimentConfig default_config(CaseKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  if (kind == CaseKind::case2) {
    c.dgp_model = "wang";
    c.fit_models = {"wang", "beattie"};
    c.cross_seed = true;
    c.fit.max_evals = 60'000;
  }
  c.output_dir = "ionfit-" + to_string(kind);
  return c;
}

ExperimentConfig config_from_json(std::string_view text) {
  const json j = parse_json_text(text, "experiment config");
  if (!j.is_object()) throw ParseError("experiment config: expected a JSON object");
  static const std::set<std::string> known = {
      "case",        "dgp_model",  "fit_models",  "fit_model",     "training_protocols", "validation_protocols",
      "n_repeats",   "sigma",      "sample_rate", "paper_scale",   "lambdas",            "fit",
      "cross_seed",  "cross_seed_random_starts",  "band_center",   "output_dir",         "master_seed",
      "jobs",        "dgp_params", "toy_sigma",   "verbose"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ParseError("experiment config: unknown key '" + key + "'");
  }
  if (!j.contains("case")) throw ParseError("experiment config: missing key 'case'");
  ExperimentConfig c = default_config(case_kind_from_string(read_key<std::string>(j, "case")));

  if (j.contains("dgp_model")) c.dgp_model = read_key<std::string>(j, "dgp_model");
  if (j.contains("fit_models") && j.contains("fit_model")) {
    throw ParseError("experiment config: give either 'fit_model' or 'fit_models'");
  }
  if (j.contains("fit_models")) c.fit_models = read_key<std::vector<std::string>>(j, "fit_models");
  if (j.contains("fit_model")) c.fit_models = {read_key<std::string>(j, "fit_model")};
  if (c.kind == CaseKind::case1 && !j.contains("fit_models") && !j.contains("fit_model")) c.fit_models = {c.dgp_model};
  if (j.contains("training_protocols")) c.training_protocols = read_key<std::vector<std::string>>(j, "training_protocols");
  if (j.contains("validation_protocols")) {
    c.validation_protocols = read_key<std::vector<std::string>>(j, "validation_protocols");
  }
  if (j.contains("n_repeats")) c.n_repeats = read_key<int>(j, "n_repeats");
  if (j.contains("sigma") && !j.at("sigma").is_null()) c.sigma = read_key<double>(j, "sigma");
  if (j.contains("sample_rate") && !j.at("sample_rate").is_null()) c.sample_rate = read_key<double>(j, "sample_rate");
  if (j.contains("paper_scale")) c.paper_scale = read_key<bool>(j, "paper_scale");
  if (j.contains("lambdas")) c.lambdas = read_key<std::vector<double>>(j, "lambdas");
  if (j.contains("fit")) read_fit_config(j.at("fit"), c.fit);
  if (j.contains("cross_seed")) c.cross_seed = read_key<bool>(j, "cross_seed");
  if (j.contains("cross_seed_random_starts")) c.cross_seed_random_starts = read_key<int>(j, "cross_seed_random_starts");
  if (j.contains("band_center")) {
    try {
      c.band_center = band_center_from_string(read_key<std::string>(j, "band_center"));
    } catch (const LookupError& e) {
      throw ParseError(std::string("experiment config: ") + e.what());
    } catch (const DomainError& e) {
      throw ParseError(std::string("experiment config: ") + e.what());
    }
  }
  if (j.contains("output_dir")) c.output_dir = read_key<std::string>(j, "output_dir");
  if (j.contains("master_seed")) c.master_seed = read_key<std::uint64_t>(j, "master_seed");
  if (j.contains("jobs")) c.jobs = read_key<int>(j, "jobs");
  if (j.contains("dgp_params") && !j.at("dgp_params").is_null()) {
    c.dgp_params = read_key<std::vector<double>>(j, "dgp_params");
  }
  if (j.contains("toy_sigma")) c.toy_sigma = read_key<double>(j, "toy_sigma");
  if (j.contains("verbose")) c.verbose = read_key<bool>(j, "verbose");
  validate(c);
  return c;
}

std::string config_to_json(const ExperimentConfig& config) { return config_json(config, false).dump(2) + "\n"; }

ExperimentConfig load_config(const std::filesystem::path& path) {
  try {
    return config_from_json(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string config_hash(const ExperimentConfig& config) { return hex64(fnv1a(config_json(config, true).dump())); }

double effective_sample_rate(const ExperimentConfig& config) {
  if (config.sample_rate) return *config.sample_rate;
  return config.paper_scale ? 10'000.0 : 1'000.0;
}

double effective_sigma(const ExperimentConfig& config) {
  if (config.sigma) return *config.sigma;
  return kReferenceNoiseSigma * std::sqrt(effective_sample_rate(config) / 10'000.0);
}

ProtocolScale effective_scale(const ExperimentConfig& config) {
  return config.paper_scale ? ProtocolScale::paper : ProtocolScale::desk;
}

int effective_jobs(const ExperimentConfig& config) {
  if (config.jobs > 0) return config.jobs;
  if (const char* env = std::getenv("IONFIT_JOBS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

void parallel_for(int jobs, std::size_t n, const std::function<void(std::size_t)>& task) {
  const auto workers = static_cast<std::size_t>(std::clamp<long>(jobs, 1, static_cast<long>(std::max<std::size_t>(n, 1))));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        const std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<Estimate> Branch::estimates(std::size_t repeat) const {
  std::vector<Estimate> out;
  for (const auto& f : fits.at(repeat)) {
    if (f) out.push_back({f->protocol, f->params});
  }
  return out;
}

const Branch* ExperimentBundle::branch(std::string_view label) const {
  for (const auto& b : branches) {
    if (b.label == label) return &b;
  }
  return nullptr;
}

std::uint64_t data_seed(const ExperimentConfig& config, std::string_view protocol, std::size_t repeat) {
  return derive_seed(config.master_seed, {seed_tag("data"), seed_tag(protocol), repeat});
}

ExperimentBundle run_case1(const ExperimentConfig& config) {
  ExperimentBundle bundle;
  const Setup setup = prepare(config, bundle);
  if (config.fit_models.size() != 1) throw ParseError("case1 takes exactly one fit model");
  const MarkovModel model = resolve_model(config.fit_models.front());
  if (model.n_kinetic_params() != setup.dgp_params.kinetic.size()) {
    throw ParseError("case1 needs the fit model to share the DGP model's parameterisation");
  }
  const double g_star = setup.dgp_params.conductance;
  const auto order = lambda_sweep_order(config.lambdas);

  std::vector<FitTask> tasks;
  for (std::size_t r = 0; r < bundle.data.size(); ++r) {
    for (std::size_t p = 0; p < setup.training.size(); ++p) tasks.push_back({r, p});
  }
  bundle.n_tasks = tasks.size() * order.size();

  std::vector<std::vector<LambdaFit>> results(tasks.size());
  std::vector<std::string> errors(tasks.size());
  const int jobs = effective_jobs(config);
  parallel_for(jobs, tasks.size(), [&](std::size_t i) {
    const auto& t = tasks[i];
    const Protocol& protocol = setup.training[t.protocol];
    FitConfig fc = config.fit;
    fc.seed = fit_seed(config, "case1", t.repeat, protocol.name());
    try {
      results[i] = fit_lambda_sweep(model, protocol, bundle.data[t.repeat].at(protocol.name()), g_star, config.lambdas,
                                    setup.dgp_params.kinetic, fc);
      log_line(config, "case1 repeat " + std::to_string(t.repeat) + " " + protocol.name() + " done");
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  // Branches in ascending lambda order.
  std::vector<double> sorted = config.lambdas;
  std::sort(sorted.begin(), sorted.end());
  for (double lambda : sorted) {
    Branch b;
    b.label = lambda_label(lambda);
    b.fit_model = model.name();
    b.parameter_names = model.parameter_names();
    b.lambda = lambda;
    b.fits.assign(bundle.data.size(), std::vector<std::optional<FitResult>>(setup.training.size()));
    bundle.branches.push_back(std::move(b));
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    if (!errors[i].empty()) {
      bundle.failures.push_back({"case1/repeat " + std::to_string(t.repeat) + "/" + setup.training[t.protocol].name(),
                                 errors[i]});
      continue;
    }
    for (auto& lf : results[i]) {
      const auto it = std::find(sorted.begin(), sorted.end(), lf.lambda);
      bundle.branches[static_cast<std::size_t>(it - sorted.begin())].fits[t.repeat][t.protocol] = std::move(lf.result);
    }
  }
  for (auto& b : bundle.branches) evaluate_branch(b, model, setup, bundle, jobs);
  return bundle;
}

ExperimentBundle run_case2(const ExperimentConfig& config) {
  ExperimentBundle bundle;
  const Setup setup = prepare(config, bundle);
  const int jobs = effective_jobs(config);
  const double g_ref = setup.dgp_params.conductance;
  const std::size_t n_rep = bundle.data.size();
  const std::size_t n_prot = setup.training.size();

  for (const auto& model_name : config.fit_models) {
    const MarkovModel model = resolve_model(model_name);
    const ParameterSet reference = fit_reference(model, g_ref);
    Branch branch;
    branch.label = model.name();
    branch.fit_model = model.name();
    branch.parameter_names = model.parameter_names();
    branch.fits.assign(n_rep, std::vector<std::optional<FitResult>>(n_prot));
    std::vector<std::vector<std::string>> errors(n_rep, std::vector<std::string>(n_prot));

    auto run_fit = [&](std::size_t r, std::size_t p, const std::string& stage, std::vector<ParameterSet> guesses,
                       int random_starts) -> std::optional<FitResult> {
      const Protocol& protocol = setup.training[p];
      FitConfig fc = config.fit;
      fc.seed = derive_seed(fit_seed(config, branch.label, r, protocol.name()), {seed_tag(stage)});
      fc.n_starts = static_cast<int>(guesses.size()) + random_starts;
      fc.initial_guesses = std::move(guesses);
      if (fc.n_starts < 1) return std::nullopt;
      const Objective objective =
          Objective::all_free(model, protocol, bundle.data[r].at(protocol.name()), reference);
      try {
        auto result = fit(objective, fc);
        log_line(config, branch.label + " " + stage + " repeat " + std::to_string(r) + " " + protocol.name() +
                             " rmse " + format_double(result.rmse));
        return result;
      } catch (const std::exception& e) {
        errors[r][p] = e.what();
        return std::nullopt;
      }
    };

    if (!config.cross_seed) {
      parallel_for(jobs, n_rep * n_prot, [&](std::size_t i) {
        const std::size_t r = i / n_prot;
        const std::size_t p = i % n_prot;
        branch.fits[r][p] = run_fit(r, p, "fit", {}, config.fit.n_starts);
      });
    } else {
      // Stage A: independent multistart fits on the first repeat.
      parallel_for(jobs, n_prot, [&](std::size_t p) { branch.fits[0][p] = run_fit(0, p, "A", {}, config.fit.n_starts); });
      // Stage B: each first-repeat fit restarted from the other protocols' estimates.
      std::vector<std::optional<FitResult>> stage_b(n_prot);
      parallel_for(jobs, n_prot, [&](std::size_t p) {
        std::vector<ParameterSet> guesses;
        for (std::size_t q = 0; q < n_prot; ++q) {
          if (q != p && branch.fits[0][q]) guesses.push_back(branch.fits[0][q]->params);
        }
        if (!guesses.empty()) stage_b[p] = run_fit(0, p, "B", std::move(guesses), 0);
      });
      for (std::size_t p = 0; p < n_prot; ++p) {
        auto& current = branch.fits[0][p];
        if (stage_b[p] && (!current || stage_b[p]->rmse < current->rmse)) current = std::move(stage_b[p]);
        if (current) errors[0][p].clear();
      }
      // Stage C: later repeats start from every first-repeat estimate plus a few random points.
      std::vector<ParameterSet> shared;
      for (std::size_t p = 0; p < n_prot; ++p) {
        if (branch.fits[0][p]) shared.push_back(branch.fits[0][p]->params);
      }
      if (n_rep > 1) {
        parallel_for(jobs, (n_rep - 1) * n_prot, [&](std::size_t i) {
          const std::size_t r = 1 + i / n_prot;
          const std::size_t p = i % n_prot;
          branch.fits[r][p] = run_fit(r, p, "C", shared, config.cross_seed_random_starts);
        });
      }
    }
    for (std::size_t r = 0; r < n_rep; ++r) {
      for (std::size_t p = 0; p < n_prot; ++p) {
        if (!branch.fits[r][p]) {
          const std::string message = errors[r][p].empty() ? "no starts to run" : errors[r][p];
          bundle.failures.push_back(
              {branch.label + "/repeat " + std::to_string(r) + "/" + setup.training[p].name(), message});
        }
      }
    }
    bundle.n_tasks += n_rep * n_prot;
    evaluate_branch(branch, model, setup, bundle, jobs);
    bundle.branches.push_back(std::move(branch));
  }
  return bundle;
}

ExperimentBundle run_toy(const ExperimentConfig& config) {
  validate(config);
  ExperimentBundle bundle;
  bundle.config = config;
  bundle.config_hash = config_hash(config);
  bundle.sigma = config.toy_sigma;
  bundle.n_tasks = 1;
  try {
    bundle.toy = run_toy_study(config.toy_sigma, config.n_repeats, config.master_seed);
  } catch (const std::exception& e) {
    bundle.failures.push_back({"toy", e.what()});
  }
  return bundle;
}

ExperimentBundle run_experiment(const ExperimentConfig& config) {
  switch (config.kind) {
    case CaseKind::toy: return run_toy(config);
    case CaseKind::case1: return run_case1(config);
    case CaseKind::case2:
    case CaseKind::custom: return run_case2(config);
  }
  throw DomainError("unknown case");
}

int bundle_exit_code(const ExperimentBundle& bundle) {
  if (bundle.empty()) return kExitTotalFailure;
  bool any_fit = bundle.toy.has_value();
  for (const auto& b : bundle.branches) {
    for (const auto& rep : b.fits) {
      for (const auto& f : rep) any_fit = any_fit || f.has_value();
    }
  }
  if (!any_fit) return kExitTotalFailure;
  return bundle.failures.empty() ? kExitSuccess : kExitPartialFailure;
}

std::string library_version() { return kVersion; }

// ---------------------------------------------------------------------------
// Report

namespace {

class ReportWriter {
 public:
  explicit ReportWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& contents) {
    const auto path = dir_ / name;
    try {
      write_text_file(path, contents);
    } catch (const IoError&) {
      throw;
    } catch (const std::exception& e) {
      throw IoError(path.string() + ": " + e.what());
    }
    files_[name] = hex64(fnv1a(contents));
  }

  const std::map<std::string, std::string>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::string> files_;
};

std::string estimates_csv(const Branch& b, const std::vector<std::string>& training) {
  std::string out = "repeat,protocol,rmse";
  for (const auto& n : b.parameter_names) out += "," + n;
  out += ",g\n";
  for (std::size_t r = 0; r < b.fits.size(); ++r) {
    for (std::size_t p = 0; p < training.size(); ++p) {
      const auto& f = b.fits[r][p];
      if (!f) continue;
      out += std::to_string(r) + "," + training[p] + "," + format_double(f->rmse);
      for (double v : f->params.flat()) out += "," + format_double(v);
      out += "\n";
    }
  }
  return out;
}

std::string band_csv(const PredictionBand& band, const std::optional<Trace>& truth) {
  std::string out = "time_ms,lower,upper," + to_string(band.center_kind);
  if (truth) out += ",truth";
  out += "\n";
  for (std::size_t i = 0; i < band.size(); ++i) {
    out += format_double(band.times[i]) + "," + format_double(band.lower[i]) + "," + format_double(band.upper[i]) +
           "," + format_double(band.center[i]);
    if (truth) out += "," + format_double(truth->values[i]);
    out += "\n";
  }
  return out;
}

json coverage_json(const CoverageReport& c) {
  return {{"fraction_inside", c.fraction_inside},
          {"mean_width", c.mean_width},
          {"median_width", c.median_width},
          {"max_width", c.max_width}};
}

std::string estimate_scatter(const Branch& b, const std::vector<std::string>& training, bool case1) {
  std::vector<svg::Series> series;
  for (std::size_t p = 0; p < training.size(); ++p) {
    svg::Series s;
    s.label = training[p];
    for (const auto& rep : b.fits) {
      const auto& f = rep[p];
      if (!f || f->params.kinetic.size() < 2) continue;
      s.x.push_back(f->params.kinetic[0]);
      s.y.push_back(case1 ? f->params.kinetic[1] : f->params.conductance);
    }
    series.push_back(std::move(s));
  }
  svg::Axes axes;
  axes.title = "Estimates, " + b.label;
  axes.x_label = "p1";
  axes.y_label = case1 ? "p2" : "g (uS)";
  axes.log_x = true;
  axes.log_y = case1;
  return svg::scatter(series, axes);
}

void write_fit_branches(const ExperimentBundle& bundle, ReportWriter& w, json& summary) {
  const bool case1 = bundle.config.kind == CaseKind::case1;
  json branches = json::array();
  for (const auto& b : bundle.branches) {
    const std::string stem = file_stem(b.label);
    json jb;
    jb["label"] = b.label;
    jb["fit_model"] = b.fit_model;
    jb["lambda"] = b.lambda ? json(*b.lambda) : json(nullptr);

    w.write("estimates_" + stem + ".csv", estimates_csv(b, bundle.training));
    w.write("estimates_" + stem + ".svg", estimate_scatter(b, bundle.training, case1));

    json fits = json::array();
    for (std::size_t r = 0; r < b.fits.size(); ++r) {
      for (std::size_t p = 0; p < bundle.training.size(); ++p) {
        const auto& f = b.fits[r][p];
        if (!f) continue;
        json e = {{"repeat", r},
                  {"protocol", bundle.training[p]},
                  {"params", f->params.flat()},
                  {"rmse", f->rmse},
                  {"seed", f->seed},
                  {"n_evals", f->n_evals},
                  {"best_start_index", f->best_start_index},
                  {"converged", f->converged}};
        fits.push_back(std::move(e));
      }
    }
    jb["fits"] = std::move(fits);

    json cv = json::array();
    for (std::size_t r = 0; r < b.crossval.size(); ++r) {
      if (!b.crossval[r]) continue;
      json m = matrix_json(*b.crossval[r]);
      m["repeat"] = r;
      cv.push_back(std::move(m));
      w.write("crossval_" + stem + "_repeat" + std::to_string(r) + ".csv", crossval_csv(*b.crossval[r]));
    }
    jb["crossval"] = std::move(cv);
    if (b.crossval_mean) {
      jb["crossval_mean"] = matrix_json(*b.crossval_mean);
      w.write("crossval_" + stem + ".csv", crossval_csv(*b.crossval_mean));
      w.write("crossval_" + stem + ".svg",
              svg::heatmap(b.crossval_mean->rmse, b.crossval_mean->train, b.crossval_mean->validate,
                           "Cross-validation rmse (nA), " + b.label));
    } else {
      jb["crossval_mean"] = nullptr;
    }

    json bands = json::object();
    for (const auto& [protocol, per_repeat] : b.bands) {
      json jp = json::array();
      const auto truth_it = bundle.truth.find(protocol);
      const std::optional<Trace> truth =
          truth_it == bundle.truth.end() ? std::nullopt : std::optional<Trace>(truth_it->second);
      for (std::size_t r = 0; r < per_repeat.size(); ++r) {
        const auto& band = per_repeat[r];
        if (!band) continue;
        json e = {{"repeat", r}, {"mean_width", band->mean_width()}};
        const auto& cov = b.coverage.at(protocol)[r];
        e["coverage"] = cov ? coverage_json(*cov) : json(nullptr);
        jp.push_back(std::move(e));
        if (r == 0) {
          const std::string base = "band_" + stem + "_" + file_stem(protocol);
          w.write(base + ".csv", band_csv(*band, truth));
          svg::Axes axes;
          axes.title = "Prediction band on " + protocol + ", " + b.label;
          axes.x_label = "time (ms)";
          axes.y_label = "current (nA)";
          std::optional<std::vector<double>> truth_values;
          if (truth) truth_values = truth->values;
          w.write(base + ".svg", svg::band(band->times, band->lower, band->upper, band->center, truth_values, axes));
        }
      }
      bands[protocol] = std::move(jp);
    }
    jb["bands"] = std::move(bands);
    branches.push_back(std::move(jb));
  }
  summary["branches"] = std::move(branches);

  // Band width against centre error, one series per branch (first repeat).
  for (const auto& protocol : bundle.validation) {
    std::vector<svg::Series> series;
    for (const auto& b : bundle.branches) {
      const auto it = b.coverage.find(protocol);
      if (it == b.coverage.end() || it->second.empty() || !it->second[0]) continue;
      const auto& cov = *it->second[0];
      svg::Series s;
      s.label = b.label;
      s.x = cov.width;
      s.y = cov.center_error;
      series.push_back(std::move(s));
    }
    if (series.empty()) continue;
    svg::Axes axes;
    axes.title = "Band width and centre error on " + protocol;
    axes.x_label = "band width (nA)";
    axes.y_label = "|centre - truth| (nA)";
    w.write("coverage_" + file_stem(protocol) + ".svg", svg::scatter(series, axes));
  }

  // Crossval means across branches, one line per validation column.
  if (case1) {
    json means = json::array();
    for (const auto& b : bundle.branches) {
      means.push_back({{"lambda", *b.lambda}, {"crossval_mean", b.crossval_mean ? json(b.crossval_mean->mean()) : json(nullptr)}});
    }
    summary["lambda_summary"] = std::move(means);
  }
}

void write_toy(const ToyStudy& study, ReportWriter& w, json& summary) {
  std::string csv = "design,repeat,theta1,theta2\n";
  for (std::size_t d = 0; d < study.designs.size(); ++d) {
    for (std::size_t r = 0; r < study.estimates[d].size(); ++r) {
      const auto& e = study.estimates[d][r];
      csv += study.designs[d].name + "," + std::to_string(r) + "," + format_double(e.theta1) + "," +
             format_double(e.theta2) + "\n";
    }
  }
  w.write("toy_estimates.csv", csv);

  std::string noiseless = "design,theta1,theta2\n";
  for (std::size_t d = 0; d < study.designs.size(); ++d) {
    noiseless += study.designs[d].name + "," + format_double(study.noiseless[d].theta1) + "," +
                 format_double(study.noiseless[d].theta2) + "\n";
  }
  w.write("toy_noiseless.csv", noiseless);

  constexpr int kGrid = 201;
  constexpr double kTmax = 2.0;
  std::vector<double> grid(kGrid);
  for (int i = 0; i < kGrid; ++i) grid[static_cast<std::size_t>(i)] = kTmax * i / (kGrid - 1);
  auto curve = [&](auto&& f) {
    std::vector<double> y(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) y[i] = f(grid[i]);
    return y;
  };
  const svg::Series truth{"truth", grid, curve([](double t) { return toy_truth(t); }), true};

  for (std::size_t d = 0; d < study.designs.size(); ++d) {
    std::vector<svg::Series> series{truth};
    for (std::size_t r = 0; r < study.estimates[d].size(); ++r) {
      const auto& e = study.estimates[d][r];
      series.push_back({"repeat " + std::to_string(r), grid,
                        curve([&](double t) { return toy_model(t, e.theta1, e.theta2); }), false});
    }
    svg::Axes axes;
    axes.title = "Fits on " + study.designs[d].name;
    axes.x_label = "t";
    axes.y_label = "y";
    w.write("toy_overlay_" + study.designs[d].name + ".svg", svg::lines(series, axes));
  }

  std::vector<svg::Series> predictions{truth};
  for (std::size_t d = 0; d < study.designs.size(); ++d) {
    const auto& e = study.noiseless[d];
    predictions.push_back(
        {study.designs[d].name, grid, curve([&](double t) { return toy_model(t, e.theta1, e.theta2); }), false});
  }
  svg::Axes pa;
  pa.title = "Predictions from each design (noiseless fits)";
  pa.x_label = "t";
  pa.y_label = "y";
  w.write("toy_predictions.svg", svg::lines(predictions, pa));

  std::vector<svg::Series> clusters;
  for (std::size_t d = 0; d < study.designs.size(); ++d) {
    svg::Series s;
    s.label = study.designs[d].name;
    for (const auto& e : study.estimates[d]) {
      s.x.push_back(e.theta1);
      s.y.push_back(e.theta2);
    }
    clusters.push_back(std::move(s));
  }
  svg::Axes ca;
  ca.title = "Toy estimates by design";
  ca.x_label = "theta1";
  ca.y_label = "theta2";
  w.write("toy_scatter.svg", svg::scatter(clusters, ca));

  json designs = json::array();
  for (std::size_t d = 0; d < study.designs.size(); ++d) {
    json t2 = json::array();
    for (const auto& e : study.estimates[d]) t2.push_back(e.theta2);
    designs.push_back({{"name", study.designs[d].name},
                       {"noiseless", {study.noiseless[d].theta1, study.noiseless[d].theta2}},
                       {"theta2", std::move(t2)}});
  }
  summary["toy"] = {{"sigma", study.sigma},
                    {"n_repeats", study.n_repeats},
                    {"designs", std::move(designs)},
                    {"max_within_sd_theta2", study.max_within_sd_theta2()},
                    {"between_range_theta2", study.between_range_theta2()}};
}

}  // namespace

std::vector<std::string> write_report(const ExperimentBundle& bundle, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": " + ec.message());
  ReportWriter w(dir);

  if (!bundle.empty()) {
    json summary;
    summary["case"] = to_string(bundle.config.kind);
    summary["config_hash"] = bundle.config_hash;
    summary["sigma"] = bundle.sigma;
    if (bundle.config.kind != CaseKind::toy) {
      summary["sample_rate"] = bundle.sample_rate;
      summary["training"] = bundle.training;
      summary["validation"] = bundle.validation;
      summary["crossval_columns"] = bundle.crossval_columns;
      write_fit_branches(bundle, w, summary);
    }
    if (bundle.toy) write_toy(*bundle.toy, w, summary);
    json failures = json::array();
    for (const auto& f : bundle.failures) failures.push_back({{"task", f.task}, {"message", f.message}});
    summary["failures"] = std::move(failures);
    w.write("summary.json", summary.dump(2) + "\n");
  }

  json manifest;
  manifest["version"] = library_version();
  manifest["case"] = to_string(bundle.config.kind);
  manifest["config"] = config_json(bundle.config, true);
  manifest["config_hash"] = bundle.config_hash;
  manifest["master_seed"] = bundle.config.master_seed;
  manifest["noise_rng"] = kNoiseAlgorithm;
  manifest["n_tasks"] = bundle.n_tasks;
  manifest["n_failures"] = bundle.failures.size();
  manifest["exit_code"] = bundle_exit_code(bundle);
  json data_seeds = json::array();
  for (std::size_t r = 0; r < bundle.data.size(); ++r) {
    for (const auto& [protocol, trace] : bundle.data[r]) {
      data_seeds.push_back({{"repeat", r}, {"protocol", protocol}, {"seed", trace.meta.seed ? *trace.meta.seed : 0}});
    }
  }
  manifest["data_seeds"] = std::move(data_seeds);
  json fit_seeds = json::array();
  for (const auto& b : bundle.branches) {
    for (std::size_t r = 0; r < b.fits.size(); ++r) {
      for (std::size_t p = 0; p < b.fits[r].size(); ++p) {
        if (b.fits[r][p]) {
          fit_seeds.push_back({{"branch", b.label}, {"repeat", r}, {"protocol", b.fits[r][p]->protocol},
                               {"seed", b.fits[r][p]->seed}});
        }
      }
    }
  }
  manifest["fit_seeds"] = std::move(fit_seeds);
  manifest["files"] = w.files();
  w.write("manifest.json", manifest.dump(2) + "\n");

  std::vector<std::string> out;
  for (const auto& [name, hash] : w.files()) out.push_back(name);
  return out;
}

}  // namespace ionfit
