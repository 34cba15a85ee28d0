#include "ionfit/errors.hpp"
#include "ionfit/io.hpp"
#include "json_util.hpp"
#include "text_util.hpp"

#include <cmath>
#include <set>

namespace ionfit {

using nlohmann::json;

json parse_json_text(std::string_view text, std::string_view what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  }
}

json fit_config_json(const FitConfig& c) {
  json j;
  j["n_starts"] = c.n_starts;
  j["max_evals"] = c.max_evals;
  j["stop_tolerance"] = c.stop_tolerance;
  j["stall_window"] = c.stall_window;
  j["population"] = c.population;
  j["tol_x"] = c.tol_x;
  j["f_target"] = c.f_target;
  j["step_log"] = c.step_log;
  j["step_linear"] = c.step_linear;
  j["warm_step_scale"] = c.warm_step_scale;
  j["polish"] = c.polish;
  j["polish_iterations"] = c.polish_iterations;
  j["seed"] = c.seed;
  json guesses = json::array();
  for (const auto& g : c.initial_guesses) guesses.push_back(g.flat());
  j["initial_guesses"] = std::move(guesses);
  return j;
}

void read_fit_config(const json& j, FitConfig& c) {
  if (!j.is_object()) throw ParseError("fit config: expected an object");
  static const std::set<std::string> known = {"n_starts",    "max_evals", "stop_tolerance",  "stall_window",
                                              "population",  "tol_x",     "f_target",        "step_log",
                                              "step_linear", "warm_step_scale", "polish", "polish_iterations",
                                              "seed",        "initial_guesses"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ParseError("fit config: unknown key '" + key + "'");
  }
  try {
    if (j.contains("n_starts")) c.n_starts = j.at("n_starts").get<int>();
    if (j.contains("max_evals")) c.max_evals = j.at("max_evals").get<long>();
    if (j.contains("stop_tolerance")) c.stop_tolerance = j.at("stop_tolerance").get<double>();
    if (j.contains("stall_window")) c.stall_window = j.at("stall_window").get<int>();
    if (j.contains("population")) c.population = j.at("population").get<int>();
    if (j.contains("tol_x")) c.tol_x = j.at("tol_x").get<double>();
    if (j.contains("f_target")) c.f_target = j.at("f_target").get<double>();
    if (j.contains("step_log")) c.step_log = j.at("step_log").get<double>();
    if (j.contains("step_linear")) c.step_linear = j.at("step_linear").get<double>();
    if (j.contains("warm_step_scale")) c.warm_step_scale = j.at("warm_step_scale").get<double>();
    if (j.contains("polish")) c.polish = j.at("polish").get<bool>();
    if (j.contains("polish_iterations")) c.polish_iterations = j.at("polish_iterations").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("initial_guesses")) {
      c.initial_guesses.clear();
      for (const auto& g : j.at("initial_guesses")) {
        c.initial_guesses.push_back(ParameterSet::from_flat(g.get<std::vector<double>>()));
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("fit config: ") + e.what());
  }
  if (c.n_starts < 1 && c.initial_guesses.empty()) throw ParseError("fit config: n_starts must be at least 1");
  if (c.max_evals < 1) throw ParseError("fit config: max_evals must be at least 1");
  if (!(c.step_log > 0.0) || !(c.step_linear > 0.0) || !(c.warm_step_scale > 0.0)) {
    throw ParseError("fit config: step sizes must be positive");
  }
}

json fit_result_json(const FitResult& r) {
  json j;
  j["model"] = r.model;
  j["protocol"] = r.protocol;
  j["data_hash"] = r.data_hash;
  j["params"] = r.params.flat();
  j["rmse"] = r.rmse;
  j["n_evals"] = r.n_evals;
  j["n_starts"] = r.n_starts;
  j["best_start_index"] = r.best_start_index;
  j["converged"] = r.converged;
  j["seed"] = r.seed;
  j["solver"] = {{"abs_tol", r.tolerances.abs}, {"rel_tol", r.tolerances.rel}};
  j["optimizer"] = {{"method", "cmaes"},
                    {"population", r.population},
                    {"stall_window", r.stall_window},
                    {"polish", r.config.polish ? "levenberg-marquardt" : "none"},
                    {"death_penalty", true}};
  json cfg = fit_config_json(r.config);
  cfg.erase("initial_guesses");
  j["config"] = std::move(cfg);
  json starts = json::array();
  for (const auto& s : r.starts) {
    json e;
    e["index"] = s.index;
    e["warm"] = s.warm;
    e["seed"] = s.seed;
    e["initial"] = s.initial.kinetic.empty() ? json::array() : json(s.initial.flat());
    e["params"] = s.params.kinetic.empty() ? json::array() : json(s.params.flat());
    e["rmse"] = std::isfinite(s.rmse) ? json(s.rmse) : json(nullptr);
    e["search_rmse"] = std::isfinite(s.search_rmse) ? json(s.search_rmse) : json(nullptr);
    e["evals"] = s.evals;
    e["polish_evals"] = s.polish_evals;
    e["generations"] = s.generations;
    e["converged"] = s.converged;
    e["stop_reason"] = s.stop_reason;
    e["polish_stop"] = s.polish_stop;
    if (!s.error.empty()) e["error"] = s.error;
    starts.push_back(std::move(e));
  }
  j["starts"] = std::move(starts);
  return j;
}

std::string fit_config_to_json(const FitConfig& config) { return fit_config_json(config).dump(2) + "\n"; }

FitConfig fit_config_from_json(std::string_view text) {
  FitConfig c;
  read_fit_config(parse_json_text(text, "fit config"), c);
  return c;
}

std::string fit_result_to_json(const FitResult& result) { return fit_result_json(result).dump(2) + "\n"; }

}  // namespace ionfit
