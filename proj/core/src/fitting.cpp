#include "ionfit/fitting.hpp"

#include "ionfit/errors.hpp"
#include "ionfit/rng.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace ionfit {

double rmse(std::span<const double> prediction, std::span<const double> data) {
  if (prediction.size() != data.size()) {
    throw AlignmentError("rmse: prediction has " + std::to_string(prediction.size()) + " points, data has " +
                         std::to_string(data.size()));
  }
  if (data.empty()) throw AlignmentError("rmse: empty traces");
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double d = prediction[i] - data[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(data.size()));
}

double rmse(const Trace& prediction, const Trace& data) {
  if (prediction.times != data.times) throw AlignmentError("rmse: traces are on different time grids");
  return rmse(std::span<const double>(prediction.values), std::span<const double>(data.values));
}

std::string ConstraintViolation::describe() const {
  switch (kind) {
    case Kind::non_positive:
      return "parameter " + std::to_string(index) + " = " + format_double(value) + " is not positive";
    case Kind::rate_below_min:
      return "rate of transition " + std::to_string(index) + " is " + format_double(value) + " at " +
             format_double(voltage) + " mV (below minimum)";
    case Kind::rate_above_max:
      return "rate of transition " + std::to_string(index) + " is " + format_double(value) + " at " +
             format_double(voltage) + " mV (above maximum)";
  }
  return {};
}

ConstraintVerdict check_constraints(const MarkovModel& model, const ParameterSet& params,
                                    const ConstraintSpec& spec) {
  ConstraintVerdict verdict;
  if (params.kinetic.size() != model.n_kinetic_params()) {
    throw ArityError("expected " + std::to_string(model.n_kinetic_params()) + " kinetic parameters, got " +
                     std::to_string(params.kinetic.size()));
  }
  const auto flat = params.flat();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (!(flat[i] > 0.0)) {
      verdict.violations.push_back({ConstraintViolation::Kind::non_positive, i, 0.0, flat[i]});
    }
  }
  if (!verdict.ok()) return verdict;

  const auto& transitions = model.transitions();
  for (std::size_t t = 0; t < transitions.size(); ++t) {
    const RateExpr rate = transitions[t].bind(params.kinetic);
    for (double v : {spec.v_min, spec.v_max}) {
      const double k = rate.at(v);
      if (!(k >= spec.rate_min)) {
        verdict.violations.push_back({ConstraintViolation::Kind::rate_below_min, t, v, k});
      } else if (!(k <= spec.rate_max)) {
        verdict.violations.push_back({ConstraintViolation::Kind::rate_above_max, t, v, k});
      }
    }
  }
  return verdict;
}

bool is_log_scaled(const MarkovModel& model, std::size_t flat_index) {
  if (flat_index == model.n_kinetic_params()) return true;
  return model.parameter_roles().at(flat_index) == ParameterRole::prefactor;
}

std::vector<double> transform(const MarkovModel& model, const ParameterSet& params) {
  if (params.kinetic.size() != model.n_kinetic_params()) throw ArityError("transform: wrong parameter count");
  auto flat = params.flat();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (!is_log_scaled(model, i)) continue;
    if (!(flat[i] > 0.0)) {
      throw DomainError("transform: parameter " + std::to_string(i) + " must be positive, got " +
                        format_double(flat[i]));
    }
    flat[i] = std::log(flat[i]);
  }
  return flat;
}

ParameterSet inverse_transform(const MarkovModel& model, std::span<const double> coords) {
  if (coords.size() != model.n_kinetic_params() + 1) throw ArityError("inverse_transform: wrong coordinate count");
  std::vector<double> flat(coords.begin(), coords.end());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (is_log_scaled(model, i)) flat[i] = std::exp(flat[i]);
  }
  return ParameterSet::from_flat(flat);
}

ParameterSet sample_initial_guess(const MarkovModel& model, std::mt19937_64& rng,
                                  std::optional<double> conductance, const ConstraintSpec& spec,
                                  int max_attempts) {
  std::uniform_real_distribution<double> log10_draw(-7.0, -1.0);
  ParameterSet guess;
  guess.kinetic.resize(model.n_kinetic_params());
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    for (double& p : guess.kinetic) p = std::pow(10.0, log10_draw(rng));
    guess.conductance = conductance ? *conductance : std::pow(10.0, log10_draw(rng));
    if (check_constraints(model, guess, spec)) return guess;
  }
  throw SamplingError("no initial guess satisfied the rate constraints after " + std::to_string(max_attempts) +
                      " attempts");
}

Objective::Objective(MarkovModel model, Protocol protocol, Trace data, std::vector<bool> free_mask,
                     ParameterSet fixed_values, SimulationSettings settings, ConstraintSpec constraints)
    : simulator_(std::move(model), std::move(protocol), settings),
      data_(std::move(data)),
      free_mask_(std::move(free_mask)),
      fixed_(std::move(fixed_values)),
      constraints_(constraints) {
  const auto& m = simulator_.model();
  if (free_mask_.size() != m.n_kinetic_params() + 1) throw ArityError("free mask must cover kinetic parameters and g");
  if (fixed_.kinetic.size() != m.n_kinetic_params()) throw ArityError("fixed values have the wrong parameter count");
  if (data_.times != simulator_.times() || data_.values.size() != data_.times.size()) {
    throw AlignmentError("data for protocol '" + simulator_.protocol().name() +
                         "' are not on the protocol's observation grid");
  }
  for (std::size_t i = 0; i < free_mask_.size(); ++i) {
    if (free_mask_[i]) free_index_.push_back(i);
  }
  if (free_index_.empty()) throw DomainError("objective has no free parameters");
}

Objective Objective::all_free(MarkovModel model, Protocol protocol, Trace data, const ParameterSet& reference,
                              SimulationSettings settings) {
  std::vector<bool> mask(model.n_kinetic_params() + 1, true);
  return Objective(std::move(model), std::move(protocol), std::move(data), std::move(mask), reference, settings);
}

Objective Objective::fixed_conductance(MarkovModel model, Protocol protocol, Trace data, double conductance,
                                       SimulationSettings settings) {
  std::vector<bool> mask(model.n_kinetic_params() + 1, true);
  mask.back() = false;
  ParameterSet fixed;
  fixed.kinetic.assign(model.n_kinetic_params(), 1.0);
  fixed.conductance = conductance;
  return Objective(std::move(model), std::move(protocol), std::move(data), std::move(mask), fixed, settings);
}

Eigen::VectorXd Objective::to_coords(const ParameterSet& params) const {
  const auto all = transform(model(), params);
  Eigen::VectorXd c(static_cast<Eigen::Index>(free_index_.size()));
  for (std::size_t k = 0; k < free_index_.size(); ++k) c(static_cast<Eigen::Index>(k)) = all[free_index_[k]];
  return c;
}

ParameterSet Objective::from_coords(const Eigen::VectorXd& coords) const {
  auto flat = fixed_.flat();
  for (std::size_t k = 0; k < free_index_.size(); ++k) {
    const std::size_t i = free_index_[k];
    const double c = coords(static_cast<Eigen::Index>(k));
    flat[i] = is_log_scaled(model(), i) ? std::exp(c) : c;
  }
  return ParameterSet::from_flat(flat);
}

ParameterSet Objective::with_fixed(const ParameterSet& params) const {
  auto flat = params.flat();
  const auto fixed = fixed_.flat();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (!free_mask_[i]) flat[i] = fixed[i];
  }
  return ParameterSet::from_flat(flat);
}

double Objective::rmse(const ParameterSet& params) const {
  std::vector<double> out(data_.values.size());
  simulator_.simulate_current(params, out);
  return ionfit::rmse(std::span<const double>(out), std::span<const double>(data_.values));
}

double Objective::penalized(const Eigen::VectorXd& coords) const {
  if (!coords.allFinite()) return std::numeric_limits<double>::infinity();
  const ParameterSet params = from_coords(coords);
  if (!check_constraints(model(), params, constraints_)) return std::numeric_limits<double>::infinity();
  try {
    const double r = rmse(params);
    return std::isfinite(r) ? r : std::numeric_limits<double>::infinity();
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

bool Objective::residuals(const Eigen::VectorXd& coords, Eigen::VectorXd& out) const {
  if (!coords.allFinite()) return false;
  const ParameterSet params = from_coords(coords);
  if (!check_constraints(model(), params, constraints_)) return false;
  out.resize(static_cast<Eigen::Index>(data_.values.size()));
  try {
    simulator_.simulate_current(params, std::span<double>(out.data(), data_.values.size()));
  } catch (const Error&) {
    return false;
  }
  out -= Eigen::Map<const Eigen::VectorXd>(data_.values.data(), out.size());
  return out.allFinite();
}

std::string Objective::data_hash() const {
  std::uint64_t h = fnv1a(data_.meta.protocol + "|");
  for (std::size_t i = 0; i < data_.values.size(); ++i) {
    h = fnv1a(format_double(data_.times[i]) + "," + format_double(data_.values[i]) + ";", h);
  }
  return hex64(h);
}

namespace {

Eigen::VectorXd initial_scales(const Objective& objective, const FitConfig& config, double factor) {
  Eigen::VectorXd s(static_cast<Eigen::Index>(objective.n_free()));
  for (std::size_t k = 0; k < objective.n_free(); ++k) {
    const bool log_scaled = is_log_scaled(objective.model(), objective.free_indices()[k]);
    s(static_cast<Eigen::Index>(k)) = factor * (log_scaled ? config.step_log : config.step_linear);
  }
  return s;
}

}  // namespace

FitResult fit(const Objective& objective, const FitConfig& config) {
  if (config.n_starts < 1 && config.initial_guesses.empty()) throw DomainError("fit: n_starts must be at least 1");
  if (config.max_evals < 1) throw DomainError("fit: max_evals must be at least 1");

  const int n_total = std::max<int>(config.n_starts, static_cast<int>(config.initial_guesses.size()));
  const double fixed_g = objective.fixed_values().conductance;

  CmaesOptions opts;
  opts.population = config.population;
  opts.max_evals = config.max_evals;
  opts.stop_tolerance = config.stop_tolerance;
  opts.stall_window = config.stall_window;
  opts.tol_x = config.tol_x;
  opts.f_target = config.f_target;

  FitResult result;
  result.config = config;
  result.seed = config.seed;
  result.n_starts = n_total;
  result.model = objective.model().name();
  result.protocol = objective.protocol().name();
  result.data_hash = objective.data_hash();
  result.tolerances = objective.simulator().settings().tolerances;
  const double nd = static_cast<double>(objective.n_free());
  result.population = config.population > 0 ? config.population : 4 + static_cast<int>(std::floor(3.0 * std::log(nd)));
  result.stall_window =
      config.stall_window > 0 ? config.stall_window : 10 + static_cast<int>(std::ceil(30.0 * nd / result.population));

  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_total; ++k) {
    StartDiagnostics diag;
    diag.index = k;
    diag.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(k)});
    std::mt19937_64 rng(diag.seed);
    try {
      const bool warm = static_cast<std::size_t>(k) < config.initial_guesses.size();
      diag.warm = warm;
      if (warm) {
        diag.initial = objective.with_fixed(config.initial_guesses[static_cast<std::size_t>(k)]);
      } else {
        // g starts at the objective's reference value whether or not it is free.
        diag.initial = sample_initial_guess(objective.model(), rng, fixed_g, objective.constraints());
      }
      const Eigen::VectorXd x0 = objective.to_coords(diag.initial);
      const Eigen::VectorXd scales = initial_scales(objective, config, warm ? config.warm_step_scale : 1.0);
      const CmaesResult cr = cmaes_minimize([&](const Eigen::VectorXd& x) { return objective.penalized(x); }, x0,
                                            scales, opts, rng);
      diag.evals = cr.evals;
      diag.generations = cr.generations;
      diag.converged = cr.converged;
      diag.stop_reason = cr.stop_reason;
      diag.search_rmse = cr.f;
      Eigen::VectorXd x_best = cr.x;
      double f_best = cr.f;
      if (config.polish && std::isfinite(cr.f)) {
        LevenbergMarquardtOptions lm;
        lm.max_iterations = config.polish_iterations;
        const auto pr = levenberg_marquardt(
            [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) { return objective.residuals(x, r); }, cr.x, lm);
        diag.polish_evals = pr.evaluations;
        diag.polish_stop = pr.stop_reason;
        const double f_polished = objective.penalized(pr.x);
        if (f_polished < f_best) {
          f_best = f_polished;
          x_best = pr.x;
        }
        diag.evals += pr.evaluations + 1;
      }
      diag.params = objective.from_coords(x_best);
      diag.rmse = f_best;
      if (!std::isfinite(f_best)) diag.error = "no feasible point with a successful simulation";
    } catch (const Error& e) {
      diag.error = e.what();
      diag.rmse = std::numeric_limits<double>::infinity();
    }
    result.n_evals += diag.evals;
    if (diag.error.empty() && diag.rmse < best) {
      best = diag.rmse;
      result.best_start_index = k;
    }
    result.starts.push_back(std::move(diag));
  }

  if (result.best_start_index < 0) {
    std::string msg = "all " + std::to_string(n_total) + " starts failed:";
    for (const auto& s : result.starts) msg += " [" + std::to_string(s.index) + "] " + s.error + ";";
    throw FitError(msg);
  }
  const auto& winner = result.starts[static_cast<std::size_t>(result.best_start_index)];
  result.params = winner.params;
  result.converged = winner.converged;
  const Trace prediction = objective.simulator().simulate(result.params);
  result.rmse = rmse(prediction, objective.data());
  return result;
}

std::vector<double> lambda_sweep_order(std::span<const double> lambdas) {
  std::vector<double> sorted(lambdas.begin(), lambdas.end());
  for (double l : sorted) {
    if (!(l > 0.0) || !std::isfinite(l)) throw DomainError("lambda values must be positive");
  }
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw DomainError("lambda values must be distinct");
  }
  if (sorted.empty()) return sorted;
  // Both branches grow outward from the value closest to 1 on a log scale.
  const auto root = std::min_element(sorted.begin(), sorted.end(), [](double a, double b) {
    return std::abs(std::log(a)) < std::abs(std::log(b));
  });
  std::vector<double> order(root, sorted.end());
  order.insert(order.end(), std::make_reverse_iterator(root), sorted.rend());
  return order;
}

std::vector<LambdaFit> fit_lambda_sweep(const MarkovModel& model, const Protocol& protocol, const Trace& data,
                                        double g_star, std::span<const double> lambdas,
                                        const std::vector<double>& base_kinetics, const FitConfig& config,
                                        const SimulationSettings& settings) {
  if (!(g_star > 0.0)) throw DomainError("g_star must be positive");
  if (base_kinetics.size() != model.n_kinetic_params()) throw ArityError("base kinetics have the wrong length");
  const auto order = lambda_sweep_order(lambdas);
  if (order.empty()) throw DomainError("no lambda values given");

  const double root = order.front();
  std::vector<double> up;
  std::vector<double> down;
  for (double l : order) {
    if (l > root) up.push_back(l);
    if (l < root) down.push_back(l);
  }

  std::vector<LambdaFit> out;
  out.reserve(order.size());
  auto run_one = [&](double lambda, const std::vector<double>* previous) {
    Objective objective = Objective::fixed_conductance(model, protocol, data, lambda * g_star, settings);
    FitConfig cfg = config;
    cfg.seed = derive_seed(config.seed, {seed_tag("lambda"), std::bit_cast<std::uint64_t>(lambda)});
    LambdaFit lf;
    lf.lambda = lambda;
    lf.warm_source = "none";
    ParameterSet base{base_kinetics, lambda * g_star};
    double r_base = std::numeric_limits<double>::infinity();
    try { r_base = objective.rmse(base); } catch (const Error&) {}
    if (!check_constraints(model, base)) r_base = std::numeric_limits<double>::infinity();
    double r_prev = std::numeric_limits<double>::infinity();
    ParameterSet prev;
    if (previous != nullptr) {
      prev = ParameterSet{*previous, lambda * g_star};
      try { r_prev = objective.rmse(prev); } catch (const Error&) {}
    }
    // The first fit of the sweep has no previous estimate, so base_kinetics seeds it.
    if (std::isfinite(r_base) && !(r_prev <= r_base)) {
      lf.warm_source = "base";
      cfg.initial_guesses.insert(cfg.initial_guesses.begin(), base);
    } else if (previous != nullptr) {
      lf.warm_source = "previous";
      cfg.initial_guesses.insert(cfg.initial_guesses.begin(), prev);
    }
    lf.result = fit(objective, cfg);
    return lf;
  };

  out.push_back(run_one(root, nullptr));
  for (const auto* branch : {&up, &down}) {
    std::vector<double> previous = out.front().result.params.kinetic;
    for (double l : *branch) {
      out.push_back(run_one(l, &previous));
      previous = out.back().result.params.kinetic;
    }
  }
  return out;
}

}  // namespace ionfit
