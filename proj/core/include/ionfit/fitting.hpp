#pragma once

#include "ionfit/cmaes.hpp"
#include "ionfit/least_squares.hpp"
#include "ionfit/markov_model.hpp"
#include "ionfit/protocol.hpp"
#include "ionfit/simulator.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ionfit {

/// sqrt(mean((prediction - data)^2)). AlignmentError unless the lengths match.
double rmse(std::span<const double> prediction, std::span<const double> data);
/// As above, and the time grids must be identical.
double rmse(const Trace& prediction, const Trace& data);

struct ConstraintSpec {
  double rate_min = 1e-9;  // ms^-1
  double rate_max = 1e7;   // ms^-1
  double v_min = kMinProtocolVoltage;
  double v_max = kMaxProtocolVoltage;
};

struct ConstraintViolation {
  enum class Kind { non_positive, rate_below_min, rate_above_max };
  Kind kind;
  std::size_t index;  // parameter index (flat layout) or transition index
  double voltage;     // for rate violations
  double value;
  std::string describe() const;
};

struct ConstraintVerdict {
  std::vector<ConstraintViolation> violations;
  bool ok() const noexcept { return violations.empty(); }
  explicit operator bool() const noexcept { return ok(); }
};

/// Rates are monotone in V, so they are checked at both ends of the voltage range only.
ConstraintVerdict check_constraints(const MarkovModel& model, const ParameterSet& params,
                                    const ConstraintSpec& spec = {});

/// Optimiser coordinates in flat order: log for rate prefactors and for g,
/// identity for exponent coefficients. DomainError on a non-positive log argument.
std::vector<double> transform(const MarkovModel& model, const ParameterSet& params);
ParameterSet inverse_transform(const MarkovModel& model, std::span<const double> coords);
/// Whether flat parameter i is optimised on a log scale.
bool is_log_scaled(const MarkovModel& model, std::size_t flat_index);

/// Kinetic parameters from log10 U(-7, -1); g is the given value, or drawn
/// the same way when none is given. Resamples until check_constraints passes;
/// SamplingError after `max_attempts` draws.
ParameterSet sample_initial_guess(const MarkovModel& model, std::mt19937_64& rng,
                                  std::optional<double> conductance = std::nullopt,
                                  const ConstraintSpec& spec = {}, int max_attempts = 10'000);

/// Least-squares problem: model output under `protocol` against `data`, with
/// the parameters outside `free_mask` held at `fixed_values`.
class Objective {
 public:
  /// free_mask has one entry per flat parameter (kinetic..., g). AlignmentError
  /// unless the data lie on the protocol's observation grid.
  Objective(MarkovModel model, Protocol protocol, Trace data, std::vector<bool> free_mask,
            ParameterSet fixed_values, SimulationSettings settings = {}, ConstraintSpec constraints = {});

  /// Every parameter free; `reference.conductance` is the initial guess for g.
  static Objective all_free(MarkovModel model, Protocol protocol, Trace data,
                            const ParameterSet& reference, SimulationSettings settings = {});
  /// Conductance fixed to `conductance`, kinetics free.
  static Objective fixed_conductance(MarkovModel model, Protocol protocol, Trace data, double conductance,
                                     SimulationSettings settings = {});

  const MarkovModel& model() const noexcept { return simulator_.model(); }
  const Protocol& protocol() const noexcept { return simulator_.protocol(); }
  const Simulator& simulator() const noexcept { return simulator_; }
  const Trace& data() const noexcept { return data_; }
  const std::vector<bool>& free_mask() const noexcept { return free_mask_; }
  const ParameterSet& fixed_values() const noexcept { return fixed_; }
  const ConstraintSpec& constraints() const noexcept { return constraints_; }
  std::size_t n_free() const noexcept { return free_index_.size(); }
  const std::vector<std::size_t>& free_indices() const noexcept { return free_index_; }

  /// Transformed coordinates of the free parameters.
  Eigen::VectorXd to_coords(const ParameterSet& params) const;
  /// Free parameters from coordinates, fixed ones from fixed_values().
  ParameterSet from_coords(const Eigen::VectorXd& coords) const;
  /// The fixed parameters of this objective applied to `params`.
  ParameterSet with_fixed(const ParameterSet& params) const;

  /// RMSE of the simulated current against the data. Throws on integrator failure.
  double rmse(const ParameterSet& params) const;
  /// RMSE, or +inf when the parameters violate the constraints or the
  /// integrator fails.
  double penalized(const Eigen::VectorXd& coords) const;
  /// Residuals simulated - data at `coords`; false where penalized() is +inf.
  bool residuals(const Eigen::VectorXd& coords, Eigen::VectorXd& out) const;

  std::string data_hash() const;

 private:
  Simulator simulator_;
  Trace data_;
  std::vector<bool> free_mask_;
  ParameterSet fixed_;
  ConstraintSpec constraints_;
  std::vector<std::size_t> free_index_;
};

struct FitConfig {
  int n_starts = 8;
  long max_evals = 20'000;        // per start
  double stop_tolerance = 1e-7;   // relative best-value improvement over the stall window
  int stall_window = 0;           // generations, 0 = automatic
  int population = 0;             // 0 = automatic
  double tol_x = 1e-11;
  double f_target = 0.0;
  double step_log = 1.0;          // initial sd of log-scaled coordinates
  double step_linear = 0.02;      // initial sd of exponent coefficients (mV^-1)
  double warm_step_scale = 0.1;   // multiplies both steps for supplied initial guesses
  /// Levenberg-Marquardt refinement of each start's CMA-ES result.
  bool polish = true;
  int polish_iterations = 100;
  std::uint64_t seed = 1;
  /// Run first, in order; random starts fill up to n_starts.
  std::vector<ParameterSet> initial_guesses;
};

struct StartDiagnostics {
  int index = 0;
  bool warm = false;
  std::uint64_t seed = 0;
  ParameterSet initial;
  ParameterSet params;
  double rmse = 0.0;
  long evals = 0;        // CMA-ES and polish together
  int generations = 0;
  bool converged = false;
  std::string stop_reason;
  double search_rmse = 0.0;  // before polishing
  long polish_evals = 0;
  std::string polish_stop;
  std::string error;  // empty unless the start failed
};

struct FitResult {
  ParameterSet params;
  double rmse = 0.0;
  long n_evals = 0;
  int n_starts = 0;
  int best_start_index = -1;
  bool converged = false;
  std::uint64_t seed = 0;
  std::vector<StartDiagnostics> starts;
  FitConfig config;
  std::string model;
  std::string protocol;
  std::string data_hash;
  SolverTolerances tolerances;
  int population = 0;  // as used
  int stall_window = 0;
};

/// Multistart CMA-ES in transformed coordinates, each start optionally
/// refined by Levenberg-Marquardt. Start k uses the seed
/// derive_seed(config.seed, {k}). The returned rmse is recomputed through
/// simulate() and rmse(Trace, Trace). FitError when every start fails.
FitResult fit(const Objective& objective, const FitConfig& config);

struct LambdaFit {
  double lambda = 1.0;
  std::string warm_source;  // "none", "previous" or "base"
  FitResult result;
};

/// Restricted fits with g fixed to lambda * g_star, swept outward from the
/// lambda closest to 1 (1 -> 2 -> 4, then 1 -> 1/2 -> 1/4). Each fit is
/// warm-started from the previous estimate in its branch, or from
/// base_kinetics when that scores a lower rmse at the new lambda; the first fit
/// has no previous estimate and starts from base_kinetics. Random starts still
/// run. Returns one entry per lambda in sweep order.
std::vector<LambdaFit> fit_lambda_sweep(const MarkovModel& model, const Protocol& protocol, const Trace& data,
                                        double g_star, std::span<const double> lambdas,
                                        const std::vector<double>& base_kinetics, const FitConfig& config,
                                        const SimulationSettings& settings = {});

/// The order in which fit_lambda_sweep visits `lambdas`.
std::vector<double> lambda_sweep_order(std::span<const double> lambdas);

}  // namespace ionfit
