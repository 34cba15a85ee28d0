#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ionfit {

// Units used throughout: time ms, voltage mV, conductance uS, current nA.

enum class RateKind { constant, exponential };

/// Concrete rate law k(V) = prefactor * exp(sign * exponent_coeff * V).
/// Constant rates ignore the exponent.
struct RateExpr {
  RateKind kind = RateKind::constant;
  double prefactor = 0.0;
  double exponent_coeff = 0.0;
  int sign = 1;

  double at(double voltage) const noexcept;
};

/// A rate coefficient is either read from the kinetic parameter vector or fixed.
struct ParamSource {
  std::optional<std::size_t> index;
  double value = 0.0;

  static ParamSource parameter(std::size_t i) { return {i, 0.0}; }
  static ParamSource fixed(double v) { return {std::nullopt, v}; }

  double resolve(std::span<const double> kinetic) const noexcept {
    return index ? kinetic[*index] : value;
  }
};

struct Transition {
  std::size_t from = 0;
  std::size_t to = 0;
  RateKind kind = RateKind::exponential;
  ParamSource prefactor;
  ParamSource exponent;
  int sign = 1;

  RateExpr bind(std::span<const double> kinetic) const noexcept;
};

/// Kinetic parameters (theta_f) plus the maximal conductance g (theta_h).
struct ParameterSet {
  std::vector<double> kinetic;
  double conductance = 0.0;

  /// Kinetic parameters followed by g, the layout used by parameter files.
  std::vector<double> flat() const;
  static ParameterSet from_flat(std::span<const double> values);

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;
};

/// How a kinetic parameter enters the rate laws. Decides its optimiser transform.
enum class ParameterRole { prefactor, exponent };

/// A voltage-dependent Markov model dx/dt = A(V; theta) x.
class MarkovModel {
 public:
  /// Throws ParseError when the structure is inconsistent (bad indices,
  /// self-loops, parameters that are never used or used in two roles).
  MarkovModel(std::string name, std::vector<std::string> state_labels,
              std::vector<Transition> transitions, std::size_t conducting_state,
              std::size_t n_kinetic_params,
              std::vector<std::string> parameter_names = {});

  const std::string& name() const noexcept { return name_; }
  std::size_t n_states() const noexcept { return labels_.size(); }
  const std::vector<std::string>& state_labels() const noexcept { return labels_; }
  const std::vector<Transition>& transitions() const noexcept { return transitions_; }
  std::size_t conducting_state() const noexcept { return conducting_; }
  std::size_t n_kinetic_params() const noexcept { return n_kinetic_; }
  const std::vector<std::string>& parameter_names() const noexcept { return param_names_; }
  const std::vector<ParameterRole>& parameter_roles() const noexcept { return roles_; }

  /// Every generator built from transitions conserves total occupancy.
  bool conserves_total() const noexcept { return true; }

  /// ArityError on a length mismatch, DomainError on a non-positive entry.
  void validate(const ParameterSet& params) const;

  /// Rates with parameter values substituted, one per transition.
  std::vector<RateExpr> bind_rates(const ParameterSet& params) const;

 private:
  std::string name_;
  std::vector<std::string> labels_;
  std::vector<Transition> transitions_;
  std::size_t conducting_;
  std::size_t n_kinetic_;
  std::vector<std::string> param_names_;
  std::vector<ParameterRole> roles_;
};

/// A(V; theta): entry (i, j) is the rate from state j to state i; columns sum to zero.
Eigen::MatrixXd assemble_matrix(const MarkovModel& model, const ParameterSet& params,
                                double voltage);

/// Occupancy x with A(V) x = 0 and sum(x) = 1, from the linear system in which
/// one balance row is replaced by the conservation row.
Eigen::VectorXd steady_state(const MarkovModel& model, const ParameterSet& params,
                             double voltage);

/// I = g * x[conducting] * (V - E_rev).
double observe_current(const MarkovModel& model, const ParameterSet& params,
                       std::span<const double> occupancy, double voltage, double e_rev);

struct NernstInputs {
  double gas_constant = 8.314462618;  // J K^-1 mol^-1
  double faraday = 96485.33212;       // C mol^-1
  double temperature = 293.0;         // K
  double k_in = 120.0;                // mM
  double k_out = 5.0;                 // mM
};

/// Reversal potential (R T / F) ln(k_out / k_in), in mV.
double nernst_potential(const NernstInputs& inputs);

/// E_Kr for the default room-temperature concentrations (about -80.24 mV).
double default_reversal_potential();

struct BuiltinModel {
  MarkovModel model;
  ParameterSet defaults;
};

/// "beattie" (4 states, 8 kinetic parameters) or "wang" (5 states, 14).
BuiltinModel builtin_model(std::string_view name);
std::vector<std::string> builtin_model_names();

}  // namespace ionfit
