#include "ionfit/markov_model.hpp"

#include "ionfit/errors.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <string>

namespace ionfit {

double RateExpr::at(double voltage) const noexcept {
  if (kind == RateKind::constant) return prefactor;
  return prefactor * std::exp(sign * exponent_coeff * voltage);
}

RateExpr Transition::bind(std::span<const double> kinetic) const noexcept {
  RateExpr r;
  r.kind = kind;
  r.prefactor = prefactor.resolve(kinetic);
  r.exponent_coeff = kind == RateKind::exponential ? exponent.resolve(kinetic) : 0.0;
  r.sign = sign;
  return r;
}

std::vector<double> ParameterSet::flat() const {
  std::vector<double> out(kinetic);
  out.push_back(conductance);
  return out;
}

ParameterSet ParameterSet::from_flat(std::span<const double> values) {
  if (values.empty()) throw ArityError("parameter vector is empty; expected kinetic values followed by g");
  ParameterSet p;
  p.kinetic.assign(values.begin(), values.end() - 1);
  p.conductance = values.back();
  return p;
}

MarkovModel::MarkovModel(std::string name, std::vector<std::string> state_labels,
                         std::vector<Transition> transitions, std::size_t conducting_state,
                         std::size_t n_kinetic_params, std::vector<std::string> parameter_names)
    : name_(std::move(name)),
      labels_(std::move(state_labels)),
      transitions_(std::move(transitions)),
      conducting_(conducting_state),
      n_kinetic_(n_kinetic_params),
      param_names_(std::move(parameter_names)) {
  const std::string where = "model '" + name_ + "': ";
  if (labels_.size() < 2) throw ParseError(where + "needs at least two states");
  if (conducting_ >= labels_.size()) throw ParseError(where + "conducting state index out of range");
  if (param_names_.empty()) {
    for (std::size_t i = 0; i < n_kinetic_; ++i) param_names_.push_back("k" + std::to_string(i + 1));
  }
  if (param_names_.size() != n_kinetic_) throw ParseError(where + "parameter_names length differs from n_kinetic_params");

  std::vector<std::optional<ParameterRole>> seen(n_kinetic_);
  auto claim = [&](const ParamSource& src, ParameterRole role) {
    if (!src.index) return;
    if (*src.index >= n_kinetic_) throw ParseError(where + "parameter index out of range");
    auto& slot = seen[*src.index];
    if (slot && *slot != role) {
      throw ParseError(where + "parameter " + param_names_[*src.index] +
                       " is used both as a prefactor and as an exponent coefficient");
    }
    slot = role;
  };

  for (const auto& t : transitions_) {
    if (t.from >= labels_.size() || t.to >= labels_.size()) throw ParseError(where + "transition endpoint out of range");
    if (t.from == t.to) throw ParseError(where + "self transition on state " + labels_[t.from]);
    if (t.sign != 1 && t.sign != -1) throw ParseError(where + "transition sign must be +1 or -1");
    if (!t.prefactor.index && !(t.prefactor.value > 0.0)) throw ParseError(where + "fixed prefactor must be positive");
    claim(t.prefactor, ParameterRole::prefactor);
    if (t.kind == RateKind::exponential) claim(t.exponent, ParameterRole::exponent);
  }
  roles_.reserve(n_kinetic_);
  for (std::size_t i = 0; i < n_kinetic_; ++i) {
    if (!seen[i]) throw ParseError(where + "parameter " + param_names_[i] + " is not used by any transition");
    roles_.push_back(*seen[i]);
  }
}

void MarkovModel::validate(const ParameterSet& params) const {
  if (params.kinetic.size() != n_kinetic_) {
    throw ArityError("model '" + name_ + "' expects " + std::to_string(n_kinetic_) +
                     " kinetic parameters, got " + std::to_string(params.kinetic.size()));
  }
  for (std::size_t i = 0; i < n_kinetic_; ++i) {
    if (!(params.kinetic[i] > 0.0)) throw DomainError("parameter " + param_names_[i] + " must be positive");
  }
  if (!(params.conductance > 0.0)) throw DomainError("conductance must be positive");
}

std::vector<RateExpr> MarkovModel::bind_rates(const ParameterSet& params) const {
  if (params.kinetic.size() != n_kinetic_) {
    throw ArityError("model '" + name_ + "' expects " + std::to_string(n_kinetic_) +
                     " kinetic parameters, got " + std::to_string(params.kinetic.size()));
  }
  std::vector<RateExpr> rates;
  rates.reserve(transitions_.size());
  for (const auto& t : transitions_) rates.push_back(t.bind(params.kinetic));
  return rates;
}

Eigen::MatrixXd assemble_matrix(const MarkovModel& model, const ParameterSet& params,
                                double voltage) {
  const auto rates = model.bind_rates(params);
  const auto n = static_cast<Eigen::Index>(model.n_states());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t k = 0; k < rates.size(); ++k) {
    const auto& t = model.transitions()[k];
    const double r = rates[k].at(voltage);
    const auto i = static_cast<Eigen::Index>(t.to);
    const auto j = static_cast<Eigen::Index>(t.from);
    a(i, j) += r;
    a(j, j) -= r;
  }
  return a;
}

Eigen::VectorXd steady_state(const MarkovModel& model, const ParameterSet& params,
                             double voltage) {
  const Eigen::MatrixXd a = assemble_matrix(model, params, voltage);
  const Eigen::Index n = a.rows();

  Eigen::MatrixXd system = a;
  system.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  if (lu.rank() < n) {
    throw DegeneracyError("model '" + model.name() + "': steady state is not unique at V = " +
                          std::to_string(voltage) + " mV");
  }
  Eigen::VectorXd x = lu.solve(rhs);

  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a * x).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw NumericalError("model '" + model.name() + "': steady-state residual too large");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (x(i) < -1e-12) {
      throw NumericalError("model '" + model.name() + "': negative steady-state occupancy in state " +
                           model.state_labels()[static_cast<std::size_t>(i)]);
    }
    x(i) = std::clamp(x(i), 0.0, 1.0);
  }
  return x;
}

double observe_current(const MarkovModel& model, const ParameterSet& params,
                       std::span<const double> occupancy, double voltage, double e_rev) {
  return params.conductance * occupancy[model.conducting_state()] * (voltage - e_rev);
}

double nernst_potential(const NernstInputs& in) {
  if (!(in.k_in > 0.0) || !(in.k_out > 0.0)) throw DomainError("ion concentrations must be positive");
  if (!(in.temperature > 0.0) || !(in.gas_constant > 0.0) || !(in.faraday > 0.0)) {
    throw DomainError("temperature and physical constants must be positive");
  }
  return 1e3 * in.gas_constant * in.temperature / in.faraday * std::log(in.k_out / in.k_in);
}

double default_reversal_potential() {
  static const double e_kr = nernst_potential(NernstInputs{});
  return e_kr;
}

namespace {

Transition exp_rate(std::size_t from, std::size_t to, std::size_t a, std::size_t b, int sign) {
  return {from, to, RateKind::exponential, ParamSource::parameter(a), ParamSource::parameter(b), sign};
}

Transition const_rate(std::size_t from, std::size_t to, std::size_t a) {
  return {from, to, RateKind::constant, ParamSource::parameter(a), ParamSource::fixed(0.0), 1};
}

BuiltinModel beattie() {
  enum : std::size_t { C, I, IC, O };
  // k1 = p1 exp(p2 V), k2 = p3 exp(-p4 V), k3 = p5 exp(p6 V), k4 = p7 exp(-p8 V)
  std::vector<Transition> tr{
      exp_rate(C, O, 0, 1, +1), exp_rate(IC, I, 0, 1, +1),   // k1
      exp_rate(O, C, 2, 3, -1), exp_rate(I, IC, 2, 3, -1),   // k2
      exp_rate(C, IC, 4, 5, +1), exp_rate(O, I, 4, 5, +1),   // k3
      exp_rate(IC, C, 6, 7, -1), exp_rate(I, O, 6, 7, -1),   // k4
  };
  MarkovModel model("beattie", {"C", "I", "IC", "O"}, std::move(tr), O, 8,
                    {"p1", "p2", "p3", "p4", "p5", "p6", "p7", "p8"});
  ParameterSet p{{2.26e-4, 6.99e-2, 3.45e-5, 5.46e-2, 8.73e-2, 8.91e-3, 5.15e-3, 3.16e-2}, 1.52e-1};
  return {std::move(model), std::move(p)};
}

BuiltinModel wang() {
  enum : std::size_t { O, C1, C2, C3, I };
  std::vector<Transition> tr{
      exp_rate(O, I, 0, 1, +1),     // a1   = q1 exp(q2 V)
      exp_rate(C1, C2, 2, 3, +1),   // aa0  = q3 exp(q4 V)
      exp_rate(C3, O, 4, 5, +1),    // aa1  = q5 exp(q6 V)
      exp_rate(O, C3, 6, 7, -1),    // ba1  = q7 exp(-q8 V)
      exp_rate(I, O, 8, 9, -1),     // b1   = q9 exp(-q10 V)
      exp_rate(C2, C1, 10, 11, -1), // ba0  = q11 exp(-q12 V)
      const_rate(C2, C3, 12),       // kf
      const_rate(C3, C2, 13),       // kb
  };
  MarkovModel model("wang", {"O", "C1", "C2", "C3", "I"}, std::move(tr), O, 14,
                    {"q1", "q2", "q3", "q4", "q5", "q6", "q7", "q8", "q9", "q10", "q11", "q12", "kf", "kb"});
  ParameterSet p{{2.23e-2, 1.18e-2, 4.70e-2, 6.31e-2, 1.37e-2, 3.82e-3, 6.89e-5, 3.16e-2, 4.18e-2,
                  9.08e-2, 2.34e-2, 6.50e-3, 2.38e-2, 3.68e-2},
                 1.52e-1};
  return {std::move(model), std::move(p)};
}

}  // namespace

BuiltinModel builtin_model(std::string_view name) {
  if (name == "beattie") return beattie();
  if (name == "wang") return wang();
  throw LookupError("unknown builtin model '" + std::string(name) + "' (expected beattie or wang)");
}

std::vector<std::string> builtin_model_names() { return {"beattie", "wang"}; }

}  // namespace ionfit
