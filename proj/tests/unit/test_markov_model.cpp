#include "ionfit/errors.hpp"
#include "ionfit/markov_model.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace ionfit {
namespace {

constexpr std::size_t kC = 0, kI = 1, kIC = 2, kO = 3;

TEST(AssembleMatrix, BeattieEntriesAtZeroVoltsArePrefactors) {
  const auto bm = builtin_model("beattie");
  const auto a = assemble_matrix(bm.model, bm.defaults, 0.0);
  EXPECT_DOUBLE_EQ(a(kO, kC), 2.26e-4);   // k1
  EXPECT_DOUBLE_EQ(a(kC, kO), 3.45e-5);   // k2
  EXPECT_DOUBLE_EQ(a(kIC, kC), 8.73e-2);  // k3
  EXPECT_DOUBLE_EQ(a(kC, kIC), 5.15e-3);  // k4
}

TEST(AssembleMatrix, BeattieK1AtFortyMillivolts) {
  const auto bm = builtin_model("beattie");
  const auto a = assemble_matrix(bm.model, bm.defaults, 40.0);
  EXPECT_NEAR(a(kO, kC), 2.26e-4 * std::exp(0.0699 * 40.0), 1e-15);
  EXPECT_NEAR(a(kI, kIC), 2.26e-4 * std::exp(0.0699 * 40.0), 1e-15);
  EXPECT_NEAR(a(kC, kO), 3.45e-5 * std::exp(-0.0546 * 40.0), 1e-15);
}

TEST(AssembleMatrix, ColumnsSumToZeroAcrossVoltageRange) {
  for (const auto& name : builtin_model_names()) {
    const auto bm = builtin_model(name);
    for (int v = -120; v <= 40; ++v) {
      const auto a = assemble_matrix(bm.model, bm.defaults, v);
      EXPECT_LE(a.colwise().sum().cwiseAbs().maxCoeff(), 1e-12) << name << " at " << v;
    }
  }
}

TEST(AssembleMatrix, WrongArityThrows) {
  const auto bm = builtin_model("beattie");
  ParameterSet p = bm.defaults;
  p.kinetic.pop_back();
  EXPECT_THROW(assemble_matrix(bm.model, p, 0.0), ArityError);
}

TEST(SteadyState, MatchesDenseNullspaceOracle) {
  for (const auto& name : builtin_model_names()) {
    const auto bm = builtin_model(name);
    const Eigen::MatrixXd a = assemble_matrix(bm.model, bm.defaults, -80.0);
    // Oracle: least-squares solve of [A; 1^T] x = [0; 1] by QR.
    const auto n = a.rows();
    Eigen::MatrixXd aug(n + 1, n);
    aug << a, Eigen::RowVectorXd::Ones(n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
    rhs(n) = 1.0;
    const Eigen::VectorXd oracle = aug.colPivHouseholderQr().solve(rhs);
    const Eigen::VectorXd x = steady_state(bm.model, bm.defaults, -80.0);
    EXPECT_LE((x - oracle).cwiseAbs().maxCoeff(), 1e-12) << name;
    EXPECT_NEAR(x.sum(), 1.0, 1e-12);
    EXPECT_GE(x.minCoeff(), -1e-12);
    EXPECT_LE((a * x).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(SteadyState, BeattieAtHoldingIsMostlyClosed) {
  const auto bm = builtin_model("beattie");
  const Eigen::VectorXd x = steady_state(bm.model, bm.defaults, -80.0);
  EXPECT_GT(x(kC) + x(kIC), 0.9);
}

TEST(SteadyState, SymmetricLoopIsUniform) {
  std::vector<Transition> tr;
  const std::size_t n = 3;
  for (std::size_t i = 0; i < n; ++i) {
    Transition fwd;
    fwd.from = i;
    fwd.to = (i + 1) % n;
    fwd.kind = RateKind::constant;
    fwd.prefactor = ParamSource::parameter(0);
    Transition back = fwd;
    std::swap(back.from, back.to);
    tr.push_back(fwd);
    tr.push_back(back);
  }
  const MarkovModel model("loop", {"A", "B", "C"}, tr, 0, 1);
  const Eigen::VectorXd x = steady_state(model, {{0.3}, 1.0}, 0.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) EXPECT_NEAR(x(i), 1.0 / 3.0, 1e-14);
}

TEST(SteadyState, DisconnectedModelIsDegenerate) {
  Transition t;
  t.from = 0;
  t.to = 1;
  t.kind = RateKind::constant;
  t.prefactor = ParamSource::parameter(0);
  Transition u = t;
  u.from = 2;
  u.to = 3;
  const MarkovModel model("split", {"A", "B", "C", "D"}, {t, u}, 1, 1);
  EXPECT_THROW(steady_state(model, {{0.1}, 1.0}, 0.0), DegeneracyError);
}

TEST(ObserveCurrent, ZeroDrivingForceOrClosedChannel) {
  const auto bm = builtin_model("beattie");
  const std::vector<double> occ{0.1, 0.2, 0.3, 0.4};
  EXPECT_EQ(observe_current(bm.model, bm.defaults, occ, -80.24, -80.24), 0.0);
  const std::vector<double> closed{0.5, 0.2, 0.3, 0.0};
  EXPECT_EQ(observe_current(bm.model, bm.defaults, closed, 10.0, -80.24), 0.0);
}

TEST(ObserveCurrent, ScalarArithmetic) {
  const auto bm = builtin_model("beattie");
  const std::vector<double> occ{0.2, 0.2, 0.1, 0.5};
  EXPECT_NEAR(observe_current(bm.model, bm.defaults, occ, 0.0, -80.24), 0.152 * 0.5 * 80.24, 1e-14);
}

TEST(ObserveCurrent, LinearInConductanceAndDrivingForce) {
  const auto bm = builtin_model("wang");
  const std::vector<double> occ{0.3, 0.1, 0.2, 0.2, 0.2};
  ParameterSet p = bm.defaults;
  const double base = observe_current(bm.model, p, occ, 20.0, -80.0);
  p.conductance *= 3.0;
  EXPECT_DOUBLE_EQ(observe_current(bm.model, p, occ, 20.0, -80.0), 3.0 * base);
  p.conductance = bm.defaults.conductance;
  EXPECT_DOUBLE_EQ(observe_current(bm.model, p, occ, 120.0, -80.0), 2.0 * base);
}

TEST(Nernst, RoomTemperatureValue) { EXPECT_NEAR(nernst_potential({}), -80.24, 0.005); }

TEST(Nernst, ClosedFormAndSymmetries) {
  NernstInputs in;
  EXPECT_DOUBLE_EQ(nernst_potential(in),
                   1000.0 * in.gas_constant * in.temperature / in.faraday * std::log(in.k_out / in.k_in));
  NernstInputs same = in;
  same.k_out = same.k_in;
  EXPECT_DOUBLE_EQ(nernst_potential(same), 0.0);
  NernstInputs swapped = in;
  std::swap(swapped.k_in, swapped.k_out);
  EXPECT_DOUBLE_EQ(nernst_potential(swapped), -nernst_potential(in));
}

TEST(Nernst, NonPositiveConcentrationIsDomainError) {
  NernstInputs in;
  in.k_in = 0.0;
  EXPECT_THROW(nernst_potential(in), DomainError);
}

TEST(BuiltinModel, Structures) {
  const auto b = builtin_model("beattie");
  EXPECT_EQ(b.model.state_labels(), (std::vector<std::string>{"C", "I", "IC", "O"}));
  EXPECT_EQ(b.model.n_kinetic_params(), 8u);
  EXPECT_EQ(b.model.conducting_state(), kO);
  const auto w = builtin_model("wang");
  EXPECT_EQ(w.model.state_labels(), (std::vector<std::string>{"O", "C1", "C2", "C3", "I"}));
  EXPECT_EQ(w.model.n_kinetic_params(), 14u);
  EXPECT_EQ(w.model.conducting_state(), 0u);
  EXPECT_EQ(b.defaults.conductance, 0.152);
  EXPECT_EQ(w.defaults.conductance, 0.152);
  EXPECT_THROW(builtin_model("hodgkin"), LookupError);
}

TEST(MarkovModel, RejectsInconsistentStructure) {
  Transition self;
  self.from = 0;
  self.to = 0;
  self.kind = RateKind::constant;
  self.prefactor = ParamSource::parameter(0);
  EXPECT_THROW(MarkovModel("bad", {"A", "B"}, {self}, 0, 1), ParseError);

  Transition out_of_range = self;
  out_of_range.to = 5;
  EXPECT_THROW(MarkovModel("bad", {"A", "B"}, {out_of_range}, 0, 1), ParseError);

  Transition ok = self;
  ok.to = 1;
  EXPECT_THROW(MarkovModel("unused", {"A", "B"}, {ok}, 0, 2), ParseError);
}

TEST(MarkovModel, ValidateChecksPositivity) {
  const auto bm = builtin_model("beattie");
  ParameterSet p = bm.defaults;
  p.kinetic[3] = 0.0;
  EXPECT_THROW(bm.model.validate(p), DomainError);
  p = bm.defaults;
  p.conductance = -1.0;
  EXPECT_THROW(bm.model.validate(p), DomainError);
}

TEST(ParameterSet, FlatRoundTrip) {
  const auto p = builtin_model("wang").defaults;
  const auto flat = p.flat();
  ASSERT_EQ(flat.size(), 15u);
  EXPECT_EQ(flat.back(), p.conductance);
  EXPECT_EQ(ParameterSet::from_flat(flat), p);
}

}  // namespace
}  // namespace ionfit
