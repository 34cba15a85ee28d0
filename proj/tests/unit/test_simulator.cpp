#include "ionfit/errors.hpp"
#include "ionfit/expm.hpp"
#include "ionfit/markov_model.hpp"
#include "ionfit/protocol.hpp"
#include "ionfit/simulator.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numeric>
#include <random>

namespace ionfit {
namespace {

// Fixed-step RK4 on the full occupancy ODE, sampled at the protocol's observation
// times. Each step uses the voltage law of the segment it lies in, so a step
// ending on a boundary does not see the next segment's voltage.
std::vector<double> rk4_reference(const BuiltinModel& bm, const Protocol& protocol, double h) {
  const double erev = default_reversal_potential();
  Eigen::VectorXd x = steady_state(bm.model, bm.defaults, protocol.holding_potential());
  std::vector<double> seg_start{0.0};
  for (const auto& s : protocol.segments()) seg_start.push_back(seg_start.back() + s.duration);
  const auto times = protocol.observation_times();
  std::vector<double> out;
  out.reserve(times.size());
  long n = 0;
  for (double target : times) {
    for (const long m = std::lround(target / h); n < m; ++n) {
      const double t = n * h;
      const std::size_t k = protocol.segment_index_at(t + h / 2);
      const auto& seg = protocol.segments()[k];
      auto rhs = [&](double tt, const Eigen::VectorXd& s) {
        return Eigen::VectorXd(assemble_matrix(bm.model, bm.defaults, seg.voltage_at_offset(tt - seg_start[k])) * s);
      };
      const Eigen::VectorXd k1 = rhs(t, x);
      const Eigen::VectorXd k2 = rhs(t + h / 2, x + h / 2 * k1);
      const Eigen::VectorXd k3 = rhs(t + h / 2, x + h / 2 * k2);
      const Eigen::VectorXd k4 = rhs(t + h, x + h * k3);
      x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    std::vector<double> occ(x.data(), x.data() + x.size());
    out.push_back(observe_current(bm.model, bm.defaults, occ, protocol.voltage_at(target), erev));
  }
  return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

TEST(Expm, MatchesEigenOnRateMatrices) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> volts(-120.0, 40.0), dt(0.01, 500.0);
  for (const auto& name : builtin_model_names()) {
    const auto bm = builtin_model(name);
    for (int k = 0; k < 20; ++k) {
      const Eigen::MatrixXd a = assemble_matrix(bm.model, bm.defaults, volts(rng)) * dt(rng);
      const Eigen::MatrixXd ours = expm(a);
      const Eigen::MatrixXd ref = a.exp();
      EXPECT_LE((ours - ref).cwiseAbs().maxCoeff(), 1e-10) << name;
    }
  }
}

TEST(Expm, DiagonalAndZero) {
  Eigen::Matrix3d d = Eigen::Vector3d(-1.0, 0.5, 2.0).asDiagonal();
  const Eigen::Matrix3d e = expm(d);
  EXPECT_NEAR(e(0, 0), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(e(2, 2), std::exp(2.0), 1e-13);
  EXPECT_TRUE(expm(Eigen::Matrix2d::Zero().eval()).isIdentity(0.0));
}

TEST(Simulator, StepProtocolMatchesRk4) {
  const auto bm = builtin_model("beattie");
  const Protocol p("steps", {{200.0, -80.0, -80.0}, {300.0, 20.0, 20.0}, {300.0, -50.0, -50.0}}, 1000.0);
  const auto trace = simulate(bm.model, bm.defaults, p);
  EXPECT_LE(max_abs_diff(trace.values, rk4_reference(bm, p, 0.01)), 1e-7);
}

TEST(Simulator, RampProtocolMatchesRk4) {
  for (const auto& name : builtin_model_names()) {
    const auto bm = builtin_model(name);
    const Protocol p("ramp", {{100.0, -80.0, -80.0}, {400.0, -120.0, 40.0}, {200.0, 40.0, -100.0}}, 1000.0);
    const auto trace = simulate(bm.model, bm.defaults, p);
    EXPECT_LE(max_abs_diff(trace.values, rk4_reference(bm, p, 0.01)), 1e-6) << name;
  }
}

TEST(Simulator, HoldingStartIsStationary) {
  const auto bm = builtin_model("beattie");
  const Protocol p("hold", {{500.0, -80.0, -80.0}}, 1000.0);
  const auto trace = simulate(bm.model, bm.defaults, p);
  for (double v : trace.values) EXPECT_NEAR(v, trace.values.front(), 1e-12);
}

TEST(Simulator, OccupanciesStayOnSimplex) {
  const auto bm = builtin_model("wang");
  const Simulator sim(bm.model, builtin_protocol("d3"));
  const auto occ = sim.simulate_occupancy(bm.defaults);
  for (Eigen::Index r = 0; r < occ.states.rows(); ++r) {
    EXPECT_NEAR(occ.states.row(r).sum(), 1.0, 1e-9);
    EXPECT_GE(occ.states.row(r).minCoeff(), -1e-9);
  }
}

TEST(Simulator, DeterministicAndMetadata) {
  const auto bm = builtin_model("beattie");
  const auto p = builtin_protocol("d1");
  const auto a = simulate(bm.model, bm.defaults, p);
  const auto b = simulate(bm.model, bm.defaults, p);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.size(), p.n_observations());
  EXPECT_EQ(a.meta.model, "beattie");
  EXPECT_EQ(a.meta.protocol, "d1");
  EXPECT_EQ(a.meta.params_hash, parameter_hash(bm.defaults));
  EXPECT_FALSE(a.meta.sigma.has_value());
}

TEST(Simulator, SimulateCurrentMatchesTrace) {
  const auto bm = builtin_model("wang");
  const Simulator sim(bm.model, builtin_protocol("d2"));
  std::vector<double> out(sim.times().size());
  sim.simulate_current(bm.defaults, out);
  EXPECT_EQ(out, sim.simulate(bm.defaults).values);
}

TEST(Simulator, WrongArityThrows) {
  const auto bm = builtin_model("beattie");
  auto p = bm.defaults;
  p.kinetic.push_back(1.0);
  EXPECT_THROW(simulate(bm.model, p, builtin_protocol("d1")), ArityError);
}

TEST(Noise, SeededReproducibleWithRequestedMoments) {
  const auto bm = builtin_model("beattie");
  const auto p = builtin_protocol("d0_ap", ProtocolScale::paper);
  const auto clean = simulate(bm.model, bm.defaults, p);
  const auto a = generate_data(bm.model, bm.defaults, p, {0.01, 42});
  const auto b = generate_data(bm.model, bm.defaults, p, {0.01, 42});
  const auto c = generate_data(bm.model, bm.defaults, p, {0.01, 43});
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, c.values);
  ASSERT_TRUE(a.meta.sigma.has_value());
  EXPECT_EQ(*a.meta.sigma, 0.01);

  const std::size_t n = a.size();
  std::vector<double> eps(n);
  for (std::size_t i = 0; i < n; ++i) eps[i] = a.values[i] - clean.values[i];
  const double mean = std::accumulate(eps.begin(), eps.end(), 0.0) / n;
  double var = 0.0;
  for (double e : eps) var += (e - mean) * (e - mean);
  const double sd = std::sqrt(var / (n - 1));
  EXPECT_LE(std::abs(mean), 5.0 * 0.01 / std::sqrt(double(n)));
  EXPECT_NEAR(sd, 0.01, 5.0 * 0.01 / std::sqrt(2.0 * n));
}

TEST(Noise, NegativeSigmaRejected) {
  const auto bm = builtin_model("beattie");
  auto t = simulate(bm.model, bm.defaults, builtin_protocol("d1"));
  EXPECT_THROW(add_noise(t, {-1.0, 1}), DomainError);
}

}  // namespace
}  // namespace ionfit
