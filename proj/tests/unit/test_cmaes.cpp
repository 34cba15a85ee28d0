#include "ionfit/cmaes.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace ionfit {
namespace {

double rosenbrock(const Eigen::VectorXd& x) {
  double f = 0.0;
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i)
    f += 100.0 * std::pow(x(i + 1) - x(i) * x(i), 2) + std::pow(1.0 - x(i), 2);
  return f;
}

TEST(Cmaes, SphereConverges) {
  std::mt19937_64 rng(1);
  const Eigen::VectorXd shift = Eigen::VectorXd::LinSpaced(6, -1.0, 1.0);
  const auto r = cmaes_minimize([&](const Eigen::VectorXd& x) { return (x - shift).squaredNorm(); },
                                Eigen::VectorXd::Constant(6, 3.0), Eigen::VectorXd::Ones(6), {}, rng);
  EXPECT_LE((r.x - shift).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_GT(r.evals, 0);
  EXPECT_FALSE(r.stop_reason.empty());
}

TEST(Cmaes, RosenbrockFourDimensions) {
  std::mt19937_64 rng(3);
  CmaesOptions opt;
  opt.max_evals = 50'000;
  opt.stop_tolerance = 1e-12;
  const auto r = cmaes_minimize(rosenbrock, Eigen::VectorXd::Zero(4), Eigen::VectorXd::Constant(4, 0.5), opt, rng);
  EXPECT_LE(r.f, 1e-8);
  EXPECT_LE((r.x - Eigen::VectorXd::Ones(4)).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Cmaes, RespectsEvaluationBudget) {
  std::mt19937_64 rng(5);
  CmaesOptions opt;
  opt.max_evals = 200;
  long calls = 0;
  const auto r = cmaes_minimize(
      [&](const Eigen::VectorXd& x) {
        ++calls;
        return rosenbrock(x);
      },
      Eigen::VectorXd::Constant(8, -2.0), Eigen::VectorXd::Ones(8), opt, rng);
  EXPECT_EQ(r.evals, calls);
  EXPECT_LE(calls, opt.max_evals + 20);
}

TEST(Cmaes, SameSeedSameResult) {
  auto run = [] {
    std::mt19937_64 rng(11);
    return cmaes_minimize(rosenbrock, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3), {}, rng);
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.evals, b.evals);
}

TEST(Cmaes, InfeasiblePointsAreAvoided) {
  std::mt19937_64 rng(2);
  const auto r = cmaes_minimize(
      [](const Eigen::VectorXd& x) {
        if (x(0) < 0.5) return std::numeric_limits<double>::infinity();
        return x.squaredNorm();
      },
      Eigen::VectorXd::Constant(2, 2.0), Eigen::VectorXd::Ones(2), {}, rng);
  // Death-penalised boundaries slow the final approach, so check the value.
  EXPECT_GE(r.x(0), 0.5);
  EXPECT_NEAR(r.f, 0.25, 1e-3);
}

}  // namespace
}  // namespace ionfit
