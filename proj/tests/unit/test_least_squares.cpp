#include "ionfit/least_squares.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>

namespace ionfit {
namespace {

TEST(LevenbergMarquardt, ExponentialDecayExactData) {
  Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(40, 0.0, 4.0);
  Eigen::VectorXd y = (2.5 * (-1.3 * t.array()).exp()).matrix();
  const auto res = levenberg_marquardt(
      [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
        r = (x(0) * (-x(1) * t.array()).exp()).matrix() - y;
        return true;
      },
      Eigen::Vector2d(1.0, 0.5));
  EXPECT_NEAR(res.x(0), 2.5, 1e-7);
  EXPECT_NEAR(res.x(1), 1.3, 1e-7);
  EXPECT_LE(res.cost, 1e-16);
}

TEST(LevenbergMarquardt, LinearProblemMatchesNormalEquations) {
  Eigen::MatrixXd a(6, 2);
  a << 1, 0, 1, 1, 1, 2, 1, 3, 1, 4, 1, 5;
  Eigen::VectorXd b(6);
  b << 0.1, 0.9, 2.2, 2.8, 4.1, 5.0;
  const Eigen::VectorXd oracle = a.colPivHouseholderQr().solve(b);
  const auto res = levenberg_marquardt(
      [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
        r = a * x - b;
        return true;
      },
      Eigen::Vector2d::Zero());
  EXPECT_LE((res.x - oracle).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(res.cost, 0.5 * (a * oracle - b).squaredNorm(), 1e-12);
}

TEST(LevenbergMarquardt, RejectedEvaluationsDoNotMoveTheIterate) {
  const auto res = levenberg_marquardt(
      [](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
        if (x(0) < 1.0) return false;
        r.resize(1);
        r(0) = x(0) - 0.0;
        return true;
      },
      Eigen::VectorXd::Constant(1, 3.0));
  EXPECT_GE(res.x(0), 1.0);
  EXPECT_LE(res.x(0), 3.0);
}

}  // namespace
}  // namespace ionfit
