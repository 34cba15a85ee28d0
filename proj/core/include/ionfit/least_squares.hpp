#pragma once

#include <Eigen/Core>

#include <functional>
#include <string>

namespace ionfit {

struct LevenbergMarquardtOptions {
  int max_iterations = 100;
  double relative_step = 1e-5;    // central-difference step, relative to max(|x_i|, min_scale)
  double min_scale = 1e-2;
  double cost_tolerance = 1e-12;  // stop when an accepted step reduces the cost by less than this fraction
  double step_tolerance = 1e-12;  // stop when ||dx|| <= step_tolerance * (||x|| + step_tolerance)
  double initial_damping = 1e-3;
};

struct LevenbergMarquardtResult {
  Eigen::VectorXd x;
  double cost = 0.0;  // 0.5 * ||r||^2
  int iterations = 0;
  long evaluations = 0;
  std::string stop_reason;
};

/// Residual callback: fills r for the point x and returns false when x is
/// infeasible or the model cannot be evaluated there.
using ResidualFunction = std::function<bool(const Eigen::VectorXd& x, Eigen::VectorXd& r)>;

/// Levenberg-Marquardt with Marquardt diagonal scaling, a central-difference
/// Jacobian and Nielsen's damping update. Infeasible trial points are treated
/// as failed steps. The starting point must be feasible.
LevenbergMarquardtResult levenberg_marquardt(const ResidualFunction& residual, const Eigen::VectorXd& x0,
                                             const LevenbergMarquardtOptions& options = {});

}  // namespace ionfit
