#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <random>
#include <string>

namespace ionfit {

struct CmaesOptions {
  int population = 0;             // 0 selects 4 + floor(3 ln n)
  long max_evals = 20'000;
  double stop_tolerance = 1e-7;   // relative improvement of the best value over the window
  int stall_window = 0;           // generations; 0 selects 10 + ceil(30 n / population)
  double tol_x = 1e-11;           // stop when every coordinate's step is below this
  double f_target = 0.0;          // stop once the best value is at or below this
  double max_condition = 1e14;
};

struct CmaesResult {
  Eigen::VectorXd x;
  double f = 0.0;
  long evals = 0;
  int generations = 0;
  bool converged = false;
  std::string stop_reason;
};

/// (mu/mu_w, lambda)-CMA-ES with rank-one and rank-mu covariance updates and
/// cumulative step-size adaptation. Non-finite objective values act as a
/// death penalty; a generation with no finite value halves the step size.
/// The initial point is evaluated and counts towards the best-ever value.
/// `scales` gives the initial per-coordinate standard deviation.
CmaesResult cmaes_minimize(const std::function<double(const Eigen::VectorXd&)>& objective,
                           const Eigen::VectorXd& x0, const Eigen::VectorXd& scales,
                           const CmaesOptions& options, std::mt19937_64& rng);

}  // namespace ionfit
