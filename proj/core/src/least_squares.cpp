#include "ionfit/least_squares.hpp"

#include "ionfit/errors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace ionfit {

LevenbergMarquardtResult levenberg_marquardt(const ResidualFunction& residual, const Eigen::VectorXd& x0,
                                             const LevenbergMarquardtOptions& options) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;

  LevenbergMarquardtResult res;
  res.x = x0;
  VectorXd r;
  ++res.evaluations;
  if (!residual(x0, r)) throw DomainError("levenberg_marquardt: starting point is infeasible");
  res.cost = 0.5 * r.squaredNorm();

  const auto n = x0.size();
  const auto m = r.size();
  MatrixXd jac(m, n);
  VectorXd r_plus(m), r_minus(m), r_trial(m);
  double mu = -1.0;
  double nu = 2.0;

  auto jacobian = [&](const VectorXd& x) {
    VectorXd xp = x;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double h = options.relative_step * std::max(std::abs(x(j)), options.min_scale);
      xp(j) = x(j) + h;
      const bool ok_plus = residual(xp, r_plus);
      xp(j) = x(j) - h;
      const bool ok_minus = residual(xp, r_minus);
      xp(j) = x(j);
      res.evaluations += 2;
      if (ok_plus && ok_minus) {
        jac.col(j) = (r_plus - r_minus) / (2.0 * h);
      } else if (ok_plus) {
        jac.col(j) = (r_plus - r) / h;
      } else if (ok_minus) {
        jac.col(j) = (r - r_minus) / h;
      } else {
        return false;
      }
    }
    return true;
  };

  if (!jacobian(res.x)) {
    res.stop_reason = "jacobian";
    return res;
  }
  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    const MatrixXd jtj = jac.transpose() * jac;
    const VectorXd grad = jac.transpose() * r;
    const VectorXd scale = jtj.diagonal().cwiseMax(1e-300);
    if (mu < 0.0) mu = options.initial_damping;

    bool accepted = false;
    while (!accepted) {
      MatrixXd lhs = jtj;
      lhs.diagonal() += mu * scale;
      const VectorXd dx = lhs.ldlt().solve(-grad);
      if (!dx.allFinite()) {
        res.stop_reason = "singular";
        return res;
      }
      if (dx.norm() <= options.step_tolerance * (res.x.norm() + options.step_tolerance)) {
        res.stop_reason = "step_tolerance";
        return res;
      }
      const VectorXd trial = res.x + dx;
      ++res.evaluations;
      const bool ok = residual(trial, r_trial);
      const double trial_cost = ok ? 0.5 * r_trial.squaredNorm() : HUGE_VAL;
      const double predicted = -(dx.dot(grad) + 0.5 * dx.dot(jtj * dx));
      const double rho = (ok && predicted > 0.0) ? (res.cost - trial_cost) / predicted : -1.0;
      if (rho > 0.0) {
        const double reduction = (res.cost - trial_cost) / std::max(res.cost, 1e-300);
        res.x = trial;
        r = r_trial;
        res.cost = trial_cost;
        mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        accepted = true;
        if (reduction < options.cost_tolerance) {
          res.stop_reason = "cost_tolerance";
          ++res.iterations;
          return res;
        }
      } else {
        mu *= nu;
        nu *= 2.0;
        if (mu > 1e16) {
          res.stop_reason = "damping";
          return res;
        }
      }
    }
    if (!jacobian(res.x)) {
      res.stop_reason = "jacobian";
      return res;
    }
  }
  res.stop_reason = "max_iterations";
  return res;
}

}  // namespace ionfit
