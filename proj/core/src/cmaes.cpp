#include "ionfit/cmaes.hpp"

#include "ionfit/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <vector>

namespace ionfit {

CmaesResult cmaes_minimize(const std::function<double(const Eigen::VectorXd&)>& objective,
                           const Eigen::VectorXd& x0, const Eigen::VectorXd& scales,
                           const CmaesOptions& options, std::mt19937_64& rng) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;

  const auto n = x0.size();
  if (n == 0 || scales.size() != n) throw ArityError("cmaes: dimension mismatch");
  if ((scales.array() <= 0.0).any()) throw DomainError("cmaes: initial scales must be positive");
  const double nd = static_cast<double>(n);

  const int lambda = options.population > 0 ? options.population
                                            : 4 + static_cast<int>(std::floor(3.0 * std::log(nd)));
  const int mu = lambda / 2;
  VectorXd w(mu);
  for (int i = 0; i < mu; ++i) w(i) = std::log(mu + 0.5) - std::log(i + 1.0);
  w /= w.sum();
  const double mu_eff = 1.0 / w.squaredNorm();

  const double c_sigma = (mu_eff + 2.0) / (nd + mu_eff + 5.0);
  const double d_sigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((mu_eff - 1.0) / (nd + 1.0)) - 1.0) + c_sigma;
  const double c_c = (4.0 + mu_eff / nd) / (nd + 4.0 + 2.0 * mu_eff / nd);
  const double c_1 = 2.0 / ((nd + 1.3) * (nd + 1.3) + mu_eff);
  const double c_mu = std::min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nd + 2.0) * (nd + 2.0) + mu_eff));
  const double chi_n = std::sqrt(nd) * (1.0 - 1.0 / (4.0 * nd) + 1.0 / (21.0 * nd * nd));
  const int window = options.stall_window > 0
                         ? options.stall_window
                         : 10 + static_cast<int>(std::ceil(30.0 * nd / lambda));

  VectorXd mean = x0;
  double sigma = 1.0;
  MatrixXd cov = scales.array().square().matrix().asDiagonal();
  MatrixXd basis = MatrixXd::Identity(n, n);
  VectorXd diag = scales;
  VectorXd p_sigma = VectorXd::Zero(n);
  VectorXd p_c = VectorXd::Zero(n);

  CmaesResult res;
  res.x = x0;
  res.f = objective(x0);
  if (std::isnan(res.f)) res.f = std::numeric_limits<double>::infinity();
  res.evals = 1;

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<VectorXd> ys(static_cast<std::size_t>(lambda), VectorXd(n));
  std::vector<VectorXd> xs(static_cast<std::size_t>(lambda), VectorXd(n));
  std::vector<double> fs(static_cast<std::size_t>(lambda));
  std::vector<int> order(static_cast<std::size_t>(lambda));
  std::deque<double> history;

  auto finish = [&](bool converged, const char* reason) {
    res.converged = converged;
    res.stop_reason = reason;
    return res;
  };

  if (res.f <= options.f_target) return finish(true, "f_target");

  for (int gen = 0;; ++gen) {
    if (res.evals >= options.max_evals) return finish(false, "max_evals");

    VectorXd z(n);
    for (int k = 0; k < lambda; ++k) {
      for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(rng);
      ys[k] = basis * diag.cwiseProduct(z);
      xs[k] = mean + sigma * ys[k];
      const double f = objective(xs[k]);
      fs[k] = std::isnan(f) ? std::numeric_limits<double>::infinity() : f;
      ++res.evals;
      if (fs[k] < res.f) {
        res.f = fs[k];
        res.x = xs[k];
      }
    }
    res.generations = gen + 1;
    if (res.f <= options.f_target) return finish(true, "f_target");

    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fs[a] < fs[b]; });
    if (!std::isfinite(fs[order[0]])) {
      sigma *= 0.5;
      continue;
    }

    VectorXd y_w = VectorXd::Zero(n);
    for (int i = 0; i < mu; ++i) y_w += w(i) * ys[order[i]];
    mean += sigma * y_w;

    const VectorXd inv_sqrt_y = basis * (basis.transpose() * y_w).cwiseQuotient(diag);
    p_sigma = (1.0 - c_sigma) * p_sigma + std::sqrt(c_sigma * (2.0 - c_sigma) * mu_eff) * inv_sqrt_y;
    const double ps_norm = p_sigma.norm();
    const double ps_bias = std::sqrt(1.0 - std::pow(1.0 - c_sigma, 2.0 * (gen + 1)));
    const bool h_sigma = ps_norm / ps_bias < (1.4 + 2.0 / (nd + 1.0)) * chi_n;
    p_c = (1.0 - c_c) * p_c + (h_sigma ? std::sqrt(c_c * (2.0 - c_c) * mu_eff) : 0.0) * y_w;

    MatrixXd rank_mu = MatrixXd::Zero(n, n);
    for (int i = 0; i < mu; ++i) rank_mu.noalias() += w(i) * ys[order[i]] * ys[order[i]].transpose();
    const double decay = 1.0 - c_1 - c_mu + (h_sigma ? 0.0 : c_1 * c_c * (2.0 - c_c));
    cov = decay * cov + c_1 * p_c * p_c.transpose() + c_mu * rank_mu;
    cov = 0.5 * (cov + cov.transpose()).eval();
    sigma *= std::exp(c_sigma / d_sigma * (ps_norm / chi_n - 1.0));

    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
    basis = eig.eigenvectors();
    diag = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const double dmin = diag.minCoeff();
    if (!(dmin > 0.0) || (diag.maxCoeff() / dmin) * (diag.maxCoeff() / dmin) > options.max_condition) {
      return finish(false, "condition");
    }
    if (!std::isfinite(sigma)) return finish(false, "divergence");

    if (sigma * cov.diagonal().cwiseSqrt().maxCoeff() < options.tol_x) return finish(true, "tol_x");

    history.push_back(res.f);
    if (static_cast<int>(history.size()) > window) {
      const double past = history.front();
      history.pop_front();
      if (std::isfinite(past) && past - res.f <= options.stop_tolerance * std::abs(past)) {
        return finish(true, "stall");
      }
    }
  }
}

}  // namespace ionfit
