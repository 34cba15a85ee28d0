#include "ionfit/toy.hpp"

#include "ionfit/cmaes.hpp"
#include "ionfit/errors.hpp"
#include "ionfit/least_squares.hpp"
#include "ionfit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ionfit {

namespace {

std::vector<double> grid(double start, double step, int count) {
  std::vector<double> t(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) t[static_cast<std::size_t>(k)] = start + step * k;
  return t;
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::vector<ToyDesign> toy_designs() {
  return {
      {"T1", grid(0.0, 0.01, 11)},
      {"T2", grid(0.0, 0.1, 11)},
      {"T3", grid(0.2, 0.1, 11)},
      {"T4", grid(0.5, 0.05, 11)},
  };
}

ToyDesign toy_design(std::string_view name) {
  for (auto& d : toy_designs()) {
    if (d.name == name) return d;
  }
  throw LookupError("unknown toy design '" + std::string(name) + "' (expected T1..T4)");
}

double toy_truth(double t) { return std::exp(-t) + std::exp(-t / 10.0); }

double toy_model(double t, double theta1, double theta2) { return theta1 * std::exp(-t / theta2); }

double toy_dgp(double t, double sigma, std::mt19937_64& rng) {
  if (!(t >= 0.0)) throw DomainError("toy_dgp: t must be non-negative");
  if (!(sigma >= 0.0)) throw DomainError("toy_dgp: sigma must be non-negative");
  if (sigma == 0.0) return toy_truth(t);
  std::normal_distribution<double> eps(0.0, sigma);
  return toy_truth(t) + eps(rng);
}

std::vector<double> toy_dgp(std::span<const double> times, double sigma, std::mt19937_64& rng) {
  std::vector<double> z;
  z.reserve(times.size());
  for (double t : times) z.push_back(toy_dgp(t, sigma, rng));
  return z;
}

ToyEstimate toy_fit(const ToyDesign& design, std::span<const double> data, const ToyFitConfig& config) {
  if (design.times.size() < 2) throw DomainError("toy_fit: a design needs at least two times");
  if (data.size() != design.times.size()) throw AlignmentError("toy_fit: data and design differ in length");
  const auto n = static_cast<Eigen::Index>(data.size());

  // Coordinates: (theta1, log theta2).
  auto residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    if (!x.allFinite() || std::abs(x(1)) > 50.0) return false;
    const double theta2 = std::exp(x(1));
    r.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      r(i) = toy_model(design.times[static_cast<std::size_t>(i)], x(0), theta2) - data[static_cast<std::size_t>(i)];
    }
    return r.allFinite();
  };
  auto sse = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r;
    return residual(x, r) ? r.squaredNorm() : std::numeric_limits<double>::infinity();
  };

  CmaesOptions opts;
  opts.max_evals = 4000;
  opts.stop_tolerance = 1e-12;
  Eigen::Vector2d scales(0.5, 1.0);

  ToyEstimate best;
  best.sse = std::numeric_limits<double>::infinity();
  for (int k = 0; k < std::max(1, config.n_starts); ++k) {
    std::mt19937_64 rng(derive_seed(config.seed, {seed_tag("toy_fit"), static_cast<std::uint64_t>(k)}));
    std::uniform_real_distribution<double> u1(0.1, 3.0);
    std::uniform_real_distribution<double> u2(std::log(0.05), std::log(20.0));
    Eigen::VectorXd x0(2);
    x0 << u1(rng), u2(rng);
    const CmaesResult cr = cmaes_minimize(sse, x0, scales, opts, rng);
    Eigen::VectorXd x = cr.x;
    double f = cr.f;
    if (std::isfinite(f)) {
      const auto lm = levenberg_marquardt(residual, cr.x);
      const double f_lm = sse(lm.x);
      if (f_lm < f) {
        f = f_lm;
        x = lm.x;
      }
    }
    if (f < best.sse) best = {x(0), std::exp(x(1)), f};
  }
  if (!std::isfinite(best.sse)) throw FitError("toy_fit: no start produced a finite fit");
  return best;
}

double ToyStudy::max_within_sd_theta2() const {
  double m = 0.0;
  for (const auto& per_design : estimates) {
    std::vector<double> t2;
    for (const auto& e : per_design) t2.push_back(e.theta2);
    m = std::max(m, sample_sd(t2));
  }
  return m;
}

double ToyStudy::between_range_theta2() const {
  std::vector<double> means;
  for (const auto& per_design : estimates) {
    if (per_design.empty()) continue;
    double s = 0.0;
    for (const auto& e : per_design) s += e.theta2;
    means.push_back(s / static_cast<double>(per_design.size()));
  }
  if (means.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(means.begin(), means.end());
  return *hi - *lo;
}

ToyStudy run_toy_study(double sigma, int n_repeats, std::uint64_t seed) {
  if (n_repeats < 1) throw DomainError("run_toy_study: n_repeats must be at least 1");
  ToyStudy study;
  study.sigma = sigma;
  study.n_repeats = n_repeats;
  study.seed = seed;
  study.designs = toy_designs();
  ToyFitConfig fit_cfg;
  fit_cfg.seed = seed;
  for (std::size_t d = 0; d < study.designs.size(); ++d) {
    const auto& design = study.designs[d];
    std::mt19937_64 unused(0);
    study.noiseless.push_back(toy_fit(design, toy_dgp(design.times, 0.0, unused), fit_cfg));
    std::vector<ToyEstimate> per_design;
    for (int r = 0; r < n_repeats; ++r) {
      std::mt19937_64 rng(derive_seed(seed, {seed_tag("toy"), d, static_cast<std::uint64_t>(r)}));
      per_design.push_back(toy_fit(design, toy_dgp(design.times, sigma, rng), fit_cfg));
    }
    study.estimates.push_back(std::move(per_design));
  }
  return study;
}

}  // namespace ionfit
