#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ionfit {

/// Observation times (dimensionless) for one toy design.
struct ToyDesign {
  std::string name;
  std::vector<double> times;
};

/// T1 = {0, 0.01, ..., 0.1}, T2 = {0, 0.1, ..., 1}, T3 = {0.2, 0.3, ..., 1.2},
/// T4 = {0.5, 0.55, ..., 1}. Grid points are start + k * step, not accumulated sums.
std::vector<ToyDesign> toy_designs();
ToyDesign toy_design(std::string_view name);

inline constexpr double kToyDefaultSigma = 0.01;  // variance 1e-4

/// Two-exponential truth exp(-t) + exp(-t / 10).
double toy_truth(double t);
/// Single-exponential model theta1 * exp(-t / theta2).
double toy_model(double t, double theta1, double theta2);

/// One noisy observation of the truth at t. DomainError for t < 0 or sigma < 0.
double toy_dgp(double t, double sigma, std::mt19937_64& rng);
/// Observations at each design time, drawn in order.
std::vector<double> toy_dgp(std::span<const double> times, double sigma, std::mt19937_64& rng);

struct ToyFitConfig {
  int n_starts = 4;
  std::uint64_t seed = 1;
};

struct ToyEstimate {
  double theta1 = 0.0;
  double theta2 = 0.0;
  double sse = 0.0;
};

/// Least-squares fit of the single exponential (theta2 > 0): multistart
/// CMA-ES over (theta1, log theta2), each start refined by Levenberg-Marquardt.
/// FitError if no start produces a finite fit.
ToyEstimate toy_fit(const ToyDesign& design, std::span<const double> data, const ToyFitConfig& config = {});

struct ToyStudy {
  double sigma = kToyDefaultSigma;
  int n_repeats = 10;
  std::uint64_t seed = 1;
  std::vector<ToyDesign> designs;
  std::vector<ToyEstimate> noiseless;                // one per design
  std::vector<std::vector<ToyEstimate>> estimates;   // [design][repeat]

  /// Max over designs of the sample standard deviation of theta2.
  double max_within_sd_theta2() const;
  /// Range over designs of the per-design mean of theta2.
  double between_range_theta2() const;
};

/// Fits every design to noiseless data and to n_repeats noisy datasets, with
/// the noise for (design d, repeat r) seeded by derive_seed(seed, {"toy", d, r}).
ToyStudy run_toy_study(double sigma = kToyDefaultSigma, int n_repeats = 10, std::uint64_t seed = 1);

}  // namespace ionfit
