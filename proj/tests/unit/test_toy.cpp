#include "ionfit/errors.hpp"
#include "ionfit/toy.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

namespace ionfit {
namespace {

// Profile least squares: theta1 is linear given theta2, so scan theta2 on a
// log grid and refine the best cell by golden section.
ToyEstimate profile_oracle(const ToyDesign& d, const std::vector<double>& y) {
  auto profile = [&](double theta2) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < d.times.size(); ++i) {
      const double e = std::exp(-d.times[i] / theta2);
      num += y[i] * e;
      den += e * e;
    }
    if (!(den > 0.0)) return ToyEstimate{0.0, theta2, std::numeric_limits<double>::infinity()};
    const double theta1 = num / den;
    double sse = 0.0;
    for (std::size_t i = 0; i < d.times.size(); ++i) sse += std::pow(y[i] - theta1 * std::exp(-d.times[i] / theta2), 2);
    return ToyEstimate{theta1, theta2, sse};
  };
  double best = -3.0;
  for (double u = -3.0; u <= 3.0; u += 1e-3)
    if (profile(std::pow(10.0, u)).sse < profile(std::pow(10.0, best)).sse) best = u;
  double a = best - 1e-3, b = best + 1e-3;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int k = 0; k < 100; ++k) {
    const double c = b - g * (b - a), e = a + g * (b - a);
    if (profile(std::pow(10.0, c)).sse < profile(std::pow(10.0, e)).sse) b = e; else a = c;
  }
  return profile(std::pow(10.0, 0.5 * (a + b)));
}

TEST(ToyDesigns, GridsAreExact) {
  const auto designs = toy_designs();
  ASSERT_EQ(designs.size(), 4u);
  EXPECT_EQ(designs[0].times.size(), 11u);
  EXPECT_EQ(designs[1].times.size(), 11u);
  EXPECT_EQ(designs[2].times.size(), 11u);
  EXPECT_EQ(designs[3].times.size(), 11u);
  EXPECT_EQ(designs[0].times.back(), 0.1);
  EXPECT_EQ(designs[2].times.front(), 0.2);
  EXPECT_DOUBLE_EQ(designs[3].times[1], 0.55);
  EXPECT_EQ(toy_design("T3").name, "T3");
  EXPECT_THROW(toy_design("T9"), LookupError);
}

TEST(ToyFunctions, Values) {
  EXPECT_DOUBLE_EQ(toy_truth(0.0), 2.0);
  EXPECT_DOUBLE_EQ(toy_truth(1.0), std::exp(-1.0) + std::exp(-0.1));
  EXPECT_DOUBLE_EQ(toy_model(2.0, 3.0, 4.0), 3.0 * std::exp(-0.5));
  std::mt19937_64 rng(1);
  EXPECT_THROW(toy_dgp(-1.0, 0.01, rng), DomainError);
  EXPECT_THROW(toy_dgp(1.0, -0.01, rng), DomainError);
  EXPECT_EQ(toy_dgp(0.5, 0.0, rng), toy_truth(0.5));
}

TEST(ToyFit, NoiselessMatchesProfileOracle) {
  for (const auto& d : toy_designs()) {
    std::vector<double> y;
    for (double t : d.times) y.push_back(toy_truth(t));
    const auto fit = toy_fit(d, y);
    const auto oracle = profile_oracle(d, y);
    EXPECT_LE(fit.sse, oracle.sse * (1.0 + 1e-6) + 1e-15) << d.name;
    EXPECT_NEAR(fit.theta2 / oracle.theta2, 1.0, 1e-4) << d.name;
    EXPECT_NEAR(fit.theta1 / oracle.theta1, 1.0, 1e-4) << d.name;
  }
}

TEST(ToyFit, NoisyMatchesProfileOracle) {
  std::mt19937_64 rng(5);
  const auto d = toy_design("T2");
  const auto y = toy_dgp(d.times, 0.01, rng);
  const auto fit = toy_fit(d, y);
  const auto oracle = profile_oracle(d, y);
  EXPECT_NEAR(fit.theta2 / oracle.theta2, 1.0, 1e-4);
}

TEST(ToyStudy, ShapeAndReproducibility) {
  const auto a = run_toy_study(0.01, 3, 4);
  const auto b = run_toy_study(0.01, 3, 4);
  ASSERT_EQ(a.estimates.size(), 4u);
  ASSERT_EQ(a.estimates[0].size(), 3u);
  EXPECT_EQ(a.noiseless.size(), 4u);
  for (std::size_t d = 0; d < 4; ++d)
    for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(a.estimates[d][r].theta2, b.estimates[d][r].theta2);
  EXPECT_GT(a.between_range_theta2(), 0.0);
  EXPECT_GT(a.max_within_sd_theta2(), 0.0);
}

}  // namespace
}  // namespace ionfit
