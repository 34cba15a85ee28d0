#include "ionfit/ensemble.hpp"
#include "ionfit/errors.hpp"
#include "ionfit/fitting.hpp"

#include <gtest/gtest.h>

namespace ionfit {
namespace {

Trace make_trace(std::vector<double> v) {
  Trace t;
  for (std::size_t i = 0; i < v.size(); ++i) t.times.push_back(0.5 * i);
  t.values = std::move(v);
  return t;
}

TEST(Band, PointwiseMinMaxAndCentres) {
  const std::vector<Trace> preds{make_trace({1, 5, 2}), make_trace({3, 4, 2}), make_trace({2, 9, 2})};
  const auto mid = prediction_band(preds);
  EXPECT_EQ(mid.lower, (std::vector<double>{1, 4, 2}));
  EXPECT_EQ(mid.upper, (std::vector<double>{3, 9, 2}));
  EXPECT_EQ(mid.center, (std::vector<double>{2, 6.5, 2}));
  EXPECT_DOUBLE_EQ(mid.mean_width(), (2.0 + 5.0 + 0.0) / 3.0);
  EXPECT_EQ(prediction_band(preds, BandCenter::median).center, (std::vector<double>{2, 5, 2}));
  EXPECT_EQ(prediction_band(preds, BandCenter::mean).center, (std::vector<double>{2, 6, 2}));
}

TEST(Band, Errors) {
  EXPECT_THROW(prediction_band(std::vector<Trace>{}), DomainError);
  const std::vector<Trace> mixed{make_trace({1, 2}), make_trace({1, 2, 3})};
  EXPECT_THROW(prediction_band(mixed), AlignmentError);
  EXPECT_EQ(band_center_from_string(to_string(BandCenter::median)), BandCenter::median);
  EXPECT_THROW(band_center_from_string("mode"), ParseError);
}

TEST(Coverage, CountsInclusiveBounds) {
  const std::vector<Trace> preds{make_trace({0, 0, 0, 0}), make_trace({1, 1, 1, 1})};
  const auto band = prediction_band(preds);
  const auto rep = coverage_report(band, make_trace({0.0, 1.0, 1.5, -0.1}));
  EXPECT_EQ(rep.inside, (std::vector<bool>{true, true, false, false}));
  EXPECT_DOUBLE_EQ(rep.fraction_inside, 0.5);
  EXPECT_DOUBLE_EQ(rep.max_width, 1.0);
  EXPECT_DOUBLE_EQ(rep.center_error[2], 1.0);
}

TEST(Crossval, DiagonalZeroForNoiselessTruthEstimates) {
  const auto bm = builtin_model("beattie");
  std::vector<Protocol> protocols;
  std::map<std::string, Trace> data;
  std::vector<Estimate> estimates;
  for (const char* name : {"d1", "d2"}) {
    protocols.push_back(builtin_protocol(name));
    data[name] = simulate(bm.model, bm.defaults, protocols.back());
  }
  auto off = bm.defaults;
  off.conductance *= 2.0;
  estimates = {{"d1", bm.defaults}, {"d2", off}};
  const auto m = crossval_matrix(estimates, bm.model, protocols, data);
  EXPECT_EQ(m.train, (std::vector<std::string>{"d1", "d2"}));
  EXPECT_EQ(m.validate, (std::vector<std::string>{"d1", "d2"}));
  EXPECT_EQ(m.rmse(0, 0), 0.0);
  EXPECT_EQ(m.rmse(0, 1), 0.0);
  // Doubling g doubles the prediction, so the error equals the rms of the data.
  EXPECT_NEAR(m.rmse(1, 1), rmse(data["d2"].values, std::vector<double>(data["d2"].size(), 0.0)), 1e-12);

  const auto avg = average_crossval({m, m});
  EXPECT_EQ(avg.rmse, m.rmse);
  data.erase("d2");
  EXPECT_THROW(crossval_matrix(estimates, bm.model, protocols, data), CompletenessError);
}

TEST(Predict, EqualsSimulate) {
  const auto bm = builtin_model("wang");
  const auto p = builtin_protocol("d0_ap");
  EXPECT_EQ(predict(bm.defaults, bm.model, p).values, simulate(bm.model, bm.defaults, p).values);
}

}  // namespace
}  // namespace ionfit
