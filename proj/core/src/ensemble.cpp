#include "ionfit/ensemble.hpp"

#include "ionfit/errors.hpp"
#include "ionfit/fitting.hpp"

#include <algorithm>
#include <cmath>

namespace ionfit {

Trace predict(const ParameterSet& params, const MarkovModel& model, const Protocol& protocol,
              const SimulationSettings& settings) {
  return simulate(model, params, protocol, settings);
}

CrossvalMatrix crossval_matrix(const std::vector<Estimate>& estimates, const MarkovModel& model,
                               const std::vector<Protocol>& protocols, const std::map<std::string, Trace>& datasets,
                               const SimulationSettings& settings) {
  if (estimates.empty()) throw DomainError("crossval_matrix: no estimates");
  CrossvalMatrix cv;
  for (const auto& e : estimates) cv.train.push_back(e.protocol);
  for (const auto& p : protocols) {
    if (datasets.find(p.name()) == datasets.end()) {
      throw CompletenessError("crossval_matrix: no dataset for protocol '" + p.name() + "'");
    }
    cv.validate.push_back(p.name());
  }
  cv.rmse.resize(static_cast<Eigen::Index>(estimates.size()), static_cast<Eigen::Index>(protocols.size()));
  for (std::size_t c = 0; c < protocols.size(); ++c) {
    const Simulator sim(model, protocols[c], settings);
    const Trace& data = datasets.at(protocols[c].name());
    for (std::size_t r = 0; r < estimates.size(); ++r) {
      cv.rmse(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          rmse(sim.simulate(estimates[r].params), data);
    }
  }
  return cv;
}

CrossvalMatrix average_crossval(const std::vector<CrossvalMatrix>& matrices) {
  if (matrices.empty()) throw DomainError("average_crossval: no matrices");
  CrossvalMatrix out = matrices.front();
  for (std::size_t k = 1; k < matrices.size(); ++k) {
    if (matrices[k].train != out.train || matrices[k].validate != out.validate) {
      throw AlignmentError("average_crossval: matrices have different labels");
    }
    out.rmse += matrices[k].rmse;
  }
  out.rmse /= static_cast<double>(matrices.size());
  return out;
}

std::string to_string(BandCenter c) {
  switch (c) {
    case BandCenter::midpoint: return "midpoint";
    case BandCenter::median: return "median";
    case BandCenter::mean: return "mean";
  }
  return "midpoint";
}

BandCenter band_center_from_string(std::string_view s) {
  if (s == "midpoint") return BandCenter::midpoint;
  if (s == "median") return BandCenter::median;
  if (s == "mean") return BandCenter::mean;
  throw ParseError("unknown band centre '" + std::string(s) + "' (expected midpoint, median or mean)");
}

double PredictionBand::mean_width() const {
  if (times.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) s += upper[i] - lower[i];
  return s / static_cast<double>(times.size());
}

PredictionBand prediction_band(const std::vector<Trace>& predictions, BandCenter center) {
  if (predictions.empty()) throw DomainError("prediction_band: no predictions");
  PredictionBand band;
  band.protocol = predictions.front().meta.protocol;
  band.times = predictions.front().times;
  band.center_kind = center;
  for (const auto& p : predictions) {
    if (p.times != band.times) throw AlignmentError("prediction_band: predictions are on different grids");
  }
  const std::size_t n = band.times.size();
  band.lower.resize(n);
  band.upper.resize(n);
  band.center.resize(n);
  std::vector<double> column(predictions.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < predictions.size(); ++k) column[k] = predictions[k].values[i];
    const auto [lo, hi] = std::minmax_element(column.begin(), column.end());
    band.lower[i] = *lo;
    band.upper[i] = *hi;
    switch (center) {
      case BandCenter::midpoint:
        band.center[i] = 0.5 * (*lo + *hi);
        break;
      case BandCenter::mean: {
        double s = 0.0;
        for (double v : column) s += v;
        band.center[i] = s / static_cast<double>(column.size());
        break;
      }
      case BandCenter::median: {
        std::sort(column.begin(), column.end());
        const std::size_t m = column.size() / 2;
        band.center[i] = column.size() % 2 == 1 ? column[m] : 0.5 * (column[m - 1] + column[m]);
        break;
      }
    }
  }
  return band;
}

PredictionBand prediction_band(const std::vector<Estimate>& estimates, const MarkovModel& model,
                               const Protocol& validation_protocol, BandCenter center,
                               const SimulationSettings& settings) {
  if (estimates.empty()) throw DomainError("prediction_band: no estimates");
  const Simulator sim(model, validation_protocol, settings);
  std::vector<Trace> predictions;
  predictions.reserve(estimates.size());
  for (const auto& e : estimates) predictions.push_back(sim.simulate(e.params));
  return prediction_band(predictions, center);
}

CoverageReport coverage_report(const PredictionBand& band, const Trace& truth) {
  if (truth.times != band.times) throw AlignmentError("coverage_report: truth is not on the band's grid");
  CoverageReport rep;
  const std::size_t n = band.size();
  if (n == 0) return rep;
  rep.inside.resize(n);
  rep.width.resize(n);
  rep.center_error.resize(n);
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = truth.values[i];
    rep.inside[i] = band.lower[i] <= y && y <= band.upper[i];
    count += rep.inside[i] ? 1 : 0;
    rep.width[i] = band.upper[i] - band.lower[i];
    rep.center_error[i] = std::abs(band.center[i] - y);
    total += rep.width[i];
  }
  rep.fraction_inside = static_cast<double>(count) / static_cast<double>(n);
  rep.mean_width = total / static_cast<double>(n);
  std::vector<double> sorted = rep.width;
  std::sort(sorted.begin(), sorted.end());
  rep.median_width = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  rep.max_width = sorted.back();
  return rep;
}

}  // namespace ionfit
