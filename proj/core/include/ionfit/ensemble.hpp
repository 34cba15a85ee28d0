#pragma once

#include "ionfit/markov_model.hpp"
#include "ionfit/protocol.hpp"
#include "ionfit/simulator.hpp"

#include <Eigen/Core>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ionfit {

/// A parameter estimate labelled by the protocol it was trained on.
struct Estimate {
  std::string protocol;
  ParameterSet params;
};

/// Noise-free prediction y(theta_hat; d~).
Trace predict(const ParameterSet& params, const MarkovModel& model, const Protocol& protocol,
              const SimulationSettings& settings = {});

/// rmse[train][validate]; rows follow `train`, columns follow `validate`.
struct CrossvalMatrix {
  std::vector<std::string> train;
  std::vector<std::string> validate;
  Eigen::MatrixXd rmse;

  double mean() const { return rmse.mean(); }
};

/// Entry (d, d~) is rmse(predict(theta_hat_d, d~), z(d~)). CompletenessError
/// when a validation protocol has no dataset.
CrossvalMatrix crossval_matrix(const std::vector<Estimate>& estimates, const MarkovModel& model,
                               const std::vector<Protocol>& protocols, const std::map<std::string, Trace>& datasets,
                               const SimulationSettings& settings = {});

/// Cell-wise mean over repeats; all matrices must share their labels.
CrossvalMatrix average_crossval(const std::vector<CrossvalMatrix>& matrices);

/// Central value reported alongside the band. Only the midpoint is the
/// interval centre; the others summarise the ensemble differently.
enum class BandCenter { midpoint, median, mean };

std::string to_string(BandCenter c);
BandCenter band_center_from_string(std::string_view s);

/// Per-observation [min, max] over an ensemble of predictions.
struct PredictionBand {
  std::string protocol;
  std::vector<double> times;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<double> center;
  BandCenter center_kind = BandCenter::midpoint;

  std::size_t size() const noexcept { return times.size(); }
  double width(std::size_t i) const { return upper[i] - lower[i]; }
  double mean_width() const;
};

/// Band from precomputed predictions on a shared grid. DomainError when empty,
/// AlignmentError when the grids differ.
PredictionBand prediction_band(const std::vector<Trace>& predictions, BandCenter center = BandCenter::midpoint);

PredictionBand prediction_band(const std::vector<Estimate>& estimates, const MarkovModel& model,
                               const Protocol& validation_protocol, BandCenter center = BandCenter::midpoint,
                               const SimulationSettings& settings = {});

struct CoverageReport {
  double fraction_inside = 0.0;
  std::vector<bool> inside;       // lower <= truth <= upper
  std::vector<double> width;      // upper - lower
  std::vector<double> center_error;  // |center - truth|
  double mean_width = 0.0;
  double median_width = 0.0;
  double max_width = 0.0;
};

CoverageReport coverage_report(const PredictionBand& band, const Trace& truth);

/// Everything derived from one set of per-protocol estimates.
struct EnsembleResult {
  std::vector<std::string> training_protocols;
  std::vector<Estimate> estimates;
  CrossvalMatrix crossval;
  PredictionBand band;
  std::optional<CoverageReport> coverage;
};

}  // namespace ionfit
