#pragma once

#include "ionfit/ensemble.hpp"
#include "ionfit/fitting.hpp"
#include "ionfit/toy.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ionfit {

enum class CaseKind { toy, case1, case2, custom };

std::string to_string(CaseKind kind);
CaseKind case_kind_from_string(std::string_view s);

/// Noise sd at 10 kHz sampling. At other rates the default sigma scales with
/// sqrt(rate / 10 kHz), which keeps the noise power per unit time fixed.
inline constexpr double kReferenceNoiseSigma = 0.01;  // nA

struct ExperimentConfig {
  CaseKind kind = CaseKind::case1;
  std::string dgp_model = "beattie";
  std::vector<std::string> fit_models = {"beattie"};
  std::vector<std::string> training_protocols = {"d1", "d2", "d3", "d4", "d5"};
  std::vector<std::string> validation_protocols = {"d0_ap"};
  int n_repeats = 10;
  std::optional<double> sigma;        // nA; default from kReferenceNoiseSigma
  std::optional<double> sample_rate;  // Hz; default 1 kHz (desk) or 10 kHz (paper scale)
  bool paper_scale = false;
  std::vector<double> lambdas = {0.25, 0.5, 1.0, 2.0, 4.0};
  FitConfig fit;                      // seed and initial_guesses are set per task
  /// Fits of later repeats (and a second pass over the first repeat) also
  /// start from the first repeat's estimates on every training protocol.
  bool cross_seed = false;
  int cross_seed_random_starts = 1;   // random starts alongside the shared ones
  BandCenter band_center = BandCenter::midpoint;
  std::filesystem::path output_dir = "ionfit-out";
  std::uint64_t master_seed = 1;
  int jobs = 0;                       // 0: IONFIT_JOBS, else hardware concurrency
  std::optional<std::vector<double>> dgp_params;  // flat, g last; default builtin values
  double toy_sigma = kToyDefaultSigma;
  bool verbose = false;
};

/// Defaults for each case. Case II: Wang data, Wang and Beattie fits, cross
/// seeding on and a 60000-evaluation budget per start.
ExperimentConfig default_config(CaseKind kind);

/// Unknown keys are rejected. Missing keys take the case defaults.
ExperimentConfig config_from_json(std::string_view text);
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_hash(const ExperimentConfig& config);

double effective_sample_rate(const ExperimentConfig& config);
double effective_sigma(const ExperimentConfig& config);
ProtocolScale effective_scale(const ExperimentConfig& config);
/// Command line override, then IONFIT_JOBS, then the hardware.
int effective_jobs(const ExperimentConfig& config);

/// Runs tasks 0..n-1 on up to `jobs` threads. Results must be written to
/// per-task slots; the call returns once every task has finished.
void parallel_for(int jobs, std::size_t n, const std::function<void(std::size_t)>& task);

struct TaskFailure {
  std::string task;
  std::string message;
};

/// One family of estimates: a lambda value (Case I) or a fitted model (Case II).
struct Branch {
  std::string label;
  std::string fit_model;
  std::vector<std::string> parameter_names;  // kinetic parameters of the fit model
  std::optional<double> lambda;
  std::vector<std::vector<std::optional<FitResult>>> fits;  // [repeat][training protocol]
  std::vector<std::optional<CrossvalMatrix>> crossval;     // per repeat, empty when incomplete
  std::optional<CrossvalMatrix> crossval_mean;
  std::map<std::string, std::vector<std::optional<PredictionBand>>> bands;    // validation protocol -> repeat
  std::map<std::string, std::vector<std::optional<CoverageReport>>> coverage;

  std::vector<Estimate> estimates(std::size_t repeat) const;
};

struct ExperimentBundle {
  ExperimentConfig config;
  std::string config_hash;
  double sigma = 0.0;
  double sample_rate = 0.0;
  std::vector<std::string> training;
  std::vector<std::string> validation;
  std::vector<std::string> crossval_columns;          // validation then training
  std::map<std::string, Trace> truth;                  // noise-free DGP output
  std::vector<std::map<std::string, Trace>> data;      // [repeat] noisy observations
  std::vector<Branch> branches;
  std::optional<ToyStudy> toy;
  std::size_t n_tasks = 0;
  std::vector<TaskFailure> failures;

  const Branch* branch(std::string_view label) const;
  bool empty() const noexcept { return branches.empty() && !toy; }
};

/// Seed for the noise on (protocol, repeat).
std::uint64_t data_seed(const ExperimentConfig& config, std::string_view protocol, std::size_t repeat);

/// Case I: lambda sweeps of the DGP model with g fixed to lambda * g*.
ExperimentBundle run_case1(const ExperimentConfig& config);
/// Case II (and custom): unrestricted fits of every fit model to the DGP data.
ExperimentBundle run_case2(const ExperimentConfig& config);
ExperimentBundle run_toy(const ExperimentConfig& config);
/// Dispatches on config.kind.
ExperimentBundle run_experiment(const ExperimentConfig& config);

enum ExitCode : int { kExitSuccess = 0, kExitConfigError = 1, kExitPartialFailure = 2, kExitTotalFailure = 3 };

/// 0 when every task succeeded, 2 when some failed, 3 when nothing was produced.
int bundle_exit_code(const ExperimentBundle& bundle);

/// Writes the artefacts below `dir`: manifest.json, summary.json, CSV tables
/// and SVG figures. An empty bundle produces the manifest only. Returns the
/// written paths relative to `dir`, sorted. IoError on failure.
std::vector<std::string> write_report(const ExperimentBundle& bundle, const std::filesystem::path& dir);

/// Version string stored in manifests.
std::string library_version();

}  // namespace ionfit
