#pragma once

#include "ionfit/fitting.hpp"
#include "ionfit/markov_model.hpp"
#include "ionfit/simulator.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace ionfit {

// Model definition (JSON):
//   {"name": "...", "states": ["C", "O"], "conducting": 1, "n_kinetic_params": 2,
//    "parameter_names": [...],                       (optional)
//    "transitions": [{"from": 0, "to": 1, "kind": "exponential",
//                     "prefactor_index": 0,           (or "prefactor_value")
//                     "exponent_index": 1,            (or "exponent_value")
//                     "sign": 1}]}
// "conducting" may be an index or a state label. Constant transitions omit the exponent.
std::string model_to_json(const MarkovModel& model);
MarkovModel model_from_json(std::string_view text);
MarkovModel load_model_file(const std::filesystem::path& path);
void save_model_file(const MarkovModel& model, const std::filesystem::path& path);

/// Builtin name ("beattie", "wang") or model-definition file path.
MarkovModel resolve_model(std::string_view name_or_path);

// Parameter file: a JSON array of the kinetic parameters followed by g.
std::string format_parameters(const ParameterSet& params);
ParameterSet parse_parameters(std::string_view text);
ParameterSet load_parameter_file(const std::filesystem::path& path);
void save_parameter_file(const ParameterSet& params, const std::filesystem::path& path);

// Traces: CSV with header `time_ms,current_nA` plus a JSON sidecar holding the
// metadata, written next to the CSV with the extension replaced by ".json".
std::string format_trace_csv(const Trace& trace);
Trace parse_trace_csv(std::string_view text);
std::string trace_meta_to_json(const TraceMeta& meta);
TraceMeta trace_meta_from_json(std::string_view text);
std::filesystem::path trace_sidecar_path(const std::filesystem::path& csv_path);
void save_trace(const Trace& trace, const std::filesystem::path& csv_path);
/// Reads the CSV and, when present, its sidecar.
Trace load_trace(const std::filesystem::path& csv_path);

// Fit configuration and results as JSON. Results carry the data hash, protocol,
// solver tolerances, optimiser settings and per-start diagnostics.
std::string fit_config_to_json(const FitConfig& config);
/// Keys absent from the text keep their defaults; unknown keys are a ParseError.
FitConfig fit_config_from_json(std::string_view text);
std::string fit_result_to_json(const FitResult& result);

}  // namespace ionfit
