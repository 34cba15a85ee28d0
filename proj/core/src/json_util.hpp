#pragma once

#include "ionfit/fitting.hpp"

#include <nlohmann/json.hpp>

#include <string_view>

namespace ionfit {

nlohmann::json parse_json_text(std::string_view text, std::string_view what);

nlohmann::json fit_config_json(const FitConfig& config);
/// Overrides the fields present in `j`; ParseError on unknown keys or bad types.
void read_fit_config(const nlohmann::json& j, FitConfig& config);

nlohmann::json fit_result_json(const FitResult& result);

}  // namespace ionfit
