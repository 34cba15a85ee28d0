#include "ionfit/io.hpp"

#include "ionfit/errors.hpp"
#include "json_util.hpp"
#include "text_util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

namespace ionfit {

using nlohmann::json;

namespace {

json parse_json(std::string_view text, std::string_view what) { return parse_json_text(text, what); }

template <typename T>
T get_field(const json& j, const char* key, std::string_view what) {
  if (!j.contains(key)) throw ParseError(std::string(what) + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string(what) + ": field '" + key + "': " + e.what());
  }
}

ParamSource read_source(const json& t, const char* index_key, const char* value_key, std::string_view what) {
  if (t.contains(index_key)) return ParamSource::parameter(get_field<std::size_t>(t, index_key, what));
  if (t.contains(value_key)) return ParamSource::fixed(get_field<double>(t, value_key, what));
  throw ParseError(std::string(what) + ": transition needs '" + index_key + "' or '" + value_key + "'");
}

void write_source(json& t, const ParamSource& s, const char* index_key, const char* value_key) {
  if (s.index) {
    t[index_key] = *s.index;
  } else {
    t[value_key] = s.value;
  }
}

}  // namespace

std::string model_to_json(const MarkovModel& model) {
  json j;
  j["name"] = model.name();
  j["states"] = model.state_labels();
  j["conducting"] = model.conducting_state();
  j["n_kinetic_params"] = model.n_kinetic_params();
  j["parameter_names"] = model.parameter_names();
  json ts = json::array();
  for (const auto& t : model.transitions()) {
    json e;
    e["from"] = t.from;
    e["to"] = t.to;
    e["kind"] = t.kind == RateKind::constant ? "constant" : "exponential";
    write_source(e, t.prefactor, "prefactor_index", "prefactor_value");
    if (t.kind == RateKind::exponential) {
      write_source(e, t.exponent, "exponent_index", "exponent_value");
      e["sign"] = t.sign;
    }
    ts.push_back(std::move(e));
  }
  j["transitions"] = std::move(ts);
  return j.dump(2) + "\n";
}

MarkovModel model_from_json(std::string_view text) {
  constexpr std::string_view what = "model definition";
  const json j = parse_json(text, what);
  if (!j.is_object()) throw ParseError("model definition: expected a JSON object");
  const auto name = get_field<std::string>(j, "name", what);
  const auto states = get_field<std::vector<std::string>>(j, "states", what);
  const auto n_kinetic = get_field<std::size_t>(j, "n_kinetic_params", what);

  std::size_t conducting = 0;
  const json& c = j.contains("conducting") ? j.at("conducting") : throw ParseError("model definition: missing field 'conducting'");
  if (c.is_string()) {
    const auto label = c.get<std::string>();
    const auto it = std::find(states.begin(), states.end(), label);
    if (it == states.end()) throw ParseError("model definition: conducting state '" + label + "' is not a state");
    conducting = static_cast<std::size_t>(it - states.begin());
  } else if (c.is_number_unsigned() || c.is_number_integer()) {
    const auto v = c.get<long long>();
    if (v < 0) throw ParseError("model definition: conducting index is negative");
    conducting = static_cast<std::size_t>(v);
  } else {
    throw ParseError("model definition: 'conducting' must be an index or a state label");
  }

  std::vector<std::string> names;
  if (j.contains("parameter_names")) names = get_field<std::vector<std::string>>(j, "parameter_names", what);

  const json& ts = j.contains("transitions") ? j.at("transitions") : throw ParseError("model definition: missing field 'transitions'");
  if (!ts.is_array()) throw ParseError("model definition: 'transitions' must be an array");
  std::vector<Transition> transitions;
  for (const auto& e : ts) {
    Transition t;
    t.from = get_field<std::size_t>(e, "from", what);
    t.to = get_field<std::size_t>(e, "to", what);
    const auto kind = e.contains("kind") ? get_field<std::string>(e, "kind", what) : std::string("exponential");
    if (kind == "constant") {
      t.kind = RateKind::constant;
    } else if (kind == "exponential") {
      t.kind = RateKind::exponential;
    } else {
      throw ParseError("model definition: unknown rate kind '" + kind + "'");
    }
    t.prefactor = read_source(e, "prefactor_index", "prefactor_value", what);
    if (t.kind == RateKind::exponential) {
      t.exponent = read_source(e, "exponent_index", "exponent_value", what);
      t.sign = e.contains("sign") ? get_field<int>(e, "sign", what) : 1;
      if (t.sign != 1 && t.sign != -1) throw ParseError("model definition: sign must be +1 or -1");
    } else {
      t.exponent = ParamSource::fixed(0.0);
    }
    transitions.push_back(t);
  }
  return MarkovModel(name, states, std::move(transitions), conducting, n_kinetic, std::move(names));
}

MarkovModel load_model_file(const std::filesystem::path& path) {
  try {
    return model_from_json(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_model_file(const MarkovModel& model, const std::filesystem::path& path) {
  write_text_file(path, model_to_json(model));
}

MarkovModel resolve_model(std::string_view name_or_path) {
  const auto names = builtin_model_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return builtin_model(name_or_path).model;
  const std::filesystem::path path(name_or_path);
  if (!std::filesystem::exists(path)) {
    throw LookupError("'" + std::string(name_or_path) + "' is neither a builtin model nor an existing file");
  }
  return load_model_file(path);
}

std::string format_parameters(const ParameterSet& params) {
  return json(params.flat()).dump() + "\n";
}

ParameterSet parse_parameters(std::string_view text) {
  const json j = parse_json(text, "parameter file");
  if (!j.is_array() || j.size() < 2) throw ParseError("parameter file: expected an array of at least two numbers");
  std::vector<double> flat;
  for (const auto& v : j) {
    if (!v.is_number()) throw ParseError("parameter file: entries must be numbers");
    flat.push_back(v.get<double>());
  }
  return ParameterSet::from_flat(flat);
}

ParameterSet load_parameter_file(const std::filesystem::path& path) {
  try {
    return parse_parameters(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_parameter_file(const ParameterSet& params, const std::filesystem::path& path) {
  write_text_file(path, format_parameters(params));
}

std::string format_trace_csv(const Trace& trace) {
  if (trace.times.size() != trace.values.size()) throw AlignmentError("trace has mismatched times and values");
  std::string out = "time_ms,current_nA\n";
  out.reserve(out.size() + trace.size() * 28);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out += format_double(trace.times[i]);
    out += ',';
    out += format_double(trace.values[i]);
    out += '\n';
  }
  return out;
}

Trace parse_trace_csv(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || trim(lines.front()) != "time_ms,current_nA") {
    throw ParseError("trace CSV: expected header 'time_ms,current_nA'");
  }
  Trace trace;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto line = trim(lines[k]);
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    double t = 0.0;
    double v = 0.0;
    if (cells.size() != 2 || !parse_double(cells[0], t) || !parse_double(cells[1], v)) {
      throw ParseError("trace CSV: malformed line " + std::to_string(k + 1));
    }
    if (!trace.times.empty() && !(t > trace.times.back())) {
      throw ParseError("trace CSV: times must be strictly increasing (line " + std::to_string(k + 1) + ")");
    }
    trace.times.push_back(t);
    trace.values.push_back(v);
  }
  return trace;
}

std::string trace_meta_to_json(const TraceMeta& meta) {
  json j;
  j["model"] = meta.model;
  j["protocol"] = meta.protocol;
  j["params"] = meta.params;
  j["params_hash"] = meta.params_hash;
  j["seed"] = meta.seed ? json(*meta.seed) : json(nullptr);
  j["sigma"] = meta.sigma ? json(*meta.sigma) : json(nullptr);
  j["rng"] = meta.rng;
  j["solver"] = {{"abs_tol", meta.tolerances.abs}, {"rel_tol", meta.tolerances.rel}};
  j["reversal_potential_mv"] = meta.reversal_potential;
  return j.dump(2) + "\n";
}

TraceMeta trace_meta_from_json(std::string_view text) {
  constexpr std::string_view what = "trace metadata";
  const json j = parse_json(text, what);
  TraceMeta meta;
  meta.model = get_field<std::string>(j, "model", what);
  meta.protocol = get_field<std::string>(j, "protocol", what);
  meta.params = get_field<std::vector<double>>(j, "params", what);
  meta.params_hash = get_field<std::string>(j, "params_hash", what);
  if (j.contains("seed") && !j.at("seed").is_null()) meta.seed = get_field<std::uint64_t>(j, "seed", what);
  if (j.contains("sigma") && !j.at("sigma").is_null()) meta.sigma = get_field<double>(j, "sigma", what);
  if (j.contains("rng")) meta.rng = get_field<std::string>(j, "rng", what);
  if (j.contains("solver")) {
    meta.tolerances.abs = get_field<double>(j.at("solver"), "abs_tol", what);
    meta.tolerances.rel = get_field<double>(j.at("solver"), "rel_tol", what);
  }
  if (j.contains("reversal_potential_mv")) meta.reversal_potential = get_field<double>(j, "reversal_potential_mv", what);
  return meta;
}

std::filesystem::path trace_sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

void save_trace(const Trace& trace, const std::filesystem::path& csv_path) {
  write_text_file(csv_path, format_trace_csv(trace));
  write_text_file(trace_sidecar_path(csv_path), trace_meta_to_json(trace.meta));
}

Trace load_trace(const std::filesystem::path& csv_path) {
  Trace trace;
  try {
    trace = parse_trace_csv(read_text_file(csv_path));
  } catch (const ParseError& e) {
    throw ParseError(csv_path.string() + ": " + e.what());
  }
  const auto sidecar = trace_sidecar_path(csv_path);
  if (std::filesystem::exists(sidecar)) trace.meta = trace_meta_from_json(read_text_file(sidecar));
  return trace;
}

}  // namespace ionfit
