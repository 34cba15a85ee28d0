#include "ionfit/protocol.hpp"

#include "ionfit/errors.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ionfit {

Protocol::Protocol(std::string name, std::vector<Segment> segments, double sample_rate_hz,
                   double holding_potential)
    : name_(std::move(name)),
      segments_(std::move(segments)),
      sample_rate_(sample_rate_hz),
      holding_(holding_potential) {
  if (segments_.empty()) throw DomainError("protocol '" + name_ + "' has no segments");
  if (!(sample_rate_ > 0.0) || !std::isfinite(sample_rate_)) {
    throw DomainError("protocol '" + name_ + "': sample rate must be positive");
  }
  auto in_range = [](double v) { return v >= kMinProtocolVoltage && v <= kMaxProtocolVoltage; };
  starts_.reserve(segments_.size() + 1);
  starts_.push_back(0.0);
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& s = segments_[i];
    if (!(s.duration > 0.0) || !std::isfinite(s.duration)) {
      throw DomainError("protocol '" + name_ + "': segment " + std::to_string(i) + " has non-positive duration");
    }
    if (!in_range(s.v_start) || !in_range(s.v_end)) {
      throw DomainError("protocol '" + name_ + "': segment " + std::to_string(i) +
                        " leaves the [-120, 40] mV range");
    }
    starts_.push_back(starts_.back() + s.duration);
  }
  if (!in_range(holding_)) throw DomainError("protocol '" + name_ + "': holding potential out of range");
}

std::size_t Protocol::n_observations() const noexcept {
  // The small slack absorbs rounding in products such as 0.1 ms * 10 kHz.
  return static_cast<std::size_t>(std::floor(duration() * sample_rate_ / 1000.0 + 1e-9));
}

std::vector<double> Protocol::observation_times() const {
  std::vector<double> t(n_observations());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = observation_time(i);
  return t;
}

std::size_t Protocol::segment_index_at(double t) const {
  if (!(t >= 0.0 && t <= duration())) {
    throw RangeError("time " + std::to_string(t) + " ms outside protocol '" + name_ + "'");
  }
  // First boundary strictly greater than t; the later segment owns shared endpoints.
  const auto it = std::upper_bound(starts_.begin() + 1, starts_.end(), t);
  if (it == starts_.end()) return segments_.size() - 1;
  return static_cast<std::size_t>(it - starts_.begin()) - 1;
}

double Protocol::voltage_at(double t) const {
  const std::size_t i = segment_index_at(t);
  return segments_[i].voltage_at_offset(t - starts_[i]);
}

Protocol Protocol::with_sample_rate(double sample_rate_hz) const {
  return Protocol(name_, segments_, sample_rate_hz, holding_);
}

double Protocol::min_voltage() const noexcept {
  double v = segments_.front().v_start;
  for (const auto& s : segments_) v = std::min({v, s.v_start, s.v_end});
  return v;
}

double Protocol::max_voltage() const noexcept {
  double v = segments_.front().v_start;
  for (const auto& s : segments_) v = std::max({v, s.v_start, s.v_end});
  return v;
}

std::string format_protocol(const Protocol& protocol) {
  std::ostringstream out;
  out << "# name: " << protocol.name() << '\n';
  out << "# sample_rate_hz: " << format_double(protocol.sample_rate()) << '\n';
  out << "# holding_potential_mv: " << format_double(protocol.holding_potential()) << '\n';
  out << "# duration_ms v_start_mV v_end_mV\n";
  for (const auto& s : protocol.segments()) {
    out << format_double(s.duration) << ' ' << format_double(s.v_start) << ' '
        << format_double(s.v_end) << '\n';
  }
  return out.str();
}

Protocol parse_protocol(std::string_view text, std::string_view fallback_name) {
  std::string name(fallback_name);
  double rate = 10'000.0;
  double holding = -80.0;
  std::vector<Segment> segments;

  std::size_t line_no = 0;
  for (std::string_view line : split_lines(text)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) -> ParseError {
      return ParseError("protocol line " + std::to_string(line_no) + ": " + why);
    };
    if (line.front() == '#') {
      const std::string_view body = trim(line.substr(1));
      const auto colon = body.find(':');
      if (colon == std::string_view::npos) continue;
      const std::string_view key = trim(body.substr(0, colon));
      const std::string_view value = trim(body.substr(colon + 1));
      if (key == "name") {
        if (value.empty()) throw fail("empty name");
        name = std::string(value);
      } else if (key == "sample_rate_hz") {
        if (!parse_double(value, rate)) throw fail("bad sample rate");
      } else if (key == "holding_potential_mv") {
        if (!parse_double(value, holding)) throw fail("bad holding potential");
      }
      continue;
    }
    const auto fields = split_whitespace(line);
    if (fields.size() != 3) throw fail("expected 'duration_ms v_start_mV v_end_mV'");
    Segment s;
    if (!parse_double(fields[0], s.duration) || !parse_double(fields[1], s.v_start) ||
        !parse_double(fields[2], s.v_end)) {
      throw fail("malformed number");
    }
    segments.push_back(s);
  }
  if (segments.empty()) throw ParseError("protocol text has no segments");
  return Protocol(std::move(name), std::move(segments), rate, holding);
}

Protocol load_protocol_file(const std::filesystem::path& path) {
  return parse_protocol(read_text_file(path), path.stem().string());
}

void save_protocol_file(const Protocol& protocol, const std::filesystem::path& path) {
  write_text_file(path, format_protocol(protocol));
}

namespace {

Segment step(double duration, double v) { return {duration, v, v}; }
Segment ramp(double duration, double from, double to) { return {duration, from, to}; }

std::vector<Segment> central_section(std::string_view name) {
  if (name == "d0_ap") {
    // Action-potential trains: fast upstroke, notch, sloping plateau, repolarisation, rest.
    std::vector<Segment> s;
    const double plateau[] = {120.0, 220.0, 320.0, 180.0, 260.0};
    const double rest[] = {250.0, 350.0, 200.0, 300.0, 400.0};
    const double peak[] = {30.0, 20.0, 40.0, 25.0, 35.0};
    for (std::size_t k = 0; k < 5; ++k) {
      s.push_back(ramp(2.0, -80.0, peak[k]));
      s.push_back(ramp(8.0, peak[k], 15.0));
      s.push_back(ramp(plateau[k], 15.0, -5.0));
      s.push_back(ramp(60.0, -5.0, -80.0));
      s.push_back(step(rest[k], -80.0));
    }
    return s;
  }
  if (name == "d1") {
    return {step(500, 40),  step(200, -120), step(400, 20),  step(300, -60), step(150, 40),
            step(300, -90), step(300, 0),    step(500, -40), step(250, 10),  step(200, -100)};
  }
  if (name == "d2") {
    return {step(600, 40),  step(30, -120), step(200, 40), step(30, -80),  step(200, 20),
            step(30, -60),  step(200, 0),   step(300, -110), step(400, 30), step(300, -50),
            step(150, 40),  step(400, -90)};
  }
  if (name == "d3") {
    return {step(300, -40), step(800, 20),  step(100, -120), step(100, 40),  step(400, -70),
            step(300, 30),  step(150, -100), step(400, 10),  step(400, -50), step(200, 40),
            step(300, -80)};
  }
  if (name == "d4") {
    return {step(150, -60), step(150, -40), step(150, -20), step(150, 0),    step(150, 20),
            step(400, 40),  step(150, 20),  step(150, 0),   step(150, -20), step(150, -40),
            step(150, -60), step(150, -80), step(150, -100), step(200, -120), step(300, 40),
            step(150, -120)};
  }
  if (name == "d5") {
    return {step(700, 30),  step(250, -90), step(200, 40), step(200, -120), step(500, 10),
            step(300, -30), step(300, 40),  step(300, -70), step(100, -120), step(300, 20)};
  }
  throw LookupError("unknown builtin protocol '" + std::string(name) + "'");
}

}  // namespace

std::vector<Segment> protocol_preamble() {
  return {step(100, -80), step(50, -120), ramp(100, -120, 40), step(100, -80)};
}

std::vector<Segment> protocol_postamble() {
  return {step(50, -120), ramp(100, -120, 40), step(100, -80)};
}

std::vector<std::string> builtin_protocol_names() { return {"d0_ap", "d1", "d2", "d3", "d4", "d5"}; }

std::vector<std::string> default_training_protocols() { return {"d1", "d2", "d3", "d4", "d5"}; }

Protocol builtin_protocol(std::string_view name, ProtocolScale scale) {
  auto segments = protocol_preamble();
  auto central = central_section(name);
  const double stretch = scale == ProtocolScale::paper ? 2.0 : 1.0;
  for (auto& s : central) {
    // Fast AP upstrokes keep their shape at both scales.
    if (s.duration > 10.0) s.duration *= stretch;
  }
  segments.insert(segments.end(), central.begin(), central.end());
  const auto post = protocol_postamble();
  segments.insert(segments.end(), post.begin(), post.end());
  const double rate = scale == ProtocolScale::paper ? 10'000.0 : 1'000.0;
  return Protocol(std::string(name), std::move(segments), rate, -80.0);
}

std::vector<Protocol> builtin_protocols(ProtocolScale scale) {
  std::vector<Protocol> out;
  for (const auto& n : builtin_protocol_names()) out.push_back(builtin_protocol(n, scale));
  return out;
}

Protocol resolve_protocol(std::string_view name_or_path, ProtocolScale scale) {
  const auto names = builtin_protocol_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
    return builtin_protocol(name_or_path, scale);
  }
  const std::filesystem::path path(name_or_path);
  if (!std::filesystem::exists(path)) {
    throw LookupError("'" + std::string(name_or_path) + "' is neither a builtin protocol nor a file");
  }
  return load_protocol_file(path);
}

}  // namespace ionfit
