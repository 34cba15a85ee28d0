#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ionfit {

/// Voltage range in which protocols live and in which rate bounds are checked.
inline constexpr double kMinProtocolVoltage = -120.0;
inline constexpr double kMaxProtocolVoltage = 40.0;

/// One piece of a voltage-clamp protocol: a step when v_start == v_end,
/// otherwise a linear ramp.
struct Segment {
  double duration = 0.0;  // ms
  double v_start = 0.0;   // mV
  double v_end = 0.0;     // mV

  bool is_step() const noexcept { return v_start == v_end; }
  double voltage_at_offset(double dt) const noexcept {
    if (is_step()) return v_start;
    return v_start + (v_end - v_start) * (dt / duration);
  }

  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Piecewise step/ramp voltage protocol sampled on a uniform grid.
///
/// At a boundary shared by two segments the later segment's voltage applies,
/// so instantaneous steps are unambiguous on the sampling grid.
class Protocol {
 public:
  /// Throws DomainError if segments is empty, a duration is not positive, a
  /// voltage leaves [-120, 40] mV or the sample rate is not positive.
  Protocol(std::string name, std::vector<Segment> segments, double sample_rate_hz = 10'000.0,
           double holding_potential = -80.0);

  const std::string& name() const noexcept { return name_; }
  const std::vector<Segment>& segments() const noexcept { return segments_; }
  double sample_rate() const noexcept { return sample_rate_; }
  double holding_potential() const noexcept { return holding_; }

  /// Total duration in ms.
  double duration() const noexcept { return starts_.back(); }
  /// Start time of segment i; segment_start(n_segments) == duration().
  double segment_start(std::size_t i) const { return starts_.at(i); }

  /// floor(sample_rate * duration_seconds).
  std::size_t n_observations() const noexcept;
  /// t_i = i / sample_rate (in ms), i = 0 .. n_observations() - 1.
  std::vector<double> observation_times() const;
  double observation_time(std::size_t i) const noexcept { return static_cast<double>(i) * 1000.0 / sample_rate_; }

  /// V(t; d). RangeError outside [0, duration()].
  double voltage_at(double t) const;
  /// Index of the segment whose voltage applies at time t.
  std::size_t segment_index_at(double t) const;

  /// Same segments, different sampling rate.
  Protocol with_sample_rate(double sample_rate_hz) const;

  double min_voltage() const noexcept;
  double max_voltage() const noexcept;

  friend bool operator==(const Protocol& a, const Protocol& b) {
    return a.name_ == b.name_ && a.segments_ == b.segments_ &&
           a.sample_rate_ == b.sample_rate_ && a.holding_ == b.holding_;
  }

 private:
  std::string name_;
  std::vector<Segment> segments_;
  double sample_rate_;
  double holding_;
  std::vector<double> starts_;
};

// Line-oriented text format:
//   # name: d1
//   # sample_rate_hz: 10000
//   # holding_potential_mv: -80
//   duration_ms v_start_mV v_end_mV
// Other '#' lines are comments. Numbers are written in shortest round-trip form.
std::string format_protocol(const Protocol& protocol);
Protocol parse_protocol(std::string_view text, std::string_view fallback_name = "protocol");
Protocol load_protocol_file(const std::filesystem::path& path);
void save_protocol_file(const Protocol& protocol, const std::filesystem::path& path);

enum class ProtocolScale {
  desk,   // 1 kHz sampling, central sections at their base length
  paper,  // 10 kHz sampling, central sections stretched 2x
};

/// The validation design d0_ap followed by training designs d1 .. d5.
///
/// These are representative stand-ins: steps and ramps only, voltages in
/// [-120, 40] mV, identical leading and trailing sequences, with the central
/// section varying between designs. d0_ap strings together action-potential
/// shaped ramps and is meant for validation only.
std::vector<Protocol> builtin_protocols(ProtocolScale scale = ProtocolScale::desk);
Protocol builtin_protocol(std::string_view name, ProtocolScale scale = ProtocolScale::desk);
std::vector<std::string> builtin_protocol_names();
/// d1 .. d5.
std::vector<std::string> default_training_protocols();
/// The leading and trailing segments shared by every builtin design.
std::vector<Segment> protocol_preamble();
std::vector<Segment> protocol_postamble();

/// Builtin name if recognised, otherwise a protocol file path.
Protocol resolve_protocol(std::string_view name_or_path, ProtocolScale scale = ProtocolScale::desk);

}  // namespace ionfit
