#include "ionfit/errors.hpp"
#include "ionfit/protocol.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace ionfit {
namespace {

TEST(Protocol, VoltageOnStepAndRamp) {
  const Protocol step("s", {{100.0, -80.0, -80.0}});
  EXPECT_EQ(step.voltage_at(50.0), -80.0);
  const Protocol ramp("r", {{100.0, -80.0, 40.0}});
  EXPECT_DOUBLE_EQ(ramp.voltage_at(50.0), -20.0);
  EXPECT_DOUBLE_EQ(ramp.voltage_at(100.0), 40.0);
}

TEST(Protocol, BoundaryBelongsToLaterSegment) {
  const Protocol p("two", {{10.0, -80.0, -80.0}, {10.0, 40.0, 40.0}});
  EXPECT_EQ(p.voltage_at(10.0), 40.0);
  EXPECT_EQ(p.segment_index_at(10.0), 1u);
  EXPECT_EQ(p.voltage_at(9.999), -80.0);
}

TEST(Protocol, OutOfRangeTimeThrows) {
  const Protocol p("s", {{10.0, -80.0, -80.0}});
  EXPECT_THROW(p.voltage_at(-0.1), RangeError);
  EXPECT_THROW(p.voltage_at(10.1), RangeError);
}

TEST(Protocol, ConstructorValidates) {
  EXPECT_THROW(Protocol("e", {}), DomainError);
  EXPECT_THROW(Protocol("d", {{0.0, -80.0, -80.0}}), DomainError);
  EXPECT_THROW(Protocol("v", {{10.0, -130.0, -80.0}}), DomainError);
  EXPECT_THROW(Protocol("v", {{10.0, -80.0, 50.0}}), DomainError);
  EXPECT_THROW(Protocol("r", {{10.0, -80.0, -80.0}}, 0.0), DomainError);
}

TEST(Protocol, ObservationCounts) {
  EXPECT_EQ(Protocol("a", {{1000.0, -80.0, -80.0}}, 10'000.0).n_observations(), 10'000u);
  EXPECT_EQ(Protocol("b", {{1000.0, -80.0, -80.0}}, 1'000.0).n_observations(), 1'000u);
  const Protocol tiny("c", {{0.1, -80.0, -80.0}}, 10'000.0);
  ASSERT_EQ(tiny.n_observations(), 1u);
  EXPECT_EQ(tiny.observation_times().front(), 0.0);
}

TEST(Protocol, ObservationTimesUniformAndIncreasing) {
  const auto p = builtin_protocol("d3");
  const auto t = p.observation_times();
  ASSERT_GT(t.size(), 2u);
  const double dt = 1000.0 / p.sample_rate();
  for (std::size_t i = 1; i < t.size(); ++i) {
    ASSERT_GT(t[i], t[i - 1]);
    EXPECT_NEAR(t[i] - t[i - 1], dt, 1e-9);
  }
  EXPECT_LE(t.back(), p.duration());
}

TEST(Protocol, DiscontinuitiesOnlyAtBoundaries) {
  const auto p = builtin_protocol("d1");
  const std::size_t n_segments = p.segments().size();
  int jumps = 0;
  const double h = 1e-3;
  for (double t = h; t < p.duration(); t += 0.5) {
    if (std::abs(p.voltage_at(t) - p.voltage_at(t - h)) > 1.0) ++jumps;
  }
  EXPECT_LE(jumps, static_cast<int>(n_segments));
}

TEST(BuiltinProtocols, RangeSharedEndsAndTrainingSet) {
  const auto all = builtin_protocols();
  ASSERT_EQ(all.size(), 6u);
  EXPECT_EQ(all.front().name(), "d0_ap");
  const auto pre = protocol_preamble();
  const auto post = protocol_postamble();
  for (const auto& p : all) {
    EXPECT_GE(p.min_voltage(), kMinProtocolVoltage);
    EXPECT_LE(p.max_voltage(), kMaxProtocolVoltage);
    const auto& s = p.segments();
    ASSERT_GT(s.size(), pre.size() + post.size());
    EXPECT_TRUE(std::equal(pre.begin(), pre.end(), s.begin())) << p.name();
    EXPECT_TRUE(std::equal(post.rbegin(), post.rend(), s.rbegin())) << p.name();
  }
  const auto training = default_training_protocols();
  EXPECT_EQ(training, (std::vector<std::string>{"d1", "d2", "d3", "d4", "d5"}));
  EXPECT_EQ(std::count(training.begin(), training.end(), "d0_ap"), 0);
}

TEST(BuiltinProtocols, ScalesDifferInRateAndLength) {
  const auto desk = builtin_protocol("d2", ProtocolScale::desk);
  const auto paper = builtin_protocol("d2", ProtocolScale::paper);
  EXPECT_EQ(desk.sample_rate(), 1'000.0);
  EXPECT_EQ(paper.sample_rate(), 10'000.0);
  EXPECT_GT(paper.duration(), desk.duration());
  EXPECT_THROW(builtin_protocol("d9"), LookupError);
}

TEST(ProtocolFormat, RoundTripIsExact) {
  for (const auto& p : builtin_protocols(ProtocolScale::paper)) {
    EXPECT_EQ(parse_protocol(format_protocol(p)), p) << p.name();
  }
  const Protocol odd("odd", {{0.1 + 0.2, -80.0, 1.0 / 3.0}, {7.25, -120.0, -120.0}}, 3333.0, -90.5);
  EXPECT_EQ(parse_protocol(format_protocol(odd)), odd);
}

TEST(ProtocolFormat, MalformedTextIsParseError) {
  EXPECT_THROW(parse_protocol("10 -80\n"), ParseError);
  EXPECT_THROW(parse_protocol("ten -80 -80\n"), ParseError);
  EXPECT_THROW(parse_protocol("# name: x\n"), ParseError);
}

TEST(ProtocolFormat, FileRoundTripAndResolve) {
  const auto dir = std::filesystem::temp_directory_path() / "ionfit_protocol_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "custom.txt";
  const Protocol p("custom", {{50.0, -80.0, 20.0}, {50.0, 20.0, 20.0}}, 2000.0);
  save_protocol_file(p, path);
  EXPECT_EQ(load_protocol_file(path), p);
  EXPECT_EQ(resolve_protocol(path.string()), p);
  EXPECT_EQ(resolve_protocol("d4").name(), "d4");
  EXPECT_THROW(resolve_protocol((dir / "missing.txt").string()), LookupError);
  std::filesystem::remove_all(dir);
}

TEST(Protocol, WithSampleRateKeepsSegments) {
  const auto p = builtin_protocol("d5");
  const auto q = p.with_sample_rate(2500.0);
  EXPECT_EQ(q.segments(), p.segments());
  EXPECT_EQ(q.sample_rate(), 2500.0);
  EXPECT_EQ(q.name(), p.name());
}

}  // namespace
}  // namespace ionfit
