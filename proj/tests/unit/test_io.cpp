#include "ionfit/errors.hpp"
#include "ionfit/io.hpp"

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <filesystem>

namespace ionfit {
namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("ionfit_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST(ModelJson, BuiltinsRoundTripAndSimulateIdentically) {
  for (const auto& name : builtin_model_names()) {
    const auto bm = builtin_model(name);
    const auto again = model_from_json(model_to_json(bm.model));
    EXPECT_EQ(model_to_json(again), model_to_json(bm.model));
    const auto p = builtin_protocol("d1");
    EXPECT_EQ(simulate(again, bm.defaults, p).values, simulate(bm.model, bm.defaults, p).values);
  }
}

TEST(ModelJson, ConductingByLabelAndErrors) {
  const std::string two_state = R"({"name":"cO","states":["C","O"],"conducting":"O","n_kinetic_params":2,
    "transitions":[{"from":0,"to":1,"kind":"constant","prefactor_index":0},
                   {"from":1,"to":0,"kind":"constant","prefactor_index":1}]})";
  const auto m = model_from_json(two_state);
  EXPECT_EQ(m.conducting_state(), 1u);
  const auto x = steady_state(m, {{0.3, 0.1}, 1.0}, 0.0);
  EXPECT_NEAR(x(1), 0.75, 1e-14);
  EXPECT_THROW(model_from_json("{"), ParseError);
  EXPECT_THROW(model_from_json(R"({"name":"x"})"), ParseError);
  EXPECT_THROW(resolve_model("nonexistent_model"), LookupError);
}

TEST(Parameters, TextRoundTripIsExact) {
  const auto p = builtin_model("wang").defaults;
  EXPECT_EQ(parse_parameters(format_parameters(p)), p);
  EXPECT_THROW(parse_parameters("[]"), ParseError);
  EXPECT_THROW(parse_parameters("[1, \"a\"]"), ParseError);
}

TEST_F(TempDir, TraceRoundTripWithSidecar) {
  const auto bm = builtin_model("beattie");
  auto t = generate_data(bm.model, bm.defaults, builtin_protocol("d2"), {0.01, 3});
  const auto path = dir_ / "trace.csv";
  save_trace(t, path);
  EXPECT_TRUE(std::filesystem::exists(trace_sidecar_path(path)));
  EXPECT_EQ(trace_sidecar_path(path).extension(), ".json");
  const auto back = load_trace(path);
  EXPECT_EQ(back.times, t.times);
  EXPECT_EQ(back.values, t.values);
  EXPECT_EQ(back.meta.protocol, "d2");
  EXPECT_EQ(back.meta.params_hash, t.meta.params_hash);
  ASSERT_TRUE(back.meta.sigma.has_value());
  EXPECT_EQ(*back.meta.sigma, 0.01);
}

TEST(TraceCsv, HeaderAndMalformedRows) {
  Trace t;
  t.times = {0.0, 0.1};
  t.values = {1.5, -2.25};
  const auto text = format_trace_csv(t);
  EXPECT_EQ(text.rfind("time_ms,current_nA", 0), 0u);
  EXPECT_EQ(parse_trace_csv(text).values, t.values);
  EXPECT_THROW(parse_trace_csv("time_ms,current_nA\n0.0\n"), ParseError);
  EXPECT_THROW(parse_trace_csv("time_ms,current_nA\n0.0,abc\n"), ParseError);
}

TEST(FitConfigJson, RoundTripAndUnknownKey) {
  FitConfig c;
  c.n_starts = 3;
  c.max_evals = 1234;
  c.seed = 99;
  c.polish = false;
  const auto back = fit_config_from_json(fit_config_to_json(c));
  EXPECT_EQ(back.n_starts, 3);
  EXPECT_EQ(back.max_evals, 1234);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_FALSE(back.polish);
  EXPECT_EQ(fit_config_from_json("{}").n_starts, FitConfig{}.n_starts);
  EXPECT_THROW(fit_config_from_json(R"({"n_start": 2})"), ParseError);
}

TEST(FitResultJson, CarriesProvenanceFields) {
  const auto bm = builtin_model("beattie");
  const Protocol p("short", {{200.0, -80.0, -80.0}, {300.0, 20.0, 20.0}}, 100.0);
  const auto data = simulate(bm.model, bm.defaults, p);
  FitConfig cfg;
  cfg.n_starts = 1;
  cfg.max_evals = 100;
  cfg.polish = false;
  cfg.initial_guesses = {bm.defaults};
  const auto res = fit(Objective::fixed_conductance(bm.model, p, data, 0.152), cfg);
  const auto j = nlohmann::json::parse(fit_result_to_json(res));
  for (const char* key : {"model", "protocol", "data_hash", "params", "rmse", "solver", "optimizer", "starts", "seed"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["protocol"], "short");
  EXPECT_EQ(j["params"].size(), 9u);
  EXPECT_EQ(j["data_hash"], Objective::fixed_conductance(bm.model, p, data, 0.152).data_hash());
}

}  // namespace
}  // namespace ionfit
