#include "ionfit/errors.hpp"
#include "ionfit/experiments.hpp"

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ionfit {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class ExperimentTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ionfit_exp_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Two short training protocols and one validation protocol, sampled at 200 Hz.
  ExperimentConfig small_case1() {
    const std::vector<Protocol> ps{
        Protocol("ta", {{100.0, -80.0, -80.0}, {400.0, 40.0, 40.0}, {300.0, -120.0, 0.0}}),
        Protocol("tb", {{100.0, -80.0, -80.0}, {300.0, 0.0, 0.0}, {400.0, -60.0, -60.0}}),
        Protocol("va", {{100.0, -80.0, -80.0}, {500.0, -100.0, 30.0}, {200.0, -40.0, -40.0}})};
    for (const auto& p : ps) save_protocol_file(p, dir_ / (p.name() + ".txt"));
    auto c = default_config(CaseKind::case1);
    c.training_protocols = {(dir_ / "ta.txt").string(), (dir_ / "tb.txt").string()};
    c.validation_protocols = {(dir_ / "va.txt").string()};
    c.sample_rate = 200.0;
    c.n_repeats = 2;
    c.lambdas = {0.5, 1.0};
    c.fit.n_starts = 1;
    c.fit.max_evals = 300;
    c.fit.polish_iterations = 5;
    return c;
  }

  fs::path dir_;
};

TEST(ExperimentConfig, JsonRoundTripAndHash) {
  auto c = default_config(CaseKind::case2);
  EXPECT_EQ(c.dgp_model, "wang");
  EXPECT_EQ(c.fit_models, (std::vector<std::string>{"wang", "beattie"}));
  EXPECT_TRUE(c.cross_seed);
  c.n_repeats = 3;
  c.sigma = 0.02;
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  auto other = c;
  other.jobs = 7;
  other.output_dir = "elsewhere";
  EXPECT_EQ(config_hash(other), config_hash(c));
  other.master_seed = 2;
  EXPECT_NE(config_hash(other), config_hash(c));
}

TEST(ExperimentConfig, RejectsBadInput) {
  EXPECT_THROW(config_from_json("{}"), ParseError);
  EXPECT_THROW(config_from_json(R"({"case":"case1","n_repeat":2})"), ParseError);
  EXPECT_THROW(config_from_json(R"({"case":"case7"})"), ParseError);
  EXPECT_THROW(config_from_json(R"({"case":"case1","fit":{"starts":2}})"), ParseError);
  const auto c = config_from_json(R"({"case":"case1","dgp_model":"wang"})");
  EXPECT_EQ(c.fit_models, (std::vector<std::string>{"wang"}));
}

TEST(ExperimentConfig, EffectiveRateAndSigma) {
  auto c = default_config(CaseKind::case1);
  EXPECT_EQ(effective_sample_rate(c), 1000.0);
  EXPECT_NEAR(effective_sigma(c), 0.01 * std::sqrt(0.1), 1e-15);
  c.paper_scale = true;
  EXPECT_EQ(effective_sample_rate(c), 10000.0);
  EXPECT_EQ(effective_sigma(c), 0.01);
  c.sigma = 0.5;
  EXPECT_EQ(effective_sigma(c), 0.5);
  c.jobs = 3;
  EXPECT_EQ(effective_jobs(c), 3);
}

TEST(ParallelFor, RunsEveryTaskOnceAndPropagatesErrors) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(4, hits.size(), [&](std::size_t i) { ++hits[i]; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(2, 10, [](std::size_t i) { if (i == 5) throw DomainError("boom"); }), DomainError);
}

TEST(Seeds, DataSeedsDistinctPerProtocolAndRepeat) {
  const auto c = default_config(CaseKind::case1);
  EXPECT_NE(data_seed(c, "d1", 0), data_seed(c, "d1", 1));
  EXPECT_NE(data_seed(c, "d1", 0), data_seed(c, "d2", 0));
  EXPECT_EQ(data_seed(c, "d1", 0), data_seed(c, "d1", 0));
}

TEST_F(ExperimentTest, EmptyBundleWritesManifestOnly) {
  ExperimentBundle bundle;
  bundle.config = default_config(CaseKind::case1);
  EXPECT_EQ(bundle_exit_code(bundle), kExitTotalFailure);
  const auto files = write_report(bundle, dir_ / "out");
  EXPECT_EQ(files, (std::vector<std::string>{"manifest.json"}));
  const auto j = nlohmann::json::parse(slurp(dir_ / "out" / "manifest.json"));
  EXPECT_EQ(j["exit_code"], 3);
  EXPECT_EQ(j["version"], library_version());
}

TEST_F(ExperimentTest, SmallCase1IsReproducibleAcrossJobCounts) {
  auto c = small_case1();
  c.jobs = 1;
  const auto a = run_experiment(c);
  c.jobs = 2;
  const auto b = run_experiment(c);
  EXPECT_EQ(bundle_exit_code(a), kExitSuccess);
  ASSERT_EQ(a.branches.size(), 2u);
  EXPECT_EQ(a.branches[0].label.rfind("lambda=", 0), 0u);
  EXPECT_LT(*a.branches[0].lambda, *a.branches[1].lambda);
  EXPECT_EQ(a.crossval_columns, (std::vector<std::string>{"va", "ta", "tb"}));
  const auto& br = a.branches[1];
  ASSERT_TRUE(br.crossval_mean.has_value());
  EXPECT_EQ(br.crossval_mean->rmse.rows(), 2);
  EXPECT_EQ(br.crossval_mean->rmse.cols(), 3);
  for (const auto& f : br.fits[0]) EXPECT_DOUBLE_EQ(f->params.conductance, 0.152);
  for (const auto& f : a.branches[0].fits[1]) EXPECT_DOUBLE_EQ(f->params.conductance, 0.5 * 0.152);

  const auto fa = write_report(a, dir_ / "a");
  const auto fb = write_report(b, dir_ / "b");
  ASSERT_EQ(fa, fb);
  for (const auto& name : fa) EXPECT_EQ(slurp(dir_ / "a" / name), slurp(dir_ / "b" / name)) << name;
  EXPECT_NE(std::find(fa.begin(), fa.end(), "summary.json"), fa.end());

  const auto again = write_report(a, dir_ / "a2");
  for (const auto& name : again) EXPECT_EQ(slurp(dir_ / "a" / name), slurp(dir_ / "a2" / name)) << name;
}

TEST_F(ExperimentTest, ToyBundleReportsEstimates) {
  auto c = default_config(CaseKind::toy);
  c.n_repeats = 3;
  const auto bundle = run_experiment(c);
  ASSERT_TRUE(bundle.toy.has_value());
  EXPECT_EQ(bundle_exit_code(bundle), kExitSuccess);
  const auto files = write_report(bundle, dir_ / "toy");
  EXPECT_NE(std::find(files.begin(), files.end(), "toy_estimates.csv"), files.end());
  const auto csv = slurp(dir_ / "toy" / "toy_estimates.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 4 * 3);
}

}  // namespace
}  // namespace ionfit
