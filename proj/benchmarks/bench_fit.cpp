#include "ionfit/fitting.hpp"

#include <benchmark/benchmark.h>

namespace {

// One warm-started Beattie fit with g fixed, on noise-free d1 data.
void BM_FitBeattieWarm(benchmark::State& state) {
  const auto bm = ionfit::builtin_model("beattie");
  const auto protocol = ionfit::builtin_protocol("d1");
  const auto data = ionfit::simulate(bm.model, bm.defaults, protocol);
  const auto objective = ionfit::Objective::fixed_conductance(bm.model, protocol, data, bm.defaults.conductance);
  ionfit::FitConfig cfg;
  cfg.n_starts = 1;
  cfg.max_evals = state.range(0);
  auto guess = bm.defaults;
  for (auto& k : guess.kinetic) k *= 1.1;
  cfg.initial_guesses = {guess};
  for (auto _ : state) benchmark::DoNotOptimize(ionfit::fit(objective, cfg).rmse);
}
BENCHMARK(BM_FitBeattieWarm)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond)->Iterations(3);

void BM_ObjectiveEvaluation(benchmark::State& state) {
  const auto bm = ionfit::builtin_model("wang");
  const auto protocol = ionfit::builtin_protocol("d3");
  const auto data = ionfit::simulate(bm.model, bm.defaults, protocol);
  const auto objective = ionfit::Objective::fixed_conductance(bm.model, protocol, data, bm.defaults.conductance);
  const Eigen::VectorXd x = objective.to_coords(bm.defaults);
  for (auto _ : state) benchmark::DoNotOptimize(objective.penalized(x));
}
BENCHMARK(BM_ObjectiveEvaluation)->Unit(benchmark::kMillisecond);

}  // namespace
