#include "ionfit/expm.hpp"
#include "ionfit/markov_model.hpp"

#include <benchmark/benchmark.h>

namespace {

void BM_ExpmRateMatrix(benchmark::State& state) {
  const auto bm = ionfit::builtin_model(state.range(0) == 0 ? "beattie" : "wang");
  const Eigen::MatrixXd a = ionfit::assemble_matrix(bm.model, bm.defaults, 20.0) * 10.0;
  for (auto _ : state) benchmark::DoNotOptimize(ionfit::expm(a));
}
BENCHMARK(BM_ExpmRateMatrix)->Arg(0)->Arg(1);

void BM_AssembleMatrix(benchmark::State& state) {
  const auto bm = ionfit::builtin_model("wang");
  double v = -120.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ionfit::assemble_matrix(bm.model, bm.defaults, v));
    v = v > 40.0 ? -120.0 : v + 0.5;
  }
}
BENCHMARK(BM_AssembleMatrix);

}  // namespace
