#include "ionfit/simulator.hpp"

#include <benchmark/benchmark.h>

#include <vector>

namespace {

const char* const kProtocols[] = {"d0_ap", "d1", "d2", "d3", "d4", "d5"};

void BM_SimulateProtocol(benchmark::State& state) {
  const auto bm = ionfit::builtin_model(state.range(1) == 0 ? "beattie" : "wang");
  const ionfit::Simulator sim(bm.model, ionfit::builtin_protocol(kProtocols[state.range(0)]));
  std::vector<double> out(sim.times().size());
  for (auto _ : state) {
    sim.simulate_current(bm.defaults, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(out.size()));
  state.SetLabel(std::string(kProtocols[state.range(0)]) + (state.range(1) == 0 ? "/beattie" : "/wang"));
}
BENCHMARK(BM_SimulateProtocol)->ArgsProduct({{0, 1, 2, 3, 4, 5}, {0, 1}})->Unit(benchmark::kMillisecond);

}  // namespace
