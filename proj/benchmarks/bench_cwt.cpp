#include <benchmark/benchmark.h>

#include <vector>

#include "tfd/cwt.hpp"
#include "tfd/datagen.hpp"

namespace {

std::vector<double> sample_day() {
  tfd::datagen::DayProfile profile;
  return tfd::datagen::synth_day(profile, 1).values;
}

void BM_RendererConstruction(benchmark::State& state) {
  for (auto _ : state) {
    tfd::cwt::ScalogramRenderer renderer;
    benchmark::DoNotOptimize(renderer);
  }
}
BENCHMARK(BM_RendererConstruction);

void BM_RenderScalogram(benchmark::State& state) {
  const tfd::cwt::ScalogramRenderer renderer;
  const std::vector<double> day = sample_day();
  for (auto _ : state) {
    tfd::cwt::Scalogram s = renderer.render(day);
    benchmark::DoNotOptimize(s.pixels.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_RenderScalogram);

void BM_DirectCwt(benchmark::State& state) {
  const std::vector<double> day = sample_day();
  const tfd::cwt::ScaleGrid grid = tfd::cwt::scale_grid_default();
  const std::vector<double> pos = tfd::cwt::positions_default(288, 64);
  for (auto _ : state) {
    tfd::Tensor<double> c = tfd::cwt::cwt(day, grid, pos);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_DirectCwt);

}  // namespace

BENCHMARK_MAIN();
