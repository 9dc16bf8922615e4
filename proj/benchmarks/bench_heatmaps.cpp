#include <benchmark/benchmark.h>

#include "spatialgan/heatmaps.hpp"
#include "spatialgan/networks.hpp"

namespace {

using namespace spatialgan;

void BM_SampleHierarchical(benchmark::State& state) {
  Rng rng(1);
  const int res = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(heatmaps::sample_hierarchical(res, 0.5, rng));
}
BENCHMARK(BM_SampleHierarchical)->Arg(32)->Arg(256);

void BM_RenderHierarchical(benchmark::State& state) {
  Rng rng(1);
  const int res = static_cast<int>(state.range(0));
  const heatmaps::HeatmapSpec spec = heatmaps::sample_hierarchical(res, 0.5, rng);
  for (auto _ : state) benchmark::DoNotOptimize(heatmaps::render(spec, res));
}
BENCHMARK(BM_RenderHierarchical)->Arg(32)->Arg(128);

void BM_RenderMultiObject(benchmark::State& state) {
  Rng rng(1);
  const int res = static_cast<int>(state.range(0));
  const heatmaps::HeatmapSpec spec = heatmaps::sample_multiobject(res, 3, 0.25, rng);
  for (auto _ : state) benchmark::DoNotOptimize(heatmaps::render(spec, res));
}
BENCHMARK(BM_RenderMultiObject)->Arg(32)->Arg(128);

// Coarse processing renders small maps; the full path renders at image size.
void BM_HeatmapInputs(benchmark::State& state) {
  Rng rng(1);
  auto arch = networks::ArchitectureDescriptor();
  arch.coarse = state.range(0) != 0;
  const auto specs = networks::sample_specs(16, arch, {}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(networks::heatmap_inputs(specs, arch));
}
BENCHMARK(BM_HeatmapInputs)->Arg(0)->Arg(1);

}  // namespace
