#include <benchmark/benchmark.h>

#include "spatialgan/attention.hpp"
#include "spatialgan/networks.hpp"

namespace {

using namespace spatialgan;

void BM_GeneratorForward(benchmark::State& state) {
  torch::NoGradGuard no_grad;
  Rng rng(3);
  auto arch = networks::ArchitectureDescriptor::indoor();
  networks::Generator g(arch, rng);
  const auto latents = networks::sample_latents(16, arch, rng);
  const auto inputs = networks::heatmap_inputs(networks::sample_specs(16, arch, {}, rng), arch);
  for (auto _ : state) benchmark::DoNotOptimize(g->forward(latents, inputs).image);
}
BENCHMARK(BM_GeneratorForward)->Unit(benchmark::kMillisecond);

void BM_GradCamBatch(benchmark::State& state) {
  Rng rng(3);
  auto arch = networks::ArchitectureDescriptor::indoor();
  networks::Discriminator d(arch, rng);
  const auto images = randn(rng, {16, 3, 32, 32}).tanh().requires_grad_(true);
  for (auto _ : state) benchmark::DoNotOptimize(attention::gradcam_batch(d, images));
}
BENCHMARK(BM_GradCamBatch)->Unit(benchmark::kMillisecond);

}  // namespace
