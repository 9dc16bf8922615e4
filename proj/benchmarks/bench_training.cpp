#include <benchmark/benchmark.h>

#include "spatialgan/synth_data.hpp"
#include "spatialgan/training.hpp"

namespace {

using namespace spatialgan;

training::RealDataset scenes(int count, int resolution) {
  Rng rng(7);
  synth::SceneConfig config;
  config.resolution = resolution;
  std::vector<Image> images;
  for (int i = 0; i < count; ++i) images.push_back(synth::generate_scene(rng, config).image);
  return training::RealDataset::from_images(images);
}

void run_steps(benchmark::State& state, training::TrainConfig config) {
  config.batch_size = static_cast<int>(state.range(0));
  training::Trainer trainer(config, scenes(64, config.arch.image_resolution), 1);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step());
  state.SetItemsProcessed(state.iterations() * config.batch_size);
}

void BM_TrainStepIndoor(benchmark::State& state) {
  training::TrainConfig config;
  config.arch = networks::ArchitectureDescriptor::indoor();
  run_steps(state, config);
}
BENCHMARK(BM_TrainStepIndoor)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_TrainStepBaseline(benchmark::State& state) {
  training::TrainConfig config;
  config.arch = networks::ArchitectureDescriptor::indoor();
  config.arch.sel = networks::SelVariant::kNone;
  run_steps(state, config);
}
BENCHMARK(BM_TrainStepBaseline)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_TrainStepHierarchical(benchmark::State& state) {
  training::TrainConfig config;
  run_steps(state, config);
}
BENCHMARK(BM_TrainStepHierarchical)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace
