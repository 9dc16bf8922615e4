#include <doctest.h>

#include <torch/torch.h>

#include <cmath>

#include "spatialgan/errors.hpp"
#include "spatialgan/synth_data.hpp"
#include "spatialgan/training.hpp"

using namespace spatialgan;
using namespace spatialgan::training;

namespace {

TrainConfig micro_config(networks::GeneratorMode mode) {
  TrainConfig config;
  config.arch = networks::ArchitectureDescriptor::micro(mode);
  config.batch_size = 4;
  config.r1_interval = 2;
  return config;
}

RealDataset micro_data(int resolution) {
  Rng rng(9);
  synth::SceneConfig scenes;
  scenes.resolution = resolution;
  scenes.min_size = 1.0;
  scenes.max_size = 2.0;
  std::vector<Image> images;
  for (int i = 0; i < 8; ++i) images.push_back(synth::generate_scene(rng, scenes).image);
  return RealDataset::from_images(images);
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("logistic losses of a constant-zero discriminator") {
    const auto zero = torch::zeros({5}, torch::kFloat64);
    CHECK(d_logistic_loss(zero, zero).item<double>() == doctest::Approx(2.0 * std::log(2.0)));
    CHECK(g_logistic_loss(zero).item<double>() == doctest::Approx(std::log(2.0)));
  }

  TEST_CASE("R1 of a linear score is the squared weight norm") {
    auto x = torch::randn({3, 4}, torch::kFloat64).requires_grad_(true);
    const auto w = torch::tensor({1.0, -2.0, 0.5, 0.0}, torch::kFloat64);
    const auto score = (x * w).sum(1);
    CHECK(r1_penalty(score, x).item<double>() == doctest::Approx(1.0 + 4.0 + 0.25));
  }

  TEST_CASE("alignment below tau contributes nothing") {
    const auto heat = torch::zeros({2, 4, 4}, torch::kFloat64);
    auto att = torch::zeros({2, 4, 4}, torch::kFloat64);
    att[1].fill_(0.5);
    att.requires_grad_(true);
    const auto loss = align_loss(att, heat, 0.25);
    CHECK(loss.truncation_rate == doctest::Approx(0.5));
    CHECK(loss.loss.item<double>() == doctest::Approx(0.25));
    loss.loss.backward();
    CHECK(att.grad()[0].abs().max().item<double>() == 0.0);
    CHECK(att.grad()[1].abs().max().item<double>() > 0.0);
  }

  TEST_CASE("indoor alignment takes the best candidate") {
    auto att = torch::zeros({1, 2, 2}, torch::kFloat64);
    att[0][0][0] = 1.0;
    auto cands = torch::zeros({1, 2, 2, 2}, torch::kFloat64);
    cands[0][0].fill_(1.0);
    cands[0][1][0][0] = 1.0;
    const auto loss = align_loss_indoor(att, cands, 0.0);
    CHECK(loss.distance[0].item<double>() == doctest::Approx(0.0));
  }

  TEST_CASE("a generator step leaves the discriminator bit-identical") {
    Trainer trainer(micro_config(networks::GeneratorMode::kHierarchical), micro_data(8), 1);
    LossReport report;
    trainer.discriminator_step(report);
    std::vector<torch::Tensor> before;
    for (const auto& p : trainer.discriminator()->parameters()) before.push_back(p.detach().clone());
    std::vector<torch::Tensor> g_before;
    for (const auto& p : trainer.generator()->parameters()) g_before.push_back(p.detach().clone());
    trainer.generator_step(report);
    const auto after = trainer.discriminator()->parameters();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(torch::equal(before[i], after[i]));
    bool g_changed = false;
    const auto g_after = trainer.generator()->parameters();
    for (std::size_t i = 0; i < g_before.size(); ++i) g_changed = g_changed || !torch::equal(g_before[i], g_after[i]);
    CHECK(g_changed);
  }

  TEST_CASE("seeded steps are reproducible and R1 is lazy") {
    for (const auto mode : {networks::GeneratorMode::kHierarchical, networks::GeneratorMode::kIndoor}) {
      Trainer a(micro_config(mode), micro_data(8), 2);
      Trainer b(micro_config(mode), micro_data(8), 2);
      for (int i = 0; i < 4; ++i) {
        const auto ra = a.step();
        const auto rb = b.step();
        CHECK(ra.to_json() == rb.to_json());
        CHECK(ra.r1_applied == (i % 2 == 0));
        CHECK(std::isfinite(ra.align));
      }
      CHECK(a.step_count() == 4);
    }
  }

  TEST_CASE("configuration validation and JSON merge") {
    TrainConfig config;
    config.merge_json({{"batch_size", 8}, {"tau", 0.1}});
    CHECK(config.batch_size == 8);
    CHECK(config.tau == doctest::Approx(0.1));
    config.batch_size = 0;
    CHECK_THROWS_AS(config.validate(), InvalidArgument);
  }

  TEST_CASE("image tensors round trip through [-1, 1]") {
    Image image(2, 2, 3, 0.0f);
    image.at(1, 0, 2) = 1.0f;
    image.at(0, 1, 0) = 128.0f / 255.0f;
    const auto t = image_to_tensor(image);
    CHECK(t.min().item<double>() == doctest::Approx(-1.0));
    CHECK(tensor_to_image(t) == image);
  }
}
