#include <doctest.h>

#include <torch/torch.h>

#include "spatialgan/attention.hpp"
#include "spatialgan/errors.hpp"

using namespace spatialgan;
using namespace spatialgan::attention;

TEST_SUITE("attention") {
  TEST_CASE("GradCAM of a linear score is the ReLU of the weighted activation sum") {
    // score = sum_k w_k * mean(A_k): every pixel gradient of A_k is
    // w_k / (h w), so alpha_k = w_k / 9 on a 3x3 map.
    auto a = torch::rand({1, 2, 3, 3}, torch::kFloat64).requires_grad_(true);
    const auto w = torch::tensor({2.0, -1.0}, torch::kFloat64);
    const auto score = (a.mean({2, 3}) * w).sum(1);
    const auto alpha = gradcam_weights(a, score);
    CHECK(torch::allclose(alpha, (w / 9.0).unsqueeze(0), 1e-12, 1e-12));
    const auto map = gradcam_from_activation(a, score);
    const auto expected = torch::relu((a.detach() * (w / 9.0).view({1, 2, 1, 1})).sum(1));
    CHECK(torch::allclose(map, expected, 1e-12, 1e-12));
  }

  TEST_CASE("max normalization scales the peak to one and keeps zero maps") {
    auto maps = torch::zeros({2, 2, 2}, torch::kFloat64);
    maps[0][0][1] = 4.0;
    maps[0][1][1] = 2.0;
    const auto n = max_normalize(maps);
    CHECK(n[0].max().item<double>() == doctest::Approx(1.0));
    CHECK(n[0][1][1].item<double>() == doctest::Approx(0.5));
    CHECK(n[1].abs().max().item<double>() == 0.0);
  }

  TEST_CASE("single-image GradCAM on a discriminator") {
    const auto arch = networks::ArchitectureDescriptor::micro();
    Rng rng(1);
    networks::Discriminator d(arch, rng);
    const auto map = gradcam(d, torch::randn({3, 8, 8}));
    CHECK(map.values.rows() == 4);
    CHECK(map.source_layer == kDefaultLayer);
    CHECK(map.values.max() <= 1.0 + 1e-9);
    for (const double v : map.values.values()) CHECK(v >= 0.0);
    CHECK(attention_image(map, 8).height == 8);
  }

  TEST_CASE("GradCAM leaves parameter gradients untouched") {
    const auto arch = networks::ArchitectureDescriptor::micro();
    Rng rng(2);
    networks::Discriminator d(arch, rng);
    gradcam_batch(d, torch::randn({2, 3, 8, 8}));
    for (const auto& p : d->parameters()) CHECK_FALSE(p.grad().defined());
  }

  TEST_CASE("cosine similarity") {
    heatmaps::Map2D a(1, 2), b(1, 2);
    a.at(0, 0) = 1.0;
    b.at(0, 0) = 2.0;
    CHECK(cosine_similarity(a, b) == doctest::Approx(1.0));
    b.at(0, 0) = 0.0;
    b.at(0, 1) = 1.0;
    CHECK(cosine_similarity(a, b) == doctest::Approx(0.0));
    CHECK_THROWS_AS(cosine_similarity(a, heatmaps::Map2D(2, 2)), InvalidArgument);
  }

  TEST_CASE("zero noise reproduces the clean map") {
    const auto arch = networks::ArchitectureDescriptor::micro();
    Rng rng(3);
    networks::Discriminator d(arch, rng);
    const auto probes = attention_probe_noise(d, torch::randn({3, 8, 8}), {0.0, 0.5}, rng);
    REQUIRE(probes.size() == 2);
    CHECK(probes[0].similarity == doctest::Approx(1.0));
  }
}
