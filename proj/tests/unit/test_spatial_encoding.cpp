#include <doctest.h>

#include <torch/torch.h>

#include "spatialgan/errors.hpp"
#include "spatialgan/spatial_encoding.hpp"

using namespace spatialgan;
using namespace spatialgan::encoding;

TEST_SUITE("spatial_encoding") {
  TEST_CASE("instance norm maps [[1,3],[1,3]] to -1/+1") {
    const auto x = torch::tensor({1.0, 3.0, 1.0, 3.0}, torch::kFloat64).reshape({1, 1, 2, 2});
    const auto y = instance_norm(x, 0.0);
    const auto expected = torch::tensor({-1.0, 1.0, -1.0, 1.0}, torch::kFloat64).reshape({1, 1, 2, 2});
    CHECK(torch::allclose(y, expected, 1e-12, 1e-12));
  }

  TEST_CASE("instance norm is per sample and per channel") {
    torch::manual_seed(0);
    const auto x = torch::randn({2, 3, 5, 5}, torch::kFloat64) * 4.0 + 2.0;
    const auto y = instance_norm(x, 0.0);
    CHECK(y.mean({2, 3}).abs().max().item<double>() < 1e-12);
    CHECK((y.square().mean({2, 3}) - 1.0).abs().max().item<double>() < 1e-10);
  }

  TEST_CASE("SEL_norm starts as the identity") {
    Rng rng(1);
    SelNorm sel(8, 3, rng);
    const auto f = torch::randn({2, 8, 4, 4});
    const auto h = torch::rand({2, 3, 4, 4});
    CHECK(torch::equal(sel->forward(f, h), f));
  }

  TEST_CASE("SEL_concat starts as the identity") {
    Rng rng(2);
    SelConcat sel(8, 2, rng);
    const auto f = torch::randn({1, 8, 8, 8});
    CHECK(torch::equal(sel->forward(f, torch::rand({1, 2, 8, 8})), f));
  }

  TEST_CASE("indoor combination with one-hot heatmaps selects a style") {
    // Two objects; pixel (0, 0) belongs to object 0 only, pixel (0, 1) to
    // nothing.
    const auto styles = torch::tensor({1.0, 2.0, 10.0, 20.0}, torch::kFloat64).reshape({1, 2, 2});
    const auto background = torch::tensor({100.0, 200.0}, torch::kFloat64).reshape({1, 2});
    auto maps = torch::zeros({1, 2, 1, 2}, torch::kFloat64);
    maps[0][0][0][0] = 1.0;
    const auto out = sel_indoor_combine(styles, background, maps);
    REQUIRE(out.sizes() == torch::IntArrayRef({1, 2, 1, 2}));
    CHECK(out[0][0][0][0].item<double>() == doctest::Approx(101.0));
    CHECK(out[0][1][0][0].item<double>() == doctest::Approx(202.0));
    CHECK(out[0][0][0][1].item<double>() == doctest::Approx(100.0));
    CHECK(out[0][1][0][1].item<double>() == doctest::Approx(200.0));
  }

  TEST_CASE("indoor modulation multiplies and checks shapes") {
    const auto f = torch::full({1, 2, 3, 3}, 2.0);
    const auto s = torch::full({1, 2, 3, 3}, 0.5);
    CHECK(torch::allclose(sel_indoor_modulate(f, s), torch::ones({1, 2, 3, 3})));
    CHECK_THROWS_AS(sel_indoor_modulate(f, torch::ones({1, 2, 4, 4})), InvalidArgument);
  }

  TEST_CASE("coarse processing is cheaper than processing at full size") {
    CHECK(conv_flops(4, 3, 64) * 16 == doctest::Approx(conv_flops(16, 3, 64)));
    Rng rng(3);
    heatmaps::HeatmapSpec spec = heatmaps::sample_hierarchical(32, 0.5, rng);
    EqConv2d extractor(1, 4, 3, rng);
    const auto coarse = coarse_process(spec, 0, 4, 32, true, extractor);
    const auto full = coarse_process(spec, 0, 4, 32, false, extractor);
    CHECK(coarse.sizes() == torch::IntArrayRef({1, 4, 4, 4}));
    CHECK(full.sizes() == coarse.sizes());
    CHECK_THROWS_AS(coarse_process(spec, 0, 32, 32, true, extractor), InvalidArgument);
  }
}
