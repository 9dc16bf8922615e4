#include <doctest.h>

#include <torch/torch.h>

#include "spatialgan/errors.hpp"
#include "spatialgan/networks.hpp"

using namespace spatialgan;
using namespace spatialgan::networks;

TEST_SUITE("networks") {
  TEST_CASE("generator output shape and range in both modes") {
    for (const auto mode : {GeneratorMode::kHierarchical, GeneratorMode::kIndoor}) {
      const auto arch = ArchitectureDescriptor::micro(mode);
      Rng rng(1);
      Generator g(arch, rng);
      const auto specs = sample_specs(3, arch, {}, rng);
      const auto out = g->forward(sample_latents(3, arch, rng), heatmap_inputs(specs, arch));
      CHECK(out.image.sizes() == torch::IntArrayRef({3, 3, 8, 8}));
      CHECK(out.image.abs().max().item<double>() <= 1.0);
      CHECK(out.image.isfinite().all().item<bool>());
    }
  }

  TEST_CASE("same seed, same weights") {
    const auto arch = ArchitectureDescriptor::micro();
    Rng a(7), b(7);
    Generator ga(arch, a), gb(arch, b);
    const auto sa = named_state(*ga);
    const auto sb = named_state(*gb);
    REQUIRE(sa.size() == sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
      CHECK(sa[i].first == sb[i].first);
      CHECK(torch::equal(sa[i].second, sb[i].second));
    }
  }

  TEST_CASE("indoor latents carry one code per object plus background") {
    const auto arch = ArchitectureDescriptor::indoor();
    Rng rng(2);
    CHECK(sample_latents(5, arch, rng).sizes() == torch::IntArrayRef({5, arch.n_objects + 1, arch.latent_dim}));
  }

  TEST_CASE("discriminator captures named block activations") {
    const auto arch = ArchitectureDescriptor::micro();
    Rng rng(3);
    Discriminator d(arch, rng);
    const auto out = d->forward(torch::randn({2, 3, 8, 8}), true);
    CHECK(out.score.sizes() == torch::IntArrayRef({2}));
    for (const auto& name : d->layer_names()) CHECK(out.trace.activations.count(name) == 1);
  }

  TEST_CASE("descriptor JSON round trip and validation") {
    const auto arch = ArchitectureDescriptor::indoor();
    const auto back = ArchitectureDescriptor::from_json(arch.to_json());
    CHECK(back.to_json() == arch.to_json());
    auto bad = ArchitectureDescriptor{};
    bad.mode = GeneratorMode::kIndoor;
    bad.sel = SelVariant::kNorm;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    CHECK_THROWS_AS(parse_sel_variant("bogus"), InvalidArgument);
  }

  TEST_CASE("wrong heatmap inputs are rejected") {
    const auto arch = ArchitectureDescriptor::micro();
    Rng rng(4);
    Generator g(arch, rng);
    CHECK_THROWS_AS(g->forward(sample_latents(2, arch, rng), {}), InvalidArgument);
  }
}
