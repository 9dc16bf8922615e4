// Analytic gradients against central finite differences, in float64.
#include <functional>

#include "checker.hpp"
#include "criteria.hpp"
#include "spatialgan/attention.hpp"
#include "spatialgan/networks.hpp"
#include "spatialgan/spatial_encoding.hpp"
#include "spatialgan/training.hpp"

namespace acceptance {

using namespace spatialgan;

namespace {

constexpr double kTol = 1e-3;
constexpr double kStep = 1e-6;

// Central difference of f with respect to one element of `t`, perturbed in
// place and restored.
double finite_difference(const torch::Tensor& t, int64_t index, const std::function<double()>& f) {
  auto flat = t.detach().view({-1});
  const double original = flat[index].item<double>();
  {
    torch::NoGradGuard no_grad;
    flat[index] = original + kStep;
  }
  const double plus = f();
  {
    torch::NoGradGuard no_grad;
    flat[index] = original - kStep;
  }
  const double minus = f();
  {
    torch::NoGradGuard no_grad;
    flat[index] = original;
  }
  return (plus - minus) / (2.0 * kStep);
}

void randomize(torch::nn::Module& module, double scale) {
  torch::NoGradGuard no_grad;
  for (auto& p : module.parameters()) p.copy_(torch::randn_like(p) * scale);
}

// Compares autograd gradients of `loss` with finite differences on a few
// entries of every parameter that receives a gradient.
void check_parameter_grads(Checker& check, const std::string& what, const std::vector<torch::Tensor>& params,
                           const std::function<torch::Tensor()>& loss, int per_param = 2) {
  const auto value = loss();
  const auto grads = torch::autograd::grad({value}, params, {}, false, false, /*allow_unused=*/true);
  const auto f = [&] { return loss().item<double>(); };
  int compared = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].defined()) continue;
    const auto g = grads[i].reshape({-1});
    const auto order = torch::argsort(g.abs(), 0, /*descending=*/true);
    for (int j = 0; j < per_param && j < g.numel(); ++j) {
      const auto idx = order[j].item<int64_t>();
      check.rel(g[idx].item<double>(), finite_difference(params[i], idx, f), kTol,
                what + " param " + std::to_string(i) + "[" + std::to_string(idx) + "]", 1e-8);
      ++compared;
    }
  }
  check(compared > 0, what + ": no parameter gradients");
}

void gradcam_alpha(Checker& check) {
  Rng rng(11);
  networks::Discriminator d(networks::ArchitectureDescriptor::micro(), rng);
  d->to(torch::kFloat64);
  randomize(*d, 0.7);
  const auto images = torch::randn({2, 3, 8, 8}, torch::kFloat64);
  const auto activation = d->forward(images, true).trace.activation("b4").detach().requires_grad_(true);
  const auto score = d->head_from("b4", activation);
  const auto alpha = attention::gradcam_weights(activation, score);
  const auto score_of = [&](int64_t sample) {
    return [&, sample] {
      torch::NoGradGuard no_grad;
      return d->head_from("b4", activation)[sample].item<double>();
    };
  };
  const auto hw = activation.size(2) * activation.size(3);
  for (int64_t n = 0; n < activation.size(0); ++n) {
    for (int64_t k = 0; k < activation.size(1); ++k) {
      double sum = 0.0;
      for (int64_t p = 0; p < hw; ++p) {
        const auto index = (n * activation.size(1) + k) * hw + p;
        sum += finite_difference(activation, index, score_of(n));
      }
      check.rel(alpha[n][k].item<double>(), sum / static_cast<double>(hw), kTol,
                "gradcam alpha[" + std::to_string(n) + "][" + std::to_string(k) + "]", 1e-9);
    }
  }
}

void sel_norm_jacobians(Checker& check) {
  Rng rng(12);
  encoding::SelNorm sel(4, 2, rng, encoding::ProcessingOrder::kCoarse, 6);
  sel->to(torch::kFloat64);
  randomize(*sel, 0.5);
  const auto features = torch::randn({1, 4, 4, 4}, torch::kFloat64).requires_grad_(true);
  const auto heat = torch::rand({1, 2, 4, 4}, torch::kFloat64).requires_grad_(true);
  const auto weights = torch::randn({1, 4, 4, 4}, torch::kFloat64);
  const auto objective = [&] { return (sel->forward(features, heat) * weights).sum(); };
  const auto grads = torch::autograd::grad({objective()}, {features, heat});
  const auto f = [&] {
    torch::NoGradGuard no_grad;
    return objective().item<double>();
  };
  for (int64_t i = 0; i < features.numel(); ++i) {
    check.rel(grads[0].reshape({-1})[i].item<double>(), finite_difference(features, i, f), kTol,
              "SEL_norm dF[" + std::to_string(i) + "]", 1e-8);
  }
  for (int64_t i = 0; i < heat.numel(); ++i) {
    check.rel(grads[1].reshape({-1})[i].item<double>(), finite_difference(heat, i, f), kTol,
              "SEL_norm dH[" + std::to_string(i) + "]", 1e-8);
  }
  check_parameter_grads(check, "SEL_norm", sel->parameters(), objective);
}

struct MicroNets {
  networks::ArchitectureDescriptor arch;
  networks::Generator g{nullptr};
  networks::Discriminator d{nullptr};
  torch::Tensor latents;
  std::vector<heatmaps::HeatmapSpec> specs;
  std::vector<torch::Tensor> heat;

  explicit MicroNets(networks::GeneratorMode mode, std::uint64_t seed) : arch(networks::ArchitectureDescriptor::micro(mode)) {
    Rng rng(seed);
    g = networks::Generator(arch, rng);
    d = networks::Discriminator(arch, rng);
    g->to(torch::kFloat64);
    d->to(torch::kFloat64);
    // Move every layer off its zero initialization so all paths carry gradient.
    randomize(*g, 0.5);
    randomize(*d, 0.5);
    latents = networks::sample_latents(2, arch, rng).to(torch::kFloat64);
    specs = networks::sample_specs(2, arch, {}, rng);
    for (const auto& h : networks::heatmap_inputs(specs, arch)) heat.push_back(h.to(torch::kFloat64));
  }

  torch::Tensor fake() const { return g->forward(latents, heat).image; }
};

void adversarial_and_r1(Checker& check) {
  MicroNets nets(networks::GeneratorMode::kHierarchical, 13);
  const auto real = torch::randn({2, 3, 8, 8}, torch::kFloat64);
  const double gamma = 2.0;
  check_parameter_grads(check, "D loss", nets.d->parameters(),
                        [&] { return training::adversarial_losses(nets.d, real, nets.fake().detach(), gamma).d_loss; });
  check_parameter_grads(check, "G loss", nets.g->parameters(),
                        [&] { return training::adversarial_losses(nets.d, real, nets.fake(), gamma).g_loss; });
  check_parameter_grads(check, "R1", nets.d->parameters(),
                        [&] { return training::adversarial_losses(nets.d, real, nets.fake().detach(), gamma).r1; });

  // R1 value: mean over samples of the squared input-gradient norm, with the
  // input gradient itself taken by finite differences.
  const auto r1 = training::adversarial_losses(nets.d, real, nets.fake().detach(), gamma).r1.item<double>();
  double total = 0.0;
  for (int64_t n = 0; n < real.size(0); ++n) {
    const auto f = [&, n] {
      torch::NoGradGuard no_grad;
      return nets.d->forward(real).score[n].item<double>();
    };
    const auto per_sample = real[n].numel();
    for (int64_t i = 0; i < per_sample; ++i) {
      const double g = finite_difference(real, n * per_sample + i, f);
      total += g * g;
    }
  }
  check.rel(r1, total / static_cast<double>(real.size(0)), kTol, "R1 value");
}

void alignment(Checker& check, networks::GeneratorMode mode) {
  MicroNets nets(mode, mode == networks::GeneratorMode::kIndoor ? 14 : 15);
  training::TrainConfig config;
  config.arch = nets.arch;
  config.tau = 0.0;  // no truncation: every sample carries gradient
  const auto name = std::string("align ") + networks::to_string(mode);
  check_parameter_grads(check, name, nets.g->parameters(), [&] {
    const auto scored = nets.d->forward(nets.fake(), true);
    return training::alignment_term(scored, nets.specs, config, /*create_graph=*/true).loss;
  });
}

}  // namespace

bool p2(const Context&, std::ostream& detail) {
  torch::manual_seed(0);
  Checker check(detail);
  gradcam_alpha(check);
  sel_norm_jacobians(check);
  adversarial_and_r1(check);
  alignment(check, networks::GeneratorMode::kHierarchical);
  alignment(check, networks::GeneratorMode::kIndoor);
  return check.pass();
}

}  // namespace acceptance
