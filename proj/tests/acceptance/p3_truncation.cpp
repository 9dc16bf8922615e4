// Per-sample truncation of the alignment loss and the min-form indoor loss.
#include "checker.hpp"
#include "criteria.hpp"
#include "spatialgan/attention.hpp"
#include "spatialgan/heatmaps.hpp"
#include "spatialgan/training.hpp"

namespace acceptance {

using namespace spatialgan;

namespace {

constexpr double kTau = 0.25;

heatmaps::Map2D random_map(int res, Rng& rng) {
  heatmaps::Map2D m(res, res);
  for (auto& v : m.values()) v = rng.uniform(0.0, 1.0);
  return m;
}

}  // namespace

bool p3(const Context&, std::ostream& detail) {
  Checker check(detail);

  // Mixed batch: sample 0 sits below tau, sample 1 above. The truncated
  // sample contributes exactly nothing to value or gradient.
  {
    const auto heat = torch::full({2, 4, 4}, 0.5, torch::kFloat64);
    auto init = torch::full({2, 4, 4}, 0.5, torch::kFloat64);
    init[0] += 0.1;   // mean |a - h| = 0.1 < tau
    init[1] += 0.4;   // mean |a - h| = 0.4 >= tau
    const auto attention = init.clone().requires_grad_(true);
    const auto out = training::align_loss(attention, heat, kTau);
    const auto grad = torch::autograd::grad({out.loss}, {attention})[0];
    check(torch::equal(grad[0], torch::zeros_like(grad[0])), "gradient of the truncated sample is not exactly zero");
    // Kept sample: d/da mean_b(mean_hw |a - h|) = sign / (N * h * w).
    check.near(grad[1][0][0].item<double>(), 1.0 / (2 * 16), 1e-12, "kept-sample gradient");
    check.near(out.loss.item<double>(), 0.4 / 2.0, 1e-12, "batch mean counts truncated samples as zero");
    check.near(out.truncation_rate, 0.5, 0.0, "truncation rate");
    check.near(out.distance[0].item<double>(), 0.1, 1e-12, "untruncated distance kept for reporting");

    const auto all_low = (torch::full({3, 4, 4}, 0.5, torch::kFloat64) + 0.2).requires_grad_(true);
    const auto low = training::align_loss(all_low, torch::full({3, 4, 4}, 0.5, torch::kFloat64), kTau);
    const auto g_low = torch::autograd::grad({low.loss}, {all_low}, {}, false, false, true)[0];
    check(!g_low.defined() || torch::equal(g_low, torch::zeros_like(g_low)), "fully truncated batch has gradient");
    check(low.loss.item<double>() == 0.0, "fully truncated batch has non-zero loss");
  }

  // Same through the indoor form: the minimum over candidates is truncated.
  {
    const auto attention = torch::full({1, 4, 4}, 0.3, torch::kFloat64).requires_grad_(true);
    auto candidates = torch::zeros({1, 3, 4, 4}, torch::kFloat64);
    candidates[0][1].fill_(0.2);  // distance 0.1 < tau
    candidates[0][2].fill_(0.9);
    const auto out = training::align_loss_indoor(attention, candidates, kTau);
    const auto g = torch::autograd::grad({out.loss}, {attention}, {}, false, false, true)[0];
    check(!g.defined() || torch::equal(g, torch::zeros_like(g)), "indoor truncated gradient not zero");
    check.near(out.distance[0].item<double>(), 0.1, 1e-12, "indoor min distance");
  }

  // Indoor <= plain on random instances: sub-heatmaps plus their sum as
  // candidates vs the sum alone.
  {
    Rng rng(7);
    int violations = 0;
    int instances = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = 1 + static_cast<int>(rng.below(4));
      attention::AttentionMap att{random_map(4, rng), "b4"};
      std::vector<heatmaps::Map2D> candidates;
      heatmaps::Map2D sum(32, 32);
      for (int i = 0; i < n; ++i) {
        const auto sub = heatmaps::gaussian_map(heatmaps::Grid(32), {rng.uniform(-1, 1), rng.uniform(-1, 1)},
                                                rng.uniform(0.05, 1.0));
        sum += sub;
        candidates.push_back(sub);
      }
      candidates.push_back(sum);
      const double tau = trial % 2 == 0 ? 0.0 : kTau;
      const double indoor = training::align_loss_indoor(att, candidates, tau);
      const double plain = training::align_loss(att, sum, tau);
      violations += indoor > plain ? 1 : 0;
      ++instances;
    }
    check(violations == 0, std::to_string(violations) + " instances with indoor > plain");
    check(instances == 1000, "instance count");
  }
  return check.pass();
}

}  // namespace acceptance
