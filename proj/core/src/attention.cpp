#include "spatialgan/attention.hpp"

#include <cmath>

#include "spatialgan/errors.hpp"
#include "spatialgan/layers.hpp"

namespace spatialgan::attention {
namespace {

heatmaps::Map2D to_map(const torch::Tensor& map2d) {
  const auto m = map2d.detach().to(torch::kDouble).contiguous();
  heatmaps::Map2D out(static_cast<int>(m.size(0)), static_cast<int>(m.size(1)));
  const auto* data = m.data_ptr<double>();
  auto values = out.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = data[i];
  return out;
}

torch::Tensor as_batch(const torch::Tensor& image) {
  if (image.dim() == 3) return image.unsqueeze(0);
  if (image.dim() == 4 && image.size(0) == 1) return image;
  throw InvalidArgument("expected a single image");
}

}  // namespace

torch::Tensor gradcam_weights(const torch::Tensor& activation, const torch::Tensor& score, Objective objective,
                              bool create_graph) {
  const auto target = (objective == Objective::kMaximize ? score : -score).sum();
  const auto grads = torch::autograd::grad({target}, {activation}, /*grad_outputs=*/{}, /*retain_graph=*/true,
                                           create_graph, /*allow_unused=*/true)[0];
  if (!grads.defined()) return torch::zeros({activation.size(0), activation.size(1)}, activation.options());
  return grads.mean({2, 3});
}

torch::Tensor gradcam_from_activation(const torch::Tensor& activation, const torch::Tensor& score, Objective objective,
                                      bool create_graph) {
  const auto alpha = gradcam_weights(activation, score, objective, create_graph);
  return torch::relu((alpha.unsqueeze(-1).unsqueeze(-1) * activation).sum(1));
}

torch::Tensor max_normalize(const torch::Tensor& maps) {
  const auto peak = maps.flatten(1).amax(1).view({-1, 1, 1});
  const auto positive = peak > 0;
  return torch::where(positive, maps / torch::where(positive, peak, torch::ones_like(peak)), torch::zeros_like(maps));
}

torch::Tensor gradcam_batch(const networks::Discriminator& discriminator, const torch::Tensor& images,
                            const std::string& layer, Objective objective, Normalization normalization,
                            bool create_graph) {
  torch::AutoGradMode grad_mode(true);
  const auto out = discriminator->forward(images, /*capture=*/true);
  const auto& activation = out.trace.activation(layer);
  if (!activation.requires_grad()) throw InvalidArgument("activation is not part of an autograd graph");
  auto maps = gradcam_from_activation(activation, out.score, objective, create_graph);
  return normalization == Normalization::kMax ? max_normalize(maps) : maps;
}

AttentionMap gradcam(const networks::Discriminator& discriminator, const torch::Tensor& image,
                     const std::string& layer, Objective objective, Normalization normalization) {
  // Parameters stay frozen; gradients are only taken w.r.t. the activation.
  const auto input = as_batch(image).detach().requires_grad_(true);
  const auto maps = gradcam_batch(discriminator, input, layer, objective, normalization, false);
  return {to_map(maps[0]), layer, normalization};
}

double cosine_similarity(const heatmaps::Map2D& a, const heatmaps::Map2D& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("map shape mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  const auto va = a.values();
  const auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    dot += va[i] * vb[i];
    na += va[i] * va[i];
    nb += vb[i] * vb[i];
  }
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

std::vector<NoiseProbe> attention_probe_noise(const networks::Discriminator& discriminator, const torch::Tensor& image,
                                              const std::vector<double>& sigmas, Rng& rng, const std::string& layer) {
  const auto clean_input = as_batch(image).detach();
  const auto clean = gradcam(discriminator, clean_input, layer);
  std::vector<NoiseProbe> out;
  for (const double sigma : sigmas) {
    if (sigma < 0.0) throw InvalidArgument("noise sigma must be >= 0");
    NoiseProbe probe;
    probe.sigma = sigma;
    if (sigma == 0.0) {
      probe.map = clean;
    } else {
      const auto noise = randn(rng, std::vector<int64_t>(clean_input.sizes().begin(), clean_input.sizes().end()))
                             .to(clean_input.dtype());
      probe.map = gradcam(discriminator, clean_input + noise * sigma, layer);
    }
    probe.similarity = cosine_similarity(clean.values, probe.map.values);
    out.push_back(std::move(probe));
  }
  return out;
}

std::vector<std::vector<double>> attention_probe_consistency(
    const std::vector<networks::Discriminator>& discriminators, const torch::Tensor& image, const std::string& layer) {
  std::vector<AttentionMap> maps;
  for (const auto& d : discriminators) maps.push_back(gradcam(d, image, layer));
  const std::size_t n = maps.size();
  std::vector<std::vector<double>> sim(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      sim[i][j] = sim[j][i] = cosine_similarity(maps[i].values, maps[j].values);
    }
  }
  return sim;
}

Image attention_image(const AttentionMap& map, int resolution) {
  const auto up = heatmaps::resize_heatmap(map.values, resolution);
  const double peak = up.max();
  Image out(resolution, resolution, 1);
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const double v = peak > 0.0 && map.normalization == Normalization::kNone ? up.at(y, x) / peak : up.at(y, x);
      out.at(y, x, 0) = quantize_u8(static_cast<float>(std::clamp(v, 0.0, 1.0)));
    }
  }
  return out;
}

}  // namespace spatialgan::attention
