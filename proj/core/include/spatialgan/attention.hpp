#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "spatialgan/heatmaps.hpp"
#include "spatialgan/image_io.hpp"
#include "spatialgan/networks.hpp"

namespace spatialgan::attention {

inline constexpr const char* kDefaultLayer = "b4";

enum class Objective { kMaximize, kMinimize };
enum class Normalization { kMax, kNone };

struct AttentionMap {
  heatmaps::Map2D values;
  std::string source_layer;
  Normalization normalization = Normalization::kMax;
};

// GradCAM on an activation A (N, K, h, w) that `score` (N) depends on:
//   alpha_k = mean_{y,x} d(score)/dA_k,   map = ReLU(sum_k alpha_k A_k).
// With create_graph the result stays differentiable, which the alignment
// loss needs to reach the generator. Returns (N, h, w).
torch::Tensor gradcam_from_activation(const torch::Tensor& activation, const torch::Tensor& score,
                                      Objective objective = Objective::kMaximize, bool create_graph = false);

// Spatially averaged score gradients alpha (N, K).
torch::Tensor gradcam_weights(const torch::Tensor& activation, const torch::Tensor& score,
                              Objective objective = Objective::kMaximize, bool create_graph = false);

// Divides each map by its maximum when positive; all-zero maps stay zero.
torch::Tensor max_normalize(const torch::Tensor& maps);

// Batched GradCAM on the discriminator at `layer`. Only gradients with
// respect to the captured activation are taken; parameter gradients are
// never touched.
torch::Tensor gradcam_batch(const networks::Discriminator& discriminator, const torch::Tensor& images,
                            const std::string& layer = kDefaultLayer, Objective objective = Objective::kMaximize,
                            Normalization normalization = Normalization::kMax, bool create_graph = false);

// Single-image GradCAM; `image` is (3, R, R) or (1, 3, R, R).
AttentionMap gradcam(const networks::Discriminator& discriminator, const torch::Tensor& image,
                     const std::string& layer = kDefaultLayer, Objective objective = Objective::kMaximize,
                     Normalization normalization = Normalization::kMax);

double cosine_similarity(const heatmaps::Map2D& a, const heatmaps::Map2D& b);

struct NoiseProbe {
  double sigma = 0.0;
  AttentionMap map;
  double similarity = 1.0;
};

// Recomputes GradCAM under zero-mean Gaussian pixel noise of each sigma and
// reports cosine similarity to the clean map.
std::vector<NoiseProbe> attention_probe_noise(const networks::Discriminator& discriminator, const torch::Tensor& image,
                                              const std::vector<double>& sigmas, Rng& rng,
                                              const std::string& layer = kDefaultLayer);

// Pairwise cosine similarity of GradCAM maps from several discriminators
// (e.g. checkpoints along a run) on one fixed image.
std::vector<std::vector<double>> attention_probe_consistency(
    const std::vector<networks::Discriminator>& discriminators, const torch::Tensor& image,
    const std::string& layer = kDefaultLayer);

// Attention map bilinearly upsampled to `resolution` as an 8-bit grayscale
// image.
Image attention_image(const AttentionMap& map, int resolution);

}  // namespace spatialgan::attention
