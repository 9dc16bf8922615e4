#pragma once

#include <torch/torch.h>

#include "spatialgan/heatmaps.hpp"
#include "spatialgan/layers.hpp"

namespace spatialgan::encoding {

inline constexpr double kInstanceNormEps = 1e-5;
inline constexpr double kResidualScale = 0.1;
inline constexpr int64_t kHeatmapFeatureDim = 64;
inline constexpr int64_t kConcatFusionDim = 256;

// Per-sample, per-channel normalization over (h, w) with biased variance.
torch::Tensor instance_norm(const torch::Tensor& x, double eps = kInstanceNormEps);

// Bilinear, corner-aligned resize of an (N, C, h, w) tensor.
torch::Tensor resize(const torch::Tensor& x, int64_t height, int64_t width);

// Rendered channels of one level as an (n, r, r) float tensor.
torch::Tensor to_tensor(const heatmaps::LevelMaps& level);
torch::Tensor to_tensor(const heatmaps::Map2D& map);

// How a heatmap whose resolution differs from the feature map is brought to
// the feature resolution. kCoarse resizes the heatmap and then extracts
// features; kConference extracts at the heatmap resolution and downsamples
// the extracted features.
enum class ProcessingOrder { kCoarse, kConference };

// Extractor output at (height, width), in the given processing order. With
// `activate`, leaky-ReLU is applied right after the extractor convolution.
torch::Tensor extract_features(const EqConv2d& extractor, const torch::Tensor& heatmap, int64_t height,
                               int64_t width, ProcessingOrder order, bool activate = true);

// Normalize/denormalize spatial encoding layer:
//   dx  = (1 + sigma(f)) * instance_norm(F) + mu(f),  f = lrelu(extract(H))
//   out = F + 0.1 * output_conv(lrelu(dx))
// The sigma/mu heads and output_conv start at zero, so a fresh layer is the
// identity on F.
class SelNormImpl : public torch::nn::Module {
 public:
  SelNormImpl(int64_t feature_dim, int64_t heatmap_channels, Rng& rng,
              ProcessingOrder order = ProcessingOrder::kCoarse, int64_t inter_dim = kHeatmapFeatureDim);

  torch::Tensor forward(const torch::Tensor& features, const torch::Tensor& heatmap) const;

  EqConv2d extractor{nullptr};
  EqConv2d sigma_head{nullptr};
  EqConv2d mu_head{nullptr};
  EqConv2d output_conv{nullptr};

 private:
  int64_t feature_dim_;
  int64_t heatmap_channels_;
  ProcessingOrder order_;
};
TORCH_MODULE(SelNorm);

// Concatenation variant: heatmap features (64 channels) are concatenated with
// F, fused by two convolutions through a 256-wide intermediate, post-processed
// and added back onto F with the same 0.1 residual scale.
class SelConcatImpl : public torch::nn::Module {
 public:
  SelConcatImpl(int64_t feature_dim, int64_t heatmap_channels, Rng& rng,
                ProcessingOrder order = ProcessingOrder::kCoarse);

  torch::Tensor forward(const torch::Tensor& features, const torch::Tensor& heatmap) const;

  EqConv2d extractor{nullptr};
  EqConv2d fuse_in{nullptr};
  EqConv2d fuse_out{nullptr};
  EqConv2d post_conv{nullptr};

 private:
  int64_t feature_dim_;
  int64_t heatmap_channels_;
  ProcessingOrder order_;
};
TORCH_MODULE(SelConcat);

// sum_i S_i * H_i + S_bg, broadcasting (N, n, C) styles against (N, n, h, w)
// heatmaps into an (N, C, h, w) spatial style map.
torch::Tensor sel_indoor_combine(const torch::Tensor& object_styles, const torch::Tensor& background_style,
                                 const torch::Tensor& heatmaps);

// Per-pixel, per-channel multiplicative modulation of a convolution input.
torch::Tensor sel_indoor_modulate(const torch::Tensor& features, const torch::Tensor& style_map);

// Heatmap features of one hierarchical level at `encoding_resolution`.
// Coarse mode renders the spec at the encoding resolution before the
// extractor; otherwise it renders at `canonical_resolution`, extracts and
// downsamples. Returns the pre-activation extractor output,
// (1, out_channels, r, r).
torch::Tensor coarse_process(const heatmaps::HeatmapSpec& spec, int level, int encoding_resolution,
                             int canonical_resolution, bool coarse, const EqConv2d& extractor);

// Multiply-accumulate count of a same-padded convolution at `resolution`.
double conv_flops(int resolution, int64_t in_channels, int64_t out_channels, int64_t kernel = 3);

}  // namespace spatialgan::encoding
