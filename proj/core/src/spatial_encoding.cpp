#include "spatialgan/spatial_encoding.hpp"

#include <string>

#include "spatialgan/errors.hpp"

namespace spatialgan::encoding {
namespace {

void check_inputs(const torch::Tensor& features, const torch::Tensor& heatmap, int64_t feature_dim,
                  int64_t heatmap_channels) {
  if (features.dim() != 4 || heatmap.dim() != 4) throw InvalidArgument("expected NCHW tensors");
  if (features.size(1) != feature_dim) {
    throw InvalidArgument("feature channels " + std::to_string(features.size(1)) + " != " + std::to_string(feature_dim));
  }
  if (heatmap.size(1) != heatmap_channels) {
    throw InvalidArgument("heatmap channels " + std::to_string(heatmap.size(1)) + " != " +
                          std::to_string(heatmap_channels));
  }
  if (heatmap.size(0) != features.size(0)) throw InvalidArgument("batch size mismatch");
}

torch::Tensor heatmap_features(const EqConv2d& extractor, const torch::Tensor& features, const torch::Tensor& heatmap,
                               ProcessingOrder order) {
  return extract_features(extractor, heatmap, features.size(2), features.size(3), order);
}

}  // namespace

torch::Tensor extract_features(const EqConv2d& extractor, const torch::Tensor& heatmap, int64_t height,
                               int64_t width, ProcessingOrder order, bool activate) {
  const auto act = [activate](const torch::Tensor& x) { return activate ? lrelu(x) : x; };
  if (order == ProcessingOrder::kCoarse) return act(extractor->forward(resize(heatmap, height, width)));
  return resize(act(extractor->forward(heatmap)), height, width);
}

torch::Tensor instance_norm(const torch::Tensor& x, double eps) {
  const auto mean = x.mean({2, 3}, /*keepdim=*/true);
  const auto centered = x - mean;
  const auto var = centered.square().mean({2, 3}, true);
  return centered * torch::rsqrt(var + eps);
}

torch::Tensor resize(const torch::Tensor& x, int64_t height, int64_t width) {
  if (x.size(2) == height && x.size(3) == width) return x;
  namespace F = torch::nn::functional;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{height, width})
                               .mode(torch::kBilinear)
                               .align_corners(true));
}

torch::Tensor to_tensor(const heatmaps::LevelMaps& level) {
  std::vector<torch::Tensor> channels;
  for (const auto& ch : level.channels) channels.push_back(to_tensor(ch));
  return torch::stack(channels);
}

torch::Tensor to_tensor(const heatmaps::Map2D& map) {
  auto out = torch::empty({map.rows(), map.cols()}, torch::kFloat);
  auto* data = out.data_ptr<float>();
  const auto values = map.values();
  for (std::size_t i = 0; i < values.size(); ++i) data[i] = static_cast<float>(values[i]);
  return out;
}

SelNormImpl::SelNormImpl(int64_t feature_dim, int64_t heatmap_channels, Rng& rng, ProcessingOrder order,
                         int64_t inter_dim)
    : feature_dim_(feature_dim), heatmap_channels_(heatmap_channels), order_(order) {
  extractor = register_module("extractor", EqConv2d(heatmap_channels, inter_dim, 3, rng));
  sigma_head = register_module("sigma_head", EqConv2d(inter_dim, 1, 3, rng, /*zero_init=*/true));
  mu_head = register_module("mu_head", EqConv2d(inter_dim, 1, 3, rng, true));
  output_conv = register_module("output_conv", EqConv2d(feature_dim, feature_dim, 3, rng, true));
}

torch::Tensor SelNormImpl::forward(const torch::Tensor& features, const torch::Tensor& heatmap) const {
  check_inputs(features, heatmap, feature_dim_, heatmap_channels_);
  const auto normalized = instance_norm(features);
  const auto f = heatmap_features(extractor, features, heatmap, order_);
  const auto dx = (1.0 + sigma_head->forward(f)) * normalized + mu_head->forward(f);
  return features + output_conv->forward(lrelu(dx)) * kResidualScale;
}

SelConcatImpl::SelConcatImpl(int64_t feature_dim, int64_t heatmap_channels, Rng& rng, ProcessingOrder order)
    : feature_dim_(feature_dim), heatmap_channels_(heatmap_channels), order_(order) {
  extractor = register_module("extractor", EqConv2d(heatmap_channels, kHeatmapFeatureDim, 3, rng));
  fuse_in = register_module("fuse_in", EqConv2d(feature_dim + kHeatmapFeatureDim, kConcatFusionDim, 3, rng));
  fuse_out = register_module("fuse_out", EqConv2d(kConcatFusionDim, feature_dim, 3, rng));
  post_conv = register_module("post_conv", EqConv2d(feature_dim, feature_dim, 3, rng, /*zero_init=*/true));
}

torch::Tensor SelConcatImpl::forward(const torch::Tensor& features, const torch::Tensor& heatmap) const {
  check_inputs(features, heatmap, feature_dim_, heatmap_channels_);
  const auto f = heatmap_features(extractor, features, heatmap, order_);
  const auto fused = lrelu(fuse_out->forward(lrelu(fuse_in->forward(torch::cat(std::vector<torch::Tensor>{features, f}, 1)))));
  return features + post_conv->forward(fused) * kResidualScale;
}

torch::Tensor sel_indoor_combine(const torch::Tensor& object_styles, const torch::Tensor& background_style,
                                 const torch::Tensor& heatmaps) {
  if (object_styles.dim() != 3 || background_style.dim() != 2 || heatmaps.dim() != 4) {
    throw InvalidArgument("expected (N,n,C) styles, (N,C) background and (N,n,h,w) heatmaps");
  }
  if (object_styles.size(1) != heatmaps.size(1)) {
    throw InvalidArgument("got " + std::to_string(object_styles.size(1)) + " object styles for " +
                          std::to_string(heatmaps.size(1)) + " heatmap channels");
  }
  if (object_styles.size(2) != background_style.size(1)) {
    throw InvalidArgument("object and background styles differ in width");
  }
  return torch::einsum("nkc,nkhw->nchw", {object_styles, heatmaps}) +
         background_style.unsqueeze(-1).unsqueeze(-1);
}

torch::Tensor sel_indoor_modulate(const torch::Tensor& features, const torch::Tensor& style_map) {
  if (features.sizes() != style_map.sizes()) throw InvalidArgument("style map shape must equal feature shape");
  return features * style_map;
}

torch::Tensor coarse_process(const heatmaps::HeatmapSpec& spec, int level, int encoding_resolution,
                             int canonical_resolution, bool coarse, const EqConv2d& extractor) {
  if (encoding_resolution != 4 && encoding_resolution != 8 && encoding_resolution != 16) {
    throw InvalidArgument("encoding resolution must be 4, 8 or 16");
  }
  const int render_res = coarse ? encoding_resolution : canonical_resolution;
  const auto set = heatmaps::render(spec, render_res);
  const auto& maps = set.flat ? set.levels.front() : set.levels.at(static_cast<std::size_t>(level));
  const auto input = to_tensor(maps).unsqueeze(0).to(extractor->weight.dtype());
  return extract_features(extractor, input, encoding_resolution, encoding_resolution,
                          coarse ? ProcessingOrder::kCoarse : ProcessingOrder::kConference, /*activate=*/false);
}

double conv_flops(int resolution, int64_t in_channels, int64_t out_channels, int64_t kernel) {
  return static_cast<double>(resolution) * resolution * in_channels * out_channels * kernel * kernel;
}

}  // namespace spatialgan::encoding
