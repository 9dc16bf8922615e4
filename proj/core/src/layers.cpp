#include "spatialgan/layers.hpp"

#include <cmath>

namespace spatialgan {

torch::Tensor lrelu(const torch::Tensor& x) { return torch::leaky_relu(x, kLeakySlope); }

torch::Tensor randn(Rng& rng, std::vector<int64_t> shape) {
  auto out = torch::empty(shape, torch::kFloat);
  auto* data = out.data_ptr<float>();
  for (int64_t i = 0; i < out.numel(); ++i) data[i] = static_cast<float>(rng.normal(0.0, 1.0));
  return out;
}

EqConv2dImpl::EqConv2dImpl(int64_t in_channels, int64_t out_channels, int64_t kernel, Rng& rng, bool zero_init)
    : scale_(1.0 / std::sqrt(static_cast<double>(in_channels * kernel * kernel))) {
  auto w = zero_init ? torch::zeros({out_channels, in_channels, kernel, kernel})
                     : randn(rng, {out_channels, in_channels, kernel, kernel});
  weight = register_parameter("weight", w);
  bias = register_parameter("bias", torch::zeros({out_channels}));
}

torch::Tensor EqConv2dImpl::forward(const torch::Tensor& x) const {
  return torch::conv2d(x, weight * scale_, bias, /*stride=*/1, /*padding=*/weight.size(2) / 2);
}

EqLinearImpl::EqLinearImpl(int64_t in_features, int64_t out_features, Rng& rng, double bias_init, double lr_mul)
    : weight_gain_(lr_mul / std::sqrt(static_cast<double>(in_features))), lr_mul_(lr_mul) {
  weight = register_parameter("weight", randn(rng, {out_features, in_features}) / lr_mul);
  bias = register_parameter("bias", torch::full({out_features}, bias_init / lr_mul));
}

torch::Tensor EqLinearImpl::forward(const torch::Tensor& x) const {
  return torch::nn::functional::linear(x, weight * weight_gain_, bias * lr_mul_);
}

}  // namespace spatialgan
