#pragma once

#include <torch/torch.h>

#include <vector>

#include "spatialgan/rng.hpp"

namespace spatialgan {

inline constexpr double kLeakySlope = 0.2;

torch::Tensor lrelu(const torch::Tensor& x);

// Standard-normal tensor drawn from `rng`, so initialization is reproducible
// under the library's own seeded streams.
torch::Tensor randn(Rng& rng, std::vector<int64_t> shape);

// Convolution with runtime weight scaling (equalized learning rate). The
// stored weight is N(0, 1); forward scales it by 1/sqrt(fan_in). Spatial size
// is preserved (padding = kernel / 2).
class EqConv2dImpl : public torch::nn::Module {
 public:
  EqConv2dImpl(int64_t in_channels, int64_t out_channels, int64_t kernel, Rng& rng, bool zero_init = false);

  torch::Tensor forward(const torch::Tensor& x) const;
  // Weight as applied in forward.
  torch::Tensor effective_weight() const { return weight * scale_; }

  int64_t in_channels() const { return weight.size(1); }
  int64_t out_channels() const { return weight.size(0); }
  int64_t kernel() const { return weight.size(2); }

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  double scale_;
};
TORCH_MODULE(EqConv2d);

// Dense layer with equalized learning rate and an optional learning-rate
// multiplier (the mapping network uses 0.01).
class EqLinearImpl : public torch::nn::Module {
 public:
  EqLinearImpl(int64_t in_features, int64_t out_features, Rng& rng, double bias_init = 0.0, double lr_mul = 1.0);

  torch::Tensor forward(const torch::Tensor& x) const;
  torch::Tensor effective_weight() const { return weight * weight_gain_; }
  torch::Tensor effective_bias() const { return bias * lr_mul_; }

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  double weight_gain_;
  double lr_mul_;
};
TORCH_MODULE(EqLinear);

}  // namespace spatialgan
