#pragma once

#include <torch/torch.h>

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spatialgan/heatmaps.hpp"
#include "spatialgan/layers.hpp"
#include "spatialgan/spatial_encoding.hpp"

namespace spatialgan::networks {

enum class GeneratorMode { kHierarchical, kIndoor };

// kNone is the plain style-based baseline. Hierarchical generators take
// kNorm or kConcat; indoor generators take kIndoor.
enum class SelVariant { kNone, kNorm, kConcat, kIndoor };

std::string to_string(GeneratorMode mode);
std::string to_string(SelVariant variant);
GeneratorMode parse_mode(const std::string& s);
SelVariant parse_sel_variant(const std::string& s);

struct ArchitectureDescriptor {
  int image_resolution = 32;
  int latent_dim = 64;
  int mapping_depth = 4;
  double mapping_lr_mul = 0.01;
  // Feature widths keyed by block resolution, 4 .. image_resolution.
  std::map<int, int64_t> g_channels = {{4, 32}, {8, 32}, {16, 16}, {32, 16}};
  std::map<int, int64_t> d_channels = {{4, 32}, {8, 32}, {16, 16}, {32, 16}};
  GeneratorMode mode = GeneratorMode::kHierarchical;
  SelVariant sel = SelVariant::kNorm;
  int n_objects = 3;
  bool coarse = true;

  // Latent codes per sample: 1, or n objects + background in indoor mode.
  int latent_count() const { return mode == GeneratorMode::kIndoor ? n_objects + 1 : 1; }
  std::vector<int> block_resolutions() const;
  // Hierarchical levels with an encoding layer (resolution 4 << level).
  std::vector<int> encoded_levels() const;
  bool spatial() const { return sel != SelVariant::kNone; }
  void validate() const;

  nlohmann::json to_json() const;
  static ArchitectureDescriptor from_json(const nlohmann::json& j);

  // Two-block, width-4 network at 8x8 for gradient checks.
  static ArchitectureDescriptor micro(GeneratorMode mode = GeneratorMode::kHierarchical);
  static ArchitectureDescriptor indoor();
};

// Activations recorded during a forward pass, keyed by block name
// ("g4".."g32" for the generator, "b4".."b32" for the discriminator).
struct ForwardTrace {
  std::vector<std::string> order;
  std::map<std::string, torch::Tensor> activations;
  std::map<std::string, torch::Tensor> gradients;

  void record(const std::string& name, const torch::Tensor& activation);
  const torch::Tensor& activation(const std::string& name) const;
};

class MappingNetworkImpl : public torch::nn::Module {
 public:
  MappingNetworkImpl(int latent_dim, int depth, double lr_mul, Rng& rng);
  torch::Tensor forward(const torch::Tensor& z) const;

  std::vector<EqLinear> layers;
};
TORCH_MODULE(MappingNetwork);

// Style inputs of a synthesis layer: a global code per sample, or object
// codes with background code and heatmaps for spatial styles.
struct Modulation {
  torch::Tensor w;              // (N, w_dim)
  torch::Tensor object_w;       // (N, n, w_dim), indoor only
  torch::Tensor object_maps;    // (N, n, R, R), indoor only
};

class SynthesisLayerImpl : public torch::nn::Module {
 public:
  SynthesisLayerImpl(int64_t in_channels, int64_t out_channels, int64_t w_dim, int resolution, int64_t kernel,
                     bool upsample, bool activate, Rng& rng);
  torch::Tensor forward(const torch::Tensor& x, const Modulation& mod) const;

  EqLinear affine{nullptr};
  EqConv2d conv{nullptr};
  torch::Tensor noise_strength;
  torch::Tensor noise;

 private:
  bool upsample_;
  bool activate_;
};
TORCH_MODULE(SynthesisLayer);

struct GeneratorOutput {
  torch::Tensor image;  // (N, 3, R, R) in [-1, 1]
  ForwardTrace trace;
};

class GeneratorImpl : public torch::nn::Module {
 public:
  GeneratorImpl(const ArchitectureDescriptor& arch, Rng& rng);

  // latents: (N, latent_count, latent_dim). heatmaps: hierarchical mode takes
  // one (N, c_l, r, r) tensor per level; indoor mode one (N, n, r, r) tensor.
  // The baseline ignores heatmaps.
  GeneratorOutput forward(const torch::Tensor& latents, const std::vector<torch::Tensor>& heatmaps) const;

  const ArchitectureDescriptor& arch() const { return arch_; }

  MappingNetwork mapping{nullptr};
  torch::Tensor const_input;
  std::vector<std::vector<SynthesisLayer>> blocks;
  std::map<int, encoding::SelNorm> sel_norm;      // by level
  std::map<int, encoding::SelConcat> sel_concat;  // by level
  SynthesisLayer to_rgb{nullptr};

 private:
  void check_inputs(const torch::Tensor& latents, const std::vector<torch::Tensor>& heatmaps) const;

  ArchitectureDescriptor arch_;
};
TORCH_MODULE(Generator);

struct DiscriminatorOutput {
  torch::Tensor score;  // (N)
  ForwardTrace trace;
};

class DiscriminatorImpl : public torch::nn::Module {
 public:
  DiscriminatorImpl(const ArchitectureDescriptor& arch, Rng& rng);

  DiscriminatorOutput forward(const torch::Tensor& images, bool capture = false) const;
  // Runs the layers after `layer` on an activation captured at `layer`.
  torch::Tensor head_from(const std::string& layer, const torch::Tensor& activation) const;
  std::vector<std::string> layer_names() const;

  EqConv2d from_rgb{nullptr};
  std::vector<std::vector<EqConv2d>> stages;  // one per resolution, high to low
  EqLinear fc{nullptr};
  EqLinear out{nullptr};

 private:
  std::size_t stage_index(const std::string& layer) const;
  torch::Tensor run(std::size_t first_stage, torch::Tensor x, ForwardTrace* trace) const;

  std::vector<int> resolutions_;
};
TORCH_MODULE(Discriminator);

// Rendered heatmaps for a batch of specs in the generator's input layout.
// Hierarchical: per level, at 4 << level in coarse mode or at the image
// resolution otherwise. Indoor: one flat tensor at the image resolution.
std::vector<torch::Tensor> heatmap_inputs(const std::vector<heatmaps::HeatmapSpec>& specs,
                                          const ArchitectureDescriptor& arch);

struct HeatmapSampling {
  double base_variance = 0.5;
  double shared_variance = 0.25;
};

std::vector<heatmaps::HeatmapSpec> sample_specs(int batch, const ArchitectureDescriptor& arch,
                                                const HeatmapSampling& sampling, NormalSource& rng);

// Default-sampled spec for one sample.
heatmaps::HeatmapSpec sample_spec(const ArchitectureDescriptor& arch, const HeatmapSampling& sampling,
                                  NormalSource& rng);

torch::Tensor sample_latents(int batch, const ArchitectureDescriptor& arch, Rng& rng);

// Named parameters and buffers in registration order, for serialization.
std::vector<std::pair<std::string, torch::Tensor>> named_state(const torch::nn::Module& module);

}  // namespace spatialgan::networks
