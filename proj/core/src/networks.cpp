#include "spatialgan/networks.hpp"

#include <cmath>
#include <numbers>

#include "spatialgan/errors.hpp"

namespace spatialgan::networks {
namespace {

constexpr double kActGain = std::numbers::sqrt2;

torch::Tensor act(const torch::Tensor& x) { return lrelu(x) * kActGain; }

std::string block_name(const char* prefix, int resolution) { return prefix + std::to_string(resolution); }

nlohmann::json channels_json(const std::map<int, int64_t>& channels) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [res, width] : channels) j[std::to_string(res)] = width;
  return j;
}

std::map<int, int64_t> channels_from_json(const nlohmann::json& j) {
  std::map<int, int64_t> out;
  for (const auto& [key, value] : j.items()) out[std::stoi(key)] = value.get<int64_t>();
  return out;
}

}  // namespace

std::string to_string(GeneratorMode mode) { return mode == GeneratorMode::kIndoor ? "indoor" : "hierarchical"; }

std::string to_string(SelVariant variant) {
  switch (variant) {
    case SelVariant::kNone: return "none";
    case SelVariant::kNorm: return "norm";
    case SelVariant::kConcat: return "concat";
    case SelVariant::kIndoor: return "indoor";
  }
  return "none";
}

GeneratorMode parse_mode(const std::string& s) {
  if (s == "hierarchical") return GeneratorMode::kHierarchical;
  if (s == "indoor") return GeneratorMode::kIndoor;
  throw InvalidArgument("unknown mode '" + s + "'");
}

SelVariant parse_sel_variant(const std::string& s) {
  if (s == "none") return SelVariant::kNone;
  if (s == "norm") return SelVariant::kNorm;
  if (s == "concat") return SelVariant::kConcat;
  if (s == "indoor") return SelVariant::kIndoor;
  throw InvalidArgument("unknown SEL variant '" + s + "'");
}

std::vector<int> ArchitectureDescriptor::block_resolutions() const {
  std::vector<int> out;
  for (int r = 4; r <= image_resolution; r *= 2) out.push_back(r);
  return out;
}

std::vector<int> ArchitectureDescriptor::encoded_levels() const {
  std::vector<int> out;
  if (mode != GeneratorMode::kHierarchical || !spatial()) return out;
  for (int level = 0; level < heatmaps::kNumLevels && (4 << level) <= image_resolution; ++level) out.push_back(level);
  return out;
}

void ArchitectureDescriptor::validate() const {
  if (image_resolution < 8 || (image_resolution & (image_resolution - 1)) != 0) {
    throw InvalidArgument("image_resolution must be a power of two >= 8");
  }
  if (latent_dim < 1 || mapping_depth < 1) throw InvalidArgument("latent_dim and mapping_depth must be positive");
  for (const int r : block_resolutions()) {
    if (!g_channels.contains(r) || !d_channels.contains(r)) {
      throw InvalidArgument("missing channel width for resolution " + std::to_string(r));
    }
  }
  if (mode == GeneratorMode::kIndoor && (sel == SelVariant::kNorm || sel == SelVariant::kConcat)) {
    throw InvalidArgument("indoor mode uses the indoor SEL variant or none");
  }
  if (mode == GeneratorMode::kHierarchical && sel == SelVariant::kIndoor) {
    throw InvalidArgument("the indoor SEL variant requires indoor mode");
  }
  if (mode == GeneratorMode::kIndoor && n_objects < 1) throw InvalidArgument("indoor mode needs n_objects >= 1");
}

nlohmann::json ArchitectureDescriptor::to_json() const {
  return {{"image_resolution", image_resolution}, {"latent_dim", latent_dim},
          {"mapping_depth", mapping_depth},       {"mapping_lr_mul", mapping_lr_mul},
          {"g_channels", channels_json(g_channels)}, {"d_channels", channels_json(d_channels)},
          {"mode", to_string(mode)},              {"sel", to_string(sel)},
          {"n_objects", n_objects},               {"coarse", coarse}};
}

ArchitectureDescriptor ArchitectureDescriptor::from_json(const nlohmann::json& j) {
  ArchitectureDescriptor a;
  try {
    a.image_resolution = j.at("image_resolution").get<int>();
    a.latent_dim = j.at("latent_dim").get<int>();
    a.mapping_depth = j.at("mapping_depth").get<int>();
    a.mapping_lr_mul = j.at("mapping_lr_mul").get<double>();
    a.g_channels = channels_from_json(j.at("g_channels"));
    a.d_channels = channels_from_json(j.at("d_channels"));
    a.mode = parse_mode(j.at("mode").get<std::string>());
    a.sel = parse_sel_variant(j.at("sel").get<std::string>());
    a.n_objects = j.at("n_objects").get<int>();
    a.coarse = j.at("coarse").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("architecture descriptor: ") + e.what());
  }
  a.validate();
  return a;
}

ArchitectureDescriptor ArchitectureDescriptor::micro(GeneratorMode mode) {
  ArchitectureDescriptor a;
  a.image_resolution = 8;
  a.latent_dim = 4;
  a.mapping_depth = 2;
  a.mapping_lr_mul = 1.0;
  a.g_channels = {{4, 4}, {8, 4}};
  a.d_channels = {{4, 4}, {8, 4}};
  a.mode = mode;
  a.sel = mode == GeneratorMode::kIndoor ? SelVariant::kIndoor : SelVariant::kNorm;
  a.n_objects = 2;
  return a;
}

ArchitectureDescriptor ArchitectureDescriptor::indoor() {
  ArchitectureDescriptor a;
  a.mode = GeneratorMode::kIndoor;
  a.sel = SelVariant::kIndoor;
  return a;
}

void ForwardTrace::record(const std::string& name, const torch::Tensor& activation) {
  order.push_back(name);
  activations[name] = activation;
}

const torch::Tensor& ForwardTrace::activation(const std::string& name) const {
  const auto it = activations.find(name);
  if (it == activations.end()) throw NotFound("no activation recorded for layer '" + name + "'");
  return it->second;
}

MappingNetworkImpl::MappingNetworkImpl(int latent_dim, int depth, double lr_mul, Rng& rng) {
  for (int i = 0; i < depth; ++i) {
    layers.push_back(register_module("fc" + std::to_string(i), EqLinear(latent_dim, latent_dim, rng, 0.0, lr_mul)));
  }
}

torch::Tensor MappingNetworkImpl::forward(const torch::Tensor& z) const {
  auto x = z;
  for (const auto& layer : layers) x = lrelu(layer->forward(x));
  return x;
}

SynthesisLayerImpl::SynthesisLayerImpl(int64_t in_channels, int64_t out_channels, int64_t w_dim, int resolution,
                                       int64_t kernel, bool upsample, bool activate, Rng& rng)
    : upsample_(upsample), activate_(activate) {
  affine = register_module("affine", EqLinear(w_dim, in_channels, rng, /*bias_init=*/1.0));
  conv = register_module("conv", EqConv2d(in_channels, out_channels, kernel, rng));
  noise_strength = register_parameter("noise_strength", torch::zeros({1}));
  noise = register_buffer("noise", activate ? randn(rng, {1, 1, resolution, resolution}) : torch::zeros({1, 1, 1, 1}));
}

torch::Tensor SynthesisLayerImpl::forward(const torch::Tensor& input, const Modulation& mod) const {
  namespace F = torch::nn::functional;
  auto x = input;
  if (upsample_) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kBilinear)
                              .align_corners(false));
  }
  if (mod.object_w.defined()) {
    const auto n = mod.object_w.size(1);
    const auto object_styles = affine->forward(mod.object_w.flatten(0, 1)).view({x.size(0), n, -1});
    const auto maps = encoding::resize(mod.object_maps, x.size(2), x.size(3));
    x = encoding::sel_indoor_modulate(x, encoding::sel_indoor_combine(object_styles, affine->forward(mod.w), maps));
  } else {
    x = x * affine->forward(mod.w).unsqueeze(-1).unsqueeze(-1);
  }
  x = conv->forward(x);
  if (!activate_) return x;
  return act(x + noise * noise_strength);
}

GeneratorImpl::GeneratorImpl(const ArchitectureDescriptor& arch, Rng& rng) : arch_(arch) {
  arch_.validate();
  const int64_t w_dim = arch_.latent_dim;
  mapping = register_module("mapping", MappingNetwork(arch_.latent_dim, arch_.mapping_depth, arch_.mapping_lr_mul, rng));
  const int64_t c4 = arch_.g_channels.at(4);
  const_input = register_parameter("const_input", randn(rng, {1, c4, 4, 4}));

  const auto order = arch_.coarse ? encoding::ProcessingOrder::kCoarse : encoding::ProcessingOrder::kConference;
  const auto levels = arch_.encoded_levels();
  int64_t prev = c4;
  for (const int r : arch_.block_resolutions()) {
    const int64_t width = arch_.g_channels.at(r);
    std::vector<SynthesisLayer> layers;
    const std::string prefix = block_name("g", r) + "_";
    if (r == 4) {
      layers.push_back(register_module(prefix + "conv0", SynthesisLayer(c4, c4, w_dim, r, 3, false, true, rng)));
    } else {
      layers.push_back(register_module(prefix + "conv0", SynthesisLayer(prev, width, w_dim, r, 3, true, true, rng)));
      layers.push_back(register_module(prefix + "conv1", SynthesisLayer(width, width, w_dim, r, 3, false, true, rng)));
    }
    blocks.push_back(std::move(layers));
    const int level = static_cast<int>(std::log2(r)) - 2;
    if (std::find(levels.begin(), levels.end(), level) != levels.end()) {
      const int64_t hm = heatmaps::kCentersPerLevel[level];
      if (arch_.sel == SelVariant::kNorm) {
        sel_norm.emplace(level, register_module(prefix + "sel", encoding::SelNorm(width, hm, rng, order)));
      } else {
        sel_concat.emplace(level, register_module(prefix + "sel", encoding::SelConcat(width, hm, rng, order)));
      }
    }
    prev = width;
  }
  to_rgb = register_module("to_rgb", SynthesisLayer(prev, 3, w_dim, arch_.image_resolution, 1, false, false, rng));
}

void GeneratorImpl::check_inputs(const torch::Tensor& latents, const std::vector<torch::Tensor>& heatmaps) const {
  if (latents.dim() != 3 || latents.size(1) != arch_.latent_count() || latents.size(2) != arch_.latent_dim) {
    throw InvalidArgument("latents must be (N, " + std::to_string(arch_.latent_count()) + ", " +
                          std::to_string(arch_.latent_dim) + ")");
  }
  if (!arch_.spatial()) return;
  if (arch_.mode == GeneratorMode::kIndoor) {
    if (heatmaps.size() != 1 || heatmaps[0].dim() != 4 || heatmaps[0].size(1) != arch_.n_objects) {
      throw InvalidArgument("indoor mode expects one (N, " + std::to_string(arch_.n_objects) + ", r, r) heatmap tensor");
    }
    return;
  }
  for (const int level : arch_.encoded_levels()) {
    if (static_cast<int>(heatmaps.size()) <= level || heatmaps[level].dim() != 4 ||
        heatmaps[level].size(1) != heatmaps::kCentersPerLevel[level]) {
      throw InvalidArgument("hierarchical level " + std::to_string(level) + " expects " +
                            std::to_string(heatmaps::kCentersPerLevel[level]) + " heatmap channels");
    }
  }
}

GeneratorOutput GeneratorImpl::forward(const torch::Tensor& latents, const std::vector<torch::Tensor>& heatmaps) const {
  check_inputs(latents, heatmaps);
  const auto n = latents.size(0);
  const auto k = latents.size(1);
  const auto w_all = mapping->forward(latents.flatten(0, 1)).view({n, k, -1});

  Modulation mod;
  if (arch_.mode == GeneratorMode::kIndoor) {
    mod.w = w_all.select(1, arch_.n_objects);
    if (arch_.spatial()) {
      mod.object_w = w_all.narrow(1, 0, arch_.n_objects);
      mod.object_maps = heatmaps[0].to(w_all.dtype());
    }
  } else {
    mod.w = w_all.select(1, 0);
  }

  GeneratorOutput out;
  auto x = const_input.expand({n, -1, -1, -1});
  const auto resolutions = arch_.block_resolutions();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (const auto& layer : blocks[b]) x = layer->forward(x, mod);
    const int level = static_cast<int>(b);
    if (const auto it = sel_norm.find(level); it != sel_norm.end()) {
      x = it->second->forward(x, heatmaps[level].to(x.dtype()));
    } else if (const auto jt = sel_concat.find(level); jt != sel_concat.end()) {
      x = jt->second->forward(x, heatmaps[level].to(x.dtype()));
    }
    out.trace.record(block_name("g", resolutions[b]), x);
  }
  out.image = torch::tanh(to_rgb->forward(x, mod));
  return out;
}

DiscriminatorImpl::DiscriminatorImpl(const ArchitectureDescriptor& arch, Rng& rng) {
  arch.validate();
  auto resolutions = arch.block_resolutions();
  resolutions_.assign(resolutions.rbegin(), resolutions.rend());
  from_rgb = register_module("from_rgb", EqConv2d(3, arch.d_channels.at(arch.image_resolution), 1, rng));
  for (const int r : resolutions_) {
    const std::string prefix = block_name("b", r) + "_";
    const int64_t width = arch.d_channels.at(r);
    std::vector<EqConv2d> convs;
    if (r == 4) {
      convs.push_back(register_module(prefix + "conv0", EqConv2d(width, width, 3, rng)));
    } else {
      convs.push_back(register_module(prefix + "conv0", EqConv2d(width, width, 3, rng)));
      convs.push_back(register_module(prefix + "conv1", EqConv2d(width, arch.d_channels.at(r / 2), 3, rng)));
    }
    stages.push_back(std::move(convs));
  }
  const int64_t c4 = arch.d_channels.at(4);
  fc = register_module("fc", EqLinear(c4 * 16, c4, rng));
  out = register_module("out", EqLinear(c4, 1, rng));
}

std::vector<std::string> DiscriminatorImpl::layer_names() const {
  std::vector<std::string> names;
  for (const int r : resolutions_) names.push_back(block_name("b", r));
  return names;
}

std::size_t DiscriminatorImpl::stage_index(const std::string& layer) const {
  for (std::size_t i = 0; i < resolutions_.size(); ++i) {
    if (block_name("b", resolutions_[i]) == layer) return i;
  }
  throw NotFound("discriminator has no layer '" + layer + "'");
}

torch::Tensor DiscriminatorImpl::run(std::size_t first_stage, torch::Tensor x, ForwardTrace* trace) const {
  for (std::size_t i = first_stage; i < stages.size(); ++i) {
    for (const auto& conv : stages[i]) x = act(conv->forward(x));
    if (trace != nullptr) trace->record(block_name("b", resolutions_[i]), x);
    if (i + 1 < stages.size()) x = torch::avg_pool2d(x, 2);
  }
  return out->forward(act(fc->forward(x.flatten(1)))).squeeze(-1);
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& images, bool capture) const {
  DiscriminatorOutput result;
  const auto x = act(from_rgb->forward(images));
  result.score = run(0, x, capture ? &result.trace : nullptr);
  return result;
}

torch::Tensor DiscriminatorImpl::head_from(const std::string& layer, const torch::Tensor& activation) const {
  const std::size_t i = stage_index(layer);
  if (i + 1 == stages.size()) return out->forward(act(fc->forward(activation.flatten(1)))).squeeze(-1);
  return run(i + 1, torch::avg_pool2d(activation, 2), nullptr);
}

std::vector<torch::Tensor> heatmap_inputs(const std::vector<heatmaps::HeatmapSpec>& specs,
                                          const ArchitectureDescriptor& arch) {
  if (specs.empty()) throw InvalidArgument("empty spec batch");
  const int res = arch.image_resolution;
  if (arch.mode == GeneratorMode::kIndoor) {
    std::vector<torch::Tensor> batch;
    for (const auto& spec : specs) {
      if (heatmaps::is_hierarchical(spec)) throw InvalidArgument("indoor mode needs multi-object specs");
      batch.push_back(encoding::to_tensor(heatmaps::render(spec, res).levels.front()));
    }
    return {torch::stack(batch)};
  }
  std::vector<std::vector<torch::Tensor>> per_level(heatmaps::kNumLevels);
  for (const auto& spec : specs) {
    if (!heatmaps::is_hierarchical(spec)) throw InvalidArgument("hierarchical mode needs hierarchical specs");
    if (arch.coarse) {
      for (int level = 0; level < heatmaps::kNumLevels; ++level) {
        const auto set = heatmaps::render(spec, 4 << level);
        per_level[level].push_back(encoding::to_tensor(set.levels[level]));
      }
    } else {
      const auto set = heatmaps::render(spec, res);
      for (int level = 0; level < heatmaps::kNumLevels; ++level) {
        per_level[level].push_back(encoding::to_tensor(set.levels[level]));
      }
    }
  }
  std::vector<torch::Tensor> out;
  for (auto& level : per_level) out.push_back(torch::stack(level));
  return out;
}

heatmaps::HeatmapSpec sample_spec(const ArchitectureDescriptor& arch, const HeatmapSampling& sampling,
                                  NormalSource& rng) {
  if (arch.mode == GeneratorMode::kIndoor) {
    return heatmaps::sample_multiobject(arch.image_resolution, arch.n_objects, sampling.shared_variance, rng);
  }
  return heatmaps::sample_hierarchical(arch.image_resolution, sampling.base_variance, rng);
}

std::vector<heatmaps::HeatmapSpec> sample_specs(int batch, const ArchitectureDescriptor& arch,
                                                const HeatmapSampling& sampling, NormalSource& rng) {
  std::vector<heatmaps::HeatmapSpec> specs;
  specs.reserve(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) specs.push_back(sample_spec(arch, sampling, rng));
  return specs;
}

torch::Tensor sample_latents(int batch, const ArchitectureDescriptor& arch, Rng& rng) {
  return randn(rng, {batch, arch.latent_count(), arch.latent_dim});
}

std::vector<std::pair<std::string, torch::Tensor>> named_state(const torch::nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : module.named_parameters(true)) out.emplace_back(item.key(), item.value());
  for (const auto& item : module.named_buffers(true)) out.emplace_back(item.key(), item.value());
  return out;
}

}  // namespace spatialgan::networks
