#include "spatialgan/training.hpp"

#include <cmath>
#include <string>

#include "spatialgan/checkpoint.hpp"
#include "spatialgan/errors.hpp"
#include "spatialgan/spatial_encoding.hpp"

namespace spatialgan::training {
namespace {

std::string d_layer_for_level(int level) { return "b" + std::to_string(4 << level); }

torch::Tensor resize_maps(const torch::Tensor& maps, int64_t h, int64_t w) {
  // (N, [K,] H, W) -> same leading dims at (h, w).
  if (maps.size(-2) == h && maps.size(-1) == w) return maps;
  const auto lead = maps.sizes().slice(0, maps.dim() - 2).vec();
  auto flat = maps.reshape({-1, 1, maps.size(-2), maps.size(-1)});
  auto out = encoding::resize(flat, h, w);
  auto shape = lead;
  shape.push_back(h);
  shape.push_back(w);
  return out.reshape(shape);
}

AlignLoss truncate(const torch::Tensor& distance, double tau) {
  const auto keep = distance >= tau;
  AlignLoss out;
  out.distance = distance;
  // where() gives an exactly-zero gradient for truncated samples.
  out.loss = torch::where(keep, distance, torch::zeros_like(distance)).mean();
  out.truncation_rate = 1.0 - keep.to(torch::kDouble).mean().item<double>();
  return out;
}

torch::Tensor map_to_tensor(const heatmaps::Map2D& map) { return encoding::to_tensor(map).to(torch::kDouble); }

void check_finite(long step, const char* what, const torch::Tensor& value) {
  if (!std::isfinite(value.item<double>())) throw TrainingDiverged(step, std::string("non-finite ") + what);
}

nlohmann::json rng_json(const Rng& rng) { return rng.state(); }

}  // namespace

void TrainConfig::validate() const {
  arch.validate();
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be > 0");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (r1_gamma < 0.0 || align_weight < 0.0) throw InvalidArgument("loss weights must be >= 0");
  if (r1_interval < 1) throw InvalidArgument("r1_interval must be >= 1");
  if (tau < 0.0) throw InvalidArgument("tau must be >= 0");
  if (total_steps < 0) throw InvalidArgument("total_steps must be >= 0");
  if (seeds.empty()) throw InvalidArgument("at least one seed is required");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0) {
    throw InvalidArgument("Adam betas must lie in [0, 1)");
  }
  if (arch.mode == networks::GeneratorMode::kHierarchical) {
    if (align_levels.empty() && alignment_enabled()) throw InvalidArgument("align_levels is empty");
    for (const int level : align_levels) {
      if (level < 0 || level >= heatmaps::kNumLevels || (4 << level) > arch.image_resolution) {
        throw InvalidArgument("align level " + std::to_string(level) + " has no discriminator block");
      }
    }
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"model", arch.to_json()},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"r1_gamma", r1_gamma},
          {"r1_interval", r1_interval},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_eps", adam_eps},
          {"align_weight", align_weight},
          {"tau", tau},
          {"align_levels", align_levels},
          {"total_steps", total_steps},
          {"seeds", seeds},
          {"base_variance", sampling.base_variance},
          {"shared_variance", sampling.shared_variance}};
}

void TrainConfig::merge_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("training config must be an object");
  try {
    if (j.contains("model")) {
      auto a = arch.to_json();
      a.update(j["model"]);
      arch = networks::ArchitectureDescriptor::from_json(a);
    }
    learning_rate = j.value("learning_rate", learning_rate);
    batch_size = j.value("batch_size", batch_size);
    r1_gamma = j.value("r1_gamma", r1_gamma);
    r1_interval = j.value("r1_interval", r1_interval);
    adam_beta1 = j.value("adam_beta1", adam_beta1);
    adam_beta2 = j.value("adam_beta2", adam_beta2);
    adam_eps = j.value("adam_eps", adam_eps);
    align_weight = j.value("align_weight", align_weight);
    tau = j.value("tau", tau);
    align_levels = j.value("align_levels", align_levels);
    total_steps = j.value("total_steps", total_steps);
    seeds = j.value("seeds", seeds);
    sampling.base_variance = j.value("base_variance", sampling.base_variance);
    sampling.shared_variance = j.value("shared_variance", sampling.shared_variance);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("training config: ") + e.what());
  } catch (const FormatError& e) {
    throw InvalidArgument(e.what());
  }
  validate();
}

nlohmann::json LossReport::to_json() const {
  return {{"step", step},
          {"d_loss", d_loss},
          {"g_adv", g_adv},
          {"r1", r1},
          {"r1_applied", r1_applied},
          {"align", align},
          {"align_distance", align_distance},
          {"align_truncation_rate", align_truncation_rate}};
}

torch::Tensor d_logistic_loss(const torch::Tensor& real_score, const torch::Tensor& fake_score) {
  return torch::softplus(-real_score).mean() + torch::softplus(fake_score).mean();
}

torch::Tensor g_logistic_loss(const torch::Tensor& fake_score) { return torch::softplus(-fake_score).mean(); }

torch::Tensor r1_penalty(const torch::Tensor& real_score, const torch::Tensor& real) {
  const auto grad = torch::autograd::grad({real_score.sum()}, {real}, {}, /*retain_graph=*/true,
                                          /*create_graph=*/true, /*allow_unused=*/true)[0];
  if (!grad.defined()) return torch::zeros({}, real.options());
  return grad.square().flatten(1).sum(1).mean();
}

AdversarialLosses adversarial_losses(const networks::Discriminator& discriminator, const torch::Tensor& real,
                                     const torch::Tensor& fake, double gamma) {
  torch::AutoGradMode grad_mode(true);
  const auto real_in = real.detach().requires_grad_(true);
  const auto real_score = discriminator->forward(real_in).score;
  const auto fake_score = discriminator->forward(fake).score;
  AdversarialLosses out;
  out.r1 = r1_penalty(real_score, real_in);
  out.d_loss = d_logistic_loss(real_score, fake_score) + out.r1 * (gamma / 2.0);
  out.g_loss = g_logistic_loss(fake_score);
  return out;
}

AlignLoss align_loss(const torch::Tensor& attention, const torch::Tensor& heatmap, double tau) {
  if (attention.dim() != 3 || heatmap.dim() != 3) throw InvalidArgument("expected (N, h, w) maps");
  const auto target = resize_maps(heatmap.to(attention.dtype()), attention.size(1), attention.size(2));
  if (target.sizes() != attention.sizes()) throw InvalidArgument("attention and heatmap batch sizes differ");
  return truncate((attention - target).abs().mean({1, 2}), tau);
}

AlignLoss align_loss_indoor(const torch::Tensor& attention, const torch::Tensor& candidates, double tau) {
  if (attention.dim() != 3 || candidates.dim() != 4) throw InvalidArgument("expected (N,h,w) and (N,K,H,W) maps");
  if (candidates.size(0) != attention.size(0) || candidates.size(1) < 1) {
    throw InvalidArgument("candidate batch does not match attention batch");
  }
  const auto target = resize_maps(candidates.to(attention.dtype()), attention.size(1), attention.size(2));
  const auto distances = (attention.unsqueeze(1) - target).abs().mean({2, 3});  // (N, K)
  // min() routes the gradient to the argmin candidate only.
  return truncate(std::get<0>(distances.min(1)), tau);
}

double align_loss(const attention::AttentionMap& attention, const heatmaps::Map2D& heatmap_sum, double tau) {
  return align_loss(map_to_tensor(attention.values).unsqueeze(0), map_to_tensor(heatmap_sum).unsqueeze(0), tau)
      .loss.item<double>();
}

double align_loss_indoor(const attention::AttentionMap& attention, const std::vector<heatmaps::Map2D>& candidates,
                         double tau) {
  if (candidates.empty()) throw InvalidArgument("no candidate heatmaps");
  std::vector<torch::Tensor> c;
  for (const auto& m : candidates) {
    if (m.rows() != candidates.front().rows() || m.cols() != candidates.front().cols()) {
      throw InvalidArgument("candidate heatmaps differ in size");
    }
    c.push_back(map_to_tensor(m));
  }
  return align_loss_indoor(map_to_tensor(attention.values).unsqueeze(0), torch::stack(c).unsqueeze(0), tau)
      .loss.item<double>();
}

std::vector<torch::Tensor> alignment_targets(const std::vector<heatmaps::HeatmapSpec>& specs,
                                             const networks::ArchitectureDescriptor& arch,
                                             const std::vector<int>& levels) {
  const int res = arch.image_resolution;
  if (arch.mode == networks::GeneratorMode::kIndoor) {
    std::vector<torch::Tensor> batch;
    for (const auto& spec : specs) {
      const auto set = heatmaps::render(spec, res);
      const auto& maps = set.levels.front();
      auto channels = encoding::to_tensor(maps);
      batch.push_back(torch::cat(std::vector<torch::Tensor>{channels, encoding::to_tensor(maps.sum).unsqueeze(0)}));
    }
    return {torch::stack(batch)};
  }
  std::vector<std::vector<torch::Tensor>> per_level(levels.size());
  for (const auto& spec : specs) {
    const auto set = heatmaps::render(spec, res);
    for (std::size_t i = 0; i < levels.size(); ++i) {
      per_level[i].push_back(encoding::to_tensor(set.levels.at(static_cast<std::size_t>(levels[i])).sum));
    }
  }
  std::vector<torch::Tensor> out;
  for (auto& maps : per_level) out.push_back(torch::stack(maps));
  return out;
}

AlignLoss alignment_term(const networks::DiscriminatorOutput& scored, const std::vector<heatmaps::HeatmapSpec>& specs,
                         const TrainConfig& config, bool create_graph) {
  const bool indoor = config.arch.mode == networks::GeneratorMode::kIndoor;
  const std::vector<int> levels = indoor ? std::vector<int>{0} : config.align_levels;
  const auto targets = alignment_targets(specs, config.arch, levels);
  AlignLoss total;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto& activation = scored.trace.activation(d_layer_for_level(levels[i]));
    const auto maps = attention::max_normalize(
        attention::gradcam_from_activation(activation, scored.score, attention::Objective::kMaximize, create_graph));
    auto part = indoor ? align_loss_indoor(maps, targets[i], config.tau) : align_loss(maps, targets[i], config.tau);
    if (i == 0) {
      total = std::move(part);
    } else {
      total.loss = total.loss + part.loss;
      total.distance = total.distance + part.distance;
      total.truncation_rate += part.truncation_rate;
    }
  }
  const auto n = static_cast<double>(levels.size());
  total.loss = total.loss / n;
  total.distance = total.distance / n;
  total.truncation_rate /= n;
  return total;
}

double alignment_distance(const networks::Generator& generator, const networks::Discriminator& discriminator,
                          const TrainConfig& config, int batch, Rng& rng) {
  if (!config.arch.spatial()) throw InvalidArgument("alignment distance needs a spatial generator");
  const auto latents = networks::sample_latents(batch, config.arch, rng);
  const auto specs = networks::sample_specs(batch, config.arch, config.sampling, rng);
  torch::Tensor image;
  {
    torch::NoGradGuard no_grad;
    image = generator->forward(latents, networks::heatmap_inputs(specs, config.arch)).image;
  }
  torch::AutoGradMode grad_mode(true);
  const auto scored = discriminator->forward(image.detach().requires_grad_(true), /*capture=*/true);
  return alignment_term(scored, specs, config, /*create_graph=*/false).distance.mean().item<double>();
}

RealDataset::RealDataset(torch::Tensor images) : images_(std::move(images)) {
  if (images_.dim() != 4 || images_.size(1) != 3 || images_.size(0) < 1) {
    throw InvalidArgument("real data must be a non-empty (M, 3, R, R) tensor");
  }
  images_ = images_.to(torch::kFloat).contiguous();
}

RealDataset RealDataset::from_images(const std::vector<Image>& images) {
  if (images.empty()) throw InvalidArgument("no real images");
  std::vector<torch::Tensor> t;
  t.reserve(images.size());
  for (const auto& img : images) t.push_back(image_to_tensor(img));
  return RealDataset(torch::stack(t));
}

torch::Tensor RealDataset::sample(int batch, Rng& rng) const {
  std::vector<int64_t> idx(static_cast<std::size_t>(batch));
  for (auto& i : idx) i = static_cast<int64_t>(rng.below(static_cast<std::uint64_t>(size())));
  return images_.index_select(0, torch::tensor(idx, torch::kLong));
}

torch::Tensor image_to_tensor(const Image& image) {
  if (image.channels != 3) throw InvalidArgument("expected a 3-channel image");
  auto t = torch::from_blob(const_cast<float*>(image.data.data()), {image.height, image.width, 3}, torch::kFloat);
  return (t.permute({2, 0, 1}) * 2.0 - 1.0).contiguous();
}

Image tensor_to_image(const torch::Tensor& chw) {
  if (chw.dim() != 3 || chw.size(0) != 3) throw InvalidArgument("expected a (3, H, W) tensor");
  const auto t = ((chw.detach().to(torch::kFloat).clamp(-1.0, 1.0) + 1.0) * 0.5).permute({1, 2, 0}).contiguous();
  Image out(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), 3);
  std::copy_n(t.data_ptr<float>(), out.data.size(), out.data.begin());
  return out;
}

Trainer::Trainer(TrainConfig config, RealDataset data, std::optional<std::uint64_t> seed)
    : config_(std::move(config)), data_(std::move(data)) {
  config_.validate();
  if (data_.resolution() != config_.arch.image_resolution) {
    throw InvalidArgument("real images are " + std::to_string(data_.resolution()) + "px, model expects " +
                          std::to_string(config_.arch.image_resolution));
  }
  seed_ = seed.value_or(config_.seeds.front());
  Rng root(seed_);
  Rng init = root.split();
  data_rng_ = root.split();
  latent_rng_ = root.split();
  heatmap_rng_ = root.split();
  generator_ = networks::Generator(config_.arch, init);
  discriminator_ = networks::Discriminator(config_.arch, init);
  const auto options = torch::optim::AdamOptions(config_.learning_rate)
                           .betas({config_.adam_beta1, config_.adam_beta2})
                           .eps(config_.adam_eps);
  g_opt_ = std::make_unique<torch::optim::Adam>(generator_->parameters(), options);
  d_opt_ = std::make_unique<torch::optim::Adam>(discriminator_->parameters(), options);
}

Trainer::Batch Trainer::draw_batch(int batch, Rng& latent_rng, Rng& heatmap_rng) const {
  Batch b;
  b.latents = networks::sample_latents(batch, config_.arch, latent_rng);
  // Heatmaps are drawn even for the baseline so every configuration consumes
  // the streams identically.
  b.specs = networks::sample_specs(batch, config_.arch, config_.sampling, heatmap_rng);
  if (config_.arch.spatial()) b.heatmaps = networks::heatmap_inputs(b.specs, config_.arch);
  return b;
}

LossReport Trainer::step() {
  LossReport report;
  report.step = step_;
  discriminator_step(report);
  generator_step(report);
  ++step_;
  return report;
}

void Trainer::discriminator_step(LossReport& report) {
  // Fakes come from a no-grad pass, so only D receives gradients.
  const int batch = config_.batch_size;
  auto real = data_.sample(batch, data_rng_);
  const auto b = draw_batch(batch, latent_rng_, heatmap_rng_);
  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    fake = generator_->forward(b.latents, b.heatmaps).image;
  }
  report.r1_applied = config_.r1_gamma > 0.0 && step_ % config_.r1_interval == 0;
  if (report.r1_applied) real.requires_grad_(true);
  const auto real_score = discriminator_->forward(real).score;
  const auto fake_score = discriminator_->forward(fake).score;
  const auto d_loss = d_logistic_loss(real_score, fake_score);
  auto total = d_loss;
  check_finite(step_, "d_loss", d_loss);
  report.d_loss = d_loss.item<double>();
  if (report.r1_applied) {
    const auto r1 = r1_penalty(real_score, real);
    check_finite(step_, "r1", r1);
    report.r1 = r1.item<double>();
    total = total + r1 * (config_.r1_gamma / 2.0 * config_.r1_interval);
  }
  d_opt_->zero_grad();
  total.backward();
  d_opt_->step();
}

void Trainer::generator_step(LossReport& report) {
  // Gradients are taken w.r.t. G parameters only: the alignment term flows
  // through D's GradCAM but never updates D.
  const int batch = config_.batch_size;
  const auto b = draw_batch(batch, latent_rng_, heatmap_rng_);
  const auto generated = generator_->forward(b.latents, b.heatmaps);
  const bool align = config_.alignment_enabled();
  const auto scored = discriminator_->forward(generated.image, /*capture=*/align);
  const auto g_adv = g_logistic_loss(scored.score);
  check_finite(step_, "g_adv", g_adv);
  report.g_adv = g_adv.item<double>();
  auto total = g_adv;
  if (align) {
    const auto al = alignment_term(scored, b.specs, config_, /*create_graph=*/true);
    check_finite(step_, "align", al.loss);
    report.align = al.loss.item<double>();
    report.align_distance = al.distance.mean().item<double>();
    report.align_truncation_rate = al.truncation_rate;
    total = total + al.loss * config_.align_weight;
  }
  auto params = generator_->parameters();
  const auto grads = torch::autograd::grad({total}, params, {}, /*retain_graph=*/false, /*create_graph=*/false,
                                           /*allow_unused=*/true);
  // Assigned directly (undefined grads are skipped by Adam); zero_grad()
  // would try to detach_() gradients that autograd returned as views.
  for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_grad() = grads[i];
  g_opt_->step();
}

namespace {

void append_adam_state(checkpoint::NamedTensors& out, nlohmann::json& steps, torch::optim::Adam& opt,
                       const std::vector<std::pair<std::string, torch::Tensor>>& params, const std::string& prefix) {
  auto& state = opt.state();
  for (const auto& [name, p] : params) {
    const auto it = state.find(p.unsafeGetTensorImpl());
    if (it == state.end()) continue;
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    steps[name] = s.step();
    out.emplace_back(prefix + name + ".exp_avg", s.exp_avg());
    out.emplace_back(prefix + name + ".exp_avg_sq", s.exp_avg_sq());
  }
}

void restore_adam_state(torch::optim::Adam& opt, const checkpoint::Archive& archive, const nlohmann::json& steps,
                        const std::vector<std::pair<std::string, torch::Tensor>>& params, const std::string& prefix) {
  auto& state = opt.state();
  for (const auto& [name, p] : params) {
    if (!steps.contains(name)) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(steps[name].get<int64_t>());
    s->exp_avg(archive.tensor(prefix + name + ".exp_avg").clone());
    s->exp_avg_sq(archive.tensor(prefix + name + ".exp_avg_sq").clone());
    if (s->exp_avg().sizes() != p.sizes()) throw FormatError("optimizer state shape mismatch for " + name);
    state[p.unsafeGetTensorImpl()] = std::move(s);
  }
}

std::vector<std::pair<std::string, torch::Tensor>> named_params(const torch::nn::Module& m) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : m.named_parameters(true)) out.emplace_back(item.key(), item.value());
  return out;
}

}  // namespace

void Trainer::save(const std::filesystem::path& dir) const {
  checkpoint::NamedTensors tensors;
  checkpoint::append_module_state(tensors, *generator_, "G.");
  checkpoint::append_module_state(tensors, *discriminator_, "D.");
  nlohmann::json g_steps = nlohmann::json::object(), d_steps = nlohmann::json::object();
  append_adam_state(tensors, g_steps, *g_opt_, named_params(*generator_), "optG.");
  append_adam_state(tensors, d_steps, *d_opt_, named_params(*discriminator_), "optD.");
  nlohmann::json manifest = {
      {"descriptor", config_.arch.to_json()},
      {"sampling", {{"base_variance", config_.sampling.base_variance},
                    {"shared_variance", config_.sampling.shared_variance}}},
      {"config", config_.to_json()},
      {"seed", seed_},
      {"step", step_},
      {"rng", {{"data", rng_json(data_rng_)}, {"latent", rng_json(latent_rng_)}, {"heatmap", rng_json(heatmap_rng_)}}},
      {"optimizer_steps", {{"G", g_steps}, {"D", d_steps}}},
  };
  checkpoint::write_archive(dir, std::move(manifest), tensors);
}

Trainer Trainer::resume(const std::filesystem::path& dir, RealDataset data) {
  const auto archive = checkpoint::read_archive(dir);
  const auto& m = archive.manifest;
  TrainConfig config;
  try {
    config.merge_json(m.at("config"));
    Trainer t(config, std::move(data), m.at("seed").get<std::uint64_t>());
    checkpoint::load_module_state(*t.generator_, archive, "G.");
    checkpoint::load_module_state(*t.discriminator_, archive, "D.");
    restore_adam_state(*t.g_opt_, archive, m.at("optimizer_steps").at("G"), named_params(*t.generator_), "optG.");
    restore_adam_state(*t.d_opt_, archive, m.at("optimizer_steps").at("D"), named_params(*t.discriminator_), "optD.");
    t.step_ = m.at("step").get<long>();
    t.data_rng_.set_state(m.at("rng").at("data").get<std::string>());
    t.latent_rng_.set_state(m.at("rng").at("latent").get<std::string>());
    t.heatmap_rng_.set_state(m.at("rng").at("heatmap").get<std::string>());
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad training manifest: ") + e.what());
  }
}

}  // namespace spatialgan::training
