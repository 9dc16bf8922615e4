#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "spatialgan/attention.hpp"
#include "spatialgan/image_io.hpp"
#include "spatialgan/networks.hpp"
#include "spatialgan/rng.hpp"

namespace spatialgan::training {

struct TrainConfig {
  networks::ArchitectureDescriptor arch;  // mode, SEL variant, coarse flag
  networks::HeatmapSampling sampling;
  double learning_rate = 2.5e-3;
  int batch_size = 16;  // the paper uses 64
  double r1_gamma = 1.0;
  int r1_interval = 16;  // lazy R1; the penalty is scaled by the interval
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;
  double align_weight = 1.0;
  double tau = 0.25;
  // Hierarchical levels aligned with the discriminator block of the same
  // resolution (level l <-> "b{4 << l}"). Indoor mode uses "b4".
  std::vector<int> align_levels = {0};
  long total_steps = 20000;
  std::vector<std::uint64_t> seeds = {0};

  bool alignment_enabled() const { return align_weight > 0.0 && arch.spatial(); }
  void validate() const;
  nlohmann::json to_json() const;
  // Keys absent from `j` keep their current values.
  void merge_json(const nlohmann::json& j);
};

struct LossReport {
  long step = 0;
  double d_loss = 0.0;  // logistic terms, without the R1 penalty
  double g_adv = 0.0;
  double r1 = 0.0;  // mean squared gradient norm on steps where R1 fired, else 0
  bool r1_applied = false;
  double align = 0.0;  // truncated alignment loss
  double align_distance = 0.0;  // untruncated mean L1 distance
  double align_truncation_rate = 0.0;  // fraction of samples below tau

  nlohmann::json to_json() const;
};

// --- Losses -----------------------------------------------------------------

// Non-saturating logistic losses.
torch::Tensor d_logistic_loss(const torch::Tensor& real_score, const torch::Tensor& fake_score);
torch::Tensor g_logistic_loss(const torch::Tensor& fake_score);
// mean_i ||d score_i / d x_i||^2; `real` must require grad and `real_score`
// must depend on it. Differentiable w.r.t. D parameters.
torch::Tensor r1_penalty(const torch::Tensor& real_score, const torch::Tensor& real);

struct AdversarialLosses {
  torch::Tensor d_loss;  // includes (gamma / 2) * r1
  torch::Tensor g_loss;
  torch::Tensor r1;
};

AdversarialLosses adversarial_losses(const networks::Discriminator& discriminator, const torch::Tensor& real,
                                     const torch::Tensor& fake, double gamma);

struct AlignLoss {
  torch::Tensor loss;      // scalar, batch mean of truncated per-sample distances
  torch::Tensor distance;  // (N) untruncated
  double truncation_rate = 0.0;
};

// attention (N, h, w); heatmap (N, H, W), resized down to (h, w).
// Per sample v = mean |attention - heatmap|; samples with v < tau contribute
// exactly zero (value and gradient).
AlignLoss align_loss(const torch::Tensor& attention, const torch::Tensor& heatmap, double tau);

// candidates (N, K, H, W): the sub-heatmaps and their sum. Per sample the
// minimum distance over candidates is truncated as above.
AlignLoss align_loss_indoor(const torch::Tensor& attention, const torch::Tensor& candidates, double tau);

// Single-map forms.
double align_loss(const attention::AttentionMap& attention, const heatmaps::Map2D& heatmap_sum, double tau);
double align_loss_indoor(const attention::AttentionMap& attention, const std::vector<heatmaps::Map2D>& candidates,
                         double tau);

// Alignment targets at the image resolution for a batch of specs: hierarchical
// specs give one (N, R, R) sum per requested level; multi-object specs give a
// single (N, n + 1, R, R) tensor of sub-heatmaps followed by their sum.
std::vector<torch::Tensor> alignment_targets(const std::vector<heatmaps::HeatmapSpec>& specs,
                                             const networks::ArchitectureDescriptor& arch,
                                             const std::vector<int>& levels);

// GradCAM alignment term for generated images already scored by D with
// activations captured. Indoor mode compares "b4" with the sub-heatmaps and
// their sum; hierarchical mode averages the configured levels.
AlignLoss alignment_term(const networks::DiscriminatorOutput& scored, const std::vector<heatmaps::HeatmapSpec>& specs,
                         const TrainConfig& config, bool create_graph);

// Mean untruncated alignment distance of freshly sampled generator outputs.
double alignment_distance(const networks::Generator& generator, const networks::Discriminator& discriminator,
                          const TrainConfig& config, int batch, Rng& rng);

// --- Data -------------------------------------------------------------------

// Real images (M, 3, R, R) in [-1, 1], sampled with replacement.
class RealDataset {
 public:
  explicit RealDataset(torch::Tensor images);
  static RealDataset from_images(const std::vector<Image>& images);

  torch::Tensor sample(int batch, Rng& rng) const;
  int64_t size() const { return images_.size(0); }
  int resolution() const { return static_cast<int>(images_.size(2)); }
  const torch::Tensor& images() const { return images_; }

 private:
  torch::Tensor images_;
};

// Image in [0, 1] HWC -> (3, R, R) tensor in [-1, 1], and back.
torch::Tensor image_to_tensor(const Image& image);
Image tensor_to_image(const torch::Tensor& chw);

// --- Training loop ----------------------------------------------------------

class Trainer {
 public:
  // Initializes G and D from `seed` (defaults to the first configured seed).
  Trainer(TrainConfig config, RealDataset data, std::optional<std::uint64_t> seed = std::nullopt);

  // One D-step (adversarial + lazy R1) followed by one G-step (adversarial +
  // weighted alignment). Throws TrainingDiverged on a non-finite loss.
  LossReport step();
  // The two halves of step(), filling their fields of `report`; neither
  // advances the step count.
  void discriminator_step(LossReport& report);
  void generator_step(LossReport& report);

  // Mean untruncated alignment distance on a fresh batch drawn from `rng`
  // (does not touch the training streams).
  double alignment_distance(int batch, Rng& rng) const {
    return training::alignment_distance(generator_, discriminator_, config_, batch, rng);
  }

  long step_count() const { return step_; }
  std::uint64_t seed() const { return seed_; }
  const TrainConfig& config() const { return config_; }
  const networks::Generator& generator() const { return generator_; }
  const networks::Discriminator& discriminator() const { return discriminator_; }
  networks::Generator& generator() { return generator_; }
  networks::Discriminator& discriminator() { return discriminator_; }

  void save(const std::filesystem::path& dir) const;
  // Restores parameters, optimizer moments, step and rng streams so the next
  // step reproduces an uninterrupted run.
  static Trainer resume(const std::filesystem::path& dir, RealDataset data);

 private:
  struct Batch {
    torch::Tensor latents;
    std::vector<heatmaps::HeatmapSpec> specs;
    std::vector<torch::Tensor> heatmaps;
  };
  Batch draw_batch(int batch, Rng& latent_rng, Rng& heatmap_rng) const;

  TrainConfig config_;
  RealDataset data_;
  std::uint64_t seed_ = 0;
  networks::Generator generator_{nullptr};
  networks::Discriminator discriminator_{nullptr};
  std::unique_ptr<torch::optim::Adam> g_opt_;
  std::unique_ptr<torch::optim::Adam> d_opt_;
  Rng data_rng_;
  Rng latent_rng_;
  Rng heatmap_rng_;
  long step_ = 0;
};

}  // namespace spatialgan::training
