#pragma once

#include <torch/torch.h>

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spatialgan/heatmaps.hpp"
#include "spatialgan/image_io.hpp"
#include "spatialgan/networks.hpp"
#include "spatialgan/rng.hpp"
#include "spatialgan/synth_data.hpp"

namespace spatialgan::evaluation {

// A rendered image, with per-object ground-truth masks when the renderer
// knows them (analytic renderers, synthetic records).
struct Frame {
  Image image;
  std::vector<synth::Mask> ground_truth;
};

struct Segment {
  synth::Mask mask;
  heatmaps::Point center;  // mean pixel position (y, x)
  std::vector<double> descriptor;
};

// Area fraction, mean color and normalized central moments (eta20, eta11,
// eta02) of the masked region.
std::vector<double> describe(const Image& image, const synth::Mask& mask);
heatmaps::Point mask_center(const synth::Mask& mask);

class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::vector<Segment> segment(const Frame& frame) const = 0;
};

// Returns the frame's ground-truth masks (empty ones dropped).
class OracleSegmenter final : public Segmenter {
 public:
  std::vector<Segment> segment(const Frame& frame) const override;
};

// For images without ground truth: fits a linear background per channel,
// marks pixels whose residual exceeds `threshold`, and grows 4-connected
// regions of similar color. Regions smaller than `min_area` are dropped.
class ForegroundSegmenter final : public Segmenter {
 public:
  explicit ForegroundSegmenter(double threshold = 0.12, double color_tolerance = 0.12, long min_area = 4)
      : threshold_(threshold), color_tolerance_(color_tolerance), min_area_(min_area) {}
  std::vector<Segment> segment(const Frame& frame) const override;

 private:
  double threshold_;
  double color_tolerance_;
  long min_area_;
};

// Something that turns multi-object heatmaps into images under a fixed
// per-trial latent draw.
class Synthesizer {
 public:
  virtual ~Synthesizer() = default;
  virtual int resolution() const = 0;
  // Starts a trial: draws fresh latents (if any).
  virtual void reset(Rng& rng) = 0;
  virtual heatmaps::MultiObjectHeatmapSpec sample_spec(Rng& rng) const = 0;
  virtual Frame render(const heatmaps::MultiObjectHeatmapSpec& spec) const = 0;
};

// Closed-form stand-in generator: a flat background with a disc of fixed
// radius exactly at every active sub-center (later identities on top).
// Layouts are redrawn until every disc stays fully in frame and clear of the
// others even after a move of up to `move_margin` pixels (<= 0: side / 8), so
// a perfect generator's measured displacement is the commanded one.
class DiscRenderer final : public Synthesizer {
 public:
  DiscRenderer(int resolution, double radius, int n_objects = 3, double move_margin = 0.0);
  int resolution() const override { return resolution_; }
  void reset(Rng&) override {}
  heatmaps::MultiObjectHeatmapSpec sample_spec(Rng& rng) const override;
  Frame render(const heatmaps::MultiObjectHeatmapSpec& spec) const override;

 private:
  int resolution_;
  double radius_;
  int n_objects_;
  double margin_;
};

// Indoor-mode generator behind the Synthesizer interface.
class GeneratorSynthesizer final : public Synthesizer {
 public:
  GeneratorSynthesizer(networks::Generator generator, networks::HeatmapSampling sampling);
  int resolution() const override;
  void reset(Rng& rng) override;
  heatmaps::MultiObjectHeatmapSpec sample_spec(Rng& rng) const override;
  Frame render(const heatmaps::MultiObjectHeatmapSpec& spec) const override;

 private:
  networks::Generator generator_;
  networks::HeatmapSampling sampling_;
  torch::Tensor latents_;
};

struct CoMoveTrial {
  heatmaps::Point p;  // commanded displacement, pixels
  heatmaps::Point q;  // measured displacement, pixels
  double ratio = 0.0;
};

struct CoMoveResult {
  std::vector<CoMoveTrial> trials;
  double mean = 0.0;
  int count = 0;
  int skipped = 0;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// (p . q) / |p|^2.
double comove_projection(heatmaps::Point p, heatmaps::Point q);

struct CoMoveOptions {
  int trials = 200;
  // Radius of the commanded displacement in pixels; <= 0 means 1/8 of the
  // image side.
  double move_magnitude = 0.0;
};

// Throws EvaluationEmpty when no trial is valid.
CoMoveResult comove_ratio(Synthesizer& model, const Segmenter& segmenter, const CoMoveOptions& options, Rng& rng);

// Frechet distance between Gaussians (mu1, s1) and (mu2, s2), in double:
// |mu1 - mu2|^2 + Tr(s1 + s2 - 2 (s1 s2)^(1/2)).
double frechet_distance(const torch::Tensor& mu1, const torch::Tensor& s1, const torch::Tensor& mu2,
                        const torch::Tensor& s2);

// Fixed random convolutional embedder drawn from `seed`: images (N, 3, R, R)
// in [-1, 1] -> (N, kEmbeddingDim) features.
inline constexpr int kEmbeddingDim = 48;
torch::Tensor embed(const torch::Tensor& images, std::uint64_t seed);

// Frechet distance of embedded feature statistics; needs >= 2 samples per
// side.
double fid_proxy(const torch::Tensor& samples_a, const torch::Tensor& samples_b, std::uint64_t embedder_seed = 0);
double fid_proxy(const std::vector<Image>& samples_a, const std::vector<Image>& samples_b,
                 std::uint64_t embedder_seed = 0);

struct FidReport {
  double value = 0.0;
  int samples_a = 0;
  int samples_b = 0;
  std::uint64_t embedder_seed = 0;
  nlohmann::json to_json() const;
};

// Generated samples (N, 3, R, R) with default-sampled heatmaps.
torch::Tensor generate_samples(const networks::Generator& generator, const networks::HeatmapSampling& sampling,
                               int count, Rng& rng);

// Channel mean of one sample's activation at `block`, min-max normalized
// (a constant map becomes all zeros).
heatmaps::Map2D generator_feature_map(const networks::ForwardTrace& trace, const std::string& block, int sample = 0);

struct ContinuityReport {
  double fraction = 0.0;
  double fid_clean = 0.0;      // clean-conditioned samples vs reference
  double fid_corrupted = 0.0;  // impulse-corrupted heatmaps vs reference
  double delta = 0.0;
  int samples = 0;
  nlohmann::json to_json() const;
};

// Replaces `fraction` of heatmap pixels with 0 or 1 and compares the quality
// of clean- and corrupted-conditioned samples against `reference`.
ContinuityReport heatmap_continuity_probe(const networks::Generator& generator,
                                          const networks::HeatmapSampling& sampling, double fraction,
                                          const torch::Tensor& reference, int samples, Rng& rng,
                                          std::uint64_t embedder_seed = 0);

}  // namespace spatialgan::evaluation
