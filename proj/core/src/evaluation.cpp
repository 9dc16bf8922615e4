#include "spatialgan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "spatialgan/errors.hpp"
#include "spatialgan/layers.hpp"
#include "spatialgan/spatial_encoding.hpp"
#include "spatialgan/training.hpp"

namespace spatialgan::evaluation {
namespace {

double color_distance(const Image& image, int y0, int x0, int y1, int x1) {
  double d = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double diff = image.at(y0, x0, c) - image.at(y1, x1, c);
    d += diff * diff;
  }
  return std::sqrt(d);
}

Segment make_segment(const Image& image, synth::Mask mask) {
  Segment s;
  s.center = mask_center(mask);
  s.descriptor = describe(image, mask);
  s.mask = std::move(mask);
  return s;
}

bool contains(const synth::Mask& mask, heatmaps::Point pixel) {
  const int y = static_cast<int>(std::lround(pixel.y));
  const int x = static_cast<int>(std::lround(pixel.x));
  return y >= 0 && x >= 0 && y < mask.height && x < mask.width && mask.at(y, x) != 0;
}

double descriptor_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

heatmaps::Point to_pixels(heatmaps::Point p, int res) {
  return {heatmaps::to_pixels(p.y, res), heatmaps::to_pixels(p.x, res)};
}

std::pair<torch::Tensor, torch::Tensor> moments(const torch::Tensor& features) {
  const auto f = features.to(torch::kDouble);
  const auto mu = f.mean(0);
  const auto centered = f - mu;
  const auto cov = centered.t().matmul(centered) / static_cast<double>(f.size(0) - 1);
  return {mu, cov};
}

torch::Tensor images_to_tensor(const std::vector<Image>& images) {
  std::vector<torch::Tensor> t;
  for (const auto& img : images) t.push_back(training::image_to_tensor(img));
  return torch::stack(t);
}

}  // namespace

heatmaps::Point mask_center(const synth::Mask& mask) {
  double sy = 0.0, sx = 0.0;
  long n = 0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(y, x) == 0) continue;
      sy += y;
      sx += x;
      ++n;
    }
  }
  if (n == 0) throw InvalidArgument("empty mask has no center");
  return {sy / n, sx / n};
}

std::vector<double> describe(const Image& image, const synth::Mask& mask) {
  const auto c = mask_center(mask);
  const double area = static_cast<double>(mask.area());
  double color[3] = {0.0, 0.0, 0.0};
  double mu20 = 0.0, mu11 = 0.0, mu02 = 0.0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(y, x) == 0) continue;
      for (int ch = 0; ch < 3; ++ch) color[ch] += image.at(y, x, ch);
      const double dy = y - c.y, dx = x - c.x;
      mu20 += dx * dx;
      mu11 += dx * dy;
      mu02 += dy * dy;
    }
  }
  // eta_pq = mu_pq / mu_00^(1 + (p + q) / 2); second order divides by area^2.
  const double norm = area * area;
  return {area / (static_cast<double>(mask.height) * mask.width), color[0] / area, color[1] / area, color[2] / area,
          mu20 / norm, mu11 / norm, mu02 / norm};
}

std::vector<Segment> OracleSegmenter::segment(const Frame& frame) const {
  std::vector<Segment> out;
  for (const auto& mask : frame.ground_truth) {
    if (mask.area() > 0) out.push_back(make_segment(frame.image, mask));
  }
  return out;
}

std::vector<Segment> ForegroundSegmenter::segment(const Frame& frame) const {
  const auto& img = frame.image;
  const int h = img.height, w = img.width;
  const long n = static_cast<long>(h) * w;
  // Least-squares plane a + b*y + c*x per channel, refit once on the pixels
  // the first fit calls background.
  std::vector<std::uint8_t> background(static_cast<std::size_t>(n), 1);
  std::vector<double> residual(static_cast<std::size_t>(n), 0.0);
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> rows, targets[3];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!background[static_cast<std::size_t>(y) * w + x]) continue;
        rows.insert(rows.end(), {1.0, static_cast<double>(y), static_cast<double>(x)});
        for (int c = 0; c < 3; ++c) targets[c].push_back(img.at(y, x, c));
      }
    }
    const auto m = static_cast<int64_t>(rows.size() / 3);
    if (m < 3) break;
    const auto a = torch::from_blob(rows.data(), {m, 3}, torch::kDouble);
    std::fill(residual.begin(), residual.end(), 0.0);
    for (int c = 0; c < 3; ++c) {
      const auto b = torch::from_blob(targets[c].data(), {m, 1}, torch::kDouble);
      const auto coef = std::get<0>(torch::linalg_lstsq(a, b, std::nullopt, "gelsd")).contiguous();
      const auto* k = coef.data_ptr<double>();
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double r = img.at(y, x, c) - (k[0] + k[1] * y + k[2] * x);
          residual[static_cast<std::size_t>(y) * w + x] += r * r;
        }
      }
    }
    for (long i = 0; i < n; ++i) background[static_cast<std::size_t>(i)] = std::sqrt(residual[i]) <= threshold_;
  }

  std::vector<int> label(static_cast<std::size_t>(n), -1);
  std::vector<Segment> out;
  int next = 0;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      const auto i0 = static_cast<std::size_t>(y0) * w + x0;
      if (background[i0] || label[i0] >= 0) continue;
      synth::Mask mask(h, w);
      std::vector<std::pair<int, int>> stack{{y0, x0}};
      label[i0] = next;
      while (!stack.empty()) {
        const auto [y, x] = stack.back();
        stack.pop_back();
        mask.at(y, x) = 1;
        constexpr int dy[4] = {-1, 1, 0, 0};
        constexpr int dx[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int ny = y + dy[k], nx = x + dx[k];
          if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
          const auto j = static_cast<std::size_t>(ny) * w + nx;
          if (background[j] || label[j] >= 0) continue;
          if (color_distance(img, y, x, ny, nx) > color_tolerance_) continue;
          label[j] = next;
          stack.emplace_back(ny, nx);
        }
      }
      ++next;
      if (mask.area() >= min_area_) out.push_back(make_segment(img, std::move(mask)));
    }
  }
  return out;
}

DiscRenderer::DiscRenderer(int resolution, double radius, int n_objects, double move_margin)
    : resolution_(resolution),
      radius_(radius),
      n_objects_(n_objects),
      margin_(move_margin > 0.0 ? move_margin : resolution / 8.0) {
  if (resolution < 2 || radius <= 0.0 || n_objects < 1) throw InvalidArgument("bad disc renderer configuration");
  if (2.0 * (radius_ + margin_) >= resolution - 1) throw InvalidArgument("discs cannot fit the frame");
}

heatmaps::MultiObjectHeatmapSpec DiscRenderer::sample_spec(Rng& rng) const {
  const double lo = radius_ + margin_;
  const double hi = resolution_ - 1 - lo;
  const double gap = 2.0 * radius_ + margin_ + 1.0;
  for (int attempt = 0; attempt < 100 * heatmaps::kMaxSamplingAttempts; ++attempt) {
    auto spec = heatmaps::sample_multiobject(resolution_, n_objects_, 0.25, rng);
    bool ok = true;
    for (std::size_t i = 0; i < spec.subs.size() && ok; ++i) {
      const auto c = to_pixels(spec.subs[i].center, resolution_);
      ok = c.y >= lo && c.y <= hi && c.x >= lo && c.x <= hi;
      for (std::size_t j = 0; j < i && ok; ++j) {
        const auto d = to_pixels(spec.subs[j].center, resolution_);
        ok = std::hypot(c.y - d.y, c.x - d.x) >= gap;
      }
    }
    if (ok) return spec;
  }
  throw SamplingExhausted("no disc layout fits the frame");
}

Frame DiscRenderer::render(const heatmaps::MultiObjectHeatmapSpec& spec) const {
  const auto palette = synth::SceneConfig::default_palette();
  Frame frame;
  frame.image = Image(resolution_, resolution_, 3, 0.5f);
  std::vector<int> owner(static_cast<std::size_t>(resolution_) * resolution_, -1);
  for (std::size_t k = 0; k < spec.subs.size(); ++k) {
    const auto& sub = spec.subs[k];
    if (!sub.active) continue;
    const auto c = to_pixels(sub.center, resolution_);
    const auto& color = palette[static_cast<std::size_t>(sub.identity) % palette.size()];
    for (int y = 0; y < resolution_; ++y) {
      for (int x = 0; x < resolution_; ++x) {
        if ((y - c.y) * (y - c.y) + (x - c.x) * (x - c.x) > radius_ * radius_) continue;
        owner[static_cast<std::size_t>(y) * resolution_ + x] = static_cast<int>(k);
        for (int ch = 0; ch < 3; ++ch) frame.image.at(y, x, ch) = color[static_cast<std::size_t>(ch)];
      }
    }
  }
  frame.ground_truth.assign(spec.subs.size(), synth::Mask(resolution_, resolution_));
  for (int y = 0; y < resolution_; ++y) {
    for (int x = 0; x < resolution_; ++x) {
      const int k = owner[static_cast<std::size_t>(y) * resolution_ + x];
      if (k >= 0) frame.ground_truth[static_cast<std::size_t>(k)].at(y, x) = 1;
    }
  }
  return frame;
}

GeneratorSynthesizer::GeneratorSynthesizer(networks::Generator generator, networks::HeatmapSampling sampling)
    : generator_(std::move(generator)), sampling_(sampling) {
  if (generator_->arch().mode != networks::GeneratorMode::kIndoor) {
    throw ModeConflict("co-move evaluation needs an indoor-mode generator");
  }
}

int GeneratorSynthesizer::resolution() const { return generator_->arch().image_resolution; }

void GeneratorSynthesizer::reset(Rng& rng) { latents_ = networks::sample_latents(1, generator_->arch(), rng); }

heatmaps::MultiObjectHeatmapSpec GeneratorSynthesizer::sample_spec(Rng& rng) const {
  return std::get<heatmaps::MultiObjectHeatmapSpec>(networks::sample_spec(generator_->arch(), sampling_, rng));
}

Frame GeneratorSynthesizer::render(const heatmaps::MultiObjectHeatmapSpec& spec) const {
  if (!latents_.defined()) throw InvalidArgument("reset() must be called before render()");
  torch::NoGradGuard no_grad;
  const auto inputs = networks::heatmap_inputs({spec}, generator_->arch());
  const auto image = generator_->forward(latents_, inputs).image;
  return {training::tensor_to_image(image[0]), {}};
}

double comove_projection(heatmaps::Point p, heatmaps::Point q) {
  const double pp = p.y * p.y + p.x * p.x;
  if (pp == 0.0) throw InvalidArgument("zero commanded displacement");
  return (p.y * q.y + p.x * q.x) / pp;
}

CoMoveResult comove_ratio(Synthesizer& model, const Segmenter& segmenter, const CoMoveOptions& options, Rng& rng) {
  if (options.trials < 1) throw InvalidArgument("trials must be >= 1");
  const int res = model.resolution();
  const double magnitude = options.move_magnitude > 0.0 ? options.move_magnitude : res / 8.0;
  CoMoveResult result;
  double sum = 0.0;
  for (int t = 0; t < options.trials; ++t) {
    model.reset(rng);
    const auto spec = model.sample_spec(rng);
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    // Subs are tried in random order; the first whose center lies inside a
    // segmented object is moved.
    std::vector<std::size_t> order(spec.subs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    const auto before = model.render(spec);
    const auto segments = segmenter.segment(before);
    const Segment* target = nullptr;
    const heatmaps::SubHeatmapSpec* chosen = nullptr;
    for (const auto i : order) {
      const auto& sub = spec.subs[i];
      if (!sub.active) continue;
      for (const auto& s : segments) {
        if (contains(s.mask, to_pixels(sub.center, res))) {
          target = &s;
          chosen = &sub;
          break;
        }
      }
      if (target != nullptr) break;
    }
    if (target == nullptr) {
      ++result.skipped;
      continue;
    }
    const double scale = 2.0 / (res - 1);
    const heatmaps::Point delta{magnitude * std::sin(angle) * scale, magnitude * std::cos(angle) * scale};
    const auto moved = std::get<heatmaps::MultiObjectHeatmapSpec>(
        heatmaps::move_center(spec, heatmaps::Selector::object(chosen->identity), delta));
    // p is the displacement actually applied after edit clamping.
    const auto from = to_pixels(chosen->center, res);
    const auto to = to_pixels(heatmaps::find(moved, heatmaps::Selector::object(chosen->identity)).center, res);
    const heatmaps::Point p{to.y - from.y, to.x - from.x};
    if (p.y * p.y + p.x * p.x < 1e-12) {
      ++result.skipped;
      continue;
    }
    const auto after = segmenter.segment(model.render(moved));
    const Segment* match = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : after) {
      const double d = descriptor_distance(s.descriptor, target->descriptor);
      if (d < best) {
        best = d;
        match = &s;
      }
    }
    if (match == nullptr) {
      ++result.skipped;
      continue;
    }
    CoMoveTrial trial;
    trial.p = p;
    trial.q = {match->center.y - target->center.y, match->center.x - target->center.x};
    trial.ratio = comove_projection(trial.p, trial.q);
    sum += trial.ratio;
    result.trials.push_back(trial);
  }
  result.count = static_cast<int>(result.trials.size());
  if (result.count == 0) throw EvaluationEmpty("no valid co-move trial out of " + std::to_string(options.trials));
  result.mean = sum / result.count;
  return result;
}

nlohmann::json CoMoveResult::to_json() const {
  return {{"metric", "comove"}, {"mean", mean}, {"trials", count}, {"skipped", skipped}};
}

std::string CoMoveResult::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "trial,p_y,p_x,q_y,q_x,ratio\n";
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    out << i << ',' << t.p.y << ',' << t.p.x << ',' << t.q.y << ',' << t.q.x << ',' << t.ratio << '\n';
  }
  return out.str();
}

double frechet_distance(const torch::Tensor& mu1, const torch::Tensor& s1, const torch::Tensor& mu2,
                        const torch::Tensor& s2) {
  const auto m1 = mu1.to(torch::kDouble), m2 = mu2.to(torch::kDouble);
  const auto a = s1.to(torch::kDouble), b = s2.to(torch::kDouble);
  if (m1.sizes() != m2.sizes() || a.sizes() != b.sizes() || a.size(0) != m1.size(0)) {
    throw InvalidArgument("mismatched Gaussian statistics");
  }
  // Tr (a b)^(1/2) = Tr (a^(1/2) b a^(1/2))^(1/2), which stays symmetric.
  const auto [la, va] = torch::linalg_eigh(a);
  const auto root_a = va.matmul(torch::diag(la.clamp_min(0.0).sqrt())).matmul(va.t());
  auto inner = root_a.matmul(b).matmul(root_a);
  inner = (inner + inner.t()) * 0.5;
  const auto trace_root = torch::linalg_eigvalsh(inner).clamp_min(0.0).sqrt().sum();
  const auto value = (m1 - m2).square().sum() + a.trace() + b.trace() - 2.0 * trace_root;
  return std::max(0.0, value.item<double>());
}

torch::Tensor embed(const torch::Tensor& images, std::uint64_t seed) {
  if (images.dim() != 4 || images.size(1) != 3) throw InvalidArgument("expected (N, 3, R, R) images");
  torch::NoGradGuard no_grad;
  Rng rng(seed);
  const auto w1 = randn(rng, {16, 3, 3, 3}) / std::sqrt(27.0);
  const auto w2 = randn(rng, {32, 16, 3, 3}) / std::sqrt(144.0);
  const auto x = images.to(torch::kFloat);
  auto h1 = lrelu(torch::conv2d(x, w1, {}, 1, 1));
  auto h2 = lrelu(torch::conv2d(torch::avg_pool2d(h1, 2), w2, {}, 1, 1));
  // Global means of both stages keep colour and texture statistics.
  return torch::cat(std::vector<torch::Tensor>{h1.mean({2, 3}), h2.mean({2, 3})}, 1);
}

double fid_proxy(const torch::Tensor& samples_a, const torch::Tensor& samples_b, std::uint64_t embedder_seed) {
  if (samples_a.size(0) < 2 || samples_b.size(0) < 2) throw InvalidArgument("fid_proxy needs >= 2 samples per side");
  const auto [mu1, s1] = moments(embed(samples_a, embedder_seed));
  const auto [mu2, s2] = moments(embed(samples_b, embedder_seed));
  return frechet_distance(mu1, s1, mu2, s2);
}

double fid_proxy(const std::vector<Image>& samples_a, const std::vector<Image>& samples_b,
                 std::uint64_t embedder_seed) {
  if (samples_a.size() < 2 || samples_b.size() < 2) throw InvalidArgument("fid_proxy needs >= 2 samples per side");
  return fid_proxy(images_to_tensor(samples_a), images_to_tensor(samples_b), embedder_seed);
}

nlohmann::json FidReport::to_json() const {
  return {{"metric", "fid_proxy"},
          {"value", value},
          {"samples_a", samples_a},
          {"samples_b", samples_b},
          {"embedder_seed", embedder_seed}};
}

torch::Tensor generate_samples(const networks::Generator& generator, const networks::HeatmapSampling& sampling,
                               int count, Rng& rng) {
  torch::NoGradGuard no_grad;
  const auto& arch = generator->arch();
  std::vector<torch::Tensor> chunks;
  for (int done = 0; done < count;) {
    const int n = std::min(64, count - done);
    const auto latents = networks::sample_latents(n, arch, rng);
    const auto specs = networks::sample_specs(n, arch, sampling, rng);
    const auto inputs = arch.spatial() ? networks::heatmap_inputs(specs, arch) : std::vector<torch::Tensor>{};
    chunks.push_back(generator->forward(latents, inputs).image);
    done += n;
  }
  return torch::cat(chunks);
}

heatmaps::Map2D generator_feature_map(const networks::ForwardTrace& trace, const std::string& block, int sample) {
  const auto& act = trace.activation(block);
  if (sample < 0 || sample >= act.size(0)) throw InvalidArgument("sample index out of range");
  const auto mean = act[sample].detach().to(torch::kDouble).mean(0).contiguous();
  const double lo = mean.min().item<double>(), hi = mean.max().item<double>();
  heatmaps::Map2D out(static_cast<int>(mean.size(0)), static_cast<int>(mean.size(1)));
  const auto* data = mean.data_ptr<double>();
  auto values = out.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = hi > lo ? (data[i] - lo) / (hi - lo) : 0.0;
  return out;
}

nlohmann::json ContinuityReport::to_json() const {
  return {{"metric", "heatmap_continuity"},
          {"fraction", fraction},
          {"fid_clean", fid_clean},
          {"fid_corrupted", fid_corrupted},
          {"delta", delta},
          {"samples", samples}};
}

ContinuityReport heatmap_continuity_probe(const networks::Generator& generator,
                                          const networks::HeatmapSampling& sampling, double fraction,
                                          const torch::Tensor& reference, int samples, Rng& rng,
                                          std::uint64_t embedder_seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw InvalidArgument("impulse fraction must lie in [0, 1]");
  if (samples < 2) throw InvalidArgument("need >= 2 samples");
  torch::NoGradGuard no_grad;
  const auto& arch = generator->arch();
  const auto latents = networks::sample_latents(samples, arch, rng);
  const auto specs = networks::sample_specs(samples, arch, sampling, rng);
  std::vector<torch::Tensor> clean, corrupted;
  if (arch.spatial()) clean = networks::heatmap_inputs(specs, arch);
  Rng noise = rng.split();
  for (const auto& maps : clean) {
    auto c = maps.clone();
    auto* data = c.data_ptr<float>();
    for (int64_t i = 0; i < c.numel(); ++i) {
      if (noise.uniform(0.0, 1.0) < fraction) data[i] = noise.uniform(0.0, 1.0) < 0.5 ? 0.0f : 1.0f;
    }
    corrupted.push_back(c);
  }
  const auto clean_images = generator->forward(latents, clean).image;
  const auto corrupted_images = generator->forward(latents, corrupted).image;
  ContinuityReport r;
  r.fraction = fraction;
  r.samples = samples;
  r.fid_clean = fid_proxy(clean_images, reference, embedder_seed);
  r.fid_corrupted = fid_proxy(corrupted_images, reference, embedder_seed);
  r.delta = r.fid_corrupted - r.fid_clean;
  return r;
}

}  // namespace spatialgan::evaluation
