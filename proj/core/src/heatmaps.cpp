#include "spatialgan/heatmaps.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spatialgan/errors.hpp"

namespace spatialgan::heatmaps {
namespace {

constexpr double kLattice = 1073741824.0;  // 2^30

Point quantize(Point p) { return {heatmaps::quantize(p.y), heatmaps::quantize(p.x)}; }

// Edits may not push a center further outside the frame than it already is.
// Children sampled outside [-1, 1] therefore stay where they are under a
// zero move.
double clamp_edit(double old_value, double new_value) {
  return std::clamp(new_value, std::min(-1.0, old_value), std::max(1.0, old_value));
}

void shift(SubHeatmapSpec& sub, Point delta) {
  sub.center = {clamp_edit(sub.center.y, sub.center.y + delta.y),
                clamp_edit(sub.center.x, sub.center.x + delta.x)};
}

// Draws a pixel-space center per axis from Normal(mean, stddev), redrawing
// until both coordinates fall inside [0, resolution].
Point draw_in_frame(int resolution, double mean, double stddev, NormalSource& rng,
                    SamplingStats* stats) {
  for (int attempt = 0; attempt < kMaxSamplingAttempts; ++attempt) {
    const double y = rng.normal(mean, stddev);
    const double x = rng.normal(mean, stddev);
    if (y < 0.0 || y > resolution || x < 0.0 || x > resolution) {
      if (stats != nullptr) ++stats->rejected;
      continue;
    }
    if (stats != nullptr) ++stats->accepted;
    return quantize(Point{to_normalized(y, resolution), to_normalized(x, resolution)});
  }
  throw SamplingExhausted("no in-frame center after " + std::to_string(kMaxSamplingAttempts) +
                          " attempts");
}

void check_resolution(int resolution) {
  if (resolution < 2) throw InvalidArgument("resolution must be >= 2, got " + std::to_string(resolution));
}

Map2D channel_map(const Grid& grid, const SubHeatmapSpec& sub) {
  if (!sub.active) return Map2D(grid.resolution(), grid.resolution(), 0.0);
  return gaussian_map(grid, sub.center, sub.variance);
}

LevelMaps render_level(const Grid& grid, int level, const std::vector<SubHeatmapSpec>& subs) {
  LevelMaps out;
  out.level = level;
  out.sum = Map2D(grid.resolution(), grid.resolution(), 0.0);
  for (const auto& sub : subs) {
    out.channels.push_back(channel_map(grid, sub));
    out.sum += out.channels.back();
  }
  return out;
}

SubHeatmapSpec& find_mutable(HeatmapSpec& spec, const Selector& selector) {
  return const_cast<SubHeatmapSpec&>(find(spec, selector));
}

nlohmann::json point_json(Point p) { return nlohmann::json::array({p.y, p.x}); }

Point point_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw InvalidArgument("center must be a [cy, cx] number pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

nlohmann::json level_json(int level, const std::vector<SubHeatmapSpec>& subs, bool with_objects) {
  nlohmann::json centers = nlohmann::json::array();
  nlohmann::json variances = nlohmann::json::array();
  nlohmann::json identities = nlohmann::json::array();
  nlohmann::json active = nlohmann::json::array();
  for (const auto& sub : subs) {
    centers.push_back(point_json(sub.center));
    variances.push_back(sub.variance);
    identities.push_back(sub.identity);
    active.push_back(sub.active);
  }
  nlohmann::json out = {{"level", level}, {"centers", centers}, {"variances", variances}};
  if (with_objects) {
    out["identities"] = identities;
    out["active"] = active;
  }
  return out;
}

const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw InvalidArgument(std::string("missing field '") + key + "'");
  return j.at(key);
}

double positive_number(const nlohmann::json& j, const char* what) {
  if (!j.is_number()) throw InvalidArgument(std::string(what) + " must be a number");
  const double v = j.get<double>();
  if (!(v > 0.0)) throw InvalidArgument(std::string(what) + " must be positive");
  return v;
}

}  // namespace

double Map2D::max() const {
  return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end());
}

Map2D& Map2D::operator+=(const Map2D& other) {
  if (other.rows_ != rows_ || other.cols_ != cols_) throw InvalidArgument("map shape mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Grid::Grid(int resolution) {
  check_resolution(resolution);
  axis_.resize(static_cast<std::size_t>(resolution));
  for (int i = 0; i < resolution; ++i) axis_[i] = 2.0 * i / (resolution - 1) - 1.0;
}

Grid make_grid(int resolution) { return Grid(resolution); }

Map2D gaussian_map(const Grid& grid, Point center, double variance) {
  if (!(variance > 0.0)) throw InvalidArgument("variance must be positive");
  const int res = grid.resolution();
  Map2D out(res, res);
  for (int y = 0; y < res; ++y) {
    const double dy = grid.coord(y) - center.y;
    for (int x = 0; x < res; ++x) {
      const double dx = grid.coord(x) - center.x;
      out.at(y, x) = std::exp(-(dy * dy + dx * dx) / variance);
    }
  }
  return out;
}

double to_normalized(double pixel, int resolution) { return 2.0 * pixel / (resolution - 1) - 1.0; }

double to_pixels(double normalized, int resolution) { return (normalized + 1.0) * (resolution - 1) / 2.0; }

double quantize(double value) { return std::nearbyint(value * kLattice) / kLattice; }

bool HierarchicalHeatmapSpec::operator==(const HierarchicalHeatmapSpec& other) const {
  if (base_variance != other.base_variance) return false;
  for (int l = 0; l < kNumLevels; ++l) {
    if (levels[l] != other.levels[l]) return false;
  }
  return true;
}

bool is_hierarchical(const HeatmapSpec& spec) {
  return std::holds_alternative<HierarchicalHeatmapSpec>(spec);
}

int channel_count(const HeatmapSpec& spec, int level) {
  if (const auto* h = std::get_if<HierarchicalHeatmapSpec>(&spec)) {
    return static_cast<int>(h->levels[level].size());
  }
  return static_cast<int>(std::get<MultiObjectHeatmapSpec>(spec).subs.size());
}

HierarchicalHeatmapSpec sample_hierarchical(int resolution, double base_variance, NormalSource& rng,
                                            SamplingStats* stats) {
  check_resolution(resolution);
  if (!(base_variance > 0.0)) throw InvalidArgument("base_variance must be positive");
  const double res = resolution;
  HierarchicalHeatmapSpec spec;
  spec.base_variance = base_variance;
  const Point root = draw_in_frame(resolution, res / 2.0, res / 3.0, rng, stats);
  // var_l1 = var / sqrt(2), var_l2 = var_l1 / sqrt(2) = var / 2.
  const double variances[kNumLevels] = {base_variance, base_variance / std::sqrt(2.0), base_variance / 2.0};
  spec.levels[0].push_back({root, variances[0], 0, 0, true});
  const double offset_scale = 2.0 / (res - 1.0);
  for (int level = 1; level < kNumLevels; ++level) {
    for (int i = 0; i < kCentersPerLevel[level]; ++i) {
      const double dy = rng.normal(0.0, res / 6.0) * offset_scale;
      const double dx = rng.normal(0.0, res / 6.0) * offset_scale;
      spec.levels[level].push_back({quantize(Point{root.y + dy, root.x + dx}), variances[level], level, i, true});
    }
  }
  return spec;
}

MultiObjectHeatmapSpec sample_multiobject(int resolution, int n, double shared_variance,
                                          NormalSource& rng, SamplingStats* stats) {
  check_resolution(resolution);
  if (n < 1) throw InvalidArgument("multi-object spec needs n >= 1");
  if (!(shared_variance > 0.0)) throw InvalidArgument("shared_variance must be positive");
  const double res = resolution;
  MultiObjectHeatmapSpec spec;
  spec.shared_variance = shared_variance;
  for (int i = 0; i < n; ++i) {
    const Point c = draw_in_frame(resolution, res / 2.0, res / 2.0, rng, stats);
    spec.subs.push_back({c, shared_variance, kFlatLevel, i, true});
  }
  return spec;
}

HeatmapSet render(const HierarchicalHeatmapSpec& spec, int resolution) {
  const Grid grid(resolution);
  HeatmapSet out;
  out.resolution = resolution;
  for (int level = 0; level < kNumLevels; ++level) {
    out.levels.push_back(render_level(grid, level, spec.levels[level]));
  }
  return out;
}

HeatmapSet render(const MultiObjectHeatmapSpec& spec, int resolution) {
  const Grid grid(resolution);
  HeatmapSet out;
  out.flat = true;
  out.resolution = resolution;
  out.levels.push_back(render_level(grid, kFlatLevel, spec.subs));
  return out;
}

HeatmapSet render(const HeatmapSpec& spec, int resolution) {
  return std::visit([resolution](const auto& s) { return render(s, resolution); }, spec);
}

Map2D resize_heatmap(const Map2D& map, int target_resolution) {
  return resize_heatmap(map, target_resolution, target_resolution);
}

Map2D resize_heatmap(const Map2D& map, int target_rows, int target_cols) {
  if (target_rows < 1 || target_cols < 1) throw InvalidArgument("target resolution must be >= 1");
  if (target_rows == map.rows() && target_cols == map.cols()) return map;
  const auto scale = [](int in, int out) { return out > 1 ? static_cast<double>(in - 1) / (out - 1) : 0.0; };
  const double sy = scale(map.rows(), target_rows);
  const double sx = scale(map.cols(), target_cols);
  Map2D out(target_rows, target_cols);
  for (int y = 0; y < target_rows; ++y) {
    const double fy = y * sy;
    const int y0 = std::min(static_cast<int>(fy), map.rows() - 1);
    const int y1 = std::min(y0 + 1, map.rows() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < target_cols; ++x) {
      const double fx = x * sx;
      const int x0 = std::min(static_cast<int>(fx), map.cols() - 1);
      const int x1 = std::min(x0 + 1, map.cols() - 1);
      const double wx = fx - x0;
      const double top = map.at(y0, x0) * (1.0 - wx) + map.at(y0, x1) * wx;
      const double bottom = map.at(y1, x0) * (1.0 - wx) + map.at(y1, x1) * wx;
      out.at(y, x) = top * (1.0 - wy) + bottom * wy;
    }
  }
  return out;
}

const SubHeatmapSpec& find(const HeatmapSpec& spec, const Selector& selector) {
  if (const auto* h = std::get_if<HierarchicalHeatmapSpec>(&spec)) {
    if (!selector.level || *selector.level < 0 || *selector.level >= kNumLevels) {
      throw NotFound("hierarchical selector needs a level in [0, 2]");
    }
    const auto& subs = h->levels[*selector.level];
    if (selector.index < 0 || selector.index >= static_cast<int>(subs.size())) {
      throw NotFound("no sub-heatmap " + std::to_string(selector.index) + " at level " +
                     std::to_string(*selector.level));
    }
    return subs[static_cast<std::size_t>(selector.index)];
  }
  const auto& m = std::get<MultiObjectHeatmapSpec>(spec);
  if (selector.level && *selector.level != kFlatLevel) {
    throw NotFound("multi-object specs are addressed by identity, not level");
  }
  for (const auto& sub : m.subs) {
    if (sub.identity == selector.index) return sub;
  }
  throw NotFound("no object with identity " + std::to_string(selector.index));
}

HeatmapSpec move_center(const HeatmapSpec& spec, const Selector& selector, Point delta) {
  find(spec, selector);
  HeatmapSpec out = spec;
  delta = quantize(delta);
  if (auto* h = std::get_if<HierarchicalHeatmapSpec>(&out); h != nullptr && *selector.level == 0) {
    for (auto& level : h->levels) {
      for (auto& sub : level) shift(sub, delta);
    }
    return out;
  }
  shift(find_mutable(out, selector), delta);
  return out;
}

HeatmapSpec set_center(const HeatmapSpec& spec, const Selector& selector, Point target) {
  const Point current = find(spec, selector).center;
  target = quantize(Point{std::clamp(target.y, -1.0, 1.0), std::clamp(target.x, -1.0, 1.0)});
  return move_center(spec, selector, {target.y - current.y, target.x - current.x});
}

HeatmapSpec scale_subheatmap(const HeatmapSpec& spec, int identity, double factor) {
  if (is_hierarchical(spec)) throw ModeConflict("scaling applies to multi-object specs only");
  if (!(factor >= 0.0)) throw InvalidArgument("scale factor must be >= 0");
  HeatmapSpec out = spec;
  auto& sub = find_mutable(out, Selector::object(identity));
  if (factor == 0.0) {
    sub.active = false;
  } else {
    sub.variance *= factor;
  }
  return out;
}

nlohmann::json to_json(const HeatmapSpec& spec) {
  if (const auto* h = std::get_if<HierarchicalHeatmapSpec>(&spec)) {
    nlohmann::json levels = nlohmann::json::array();
    for (int l = 0; l < kNumLevels; ++l) levels.push_back(level_json(l, h->levels[l], false));
    return {{"kind", "hierarchical"}, {"base_variance", h->base_variance}, {"levels", levels}};
  }
  const auto& m = std::get<MultiObjectHeatmapSpec>(spec);
  return {{"kind", "multi_object"},
          {"base_variance", m.shared_variance},
          {"levels", nlohmann::json::array({level_json(0, m.subs, true)})}};
}

HeatmapSpec spec_from_json(const nlohmann::json& j) {
  const auto& kind = require(j, "kind");
  const double base = positive_number(require(j, "base_variance"), "base_variance");
  const auto& levels = require(j, "levels");
  if (!levels.is_array()) throw InvalidArgument("levels must be an array");

  auto read_subs = [](const nlohmann::json& lj, int level, std::size_t expected) {
    const auto& centers = require(lj, "centers");
    const auto& variances = require(lj, "variances");
    if (!centers.is_array() || !variances.is_array() || centers.size() != variances.size()) {
      throw InvalidArgument("centers and variances must be arrays of equal length");
    }
    if (expected != 0 && centers.size() != expected) {
      throw InvalidArgument("level " + std::to_string(level) + " needs " + std::to_string(expected) + " centers");
    }
    std::vector<SubHeatmapSpec> subs;
    for (std::size_t i = 0; i < centers.size(); ++i) {
      SubHeatmapSpec sub;
      sub.center = point_from_json(centers[i]);
      sub.variance = positive_number(variances[i], "variance");
      sub.level = level;
      sub.identity = static_cast<int>(i);
      if (lj.contains("identities")) sub.identity = lj.at("identities").at(i).get<int>();
      if (lj.contains("active")) sub.active = lj.at("active").at(i).get<bool>();
      subs.push_back(sub);
    }
    return subs;
  };

  if (kind == "hierarchical") {
    if (levels.size() != kNumLevels) throw InvalidArgument("hierarchical spec needs 3 levels");
    HierarchicalHeatmapSpec spec;
    spec.base_variance = base;
    for (const auto& lj : levels) {
      const int level = require(lj, "level").get<int>();
      if (level < 0 || level >= kNumLevels) throw InvalidArgument("level out of range");
      spec.levels[level] = read_subs(lj, level, static_cast<std::size_t>(kCentersPerLevel[level]));
    }
    return spec;
  }
  if (kind == "multi_object") {
    if (levels.size() != 1) throw InvalidArgument("multi_object spec has a single flat level");
    MultiObjectHeatmapSpec spec;
    spec.shared_variance = base;
    spec.subs = read_subs(levels[0], kFlatLevel, 0);
    if (spec.subs.empty()) throw InvalidArgument("multi_object spec needs at least one center");
    std::vector<int> ids;
    for (const auto& s : spec.subs) ids.push_back(s.identity);
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] != static_cast<int>(i)) throw InvalidArgument("identities must be a permutation of 0..n-1");
    }
    return spec;
  }
  throw InvalidArgument("unknown heatmap kind");
}

}  // namespace spatialgan::heatmaps
