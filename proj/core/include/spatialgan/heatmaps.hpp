#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "spatialgan/rng.hpp"

namespace spatialgan::heatmaps {

// Dense row-major 2D map of doubles.
class Map2D {
 public:
  Map2D() = default;
  Map2D(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(static_cast<std::size_t>(rows) * cols, fill) {}

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  double& at(int y, int x) { return values_[static_cast<std::size_t>(y) * cols_ + x]; }
  double at(int y, int x) const { return values_[static_cast<std::size_t>(y) * cols_ + x]; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double max() const;

  Map2D& operator+=(const Map2D& other);
  bool operator==(const Map2D&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> values_;
};

// Normalized (y, x) position; -1 is the first pixel center, +1 the last.
struct Point {
  double y = 0.0;
  double x = 0.0;
  bool operator==(const Point&) const = default;
};

class Grid {
 public:
  explicit Grid(int resolution);
  int resolution() const noexcept { return static_cast<int>(axis_.size()); }
  // Normalized coordinate of pixel index i along either axis.
  double coord(int i) const { return axis_[static_cast<std::size_t>(i)]; }
  std::span<const double> axis() const noexcept { return axis_; }

 private:
  std::vector<double> axis_;
};

Grid make_grid(int resolution);

// exp(-|g - c|^2 / variance) over the lattice; the Gaussian normalizer is
// dropped so the peak is exactly 1.
Map2D gaussian_map(const Grid& grid, Point center, double variance);

// Conversions between pixel units and normalized coordinates at `resolution`.
double to_normalized(double pixel, int resolution);
double to_pixels(double normalized, int resolution);

// Centers are stored on a dyadic lattice (multiples of 2^-30) so that edits
// compose exactly: a move followed by its inverse restores the stored value.
double quantize(double value);

inline constexpr int kFlatLevel = -1;
inline constexpr int kNumLevels = 3;
inline constexpr int kCentersPerLevel[kNumLevels] = {1, 2, 4};
inline constexpr int kMaxSamplingAttempts = 1000;

struct SubHeatmapSpec {
  Point center;
  double variance = 0.5;
  int level = 0;     // 0..2 for hierarchical specs, kFlatLevel for multi-object
  int identity = 0;  // index within the level, or object identity
  bool active = true;
  bool operator==(const SubHeatmapSpec&) const = default;
};

struct HierarchicalHeatmapSpec {
  double base_variance = 0.5;
  // levels[l] holds kCentersPerLevel[l] sub-heatmaps.
  std::vector<SubHeatmapSpec> levels[kNumLevels];
  bool operator==(const HierarchicalHeatmapSpec& other) const;
};

struct MultiObjectHeatmapSpec {
  double shared_variance = 0.25;
  std::vector<SubHeatmapSpec> subs;
  bool operator==(const MultiObjectHeatmapSpec&) const = default;
};

using HeatmapSpec = std::variant<HierarchicalHeatmapSpec, MultiObjectHeatmapSpec>;

bool is_hierarchical(const HeatmapSpec& spec);
// Number of heatmap channels per level the spec renders to.
int channel_count(const HeatmapSpec& spec, int level);

struct LevelMaps {
  int level = 0;
  std::vector<Map2D> channels;
  Map2D sum;
};

struct HeatmapSet {
  bool flat = false;
  int resolution = 0;
  std::vector<LevelMaps> levels;
};

// Counters for rejection sampling diagnostics.
struct SamplingStats {
  long accepted = 0;
  long rejected = 0;
};

HierarchicalHeatmapSpec sample_hierarchical(int resolution, double base_variance, NormalSource& rng,
                                            SamplingStats* stats = nullptr);

MultiObjectHeatmapSpec sample_multiobject(int resolution, int n, double shared_variance,
                                          NormalSource& rng, SamplingStats* stats = nullptr);

HeatmapSet render(const HeatmapSpec& spec, int resolution);
HeatmapSet render(const HierarchicalHeatmapSpec& spec, int resolution);
HeatmapSet render(const MultiObjectHeatmapSpec& spec, int resolution);

// Bilinear, corner-aligned resampling.
Map2D resize_heatmap(const Map2D& map, int target_resolution);
Map2D resize_heatmap(const Map2D& map, int target_rows, int target_cols);

// Addresses a sub-heatmap: (level, index) for hierarchical specs, identity
// for multi-object specs.
struct Selector {
  std::optional<int> level;
  int index = 0;

  static Selector hierarchical(int level, int index) { return {level, index}; }
  static Selector object(int identity) { return {std::nullopt, identity}; }
};

HeatmapSpec move_center(const HeatmapSpec& spec, const Selector& selector, Point delta);
// Absolute variant of move_center: moves the selected center to `target`
// with the same propagation rules.
HeatmapSpec set_center(const HeatmapSpec& spec, const Selector& selector, Point target);
// Multiplies the selected object's variance by `factor`; 0 removes it.
HeatmapSpec scale_subheatmap(const HeatmapSpec& spec, int identity, double factor);

const SubHeatmapSpec& find(const HeatmapSpec& spec, const Selector& selector);

nlohmann::json to_json(const HeatmapSpec& spec);
HeatmapSpec spec_from_json(const nlohmann::json& j);

}  // namespace spatialgan::heatmaps
