#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "spatialgan/image_io.hpp"
#include "spatialgan/rng.hpp"

namespace spatialgan::synth {

using Color = std::array<float, 3>;

enum class Shape { kDisc, kRectangle };

struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;  // row-major, 0 or 1

  Mask() = default;
  Mask(int h, int w) : height(h), width(w), bits(static_cast<std::size_t>(h) * w, 0) {}
  std::uint8_t& at(int y, int x) { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  long area() const;
  bool operator==(const Mask&) const = default;
};

struct SceneObject {
  int identity = 0;
  Shape shape = Shape::kDisc;
  // Pixel coordinates of the shape center.
  double cy = 0.0;
  double cx = 0.0;
  // Half extents in pixels; a disc uses half_height as its radius.
  double half_height = 0.0;
  double half_width = 0.0;
  Color color{};
  bool operator==(const SceneObject&) const = default;
};

struct Background {
  Color from{};
  Color to{};
  double angle = 0.0;  // gradient direction, radians
  bool operator==(const Background&) const = default;
};

struct SceneRecord {
  Image image;  // HWC in [0, 1], quantized to 8-bit levels
  std::vector<SceneObject> objects;
  std::vector<Mask> masks;  // visible pixels per object, in object order
  Background background;
  bool operator==(const SceneRecord&) const = default;
};

struct SceneConfig {
  int n_objects = 3;
  double min_size = 3.0;
  double max_size = 7.0;
  std::vector<Color> palette = default_palette();
  int resolution = 32;

  static std::vector<Color> default_palette();
};

// Background gradient plus n occluding shapes; later objects occlude earlier
// ones. Layouts are redrawn until every object keeps a visible region that
// contains its center's bounding box.
SceneRecord generate_scene(Rng& rng, const SceneConfig& config);

// Full (unoccluded) footprint of a shape. A disc is the round(pi r^2) pixels
// nearest its center, clipped to the frame.
Mask rasterize(const SceneObject& object, int height, int width);

// Row-major run lengths alternating zeros and ones, starting with zeros.
std::vector<std::uint32_t> rle_encode(const Mask& mask);
Mask rle_decode(const std::vector<std::uint32_t>& runs, int height, int width);

nlohmann::json record_metadata(const SceneRecord& record, int index);

void write_dataset(const std::vector<SceneRecord>& records, const std::filesystem::path& dir);
std::vector<SceneRecord> read_dataset(const std::filesystem::path& dir);

Image resize_image(const Image& image, int height, int width);
Image flip_horizontal(const Image& image);

// Decodes every PNG in `dir` (sorted by name), resizes to resolution x
// resolution and maps pixel values to [-1, 1]. With `flip`, the mirrored copy
// of each image is appended.
std::vector<Image> load_image_folder(const std::filesystem::path& dir, int resolution, bool flip = false);

}  // namespace spatialgan::synth
