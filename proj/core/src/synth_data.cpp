#include "spatialgan/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <tuple>
#include <vector>

#include "spatialgan/errors.hpp"

namespace spatialgan::synth {
namespace {

constexpr int kMaxLayoutAttempts = 1000;
constexpr double kMinVisibleFraction = 0.4;

std::string record_filename(int index) {
  std::ostringstream name;
  name << std::setw(6) << std::setfill('0') << index << ".png";
  return name.str();
}

Color random_background_color(Rng& rng) {
  const float base = quantize_u8(static_cast<float>(rng.uniform(0.15, 0.45)));
  Color c{};
  for (auto& v : c) v = quantize_u8(base + static_cast<float>(rng.uniform(-0.05, 0.05)));
  return c;
}

nlohmann::json color_json(const Color& c) { return nlohmann::json::array({c[0], c[1], c[2]}); }

Color color_from_json(const nlohmann::json& j) {
  return {j.at(0).get<float>(), j.at(1).get<float>(), j.at(2).get<float>()};
}

// Visible masks and visibility check for a candidate layout.
bool layout_ok(const std::vector<SceneObject>& objects, std::vector<Mask>& masks, int res) {
  masks.clear();
  std::vector<Mask> full;
  for (const auto& o : objects) full.push_back(rasterize(o, res, res));
  for (std::size_t i = 0; i < objects.size(); ++i) {
    Mask visible = full[i];
    for (std::size_t j = i + 1; j < objects.size(); ++j) {
      for (std::size_t p = 0; p < visible.bits.size(); ++p) visible.bits[p] &= static_cast<std::uint8_t>(!full[j].bits[p]);
    }
    const long area = visible.area();
    if (area == 0 || area < kMinVisibleFraction * full[i].area()) return false;
    int y0 = res, y1 = -1, x0 = res, x1 = -1;
    for (int y = 0; y < res; ++y) {
      for (int x = 0; x < res; ++x) {
        if (!visible.at(y, x)) continue;
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
      }
    }
    const auto& o = objects[i];
    if (o.cy < y0 || o.cy > y1 || o.cx < x0 || o.cx > x1) return false;
    masks.push_back(std::move(visible));
  }
  return true;
}

}  // namespace

long Mask::area() const { return static_cast<long>(std::count(bits.begin(), bits.end(), 1)); }

std::vector<Color> SceneConfig::default_palette() {
  return {Color{0.9f, 0.2f, 0.2f}, Color{0.2f, 0.8f, 0.3f}, Color{0.25f, 0.35f, 0.95f},
          Color{0.95f, 0.85f, 0.2f}, Color{0.85f, 0.3f, 0.85f}, Color{0.2f, 0.85f, 0.9f}};
}

Mask rasterize(const SceneObject& object, int height, int width) {
  Mask mask(height, width);
  if (object.shape == Shape::kRectangle) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const bool inside =
            std::abs(y - object.cy) <= object.half_height && std::abs(x - object.cx) <= object.half_width;
        mask.at(y, x) = inside ? 1 : 0;
      }
    }
    return mask;
  }
  // A disc is the round(pi r^2) lattice pixels nearest its center (ties by
  // row, then column), clipped to the frame afterwards, so its unclipped
  // pixel count matches the analytic area to within half a pixel.
  const double r = object.half_height;
  const auto target = static_cast<std::size_t>(std::llround(std::numbers::pi * r * r));
  const int reach = static_cast<int>(std::ceil(r)) + 2;
  const int y0 = static_cast<int>(std::floor(object.cy)) - reach;
  const int x0 = static_cast<int>(std::floor(object.cx)) - reach;
  struct Candidate {
    double d2;
    int y, x;
  };
  std::vector<Candidate> candidates;
  for (int y = y0; y <= y0 + 2 * reach + 1; ++y) {
    for (int x = x0; x <= x0 + 2 * reach + 1; ++x) {
      candidates.push_back({(y - object.cy) * (y - object.cy) + (x - object.cx) * (x - object.cx), y, x});
    }
  }
  const auto count = std::min(target, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(count), candidates.end(),
                    [](const Candidate& a, const Candidate& b) {
                      return std::tie(a.d2, a.y, a.x) < std::tie(b.d2, b.y, b.x);
                    });
  for (std::size_t i = 0; i < count; ++i) {
    const auto& c = candidates[i];
    if (c.y >= 0 && c.y < height && c.x >= 0 && c.x < width) mask.at(c.y, c.x) = 1;
  }
  return mask;
}

SceneRecord generate_scene(Rng& rng, const SceneConfig& config) {
  const int res = config.resolution;
  if (res < 2) throw InvalidArgument("scene resolution must be >= 2");
  if (config.n_objects < 0) throw InvalidArgument("n_objects must be >= 0");
  if (!(config.min_size > 0.0) || config.max_size < config.min_size) throw InvalidArgument("bad size range");
  if (config.palette.empty()) throw InvalidArgument("palette is empty");

  SceneRecord record;
  record.background = {random_background_color(rng), random_background_color(rng),
                       rng.uniform(0.0, 2.0 * std::numbers::pi)};

  std::vector<SceneObject> objects;
  bool placed = config.n_objects == 0;
  for (int attempt = 0; attempt < kMaxLayoutAttempts && !placed; ++attempt) {
    objects.clear();
    std::vector<std::size_t> colors(config.palette.size());
    for (std::size_t i = 0; i < colors.size(); ++i) colors[i] = i;
    for (int i = 0; i < config.n_objects; ++i) {
      SceneObject o;
      o.identity = i;
      o.shape = rng.uniform(0.0, 1.0) < 0.5 ? Shape::kDisc : Shape::kRectangle;
      double cy = 0.0, cx = 0.0;
      do {
        cy = rng.normal(res / 2.0, res / 4.0);
        cx = rng.normal(res / 2.0, res / 4.0);
      } while (cy < 0.0 || cy > res - 1.0 || cx < 0.0 || cx > res - 1.0);
      o.cy = cy;
      o.cx = cx;
      o.half_height = rng.uniform(config.min_size, config.max_size);
      o.half_width = o.shape == Shape::kDisc ? o.half_height : rng.uniform(config.min_size, config.max_size);
      // Distinct colors while the palette lasts.
      const std::size_t pick = colors.empty() ? rng.below(config.palette.size()) : rng.below(colors.size());
      if (colors.empty()) {
        o.color = config.palette[pick];
      } else {
        o.color = config.palette[colors[pick]];
        colors.erase(colors.begin() + static_cast<std::ptrdiff_t>(pick));
      }
      for (auto& v : o.color) v = quantize_u8(v);
      objects.push_back(o);
    }
    placed = layout_ok(objects, record.masks, res);
  }
  if (!placed) throw SamplingExhausted("no valid scene layout found");
  record.objects = std::move(objects);

  Image image(res, res, 3);
  const double ca = std::cos(record.background.angle);
  const double sa = std::sin(record.background.angle);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const double t = std::clamp(((x - (res - 1) / 2.0) * ca + (y - (res - 1) / 2.0) * sa) / res + 0.5, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        image.at(y, x, c) = quantize_u8(static_cast<float>(record.background.from[c] * (1.0 - t) +
                                                           record.background.to[c] * t));
      }
    }
  }
  for (std::size_t i = 0; i < record.objects.size(); ++i) {
    for (int y = 0; y < res; ++y) {
      for (int x = 0; x < res; ++x) {
        if (!record.masks[i].at(y, x)) continue;
        for (int c = 0; c < 3; ++c) image.at(y, x, c) = record.objects[i].color[c];
      }
    }
  }
  record.image = std::move(image);
  return record;
}

std::vector<std::uint32_t> rle_encode(const Mask& mask) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t length = 0;
  for (const auto bit : mask.bits) {
    if (bit == current) {
      ++length;
      continue;
    }
    runs.push_back(length);
    current = bit;
    length = 1;
  }
  runs.push_back(length);
  return runs;
}

Mask rle_decode(const std::vector<std::uint32_t>& runs, int height, int width) {
  Mask mask(height, width);
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (const auto run : runs) {
    if (pos + run > mask.bits.size()) throw FormatError("mask runs exceed mask size");
    std::fill_n(mask.bits.begin() + static_cast<std::ptrdiff_t>(pos), run, value);
    pos += run;
    value ^= 1;
  }
  if (pos != mask.bits.size()) throw FormatError("mask runs do not cover the mask");
  return mask;
}

nlohmann::json record_metadata(const SceneRecord& record, int index) {
  nlohmann::json objects = nlohmann::json::array();
  for (std::size_t i = 0; i < record.objects.size(); ++i) {
    const auto& o = record.objects[i];
    objects.push_back({{"identity", o.identity},
                       {"shape", o.shape == Shape::kDisc ? "disc" : "rectangle"},
                       {"center", {o.cy, o.cx}},
                       {"size", {o.half_height, o.half_width}},
                       {"color", color_json(o.color)},
                       {"mask_rle", rle_encode(record.masks[i])}});
  }
  return {{"index", index},
          {"file", record_filename(index)},
          {"height", record.image.height},
          {"width", record.image.width},
          {"background",
           {{"from", color_json(record.background.from)},
            {"to", color_json(record.background.to)},
            {"angle", record.background.angle}}},
          {"objects", objects}};
}

void write_dataset(const std::vector<SceneRecord>& records, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream meta(dir / "metadata.jsonl");
  if (!meta) throw FormatError("cannot write " + (dir / "metadata.jsonl").string());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int index = static_cast<int>(i) + 1;
    write_png(records[i].image, dir / record_filename(index));
    meta << record_metadata(records[i], index).dump() << '\n';
  }
}

std::vector<SceneRecord> read_dataset(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "metadata.jsonl");
  if (!meta) throw FormatError("missing metadata.jsonl in " + dir.string());

  std::map<int, nlohmann::json> lines;
  std::string line;
  int line_no = 0;
  while (std::getline(meta, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      const int index = j.at("index").get<int>();
      lines[index] = std::move(j);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("metadata line " + std::to_string(line_no) + ": " + e.what());
    }
  }

  int max_index = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.path().extension() != ".png" || name.size() != 10) continue;
    try {
      max_index = std::max(max_index, std::stoi(name.substr(0, 6)));
    } catch (const std::exception&) {
    }
  }
  if (!lines.empty()) max_index = std::max(max_index, lines.rbegin()->first);

  std::vector<SceneRecord> records;
  for (int index = 1; index <= max_index; ++index) {
    const auto it = lines.find(index);
    if (it == lines.end()) {
      throw FormatError("metadata missing for record " + std::to_string(index) + " (" + record_filename(index) + ")");
    }
    const auto& j = it->second;
    try {
      SceneRecord record;
      record.image = read_png(dir / j.at("file").get<std::string>());
      const int h = j.at("height").get<int>();
      const int w = j.at("width").get<int>();
      if (record.image.height != h || record.image.width != w) {
        throw FormatError("image size mismatch for record " + std::to_string(index));
      }
      const auto& bg = j.at("background");
      record.background = {color_from_json(bg.at("from")), color_from_json(bg.at("to")), bg.at("angle").get<double>()};
      for (const auto& oj : j.at("objects")) {
        SceneObject o;
        o.identity = oj.at("identity").get<int>();
        o.shape = oj.at("shape").get<std::string>() == "disc" ? Shape::kDisc : Shape::kRectangle;
        o.cy = oj.at("center").at(0).get<double>();
        o.cx = oj.at("center").at(1).get<double>();
        o.half_height = oj.at("size").at(0).get<double>();
        o.half_width = oj.at("size").at(1).get<double>();
        o.color = color_from_json(oj.at("color"));
        record.objects.push_back(o);
        record.masks.push_back(rle_decode(oj.at("mask_rle").get<std::vector<std::uint32_t>>(), h, w));
      }
      records.push_back(std::move(record));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("metadata for record " + std::to_string(index) + ": " + e.what());
    }
  }
  return records;
}

Image resize_image(const Image& image, int height, int width) {
  if (height < 1 || width < 1) throw InvalidArgument("target size must be positive");
  if (height == image.height && width == image.width) return image;
  const auto scale = [](int in, int out) { return out > 1 ? static_cast<double>(in - 1) / (out - 1) : 0.0; };
  const double sy = scale(image.height, height);
  const double sx = scale(image.width, width);
  Image out(height, width, image.channels);
  for (int y = 0; y < height; ++y) {
    const double fy = y * sy;
    const int y0 = std::min(static_cast<int>(fy), image.height - 1);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = x * sx;
      const int x0 = std::min(static_cast<int>(fx), image.width - 1);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = image.at(y0, x0, c) * (1.0 - wx) + image.at(y0, x1, c) * wx;
        const double bottom = image.at(y1, x0, c) * (1.0 - wx) + image.at(y1, x1, c) * wx;
        out.at(y, x, c) = static_cast<float>(top * (1.0 - wy) + bottom * wy);
      }
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out(image.height, image.width, image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(y, image.width - 1 - x, c);
    }
  }
  return out;
}

std::vector<Image> load_image_folder(const std::filesystem::path& dir, int resolution, bool flip) {
  if (resolution < 1) throw InvalidArgument("resolution must be positive");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> images;
  for (const auto& file : files) {
    Image img = read_png(file);
    if (img.channels == 1) {
      Image rgb(img.height, img.width, 3);
      for (std::size_t p = 0; p < img.data.size(); ++p) {
        for (int c = 0; c < 3; ++c) rgb.data[p * 3 + c] = img.data[p];
      }
      img = std::move(rgb);
    }
    img = resize_image(img, resolution, resolution);
    for (auto& v : img.data) v = v * 2.0f - 1.0f;
    images.push_back(std::move(img));
  }
  if (flip) {
    const std::size_t n = images.size();
    for (std::size_t i = 0; i < n; ++i) images.push_back(flip_horizontal(images[i]));
  }
  return images;
}

}  // namespace spatialgan::synth
