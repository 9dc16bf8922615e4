#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "spatialgan/networks.hpp"

namespace spatialgan::checkpoint {

// A checkpoint is a directory holding `manifest.json` and `tensors.bin`.
// The manifest carries the format version, free-form metadata and a tensor
// index {name: {"offset": bytes, "shape": [...]}}; tensors.bin is the
// concatenation of every tensor as little-endian float32.
inline constexpr const char* kFormatVersion = "1";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kTensorFile = "tensors.bin";

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

struct Archive {
  nlohmann::json manifest;
  NamedTensors tensors;

  const torch::Tensor& tensor(const std::string& name) const;
  bool contains(const std::string& name) const;
};

// `manifest` gets "format_version" and "tensors" filled in.
void write_archive(const std::filesystem::path& dir, nlohmann::json manifest, const NamedTensors& tensors);

// Throws FormatError for a missing or malformed manifest/tensor file and
// UnsupportedVersion when the format version differs.
Archive read_archive(const std::filesystem::path& dir);

// Copies `prefix + name` tensors of the archive into the module's parameters
// and buffers; every module entry must be present with a matching shape.
void load_module_state(torch::nn::Module& module, const Archive& archive, const std::string& prefix);
void append_module_state(NamedTensors& out, const torch::nn::Module& module, const std::string& prefix);

// Generator + discriminator restored from a training checkpoint, for
// inference (evaluation, generation, the studio service).
struct ModelBundle {
  networks::ArchitectureDescriptor arch;
  networks::HeatmapSampling sampling;
  networks::Generator generator{nullptr};
  networks::Discriminator discriminator{nullptr};
  long step = 0;
  std::string version = kFormatVersion;
  std::string path;
};

ModelBundle load_model(const std::filesystem::path& dir);

}  // namespace spatialgan::checkpoint
