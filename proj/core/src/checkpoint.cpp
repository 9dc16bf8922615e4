#include "spatialgan/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <map>

#include "spatialgan/errors.hpp"

namespace spatialgan::checkpoint {
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "tensors.bin is written in host byte order");

const torch::Tensor& Archive::tensor(const std::string& name) const {
  for (const auto& [key, value] : tensors) {
    if (key == name) return value;
  }
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

bool Archive::contains(const std::string& name) const {
  for (const auto& entry : tensors) {
    if (entry.first == name) return true;
  }
  return false;
}

void write_archive(const fs::path& dir, nlohmann::json manifest, const NamedTensors& tensors) {
  fs::create_directories(dir);
  std::ofstream bin(dir / kTensorFile, std::ios::binary | std::ios::trunc);
  if (!bin) throw Error("cannot write " + (dir / kTensorFile).string());
  nlohmann::json index = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : tensors) {
    if (index.contains(name)) throw InvalidArgument("duplicate tensor name '" + name + "'");
    const auto t = tensor.detach().to(torch::kCPU, torch::kFloat).contiguous();
    const auto bytes = static_cast<std::uint64_t>(t.numel()) * sizeof(float);
    bin.write(reinterpret_cast<const char*>(t.data_ptr<float>()), static_cast<std::streamsize>(bytes));
    index[name] = {{"offset", offset}, {"shape", t.sizes().vec()}};
    offset += bytes;
  }
  if (!bin) throw Error("short write to " + (dir / kTensorFile).string());
  manifest["format_version"] = kFormatVersion;
  manifest["tensors"] = std::move(index);
  // Manifest last: a directory with a manifest is complete.
  std::ofstream(dir / kManifestFile, std::ios::trunc) << manifest.dump(2) << '\n';
}

Archive read_archive(const fs::path& dir) {
  std::ifstream in(dir / kManifestFile);
  if (!in) throw FormatError("missing " + (dir / kManifestFile).string());
  Archive archive;
  try {
    archive.manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt manifest: " + std::string(e.what()));
  }
  const auto& m = archive.manifest;
  if (!m.is_object() || !m.contains("format_version") || !m["format_version"].is_string()) {
    throw FormatError("manifest lacks a format_version string");
  }
  const auto version = m["format_version"].get<std::string>();
  if (version != kFormatVersion) {
    throw UnsupportedVersion("checkpoint format " + version + " (supported: " + kFormatVersion + ")");
  }
  if (!m.contains("tensors") || !m["tensors"].is_object()) throw FormatError("manifest lacks a tensor index");

  std::ifstream bin(dir / kTensorFile, std::ios::binary | std::ios::ate);
  if (!bin) throw FormatError("missing " + (dir / kTensorFile).string());
  const auto file_size = static_cast<std::uint64_t>(bin.tellg());
  // Keep the on-disk order so modules restore deterministically.
  std::vector<std::pair<std::uint64_t, std::string>> order;
  try {
    for (const auto& [name, entry] : m["tensors"].items()) order.emplace_back(entry.at("offset").get<std::uint64_t>(), name);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad tensor index: " + std::string(e.what()));
  }
  std::sort(order.begin(), order.end());
  for (const auto& [offset, name] : order) {
    std::vector<int64_t> shape;
    try {
      shape = m["tensors"][name].at("shape").get<std::vector<int64_t>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("bad shape for '" + name + "'");
    }
    for (const auto d : shape) {
      if (d < 0) throw FormatError("negative dimension in '" + name + "'");
    }
    auto t = torch::empty(shape, torch::kFloat);
    const auto bytes = static_cast<std::uint64_t>(t.numel()) * sizeof(float);
    if (offset + bytes > file_size) throw FormatError("tensor '" + name + "' runs past the end of tensors.bin");
    bin.seekg(static_cast<std::streamoff>(offset));
    bin.read(reinterpret_cast<char*>(t.data_ptr<float>()), static_cast<std::streamsize>(bytes));
    if (!bin) throw FormatError("cannot read tensor '" + name + "'");
    archive.tensors.emplace_back(name, std::move(t));
  }
  return archive;
}

void load_module_state(torch::nn::Module& module, const Archive& archive, const std::string& prefix) {
  torch::NoGradGuard no_grad;
  for (auto& [name, target] : networks::named_state(module)) {
    const auto& source = archive.tensor(prefix + name);
    if (source.sizes() != target.sizes()) throw FormatError("shape mismatch for '" + prefix + name + "'");
    target.copy_(source);
  }
}

void append_module_state(NamedTensors& out, const torch::nn::Module& module, const std::string& prefix) {
  for (const auto& [name, tensor] : networks::named_state(module)) out.emplace_back(prefix + name, tensor);
}

ModelBundle load_model(const fs::path& dir) {
  const auto archive = read_archive(dir);
  const auto& m = archive.manifest;
  ModelBundle bundle;
  try {
    bundle.arch = networks::ArchitectureDescriptor::from_json(m.at("descriptor"));
    bundle.step = m.value("step", 0L);
    if (m.contains("sampling")) {
      bundle.sampling.base_variance = m["sampling"].value("base_variance", bundle.sampling.base_variance);
      bundle.sampling.shared_variance = m["sampling"].value("shared_variance", bundle.sampling.shared_variance);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad manifest: " + std::string(e.what()));
  } catch (const InvalidArgument& e) {
    throw FormatError("bad descriptor: " + std::string(e.what()));
  }
  // Initial values are overwritten; the stream only has to be valid.
  Rng init(0);
  bundle.generator = networks::Generator(bundle.arch, init);
  bundle.discriminator = networks::Discriminator(bundle.arch, init);
  load_module_state(*bundle.generator, archive, "G.");
  load_module_state(*bundle.discriminator, archive, "D.");
  bundle.generator->eval();
  bundle.discriminator->eval();
  bundle.path = dir.string();
  return bundle;
}

}  // namespace spatialgan::checkpoint
