#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spatialgan/training.hpp"

namespace spatialgan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

// Parses TOML text into the JSON shape TrainConfig::merge_json accepts.
nlohmann::json toml_to_json(const std::string& text);

// defaults < config file < flag overrides. Unknown config keys are rejected.
training::TrainConfig resolve_config(const std::optional<std::filesystem::path>& file,
                                     const nlohmann::json& overrides);

// Real images for training/evaluation from either a synthetic dataset
// directory (metadata.jsonl) or a folder of PNGs, as (M, 3, R, R) in [-1, 1].
torch::Tensor load_real_images(const std::filesystem::path& dir, int resolution);

// args excludes the program name. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spatialgan::cli
