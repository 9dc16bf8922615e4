#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <vector>

#include <nlohmann/json.hpp>

#include "spatialgan/training.hpp"

namespace acceptance {

struct P6Options {
  std::filesystem::path dir;  // run cache: one subdirectory per (config, seed)
  long steps = 20000;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  bool train_missing = true;
};

struct P6SeedResult {
  std::uint64_t seed = 0;
  double align_initial = 0.0;
  double align_final = 0.0;
  double comove = 0.0;
  int comove_trials = 0;
  double fid_spatial = 0.0;
  double fid_baseline = 0.0;
  bool align_ok = false;
  bool comove_ok = false;
  bool fid_ok = false;
  bool ok() const { return align_ok && comove_ok && fid_ok; }
  nlohmann::json to_json() const;
};

struct P6Result {
  std::vector<P6SeedResult> seeds;
  bool complete = true;  // false when runs were missing and training was disabled
  int succeeded() const;
  bool pass() const { return complete && succeeded() >= 2; }
};

spatialgan::training::TrainConfig p6_config(bool spatial, long steps);
P6Result run_p6(const P6Options& options, std::ostream& log);

}  // namespace acceptance
