// Acceptance suite: one PASS/FAIL line per primary criterion.
#include <chrono>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "criteria.hpp"
#include "p6_training.hpp"

int main(int argc, char** argv) {
  CLI::App app{"spatialgan acceptance suite"};
  std::vector<std::string> only;
  std::string p6_dir;
  long p6_steps = 20000;
  bool no_train = false;
  std::string work_dir;
  app.add_option("--only", only, "Run only these criteria (e.g. P1 P6)");
  app.add_option("--p6-dir", p6_dir, "Run cache for the training criterion (default $SPATIALGAN_P6_DIR or ./p6_runs)");
  app.add_option("--p6-steps", p6_steps, "Training steps per run for P6");
  app.add_flag("--no-train", no_train, "Fail P6 instead of training missing runs");
  app.add_option("--work-dir", work_dir, "Scratch directory for runs and checkpoints (default: a fresh temp dir)");
  CLI11_PARSE(app, argc, argv);
  if (work_dir.empty()) {
    work_dir = (std::filesystem::temp_directory_path() / ("spatialgan_acceptance_" + std::to_string(::getpid()))).string();
  }
  if (p6_dir.empty()) {
    const char* env = std::getenv("SPATIALGAN_P6_DIR");
    p6_dir = env != nullptr ? env : "p6_runs";
  }

  acceptance::Context context;
  context.p6.dir = p6_dir;
  context.p6.steps = p6_steps;
  context.p6.train_missing = !no_train;
  context.work_dir = work_dir;

  const std::set<std::string> selected(only.begin(), only.end());
  int failures = 0;
  for (const auto& criterion : acceptance::criteria()) {
    if (!selected.empty() && !selected.contains(criterion.id)) continue;
    std::ostringstream detail;
    const auto start = std::chrono::steady_clock::now();
    bool pass = false;
    try {
      pass = criterion.run(context, detail);
    } catch (const std::exception& e) {
      detail << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (pass ? "PASS " : "FAIL ") << criterion.id << " — " << criterion.title << " (" << secs << " s)";
    if (!detail.str().empty()) std::cout << " :: " << detail.str();
    std::cout << std::endl;
    failures += pass ? 0 : 1;
  }
  std::error_code ignored;
  std::filesystem::remove_all(work_dir, ignored);
  return failures == 0 ? 0 : 1;
}
