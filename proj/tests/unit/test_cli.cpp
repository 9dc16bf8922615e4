#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "cli.hpp"

namespace fs = std::filesystem;
using spatialgan::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch() {
  const auto dir = fs::temp_directory_path() / ("spatialgan_unit_cli_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help and usage errors") {
    const auto help = call({"--help"});
    CHECK(help.code == spatialgan::cli::kExitOk);
    CHECK(help.out.find("train") != std::string::npos);
    CHECK(call({"frobnicate"}).code == spatialgan::cli::kExitUsage);
    CHECK(call({}).code == spatialgan::cli::kExitUsage);
    CHECK(call({"train"}).code == spatialgan::cli::kExitUsage);
    CHECK(call({"train", "--data", "x", "--resume", "y", "--seed", "3"}).code == spatialgan::cli::kExitUsage);
  }

  TEST_CASE("bad arguments and domain errors") {
    // A path that is not a checkpoint is a usage error; a checkpoint the
    // library rejects is a domain error.
    CHECK(call({"generate", "--model", (scratch() / "missing").string()}).code == spatialgan::cli::kExitUsage);
    const auto dir = scratch() / "future";
    fs::create_directories(dir);
    std::ofstream(dir / "manifest.json") << R"({"format_version": "99", "tensors": {}})";
    const auto r = call({"generate", "--model", dir.string()});
    CHECK(r.code == spatialgan::cli::kExitDomain);
    CHECK(r.err.find("99") != std::string::npos);
  }

  TEST_CASE("config files reject unknown keys") {
    const auto path = scratch() / "bad.toml";
    std::ofstream(path) << "batch_size = 4\nnot_a_key = 1\n";
    CHECK_THROWS(spatialgan::cli::resolve_config(path, nlohmann::json::object()));
    std::ofstream(path) << "batch_size = 4\n[model]\nmode = \"indoor\"\nsel = \"indoor\"\n";
    const auto config = spatialgan::cli::resolve_config(path, nlohmann::json::object());
    CHECK(config.batch_size == 4);
    CHECK(config.arch.mode == spatialgan::networks::GeneratorMode::kIndoor);
  }

  TEST_CASE("oracle co-move report") {
    const auto out = scratch() / "comove.json";
    const auto r = call({"eval", "comove", "--segmenter", "oracle", "--trials", "20", "--out", out.string(), "--seed",
                         "4"});
    REQUIRE(r.code == spatialgan::cli::kExitOk);
    std::ifstream f(out);
    const auto report = nlohmann::json::parse(f);
    CHECK(report.contains("mean"));
    CHECK(report["mean"].get<double>() == doctest::Approx(1.0).epsilon(0.05));
  }

  TEST_CASE("train then evaluate an indoor checkpoint") {
    const auto dir = scratch() / "smoke";
    REQUIRE(call({"dataset", "synth", "--out", (dir / "data").string(), "--count", "8", "--seed", "2"}).code == 0);
    const auto train = call({"train", "--data", (dir / "data").string(), "--out", (dir / "run").string(), "--steps",
                             "2", "--batch-size", "2", "--mode", "indoor", "--sel", "indoor", "--seed", "2"});
    REQUIRE(train.code == 0);
    const auto resolved = nlohmann::json::parse(train.out.substr(0, train.out.find('\n')));
    CHECK(resolved["resolved_config"]["batch_size"] == 2);
    CHECK(resolved["seed"] == 2);
    const auto report = dir / "comove.json";
    const auto eval = call({"eval", "comove", "--model", (dir / "run" / "final").string(), "--trials", "10", "--out",
                            report.string(), "--seed", "2"});
    if (eval.code == 0) {
      std::ifstream f(report);
      CHECK(nlohmann::json::parse(f).contains("mean"));
    } else {
      // An untrained generator may draw nothing the segmenter can match.
      CHECK(eval.code == spatialgan::cli::kExitDomain);
      CHECK(eval.err.find("no valid co-move trial") != std::string::npos);
    }
    const auto png = dir / "sample.png";
    CHECK(call({"generate", "--model", (dir / "run" / "final").string(), "--out", png.string()}).code == 0);
    CHECK(fs::file_size(png) > 0);
  }

  TEST_CASE("synthetic dataset command") {
    const auto dir = scratch() / "ds";
    REQUIRE(call({"dataset", "synth", "--out", dir.string(), "--count", "3", "--seed", "1"}).code == 0);
    CHECK(fs::exists(dir / "metadata.jsonl"));
    CHECK(spatialgan::cli::load_real_images(dir, 16).sizes() == torch::IntArrayRef({3, 3, 16, 16}));
    fs::remove_all(scratch());
  }
}
