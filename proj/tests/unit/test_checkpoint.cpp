#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "spatialgan/checkpoint.hpp"
#include "spatialgan/errors.hpp"

using namespace spatialgan;
using namespace spatialgan::checkpoint;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("spatialgan_unit_ckpt_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("archives round trip tensors and metadata") {
    const auto dir = scratch("roundtrip");
    const NamedTensors tensors = {{"a", torch::arange(6, torch::kFloat32).reshape({2, 3})}, {"b", torch::ones({4})}};
    write_archive(dir, {{"note", "x"}}, tensors);
    const auto back = read_archive(dir);
    CHECK(back.manifest["note"] == "x");
    CHECK(back.manifest["format_version"] == kFormatVersion);
    CHECK(torch::equal(back.tensor("a"), tensors[0].second));
    CHECK(back.contains("b"));
    CHECK_FALSE(back.contains("c"));
    CHECK_THROWS_AS(back.tensor("c"), FormatError);
    CHECK_THROWS_AS(write_archive(scratch("dup"), {}, {{"a", torch::ones({1})}, {"a", torch::ones({1})}}),
                    InvalidArgument);
  }

  TEST_CASE("corrupt and foreign checkpoints are rejected") {
    const auto dir = scratch("bad");
    write_archive(dir, {}, {{"a", torch::ones({8})}});
    SUBCASE("truncated tensor file") {
      fs::resize_file(dir / kTensorFile, 4);
      CHECK_THROWS_AS(read_archive(dir), FormatError);
    }
    SUBCASE("unparseable manifest") {
      std::ofstream(dir / kManifestFile) << "{not json";
      CHECK_THROWS_AS(read_archive(dir), FormatError);
    }
    SUBCASE("newer format version") {
      std::ofstream(dir / kManifestFile) << R"({"format_version": "2", "tensors": {}})";
      CHECK_THROWS_AS(read_archive(dir), UnsupportedVersion);
    }
    SUBCASE("missing directory") { CHECK_THROWS_AS(read_archive(dir / "nope"), FormatError); }
  }

  TEST_CASE("module state round trips and shape mismatches fail") {
    Rng rng(1);
    networks::Discriminator a(networks::ArchitectureDescriptor::micro(), rng);
    networks::Discriminator b(networks::ArchitectureDescriptor::micro(), rng);
    NamedTensors state;
    append_module_state(state, *a, "d.");
    const auto dir = scratch("module");
    write_archive(dir, {}, state);
    load_module_state(*b, read_archive(dir), "d.");
    const auto pa = a->parameters();
    const auto pb = b->parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(torch::equal(pa[i], pb[i]));
    auto arch = networks::ArchitectureDescriptor::micro();
    arch.d_channels = {{4, 8}, {8, 8}};
    networks::Discriminator wide(arch, rng);
    CHECK_THROWS_AS(load_module_state(*wide, read_archive(dir), "d."), FormatError);
    fs::remove_all(dir.parent_path());
  }
}
