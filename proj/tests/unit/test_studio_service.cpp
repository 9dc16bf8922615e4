#include <doctest.h>

#include <filesystem>
#include <unistd.h>

#include "spatialgan/studio_service.hpp"
#include "spatialgan/synth_data.hpp"
#include "spatialgan/training.hpp"

using namespace spatialgan;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path micro_checkpoint(networks::GeneratorMode mode) {
  const auto dir = fs::temp_directory_path() / ("spatialgan_unit_studio_" + std::to_string(::getpid())) /
                   networks::to_string(mode);
  if (fs::exists(dir / "manifest.json")) return dir;
  training::TrainConfig config;
  config.arch = networks::ArchitectureDescriptor::micro(mode);
  config.batch_size = 2;
  Rng rng(1);
  synth::SceneConfig scenes;
  scenes.resolution = 8;
  scenes.min_size = 1.0;
  scenes.max_size = 2.0;
  scenes.n_objects = 2;
  std::vector<Image> images;
  for (int i = 0; i < 4; ++i) images.push_back(synth::generate_scene(rng, scenes).image);
  training::Trainer trainer(config, training::RealDataset::from_images(images), 1);
  trainer.step();
  trainer.save(dir);
  return dir;
}

json post(studio::StudioService& s, const std::string& path, const json& body, int status) {
  const auto reply = s.handle("POST", path, body.dump());
  CHECK_MESSAGE(reply.status == status, path << ": " << reply.body);
  return reply.json();
}

}  // namespace

TEST_SUITE("studio_service") {
  TEST_CASE("schema document lists every body") {
    const auto& s = studio::schemas();
    for (const char* key : {"heatmap_spec", "session", "model", "models", "generate", "error", "move_request",
                            "set_request", "remove_request", "style_request", "auto_request"}) {
      CHECK_MESSAGE(s.contains(key), key);
    }
    studio::StudioService service({1, 1, ""});
    const auto reply = service.handle("GET", "/schema");
    CHECK(reply.status == 200);
    CHECK(reply.json() == s);
  }

  TEST_CASE("routing errors") {
    studio::StudioService service({1, 1, ""});
    CHECK(service.handle("POST", "/schema").status == 405);
    CHECK(service.handle("GET", "/nowhere").status == 404);
    CHECK(service.handle("GET", "/sessions/missing").status == 404);
    CHECK(service.handle("POST", "/sessions", "[1, 2]").status == 422);
    CHECK(service.handle("POST", "/sessions", "{}").status == 404);  // no model loaded
    CHECK(service.handle("POST", "/models/load", R"({"path": "/does/not/exist"})").status == 404);
    CHECK(service.handle("GET", "/images/0000.png").status == 404);
  }

  TEST_CASE("editing an indoor session") {
    studio::StudioService service({5, 1, ""});
    const auto model = post(service, "/models/load", {{"path", micro_checkpoint(networks::GeneratorMode::kIndoor)}}, 200);
    const auto session = post(service, "/sessions", {{"model_id", model["id"]}}, 200);
    const auto base = "/sessions/" + session["session_id"].get<std::string>();
    CHECK(session["mode"] == "indoor");
    CHECK(session["latent_digests"].size() == 3);
    const auto image = service.handle("GET", session["image_url"].get<std::string>());
    CHECK(image.status == 200);
    CHECK(image.content_type == "image/png");

    const auto moved = post(service, base + "/move", {{"selector", {{"identity", 1}}}, {"dy", 0.25}, {"dx", 0.0}}, 200);
    CHECK(moved["latent_digests"] == session["latent_digests"]);
    const auto back = post(service, base + "/move", {{"selector", {{"identity", 1}}}, {"dy", -0.25}, {"dx", 0.0}}, 200);
    CHECK(back["heatmap_spec"] == session["heatmap_spec"]);
    const auto gen = post(service, base + "/generate", json::object(), 200);
    CHECK(gen["image_url"] == session["image_url"]);

    const auto bad = post(service, base + "/set", {{"selector", {{"identity", 1}}}, {"y", "up"}, {"x", 0.0}}, 422);
    CHECK(bad["fields"].contains("y"));
    post(service, base + "/style", {{"identity", 4}, {"reseed", 1}}, 404);
  }

  TEST_CASE("hierarchical sessions refuse object edits") {
    studio::StudioService service({6, 1, ""});
    const auto model =
        post(service, "/models/load", {{"path", micro_checkpoint(networks::GeneratorMode::kHierarchical)}}, 200);
    const auto session = post(service, "/sessions", {{"model_id", model["id"]}}, 200);
    const auto base = "/sessions/" + session["session_id"].get<std::string>();
    post(service, base + "/remove", {{"identity", 0}}, 409);
    post(service, base + "/move", {{"selector", {{"level", 3}, {"index", 0}}}, {"dy", 0.1}, {"dx", 0.1}}, 422);
    fs::remove_all(fs::temp_directory_path() / ("spatialgan_unit_studio_" + std::to_string(::getpid())));
  }
}
