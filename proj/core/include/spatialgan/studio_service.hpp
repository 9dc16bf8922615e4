#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace spatialgan::studio {

// Directory of the UI bundle served at "/" when set.
inline constexpr const char* kStaticDirEnv = "SPATIALGAN_STUDIO_STATIC";

struct ServiceOptions {
  // Seed of the session-latent stream; unset draws one from std::random_device.
  std::optional<std::uint64_t> seed;
  // Concurrent generations across all sessions.
  int workers = 2;
  // Overrides kStaticDirEnv when non-empty.
  std::string static_dir;
};

struct Reply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;

  nlohmann::json json() const { return nlohmann::json::parse(body); }
};

// JSON schemas of every request and response body, as served at /schema.
const nlohmann::json& schemas();

// Interactive editing sessions over loaded checkpoints. Transport-agnostic:
// handle() implements the REST surface, serve() exposes it over HTTP.
//
//   GET  /schema                     GET  /models      POST /models/load {path}
//   POST /sessions {model_id?, auto_generate?}         GET  /sessions/{id}
//   POST /sessions/{id}/move {selector, dy, dx}        POST /sessions/{id}/set {selector, y, x}
//   POST /sessions/{id}/generate[?attention=1]         POST /sessions/{id}/remove {identity}
//   POST /sessions/{id}/style {identity, reseed}       POST /sessions/{id}/auto {enabled}
//   GET  /images/{hash}.png
class StudioService {
 public:
  explicit StudioService(ServiceOptions options = {});
  ~StudioService();
  StudioService(const StudioService&) = delete;
  StudioService& operator=(const StudioService&) = delete;

  // Loads (or returns the already-loaded) checkpoint; throws on failure.
  nlohmann::json load_model(const std::string& path);

  Reply handle(const std::string& method, const std::string& path, const std::string& body = "",
               const std::map<std::string, std::string>& query = {});

  // Binds `host:port` (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  // Serves until stop(); requires bind().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace spatialgan::studio
