#include "spatialgan/studio_service.hpp"

#include <httplib.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <random>
#include <semaphore>
#include <sstream>
#include <vector>

#include "spatialgan/attention.hpp"
#include "spatialgan/checkpoint.hpp"
#include "spatialgan/errors.hpp"
#include "spatialgan/heatmaps.hpp"
#include "spatialgan/layers.hpp"
#include "spatialgan/training.hpp"

namespace spatialgan::studio {
namespace {

using nlohmann::json;

// Request body failed validation; carries per-field messages.
class ValidationError : public Error {
 public:
  explicit ValidationError(json fields) : Error("invalid request"), fields_(std::move(fields)) {}
  const json& fields() const { return fields_; }

 private:
  json fields_;
};

class MethodNotAllowed : public Error {
 public:
  using Error::Error;
};

json number_schema() { return {{"type", "number"}}; }
json integer_schema() { return {{"type", "integer"}}; }
json string_schema() { return {{"type", "string"}}; }
json object_of(json properties, json required) {
  return {{"type", "object"}, {"properties", std::move(properties)}, {"required", std::move(required)}};
}

json heatmap_spec_schema() {
  const json point = {{"type", "array"}, {"items", number_schema()}, {"minItems", 2}, {"maxItems", 2}};
  const json level = object_of({{"level", integer_schema()},
                                {"centers", {{"type", "array"}, {"items", point}}},
                                {"variances", {{"type", "array"}, {"items", number_schema()}}},
                                {"identities", {{"type", "array"}, {"items", integer_schema()}}},
                                {"active", {{"type", "array"}, {"items", {{"type", "boolean"}}}}}},
                               {"level", "centers", "variances"});
  return object_of({{"kind", {{"type", "string"}, {"enum", {"hierarchical", "multi_object"}}}},
                    {"base_variance", number_schema()},
                    {"levels", {{"type", "array"}, {"items", level}, {"minItems", 1}}}},
                   {"kind", "base_variance", "levels"});
}

json selector_schema() {
  return {{"type", "object"},
          {"properties", {{"level", integer_schema()}, {"index", integer_schema()}, {"identity", integer_schema()}}}};
}

json build_schemas() {
  const json nullable_string = {{"type", json::array({"string", "null"})}};
  const json session = object_of({{"session_id", string_schema()},
                                  {"model_id", string_schema()},
                                  {"mode", {{"type", "string"}, {"enum", {"hierarchical", "indoor"}}}},
                                  {"heatmap_spec", heatmap_spec_schema()},
                                  {"auto_generate", {{"type", "boolean"}}},
                                  {"image_url", nullable_string},
                                  {"latent_digests", {{"type", "array"}, {"items", string_schema()}}}},
                                 {"session_id", "model_id", "mode", "heatmap_spec", "auto_generate", "image_url",
                                  "latent_digests"});
  const json model = object_of({{"id", string_schema()},
                                {"path", string_schema()},
                                {"version", string_schema()},
                                {"step", integer_schema()},
                                {"descriptor", {{"type", "object"}}}},
                               {"id", "path", "version", "step", "descriptor"});
  return {
      {"heatmap_spec", heatmap_spec_schema()},
      {"session", session},
      {"model", model},
      {"models", object_of({{"models", {{"type", "array"}, {"items", model}}}}, {"models"})},
      {"generate", object_of({{"session_id", string_schema()},
                              {"image_url", string_schema()},
                              {"align_preview_url", string_schema()}},
                             {"session_id", "image_url"})},
      {"error", object_of({{"error", string_schema()},
                           {"fields", {{"type", "object"}, {"additionalProperties", string_schema()}}}},
                          {"error"})},
      {"load_request", object_of({{"path", string_schema()}}, {"path"})},
      {"create_session_request",
       object_of({{"model_id", string_schema()}, {"auto_generate", {{"type", "boolean"}}}}, json::array())},
      {"move_request",
       object_of({{"selector", selector_schema()}, {"dy", number_schema()}, {"dx", number_schema()}},
                 {"selector", "dy", "dx"})},
      {"set_request", object_of({{"selector", selector_schema()}, {"y", number_schema()}, {"x", number_schema()}},
                                {"selector", "y", "x"})},
      {"remove_request", object_of({{"identity", integer_schema()}}, {"identity"})},
      {"style_request", object_of({{"identity", integer_schema()}, {"reseed", integer_schema()}}, {"identity", "reseed"})},
      {"auto_request", object_of({{"enabled", {{"type", "boolean"}}}}, {"enabled"})},
  };
}

std::string fnv1a_hex(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Hex FNV-1a of each latent row's float bytes, so clients can observe which
// codes an edit touched without the service exposing raw latents.
json latent_digests(const torch::Tensor& latents) {
  json out = json::array();
  const auto rows = latents[0].contiguous();
  for (int64_t i = 0; i < rows.size(0); ++i) {
    const auto row = rows[i].contiguous();
    const auto* p = static_cast<const std::uint8_t*>(row.data_ptr());
    out.push_back(fnv1a_hex({p, p + row.numel() * static_cast<int64_t>(row.element_size())}));
  }
  return out;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream in(path);
  std::string part;
  while (std::getline(in, part, '/')) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  auto j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ValidationError(json{{"body", "must be a JSON object"}});
  return j;
}

double number_field(const json& body, const char* key, json& fields) {
  if (!body.contains(key) || !body[key].is_number()) {
    fields[key] = "required number";
    return 0.0;
  }
  return body[key].get<double>();
}

long integer_field(const json& body, const char* key, json& fields) {
  if (!body.contains(key) || !body[key].is_number_integer()) {
    fields[key] = "required integer";
    return 0;
  }
  return body[key].get<long>();
}

heatmaps::Selector selector_field(const json& body, const heatmaps::HeatmapSpec& spec, json& fields) {
  if (!body.contains("selector") || !body["selector"].is_object()) {
    fields["selector"] = "required object";
    return {};
  }
  const auto& s = body["selector"];
  heatmaps::Selector selector;
  if (heatmaps::is_hierarchical(spec)) {
    if (!s.contains("level") || !s["level"].is_number_integer() || !s.contains("index") ||
        !s["index"].is_number_integer()) {
      fields["selector"] = "hierarchical sessions address sub-heatmaps by integer level and index";
      return {};
    }
    selector = heatmaps::Selector::hierarchical(s["level"].get<int>(), s["index"].get<int>());
  } else {
    if (!s.contains("identity") || !s["identity"].is_number_integer()) {
      fields["selector"] = "multi-object sessions address sub-heatmaps by integer identity";
      return {};
    }
    selector = heatmaps::Selector::object(s["identity"].get<int>());
  }
  try {
    heatmaps::find(spec, selector);
  } catch (const Error& e) {
    fields["selector"] = e.what();
  }
  return selector;
}

void check_fields(const json& fields) {
  if (!fields.empty()) throw ValidationError(fields);
}

Reply json_reply(int status, const json& body) { return {status, "application/json", body.dump()}; }

Reply error_reply(int status, const std::string& message, const json& fields = json()) {
  json body = {{"error", message}};
  if (!fields.is_null()) body["fields"] = fields;
  return json_reply(status, body);
}

}  // namespace

const json& schemas() {
  static const json all = build_schemas();
  return all;
}

struct StudioService::Impl {
  struct Model {
    std::string id;
    std::shared_ptr<const checkpoint::ModelBundle> bundle;
  };

  struct Session {
    std::mutex mutex;  // one in-flight operation per session
    std::string id;
    std::shared_ptr<const Model> model;
    torch::Tensor latents;  // (1, k, latent_dim)
    heatmaps::HeatmapSpec spec;
    bool auto_generate = false;
    std::optional<std::string> image_id;
  };

  explicit Impl(ServiceOptions o) : options(std::move(o)), slots(std::max(1, o.workers)) {
    rng = Rng(options.seed.value_or(std::random_device{}()));
    if (options.static_dir.empty()) {
      if (const char* env = std::getenv(kStaticDirEnv)) options.static_dir = env;
    }
  }

  ServiceOptions options;
  std::counting_semaphore<1024> slots;

  std::mutex registry_mutex;  // serializes model loads
  std::vector<std::shared_ptr<const Model>> models;

  std::mutex sessions_mutex;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  Rng rng;  // guarded by sessions_mutex

  std::mutex images_mutex;
  std::map<std::string, std::vector<std::uint8_t>> images;

  httplib::Server server;

  json model_json(const Model& m) const {
    return {{"id", m.id},
            {"path", m.bundle->path},
            {"version", m.bundle->version},
            {"step", m.bundle->step},
            {"descriptor", m.bundle->arch.to_json()}};
  }

  json load(const std::string& path) {
    std::lock_guard lock(registry_mutex);
    const auto canonical = std::filesystem::weakly_canonical(path).string();
    for (const auto& m : models) {
      if (m->bundle->path == canonical) return model_json(*m);
    }
    if (!std::filesystem::exists(std::filesystem::path(path) / checkpoint::kManifestFile)) {
      throw NotFound("no checkpoint at " + path);
    }
    auto bundle = std::make_shared<checkpoint::ModelBundle>(checkpoint::load_model(path));
    bundle->path = canonical;
    auto model = std::make_shared<Model>(Model{"m" + std::to_string(models.size() + 1), std::move(bundle)});
    models.push_back(model);
    return model_json(*model);
  }

  std::shared_ptr<const Model> find_model(const std::optional<std::string>& id) {
    std::lock_guard lock(registry_mutex);
    if (models.empty()) throw NotFound("no model loaded");
    if (!id) return models.front();
    for (const auto& m : models) {
      if (m->id == *id) return m;
    }
    throw NotFound("unknown model " + *id);
  }

  std::shared_ptr<Session> find_session(const std::string& id) {
    std::lock_guard lock(sessions_mutex);
    const auto it = sessions.find(id);
    if (it == sessions.end()) throw NotFound("unknown session " + id);
    return it->second;
  }

  std::string store_image(const Image& image) {
    auto png = encode_png(image);
    auto id = fnv1a_hex(png);
    std::lock_guard lock(images_mutex);
    images.emplace(id, std::move(png));
    return id;
  }

  static std::string image_url(const std::string& id) { return "/images/" + id + ".png"; }

  torch::Tensor generate(const Session& s) {
    const auto& bundle = *s.model->bundle;
    slots.acquire();
    struct Release {
      std::counting_semaphore<1024>& slots;
      ~Release() { slots.release(); }
    } release{slots};
    torch::NoGradGuard no_grad;
    const auto inputs = bundle.arch.spatial() ? networks::heatmap_inputs({s.spec}, bundle.arch)
                                              : std::vector<torch::Tensor>{};
    return bundle.generator->forward(s.latents, inputs).image;
  }

  void render_into(Session& s) { s.image_id = store_image(training::tensor_to_image(generate(s)[0])); }

  json session_json(const Session& s) const {
    return {{"session_id", s.id},
            {"model_id", s.model->id},
            {"mode", networks::to_string(s.model->bundle->arch.mode)},
            {"heatmap_spec", heatmaps::to_json(s.spec)},
            {"auto_generate", s.auto_generate},
            {"image_url", s.image_id ? json(image_url(*s.image_id)) : json(nullptr)},
            {"latent_digests", latent_digests(s.latents)}};
  }

  Reply create_session(const json& body) {
    json fields = json::object();
    std::optional<std::string> model_id;
    if (body.contains("model_id")) {
      if (body["model_id"].is_string()) {
        model_id = body["model_id"].get<std::string>();
      } else {
        fields["model_id"] = "must be a string";
      }
    }
    bool auto_generate = false;
    if (body.contains("auto_generate")) {
      if (body["auto_generate"].is_boolean()) {
        auto_generate = body["auto_generate"].get<bool>();
      } else {
        fields["auto_generate"] = "must be a boolean";
      }
    }
    check_fields(fields);
    auto session = std::make_shared<Session>();
    session->model = find_model(model_id);
    session->auto_generate = auto_generate;
    const auto& bundle = *session->model->bundle;
    {
      std::lock_guard lock(sessions_mutex);
      char buf[17];
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng.next_u64()));
      session->id = buf;
      session->latents = networks::sample_latents(1, bundle.arch, rng);
      session->spec = networks::sample_spec(bundle.arch, bundle.sampling, rng);
    }
    std::lock_guard session_lock(session->mutex);
    render_into(*session);
    {
      std::lock_guard lock(sessions_mutex);
      sessions.emplace(session->id, session);
    }
    return json_reply(200, session_json(*session));
  }

  Reply session_action(Session& s, const std::string& action, const json& body,
                       const std::map<std::string, std::string>& query) {
    json fields = json::object();
    if (action == "move" || action == "set") {
      const auto selector = selector_field(body, s.spec, fields);
      const char* ky = action == "move" ? "dy" : "y";
      const char* kx = action == "move" ? "dx" : "x";
      const heatmaps::Point p{number_field(body, ky, fields), number_field(body, kx, fields)};
      check_fields(fields);
      s.spec = action == "move" ? heatmaps::move_center(s.spec, selector, p) : heatmaps::set_center(s.spec, selector, p);
    } else if (action == "remove") {
      const auto identity = integer_field(body, "identity", fields);
      check_fields(fields);
      if (heatmaps::is_hierarchical(s.spec)) throw ModeConflict("remove needs a multi-object session");
      s.spec = heatmaps::scale_subheatmap(s.spec, static_cast<int>(identity), 0.0);
    } else if (action == "style") {
      const auto identity = integer_field(body, "identity", fields);
      const auto reseed = integer_field(body, "reseed", fields);
      check_fields(fields);
      if (heatmaps::is_hierarchical(s.spec)) throw ModeConflict("style edits need a multi-object session");
      heatmaps::find(s.spec, heatmaps::Selector::object(static_cast<int>(identity)));
      const auto& arch = s.model->bundle->arch;
      if (identity < 0 || identity >= arch.n_objects) throw NotFound("no object latent " + std::to_string(identity));
      // Only this object's code changes; the tensor is replaced, not mutated,
      // so previously returned latents stay intact.
      Rng style_rng(static_cast<std::uint64_t>(reseed));
      auto latents = s.latents.clone();
      latents[0][identity] = randn(style_rng, {arch.latent_dim});
      s.latents = latents;
    } else if (action == "auto") {
      if (!body.contains("enabled") || !body["enabled"].is_boolean()) fields["enabled"] = "required boolean";
      check_fields(fields);
      s.auto_generate = body["enabled"].get<bool>();
    } else if (action == "generate") {
      const auto image = generate(s);
      s.image_id = store_image(training::tensor_to_image(image[0]));
      json out = {{"session_id", s.id}, {"image_url", image_url(*s.image_id)}};
      const auto it = query.find("attention");
      if (it != query.end() && it->second != "0" && it->second != "false") {
        const auto& bundle = *s.model->bundle;
        const auto map = attention::gradcam(bundle.discriminator, image[0]);
        out["align_preview_url"] =
            image_url(store_image(attention::attention_image(map, bundle.arch.image_resolution)));
      }
      return json_reply(200, out);
    } else {
      throw NotFound("unknown action " + action);
    }
    if (s.auto_generate && action != "auto") render_into(s);
    return json_reply(200, session_json(s));
  }

  Reply route(const std::string& method, const std::string& path, const std::string& body,
              const std::map<std::string, std::string>& query) {
    const auto parts = split_path(path);
    const auto expect = [&](const char* m) {
      if (method != m) throw MethodNotAllowed(method + " not allowed on " + path);
    };
    if (parts.size() == 1 && parts[0] == "schema") {
      expect("GET");
      return json_reply(200, schemas());
    }
    if (parts.size() == 1 && parts[0] == "models") {
      expect("GET");
      json list = json::array();
      std::lock_guard lock(registry_mutex);
      for (const auto& m : models) list.push_back(model_json(*m));
      return json_reply(200, {{"models", list}});
    }
    if (parts.size() == 2 && parts[0] == "models" && parts[1] == "load") {
      expect("POST");
      const auto j = parse_body(body);
      if (!j.contains("path") || !j["path"].is_string()) throw ValidationError(json{{"path", "required string"}});
      return json_reply(200, load(j["path"].get<std::string>()));
    }
    if (parts.size() == 1 && parts[0] == "sessions") {
      expect("POST");
      return create_session(parse_body(body));
    }
    if (parts.size() == 2 && parts[0] == "sessions") {
      expect("GET");
      const auto s = find_session(parts[1]);
      std::lock_guard lock(s->mutex);
      return json_reply(200, session_json(*s));
    }
    if (parts.size() == 3 && parts[0] == "sessions") {
      expect("POST");
      const auto s = find_session(parts[1]);
      const auto j = parse_body(body);
      std::lock_guard lock(s->mutex);
      return session_action(*s, parts[2], j, query);
    }
    if (parts.size() == 2 && parts[0] == "images" && parts[1].ends_with(".png")) {
      expect("GET");
      const auto id = parts[1].substr(0, parts[1].size() - 4);
      std::lock_guard lock(images_mutex);
      const auto it = images.find(id);
      if (it == images.end()) throw NotFound("unknown image " + id);
      return {200, "image/png", std::string(it->second.begin(), it->second.end())};
    }
    throw NotFound("no route for " + path);
  }
};

StudioService::StudioService(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
  auto adapter = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query[k] = v;
    const auto reply = handle(req.method, req.path, req.body, query);
    res.status = reply.status;
    res.set_content(reply.body, reply.content_type);
  };
  impl_->server.Get(".*", adapter);
  impl_->server.Post(".*", adapter);
  const auto& dir = impl_->options.static_dir;
  if (!dir.empty() && std::filesystem::is_directory(dir)) impl_->server.set_mount_point("/", dir);
}

StudioService::~StudioService() { stop(); }

json StudioService::load_model(const std::string& path) { return impl_->load(path); }

Reply StudioService::handle(const std::string& method, const std::string& path, const std::string& body,
                            const std::map<std::string, std::string>& query) {
  try {
    return impl_->route(method, path, body, query);
  } catch (const ValidationError& e) {
    return error_reply(422, e.what(), e.fields());
  } catch (const NotFound& e) {
    return error_reply(404, e.what());
  } catch (const ModeConflict& e) {
    return error_reply(409, e.what());
  } catch (const MethodNotAllowed& e) {
    return error_reply(405, e.what());
  } catch (const InvalidArgument& e) {
    return error_reply(422, e.what());
  } catch (const FormatError& e) {
    return error_reply(422, e.what());
  } catch (const UnsupportedVersion& e) {
    return error_reply(422, e.what());
  } catch (const std::exception& e) {
    return error_reply(500, e.what());
  }
}

int StudioService::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void StudioService::serve() { impl_->server.listen_after_bind(); }

void StudioService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace spatialgan::studio
