#include "cli.hpp"

#include <CLI11.hpp>
#include <toml.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "spatialgan/attention.hpp"
#include "spatialgan/checkpoint.hpp"
#include "spatialgan/errors.hpp"
#include "spatialgan/evaluation.hpp"
#include "spatialgan/heatmaps.hpp"
#include "spatialgan/layers.hpp"
#include "spatialgan/studio_service.hpp"
#include "spatialgan/synth_data.hpp"

namespace spatialgan::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Bad invocation: flags, config files or inputs the user must fix.
class UsageError : public Error {
 public:
  using Error::Error;
};

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot read " + path.string());
  auto j = json::parse(f, nullptr, false);
  if (j.is_discarded()) throw UsageError(path.string() + " is not valid JSON");
  return j;
}

checkpoint::ModelBundle load_bundle(const fs::path& path) {
  if (!fs::exists(path / checkpoint::kManifestFile)) throw UsageError("no checkpoint at " + path.string());
  return checkpoint::load_model(path);
}

torch::Tensor to_tensor(const Image& signed_image) {
  auto t = torch::from_blob(const_cast<float*>(signed_image.data.data()),
                            {signed_image.height, signed_image.width, signed_image.channels}, torch::kFloat32);
  return t.permute({2, 0, 1}).clone();
}

// --- dataset synth ----------------------------------------------------------

struct DatasetArgs {
  fs::path out;
  int count = 2000;
  std::optional<int> resolution;
  std::optional<int> objects;
};

int dataset_synth(const DatasetArgs& a, const training::TrainConfig& config, std::uint64_t seed, std::ostream& out) {
  synth::SceneConfig scene;
  scene.resolution = a.resolution.value_or(config.arch.image_resolution);
  scene.n_objects = a.objects.value_or(config.arch.n_objects);
  if (a.count < 1) throw UsageError("--count must be positive");
  Rng rng(seed);
  std::vector<synth::SceneRecord> records;
  records.reserve(static_cast<std::size_t>(a.count));
  for (int i = 0; i < a.count; ++i) records.push_back(synth::generate_scene(rng, scene));
  synth::write_dataset(records, a.out);
  out << "wrote " << a.count << " scenes to " << a.out.string() << '\n';
  return kExitOk;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  fs::path data;
  fs::path out = "run";
  std::optional<fs::path> resume;
  std::optional<long> steps;
  long checkpoint_every = 1000;
  std::optional<fs::path> metrics;
};

int train(const TrainArgs& a, training::TrainConfig config, std::optional<std::uint64_t> seed, std::ostream& out) {
  const int resolution = config.arch.image_resolution;
  std::optional<training::Trainer> trainer;
  if (a.resume) {
    const auto archive = checkpoint::read_archive(*a.resume);
    const int r = archive.manifest.at("descriptor").at("image_resolution").get<int>();
    trainer.emplace(training::Trainer::resume(*a.resume, training::RealDataset(load_real_images(a.data, r))));
    config = trainer->config();
  } else {
    trainer.emplace(config, training::RealDataset(load_real_images(a.data, resolution)), seed);
  }
  const long target = a.steps.value_or(config.total_steps);
  out << json{{"resolved_config", config.to_json()}, {"seed", trainer->seed()}, {"steps", target}}.dump() << '\n';

  fs::create_directories(a.out);
  const auto metrics_path = a.metrics.value_or(a.out / "metrics.jsonl");
  std::ofstream metrics(metrics_path, a.resume ? std::ios::app : std::ios::trunc);
  if (!metrics) throw Error("cannot write " + metrics_path.string());
  while (trainer->step_count() < target) {
    metrics << trainer->step().to_json().dump() << '\n';
    if (a.checkpoint_every > 0 && trainer->step_count() % a.checkpoint_every == 0) {
      metrics.flush();
      trainer->save(a.out / "latest");
    }
  }
  trainer->save(a.out / "final");
  out << "trained to step " << trainer->step_count() << "; checkpoint " << (a.out / "final").string() << '\n';
  return kExitOk;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  fs::path model;
  fs::path data;
  fs::path out;
  int trials = 200;
  double move = 0.0;
  std::string segmenter = "foreground";
  double disc_radius = 3.0;
  int samples = 1000;
  std::uint64_t embedder_seed = 0;
  std::optional<fs::path> csv;
};

int eval_comove(const EvalArgs& a, std::uint64_t seed, std::ostream& out) {
  std::unique_ptr<evaluation::Synthesizer> model;
  std::unique_ptr<evaluation::Segmenter> segmenter;
  if (a.segmenter == "oracle") {
    if (!a.model.empty()) throw UsageError("the oracle segmenter only applies to the analytic disc renderer");
    model = std::make_unique<evaluation::DiscRenderer>(32, a.disc_radius, 3, a.move);
    segmenter = std::make_unique<evaluation::OracleSegmenter>();
  } else {
    if (a.model.empty()) throw UsageError("--model is required with the foreground segmenter");
    auto bundle = load_bundle(a.model);
    if (bundle.arch.mode != networks::GeneratorMode::kIndoor) throw ModeConflict("co-move needs an indoor-mode model");
    model = std::make_unique<evaluation::GeneratorSynthesizer>(bundle.generator, bundle.sampling);
    segmenter = std::make_unique<evaluation::ForegroundSegmenter>();
  }
  Rng rng(seed);
  const auto result = evaluation::comove_ratio(*model, *segmenter, {a.trials, a.move}, rng);
  auto report = result.to_json();
  report["segmenter"] = a.segmenter;
  report["seed"] = seed;
  write_json(a.out, report);
  if (a.csv) {
    std::ofstream f(*a.csv);
    f << result.to_csv();
  }
  out << "co-move mean " << result.mean << " over " << result.count << " trials -> " << a.out.string() << '\n';
  return kExitOk;
}

int eval_fid(const EvalArgs& a, std::uint64_t seed, std::ostream& out) {
  const auto bundle = load_bundle(a.model);
  const auto real = load_real_images(a.data, bundle.arch.image_resolution);
  Rng rng(seed);
  const auto fake = evaluation::generate_samples(bundle.generator, bundle.sampling, a.samples, rng);
  evaluation::FidReport report{evaluation::fid_proxy(fake, real, a.embedder_seed), a.samples,
                               static_cast<int>(real.size(0)), a.embedder_seed};
  auto j = report.to_json();
  j["model"] = a.model.string();
  write_json(a.out, j);
  out << "fid-proxy " << report.value << " -> " << a.out.string() << '\n';
  return kExitOk;
}

Image feature_image(const heatmaps::Map2D& map, int resolution) {
  const auto up = heatmaps::resize_heatmap(map, resolution);
  Image img(resolution, resolution, 1);
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) img.at(y, x, 0) = quantize_u8(static_cast<float>(up.at(y, x)));
  }
  return img;
}

// Attention robustness/consistency, generator feature maps and (with --data)
// heatmap-continuity probes.
int eval_probes(const EvalArgs& a, std::uint64_t seed, std::ostream& out) {
  const auto bundle = load_bundle(a.model);
  const int res = bundle.arch.image_resolution;
  fs::create_directories(a.out);
  Rng rng(seed);
  const auto latents = networks::sample_latents(1, bundle.arch, rng);
  const auto spec = networks::sample_spec(bundle.arch, bundle.sampling, rng);
  networks::GeneratorOutput g;
  {
    torch::NoGradGuard no_grad;
    const auto inputs = bundle.arch.spatial() ? networks::heatmap_inputs({spec}, bundle.arch)
                                              : std::vector<torch::Tensor>{};
    g = bundle.generator->forward(latents, inputs);
  }
  write_png(training::tensor_to_image(g.image[0]), a.out / "sample.png");
  json report = {{"model", a.model.string()}, {"seed", seed}, {"heatmap_spec", heatmaps::to_json(spec)}};

  const auto map = attention::gradcam(bundle.discriminator, g.image[0]);
  write_png(attention::attention_image(map, res), a.out / "attention.png");
  json noise = json::array();
  for (const auto& p : attention::attention_probe_noise(bundle.discriminator, g.image[0], {0.05, 0.1, 0.2}, rng)) {
    noise.push_back({{"sigma", p.sigma}, {"similarity", p.similarity}});
  }
  report["attention_noise"] = noise;

  json features = json::array();
  for (const auto& block : g.trace.order) {
    const auto file = "feature_" + block + ".png";
    write_png(feature_image(evaluation::generator_feature_map(g.trace, block), res), a.out / file);
    features.push_back(file);
  }
  report["feature_maps"] = features;

  if (!a.data.empty()) {
    const auto real = load_real_images(a.data, res);
    json continuity = json::array();
    for (const double fraction : {0.05, 0.1, 0.2}) {
      continuity.push_back(evaluation::heatmap_continuity_probe(bundle.generator, bundle.sampling, fraction, real,
                                                                a.samples, rng, a.embedder_seed)
                               .to_json());
    }
    report["continuity"] = continuity;
  }
  write_json(a.out / "probes.json", report);
  out << "probes -> " << (a.out / "probes.json").string() << '\n';
  return kExitOk;
}

// --- generate ---------------------------------------------------------------

struct GenerateArgs {
  fs::path model;
  fs::path heatmap;
  fs::path out = "generated.png";
  std::optional<fs::path> attention;
};

int generate(const GenerateArgs& a, std::uint64_t seed, std::ostream& out) {
  const auto bundle = load_bundle(a.model);
  heatmaps::HeatmapSpec spec;
  if (a.heatmap.empty()) {
    Rng spec_rng(seed ^ 0x5bd1e995ULL);
    spec = networks::sample_spec(bundle.arch, bundle.sampling, spec_rng);
  } else {
    try {
      spec = heatmaps::spec_from_json(read_json(a.heatmap));
    } catch (const FormatError& e) {
      throw UsageError(a.heatmap.string() + ": " + e.what());
    }
  }
  const bool hierarchical = bundle.arch.mode == networks::GeneratorMode::kHierarchical;
  if (heatmaps::is_hierarchical(spec) != hierarchical) {
    throw ModeConflict("heatmap kind does not match the model's " + networks::to_string(bundle.arch.mode) + " mode");
  }
  Rng rng(seed);
  const auto latents = networks::sample_latents(1, bundle.arch, rng);
  torch::Tensor image;
  {
    torch::NoGradGuard no_grad;
    const auto inputs = bundle.arch.spatial() ? networks::heatmap_inputs({spec}, bundle.arch)
                                              : std::vector<torch::Tensor>{};
    image = bundle.generator->forward(latents, inputs).image;
  }
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  write_png(training::tensor_to_image(image[0]), a.out);
  if (a.attention) {
    const auto map = attention::gradcam(bundle.discriminator, image[0]);
    write_png(attention::attention_image(map, bundle.arch.image_resolution), *a.attention);
  }
  out << "wrote " << a.out.string() << '\n';
  return kExitOk;
}

// --- serve ------------------------------------------------------------------

struct ServeArgs {
  std::vector<fs::path> models;
  std::string host = "127.0.0.1";
  int port = 8080;
  int workers = 2;
  std::string static_dir;
};

studio::StudioService* g_service = nullptr;
extern "C" void on_signal(int) {
  if (g_service) g_service->stop();
}

int serve(const ServeArgs& a, std::optional<std::uint64_t> seed, std::ostream& out) {
  studio::StudioService service({seed, a.workers, a.static_dir});
  for (const auto& m : a.models) {
    if (!fs::exists(m / checkpoint::kManifestFile)) throw UsageError("no checkpoint at " + m.string());
    out << "loaded " << service.load_model(m).dump() << '\n';
  }
  const int port = service.bind(a.host, a.port);
  out << "serving on http://" << a.host << ':' << port << std::endl;
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  service.serve();
  g_service = nullptr;
  return kExitOk;
}

}  // namespace

// --- config -----------------------------------------------------------------

json toml_to_json(const std::string& text) {
  try {
    const auto table = toml::parse(text);
    std::ostringstream s;
    s << toml::json_formatter{table};
    return json::parse(s.str());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config: " << e.description() << " at line " << e.source().begin.line;
    throw InvalidArgument(msg.str());
  }
}

training::TrainConfig resolve_config(const std::optional<fs::path>& file, const json& overrides) {
  training::TrainConfig config;
  const auto known = config.to_json();
  const auto check_keys = [&](const json& j, const std::string& where) {
    for (const auto& [key, value] : j.items()) {
      if (!known.contains(key)) throw InvalidArgument(where + ": unknown key '" + key + "'");
    }
  };
  if (file) {
    std::ifstream f(*file);
    if (!f) throw InvalidArgument("cannot read config " + file->string());
    std::stringstream text;
    text << f.rdbuf();
    const auto j = toml_to_json(text.str());
    check_keys(j, file->string());
    config.merge_json(j);
  }
  if (!overrides.empty()) {
    check_keys(overrides, "flags");
    config.merge_json(overrides);
  }
  return config;
}

torch::Tensor load_real_images(const fs::path& dir, int resolution) {
  if (dir.empty()) throw UsageError("--data is required");
  if (!fs::is_directory(dir)) throw UsageError("no data directory " + dir.string());
  std::vector<torch::Tensor> images;
  if (fs::exists(dir / "metadata.jsonl")) {
    for (const auto& record : synth::read_dataset(dir)) {
      auto img = record.image;
      if (img.height != resolution || img.width != resolution) img = synth::resize_image(img, resolution, resolution);
      images.push_back(training::image_to_tensor(img));
    }
  } else {
    for (const auto& img : synth::load_image_folder(dir, resolution)) images.push_back(to_tensor(img));
  }
  if (images.empty()) throw UsageError("no images in " + dir.string());
  return torch::stack(images);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatially steerable GAN toolkit: synthetic data, training, evaluation, generation and the studio "
               "service.",
               "spatialgan"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::optional<fs::path> config_file;
  std::optional<std::uint64_t> seed;
  const auto shared = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "TOML file with TrainConfig keys ([model] table for the architecture)")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Random seed (default: the config's first seed)");
  };

  auto* dataset = app.add_subcommand("dataset", "Dataset utilities");
  dataset->require_subcommand(1);
  auto* synth_cmd = dataset->add_subcommand("synth", "Render a synthetic multi-object scene dataset");
  DatasetArgs dataset_args;
  shared(synth_cmd);
  synth_cmd->add_option("--out", dataset_args.out, "Output directory")->required();
  synth_cmd->add_option("--count", dataset_args.count, "Number of scenes")->capture_default_str();
  synth_cmd->add_option("--resolution", dataset_args.resolution, "Image side (default: model.image_resolution)");
  synth_cmd->add_option("--objects", dataset_args.objects, "Objects per scene (default: model.n_objects)");

  auto* train_cmd = app.add_subcommand("train", "Train a generator/discriminator pair");
  TrainArgs train_args;
  std::optional<int> batch_size;
  std::optional<double> learning_rate, align_weight;
  std::optional<std::string> mode, sel;
  shared(train_cmd);
  train_cmd->add_option("--data", train_args.data, "Synthetic dataset or PNG folder")->required();
  train_cmd->add_option("--out", train_args.out, "Run directory (checkpoints, metrics)")->capture_default_str();
  train_cmd->add_option("--resume", train_args.resume, "Checkpoint directory to continue from")
      ->check(CLI::ExistingDirectory);
  train_cmd->add_option("--steps", train_args.steps, "Train until this step (overrides total_steps)");
  train_cmd->add_option("--checkpoint-every", train_args.checkpoint_every, "Steps between <out>/latest checkpoints")
      ->capture_default_str();
  train_cmd->add_option("--metrics", train_args.metrics, "Metrics JSON-lines file (default <out>/metrics.jsonl)");
  train_cmd->add_option("--batch-size", batch_size, "Overrides batch_size");
  train_cmd->add_option("--learning-rate", learning_rate, "Overrides learning_rate");
  train_cmd->add_option("--align-weight", align_weight, "Overrides align_weight (0 disables alignment)");
  train_cmd->add_option("--mode", mode, "Overrides model.mode")->check(CLI::IsMember({"hierarchical", "indoor"}));
  train_cmd->add_option("--sel", sel, "Overrides model.sel")
      ->check(CLI::IsMember({"none", "norm", "concat", "indoor"}));

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->require_subcommand(1);
  EvalArgs eval_args;
  auto* comove_cmd = eval_cmd->add_subcommand("comove", "Co-move ratio of an indoor-mode model");
  shared(comove_cmd);
  comove_cmd->add_option("--model", eval_args.model, "Checkpoint directory");
  comove_cmd->add_option("--out", eval_args.out, "JSON report path")->required();
  comove_cmd->add_option("--csv", eval_args.csv, "Per-trial CSV path");
  comove_cmd->add_option("--trials", eval_args.trials, "Number of trials")->capture_default_str();
  comove_cmd->add_option("--move", eval_args.move, "Displacement radius in pixels (0: side/8)")->capture_default_str();
  comove_cmd->add_option("--segmenter", eval_args.segmenter,
                         "foreground (generated images) or oracle (analytic disc renderer, no --model)")
      ->check(CLI::IsMember({"foreground", "oracle"}))
      ->capture_default_str();
  comove_cmd->add_option("--disc-radius", eval_args.disc_radius, "Disc radius for the oracle renderer")
      ->capture_default_str();

  auto* fid_cmd = eval_cmd->add_subcommand("fidproxy", "FID-proxy of generated samples against real images");
  shared(fid_cmd);
  fid_cmd->add_option("--model", eval_args.model, "Checkpoint directory")->required();
  fid_cmd->add_option("--data", eval_args.data, "Synthetic dataset or PNG folder")->required();
  fid_cmd->add_option("--out", eval_args.out, "JSON report path")->required();
  fid_cmd->add_option("--samples", eval_args.samples, "Generated samples")->capture_default_str();
  fid_cmd->add_option("--embedder-seed", eval_args.embedder_seed, "Seed of the random embedder")
      ->capture_default_str();

  auto* probes_cmd = eval_cmd->add_subcommand("probes", "Attention, feature-map and heatmap-continuity probes");
  shared(probes_cmd);
  probes_cmd->add_option("--model", eval_args.model, "Checkpoint directory")->required();
  probes_cmd->add_option("--out", eval_args.out, "Output directory")->required();
  probes_cmd->add_option("--data", eval_args.data, "Reference images for the continuity probe");
  probes_cmd->add_option("--samples", eval_args.samples, "Samples per continuity point")->capture_default_str();
  probes_cmd->add_option("--embedder-seed", eval_args.embedder_seed, "Seed of the random embedder")
      ->capture_default_str();

  auto* generate_cmd = app.add_subcommand("generate", "Generate one image from a heatmap spec");
  GenerateArgs generate_args;
  shared(generate_cmd);
  generate_cmd->add_option("--model", generate_args.model, "Checkpoint directory")->required();
  generate_cmd->add_option("--heatmap", generate_args.heatmap, "HeatmapSpec JSON (default: sampled)")
      ->check(CLI::ExistingFile);
  generate_cmd->add_option("--out", generate_args.out, "Output PNG")->capture_default_str();
  generate_cmd->add_option("--attention", generate_args.attention, "Also write the discriminator attention PNG");

  auto* serve_cmd = app.add_subcommand("serve", "Run the studio REST service");
  ServeArgs serve_args;
  shared(serve_cmd);
  serve_cmd->add_option("--model", serve_args.models, "Checkpoint directory to preload (repeatable)");
  serve_cmd->add_option("--host", serve_args.host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--port", serve_args.port, "Port (0: any free port)")->capture_default_str();
  serve_cmd->add_option("--workers", serve_args.workers, "Concurrent generations")->capture_default_str();
  serve_cmd->add_option("--static", serve_args.static_dir,
                        std::string("UI bundle served at / (default $") + studio::kStaticDirEnv + ")");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\nRun with --help for usage.\n";
    return kExitUsage;
  }

  try {
    json overrides = json::object();
    if (batch_size) overrides["batch_size"] = *batch_size;
    if (learning_rate) overrides["learning_rate"] = *learning_rate;
    if (align_weight) overrides["align_weight"] = *align_weight;
    if (mode) overrides["model"]["mode"] = *mode;
    if (sel) overrides["model"]["sel"] = *sel;
    training::TrainConfig config;
    try {
      config = resolve_config(config_file, overrides);
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
    const std::uint64_t resolved_seed = seed.value_or(config.seeds.front());

    if (synth_cmd->parsed()) return dataset_synth(dataset_args, config, resolved_seed, out);
    if (train_cmd->parsed()) {
      if (train_args.resume && (config_file || !overrides.empty() || seed)) {
        throw UsageError("--resume restores config and seed from the checkpoint");
      }
      return train(train_args, config, resolved_seed, out);
    }
    if (comove_cmd->parsed()) return eval_comove(eval_args, resolved_seed, out);
    if (fid_cmd->parsed()) return eval_fid(eval_args, resolved_seed, out);
    if (probes_cmd->parsed()) return eval_probes(eval_args, resolved_seed, out);
    if (generate_cmd->parsed()) return generate(generate_args, resolved_seed, out);
    if (serve_cmd->parsed()) return serve(serve_args, seed, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  }
  return kExitUsage;
}

}  // namespace spatialgan::cli
