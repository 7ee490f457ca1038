// livestyle command-line interface: stylize, train, serve, models.
//
// Exit codes: 0 ok, 2 bad flags, 3 unreadable input or empty dataset,
// 4 diverged loss, 5 port in use, 1 anything else. Errors are reported as a
// single JSON line on stderr.

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <pthread.h>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "livestyle/engine.hpp"
#include "livestyle/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace livestyle;

namespace {

constexpr int kBadFlags = 2;
constexpr int kBadInput = 3;
constexpr int kDiverged = 4;
constexpr int kPortInUse = 5;

struct Exit {
  int code;
  std::string kind;
  std::string message;
};

[[noreturn]] void fail(int code, std::string kind, std::string message) {
  throw Exit{code, std::move(kind), std::move(message)};
}

int report(const Exit& e) {
  std::cerr << json{{"error", e.kind}, {"message", e.message}, {"exit_code", e.code}}.dump() << std::endl;
  return e.code;
}

int exit_code_for(const Error& e) {
  const std::string& k = e.kind();
  if (k == "DivergedLoss") return kDiverged;
  if (k == "CorruptImage" || k == "UnsupportedFormat" || k == "EmptyDataset" || k == "ArchiveError" ||
      k == "MissingTensor" || k == "ShapeMismatch")
    return kBadInput;
  if (k == "InvalidParams" || k == "InvalidStrength" || k == "InvalidSize") return kBadFlags;
  return 1;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(kBadInput, "UnreadableInput", "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

image::RawImage read_image(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return image::decode_image(bytes);
  } catch (const Error& e) {
    fail(kBadInput, e.kind(), path.string() + ": " + e.what());
  }
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(1, "WriteError", "cannot write " + path.string());
}

std::vector<image::ImageTensor> read_dataset(const std::string& dir, std::size_t side) {
  if (!fs::is_directory(dir)) fail(kBadInput, "EmptyDataset", dir + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<image::ImageTensor> out;
  for (const auto& f : files) out.push_back(image::resize(image::to_unit_tensor(read_image(f)), side));
  if (out.empty()) fail(kBadInput, "EmptyDataset", dir + " contains no images");
  return out;
}

struct BackboneOptions {
  std::string archive;
  std::string preset = "tiny";
};

void add_backbone_options(CLI::App* cmd, BackboneOptions& b) {
  cmd->add_option("--backbone", b.archive, "Backbone weight archive (default: seeded random tiny backbone)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--backbone-preset", b.preset, "Layer layout of the backbone archive")
      ->check(CLI::IsMember({"tiny", "vgg19"}));
}

engine::Models load(const BackboneOptions& b, std::uint64_t seed) {
  engine::EngineConfig cfg;
  cfg.backbone_archive = b.archive;
  cfg.backbone_preset = b.preset;
  cfg.model_seed = seed;
  cfg.checkpoint_loader = [](const std::string& path) { return load_archive(path); };
  return engine::load_models(cfg);
}

// ------------------------------------------------------------------ stylize

struct StylizeArgs {
  std::string model, content, style, out, checkpoint;
  std::optional<std::size_t> iterations, size;
  std::optional<double> strength, style_weight;
  std::uint64_t seed = 0;
  BackboneOptions backbone;
};

int stylize(const StylizeArgs& a) {
  const auto kind = *engine::parse_model(a.model);
  json params = json::object();
  if (kind == engine::ModelKind::gatys) {
    if (a.iterations) params["iterations"] = *a.iterations;
    if (a.style_weight) params["style_weight"] = *a.style_weight;
    params["seed"] = a.seed;
  } else if (a.iterations || a.style_weight) {
    fail(kBadFlags, "InvalidParams", "--iterations and --style-weight apply to gatys only");
  }
  if (a.strength) {
    if (kind != engine::ModelKind::ast) fail(kBadFlags, "InvalidParams", "--strength applies to ast only");
    params["strength"] = *a.strength;
  }
  if (!a.checkpoint.empty()) {
    if (kind == engine::ModelKind::gatys) fail(kBadFlags, "InvalidParams", "gatys takes no checkpoint");
    params["checkpoint"] = a.checkpoint;
  }
  if (a.size) params["size"] = *a.size;
  if (kind != engine::ModelKind::cyclegan && a.style.empty())
    fail(kBadFlags, "InvalidParams", "--style is required for model " + a.model);

  const auto content = read_image(a.content);
  std::optional<image::RawImage> style;
  if (!a.style.empty()) style = read_image(a.style);
  const auto models = load(a.backbone, a.seed);
  const auto side = std::max(content.width, content.height);
  auto r = engine::run(models, kind, content, style ? &*style : nullptr, params, side);
  write_file(a.out, image::encode_image(r.image, image::Format::png));
  r.info["out"] = a.out;
  std::cout << r.info.dump() << std::endl;
  return 0;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string model, data_x, data_y, out;
  std::size_t steps = 200;
  std::size_t size = 32;
  std::optional<double> step_size;
  std::uint64_t seed = 0;
  BackboneOptions backbone;
};

int train(const TrainArgs& a) {
  if (a.data_y.empty()) fail(kBadFlags, "InvalidParams", "--data-y is required for model " + a.model);
  if (a.size < 16 || a.size % 4) fail(kBadFlags, "InvalidParams", "--size must be >= 16 and a multiple of 4");
  const auto X = read_dataset(a.data_x, a.size);
  const auto Y = read_dataset(a.data_y, a.size);

  WeightArchive ckpt;
  if (a.model == "ast") {
    const auto models = load(a.backbone, a.seed);
    ast::AstTrainConfig cfg;
    cfg.steps = a.steps;
    cfg.seed = a.seed;
    if (a.step_size) cfg.step_size = *a.step_size;
    const auto r = ast::train_ast(models.predictor, models.transfer, X, Y, models.backbone, cfg);
    for (std::size_t i = 0; i < r.trace.size(); ++i)
      std::cout << json{{"step", i}, {"content", r.trace[i].content}, {"style", r.trace[i].style},
                        {"total", r.trace[i].total}}
                       .dump()
                << '\n';
    ckpt = ast::to_archive(r.predictor, r.net);
  } else {
    cyclegan::CycleGanConfig cfg;
    cfg.steps = a.steps;
    cfg.seed = a.seed;
    cfg.image_side = a.size;
    if (a.step_size) cfg.step_size = *a.step_size;
    const auto r = cyclegan::train_cyclegan<float>(X, Y, cfg);
    for (std::size_t i = 0; i < r.report.size(); ++i) {
      const auto& s = r.report[i];
      std::cout << json{{"step", i},         {"adv_G", s.adv_G},   {"adv_F", s.adv_F}, {"disc_X", s.disc_X},
                        {"disc_Y", s.disc_Y}, {"cycle", s.cycle}, {"total", s.total}}
                       .dump()
                << '\n';
    }
    ckpt = cyclegan::to_archive(r.models.G, r.models.F);
  }
  save_archive(ckpt, a.out);
  std::cout << json{{"checkpoint", a.out}, {"tensors", ckpt.size()}}.dump() << std::endl;
  return 0;
}

// ------------------------------------------------------------------ serve

struct ServeArgs {
  std::optional<int> port;
  std::optional<std::size_t> workers;
  std::string host, static_dir, checkpoint_dir;
  std::uint64_t seed = 0;
  BackboneOptions backbone;
};

int serve(const ServeArgs& a) {
  service::ServiceConfig cfg;
  try {
    cfg = service::ServiceConfig::from_env();
  } catch (const Error& e) {
    fail(kBadFlags, e.kind(), e.what());
  }
  if (a.port) cfg.port = *a.port;
  if (a.workers) cfg.worker_count = *a.workers;
  if (!a.host.empty()) cfg.host = a.host;
  if (!a.static_dir.empty()) cfg.static_dir = a.static_dir;
  if (!a.checkpoint_dir.empty()) cfg.checkpoint_dir = a.checkpoint_dir;
  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(kBadFlags, e.kind(), e.what());
  }

  engine::EngineConfig ecfg;
  ecfg.backbone_archive = a.backbone.archive;
  ecfg.backbone_preset = a.backbone.preset;
  ecfg.model_seed = a.seed;
  if (!cfg.checkpoint_dir.empty()) ecfg.checkpoint_loader = engine::directory_checkpoints(cfg.checkpoint_dir);

  // Signals are taken synchronously by a dedicated thread; every other
  // thread inherits the blocked mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  service::Service svc(cfg, engine::load_models(ecfg), service::ModelRegistry::defaults());
  if (!svc.bind(cfg.host, cfg.port)) {
    svc.stop();
    fail(kPortInUse, "PortInUse", "cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
  }
  std::cout << json{{"listening", cfg.host}, {"port", svc.bound_port()}, {"workers", cfg.worker_count}}.dump()
            << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    svc.stop();
  });
  svc.listen();
  // listen() only returns once stop() has run, or on a listener failure.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  std::cout << json{{"stopped", true}}.dump() << std::endl;
  return 0;
}

int models_cmd() {
  std::cout << service::ModelRegistry::defaults().to_json().dump(2) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural style transfer engine: Gatys optimization, arbitrary style transfer and CycleGAN"};
  app.require_subcommand(1);

  StylizeArgs st;
  auto* c_st = app.add_subcommand("stylize", "Stylize one content image");
  c_st->add_option("--model", st.model)->required()->check(CLI::IsMember({"gatys", "ast", "cyclegan"}));
  c_st->add_option("--content", st.content, "Content image (PNG or JPEG)")->required();
  c_st->add_option("--style", st.style, "Style image (gatys, ast)");
  c_st->add_option("--out", st.out, "Output PNG path")->required();
  c_st->add_option("--iterations", st.iterations, "Gatys gradient steps")->check(CLI::PositiveNumber);
  c_st->add_option("--strength", st.strength, "AST stylization strength in [0,1]")->check(CLI::Range(0.0, 1.0));
  c_st->add_option("--style-weight", st.style_weight, "Gatys style weight")->check(CLI::NonNegativeNumber);
  c_st->add_option("--checkpoint", st.checkpoint, "Trained weight archive (ast, cyclegan)")
      ->check(CLI::ExistingFile);
  c_st->add_option("--seed", st.seed, "Random seed");
  c_st->add_option("--size", st.size, "Working image side in pixels");
  add_backbone_options(c_st, st.backbone);

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train an ast or cyclegan checkpoint");
  c_tr->add_option("--model", tr.model)->required()->check(CLI::IsMember({"ast", "cyclegan"}));
  c_tr->add_option("--data-x", tr.data_x, "Content images (ast) or domain X (cyclegan)")->required();
  c_tr->add_option("--data-y", tr.data_y, "Style images (ast) or domain Y (cyclegan)");
  c_tr->add_option("--steps", tr.steps, "Optimizer steps");
  c_tr->add_option("--out", tr.out, "Checkpoint path")->required();
  c_tr->add_option("--seed", tr.seed, "Random seed");
  c_tr->add_option("--size", tr.size, "Training image side in pixels");
  c_tr->add_option("--step-size", tr.step_size, "Optimizer learning rate")->check(CLI::PositiveNumber);
  add_backbone_options(c_tr, tr.backbone);

  ServeArgs sv;
  auto* c_sv = app.add_subcommand("serve", "Run the HTTP transfer service");
  c_sv->add_option("--port", sv.port, "Listen port (0 picks a free one)")->check(CLI::Range(0, 65535));
  c_sv->add_option("--workers", sv.workers, "Worker threads")->check(CLI::PositiveNumber);
  c_sv->add_option("--host", sv.host, "Listen address");
  c_sv->add_option("--static-dir", sv.static_dir, "Directory served at /");
  c_sv->add_option("--checkpoint-dir", sv.checkpoint_dir, "Directory of <name>.zip checkpoints");
  c_sv->add_option("--seed", sv.seed, "Seed for default model weights");
  add_backbone_options(c_sv, sv.backbone);

  auto* c_models = app.add_subcommand("models", "List the available models");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    auto* failing = c_st->parsed() ? c_st : c_tr->parsed() ? c_tr : c_sv->parsed() ? c_sv : &app;
    std::cerr << failing->help();
    return report({kBadFlags, "UsageError", e.what()});
  }

  try {
    if (c_st->parsed()) return stylize(st);
    if (c_tr->parsed()) return train(tr);
    if (c_sv->parsed()) return serve(sv);
    if (c_models->parsed()) return models_cmd();
    return 1;
  } catch (const Exit& e) {
    return report(e);
  } catch (const Error& e) {
    return report({exit_code_for(e), e.kind(), e.what()});
  } catch (const std::exception& e) {
    return report({1, "InternalError", e.what()});
  }
}
