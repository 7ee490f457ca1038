#include "livestyle/engine.hpp"

#include <chrono>
#include <map>

namespace livestyle::engine {

using nlohmann::json;

std::optional<ModelKind> parse_model(std::string_view name) {
  if (name == "gatys") return ModelKind::gatys;
  if (name == "ast") return ModelKind::ast;
  if (name == "cyclegan") return ModelKind::cyclegan;
  return std::nullopt;
}

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::gatys: return "gatys";
    case ModelKind::ast: return "ast";
    case ModelKind::cyclegan: return "cyclegan";
  }
  return "?";
}

Models load_models(const EngineConfig& cfg) {
  std::vector<backbone::LayerSpec> spec;
  if (cfg.backbone_preset == "tiny")
    spec = backbone::tiny_spec();
  else if (cfg.backbone_preset == "vgg19")
    spec = backbone::vgg19_spec();
  else
    throw InvalidParams("unknown backbone preset '" + cfg.backbone_preset + "'");
  const WeightArchive weights = cfg.backbone_archive.empty() ? backbone::random_weights(spec, cfg.model_seed)
                                                              : load_archive(cfg.backbone_archive);

  const cyclegan::CycleGanConfig cg;
  return Models{backbone::load_weights<float>(weights, spec),
                cfg.backbone_preset,
                ast::StylePredictor<float>(8, 16, 48, cfg.model_seed + 1),
                ast::TransferNetwork<float>(8, 16, cfg.model_seed + 2),
                cyclegan::Generator<float>(cg.width, cg.residual_blocks, cfg.model_seed + 3),
                cyclegan::Generator<float>(cg.width, cg.residual_blocks, cfg.model_seed + 4),
                cfg.checkpoint_loader};
}

std::function<WeightArchive(const std::string&)> directory_checkpoints(std::filesystem::path dir) {
  return [dir = std::move(dir)](const std::string& name) {
    if (name.empty() || name.find('/') != std::string::npos || name.find('\\') != std::string::npos ||
        name.find("..") != std::string::npos)
      throw InvalidParams("invalid checkpoint name '" + name + "'");
    const auto path = dir / (name + ".zip");
    if (dir.empty() || !std::filesystem::exists(path)) throw InvalidParams("unknown checkpoint '" + name + "'");
    return load_archive(path);
  };
}

json default_params(ModelKind kind) {
  switch (kind) {
    case ModelKind::gatys: {
      const gatys::GatysConfig c;
      return {{"iterations", 50},          {"content_weight", c.content_weight}, {"style_weight", c.style_weight},
              {"step_size", c.step_size},  {"momentum", c.momentum},             {"init", "content"},
              {"seed", 0}};
    }
    case ModelKind::ast: return {{"strength", 1.0}};
    case ModelKind::cyclegan: return {{"direction", "xy"}};
  }
  return json::object();
}

namespace {

enum class Kind { uint, number, string };

struct Rule {
  Kind kind;
  double lo, hi;  // numeric bounds (inclusive); hi < lo means no upper bound
  bool lo_open = false;
};

const std::map<std::string, Rule>& rules(ModelKind kind) {
  static const std::map<std::string, Rule> gatys_rules{
      {"iterations", {Kind::uint, 1, 100000}},  {"content_weight", {Kind::number, 0, -1}},
      {"style_weight", {Kind::number, 0, -1}},  {"step_size", {Kind::number, 0, -1, true}},
      {"momentum", {Kind::number, 0, 0.999}},   {"init", {Kind::string, 0, 0}},
      {"seed", {Kind::uint, 0, -1}},            {"size", {Kind::uint, 16, 4096}}};
  static const std::map<std::string, Rule> ast_rules{{"strength", {Kind::number, 0, 1}},
                                                     {"checkpoint", {Kind::string, 0, 0}},
                                                     {"seed", {Kind::uint, 0, -1}},
                                                     {"size", {Kind::uint, 16, 4096}}};
  static const std::map<std::string, Rule> cyclegan_rules{{"checkpoint", {Kind::string, 0, 0}},
                                                          {"direction", {Kind::string, 0, 0}},
                                                          {"seed", {Kind::uint, 0, -1}},
                                                          {"size", {Kind::uint, 16, 4096}}};
  switch (kind) {
    case ModelKind::gatys: return gatys_rules;
    case ModelKind::ast: return ast_rules;
    default: return cyclegan_rules;
  }
}

template <typename V>
V get_or(const json& params, const char* key, V fallback) {
  return params.contains(key) ? params.at(key).get<V>() : fallback;
}

}  // namespace

void validate_params(ModelKind kind, const json& params) {
  if (!params.is_object()) throw InvalidParams("params must be a JSON object");
  const auto& r = rules(kind);
  for (const auto& [key, value] : params.items()) {
    auto it = r.find(key);
    if (it == r.end()) throw InvalidParams("unknown parameter '" + key + "' for model " + to_string(kind));
    const Rule& rule = it->second;
    if (rule.kind == Kind::string) {
      if (!value.is_string()) throw InvalidParams("parameter '" + key + "' must be a string");
      continue;
    }
    if (rule.kind == Kind::uint && !value.is_number_unsigned() &&
        !(value.is_number_integer() && value.get<long long>() >= 0))
      throw InvalidParams("parameter '" + key + "' must be a non-negative integer");
    if (!value.is_number()) throw InvalidParams("parameter '" + key + "' must be a number");
    const double v = value.get<double>();
    if (!std::isfinite(v) || v < rule.lo || (rule.lo_open && v <= rule.lo) || (rule.hi >= rule.lo && v > rule.hi))
      throw InvalidParams("parameter '" + key + "' is out of range");
  }
  if (params.contains("init")) {
    const auto init = params.at("init").get<std::string>();
    if (init != "content" && init != "noise") throw InvalidParams("init must be \"content\" or \"noise\"");
  }
  if (params.contains("direction")) {
    const auto d = params.at("direction").get<std::string>();
    if (d != "xy" && d != "yx") throw InvalidParams("direction must be \"xy\" or \"yx\"");
  }
}

json to_json(const gatys::LossBreakdown& lb) {
  return {{"content", lb.content}, {"style", lb.style}, {"per_layer_E", lb.per_layer_E}, {"total", lb.total}};
}

std::size_t working_side(const image::RawImage& content, const json& params, std::size_t max_side) {
  std::size_t side = params.contains("size") ? params.at("size").get<std::size_t>()
                                             : std::min(content.width, content.height);
  side = std::min(side, max_side);
  side -= side % 4;
  if (side < 16) throw InvalidParams("working image side " + std::to_string(side) + " is below 16 pixels");
  return side;
}

Result run(const Models& models, ModelKind kind, const image::RawImage& content, const image::RawImage* style,
           const json& params, std::size_t max_side) {
  validate_params(kind, params);
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t side = working_side(content, params, max_side);
  const auto content_t = image::resize(image::to_unit_tensor(content), side);
  if (kind != ModelKind::cyclegan && !style) throw InvalidParams(std::string(to_string(kind)) + " needs a style image");

  auto load_checkpoint = [&]() -> std::optional<WeightArchive> {
    if (!params.contains("checkpoint")) return std::nullopt;
    if (!models.checkpoint_loader) throw InvalidParams("checkpoints are not available");
    return models.checkpoint_loader(params.at("checkpoint").get<std::string>());
  };

  Result result;
  result.info = {{"model", to_string(kind)}, {"width", side}, {"height", side}};
  switch (kind) {
    case ModelKind::gatys: {
      auto cfg = models.backbone_preset == "vgg19" ? gatys::GatysConfig::vgg19_defaults()
                                                    : gatys::GatysConfig::tiny_defaults();
      cfg.iterations = get_or<std::size_t>(params, "iterations", 50);
      cfg.content_weight = get_or<double>(params, "content_weight", cfg.content_weight);
      cfg.style_weight = get_or<double>(params, "style_weight", cfg.style_weight);
      cfg.step_size = get_or<double>(params, "step_size", cfg.step_size);
      cfg.momentum = get_or<double>(params, "momentum", cfg.momentum);
      cfg.init = get_or<std::string>(params, "init", "content") == "noise" ? gatys::Init::noise
                                                                            : gatys::Init::content_copy;
      cfg.seed = get_or<std::uint64_t>(params, "seed", 0);
      const auto& spec = models.backbone.input_spec();
      const auto style_t = image::resize(image::to_unit_tensor(*style), side);
      auto [out, trace] =
          gatys::run_gatys(image::normalize(content_t, spec), image::normalize(style_t, spec), models.backbone, cfg);
      result.image = std::move(out);
      result.info["iterations"] = cfg.iterations;
      result.info["initial_loss"] = to_json(trace.losses.front());
      result.info["final_loss"] = to_json(trace.losses.back());
      break;
    }
    case ModelKind::ast: {
      const auto ckpt = load_checkpoint();
      const auto predictor = ckpt ? ast::StylePredictor<float>::from_archive(*ckpt) : models.predictor;
      const auto transfer = ckpt ? ast::TransferNetwork<float>::from_archive(*ckpt) : models.transfer;
      const auto style_t = image::resize(image::to_unit_tensor(*style), side);
      const double strength = get_or<double>(params, "strength", 1.0);
      const auto emb = ast::strength_blend(ast::predict_style(predictor, content_t),
                                           ast::predict_style(predictor, style_t), strength);
      result.image = ast::stylize(transfer, content_t, emb);
      result.info["strength"] = strength;
      break;
    }
    case ModelKind::cyclegan: {
      const auto ckpt = load_checkpoint();
      const bool reverse = get_or<std::string>(params, "direction", "xy") == "yx";
      const std::string prefix = reverse ? "F." : "G.";
      const auto gen = ckpt ? cyclegan::Generator<float>::from_archive(*ckpt, prefix)
                            : (reverse ? models.generator_yx : models.generator_xy);
      result.image = cyclegan::translate(gen, content_t);
      result.info["direction"] = reverse ? "yx" : "xy";
      break;
    }
  }
  result.info["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace livestyle::engine
