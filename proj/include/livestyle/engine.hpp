#pragma once

// Runs one stylization request end to end: preprocessing, dispatch to one
// of the three pipelines, and result metadata. Shared by the CLI and the
// HTTP service.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"
#include "livestyle/ast.hpp"
#include "livestyle/backbone.hpp"
#include "livestyle/cyclegan.hpp"
#include "livestyle/gatys.hpp"
#include "livestyle/image.hpp"

namespace livestyle::engine {

enum class ModelKind { gatys, ast, cyclegan };

std::optional<ModelKind> parse_model(std::string_view name);
const char* to_string(ModelKind kind);

struct EngineConfig {
  // Optional backbone weight archive; a seeded random tiny backbone is used
  // when empty.
  std::filesystem::path backbone_archive;
  std::string backbone_preset = "tiny";  // "tiny" or "vgg19"
  std::uint64_t model_seed = 0;
  // Resolves a checkpoint name to a weight archive.
  std::function<WeightArchive(const std::string&)> checkpoint_loader;
};

// Models loaded once and shared read-only between jobs.
struct Models {
  backbone::BackboneModel<float> backbone;
  std::string backbone_preset;
  ast::StylePredictor<float> predictor;
  ast::TransferNetwork<float> transfer;
  cyclegan::Generator<float> generator_xy;
  cyclegan::Generator<float> generator_yx;
  std::function<WeightArchive(const std::string&)> checkpoint_loader;
};

Models load_models(const EngineConfig& cfg);

// Looks up "<dir>/<name>.zip"; names containing path separators are rejected.
std::function<WeightArchive(const std::string&)> directory_checkpoints(std::filesystem::path dir);

nlohmann::json default_params(ModelKind kind);

// Throws InvalidParams for unknown keys, wrong types or out-of-range values.
void validate_params(ModelKind kind, const nlohmann::json& params);

struct Result {
  image::ImageTensor image;
  nlohmann::json info;
};

// Side length the inputs are resized to: the smaller content side (or the
// "size" parameter), capped at max_side and rounded down to a multiple of 4.
std::size_t working_side(const image::RawImage& content, const nlohmann::json& params, std::size_t max_side);

Result run(const Models& models, ModelKind kind, const image::RawImage& content, const image::RawImage* style,
           const nlohmann::json& params, std::size_t max_side);

nlohmann::json to_json(const gatys::LossBreakdown& lb);

}  // namespace livestyle::engine
