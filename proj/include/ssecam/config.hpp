#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssecam/cam.hpp"
#include "ssecam/model.hpp"
#include "ssecam/optim.hpp"
#include "ssecam/scenes.hpp"
#include "ssecam/training.hpp"

namespace ssecam {

/// Everything a run needs. Serialized as one JSON document; missing keys take
/// the defaults below, unknown keys are a ConfigError.
struct ExperimentConfig {
  SceneConfig scene;
  BackboneConfig backbone;
  TrainConfig train;  // train.seed and train.threads are taken from seeds/threads
  AugmentConfig augment;
  BackgroundConfig background;
  std::vector<double> test_scales{0.5, 1.0, 1.5};
  bool flip = true;
  bool filter_labels = true;  // restrict pseudo labels to the image-level label
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string out_dir = "out";
  int threads = 1;

  void validate() const;
};

// nlohmann adapters. from_json rejects unknown keys and wrong types.
void to_json(nlohmann::json& j, const SceneConfig& c);
void from_json(const nlohmann::json& j, SceneConfig& c);
void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);
void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);  // without seed and threads
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const AugmentConfig& c);
void from_json(const nlohmann::json& j, AugmentConfig& c);
void to_json(nlohmann::json& j, const BackgroundConfig& c);
void from_json(const nlohmann::json& j, BackgroundConfig& c);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Parses and validates. Throws ConfigError.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc);

/// Reads a JSON file (IoError if unreadable, ConfigError if invalid). An
/// empty path yields the defaults.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Applies "key=value" to a config document. `key` is a dotted path
/// ("train.eta") or a leaf name that is unique across sections ("eta").
/// `rescale_range=[a,b]` sets augment.rescale_min/max. The value is parsed as
/// JSON, falling back to a plain string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Defaults-applied config with overrides, validated.
ExperimentConfig resolve_config(const std::filesystem::path& path,
                                const std::vector<std::string>& overrides);

/// Writes <dir>/config.json (2-space indented, keys sorted).
void write_resolved_config(const ExperimentConfig& config, const std::filesystem::path& dir);

}  // namespace ssecam
