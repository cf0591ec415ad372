#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssecam/label_map.hpp"
#include "ssecam/tensor.hpp"

namespace ssecam {

/// Class names in label-index order. Index 0 is background; the order is
/// part of the on-disk format.
const std::vector<std::string>& class_catalog();
inline int num_classes() { return static_cast<int>(class_catalog().size()); }
inline int num_fg_classes() { return num_classes() - 1; }

struct SceneConfig {
  int canvas = 96;
  int objects_min = 1;
  int objects_max = 3;
  double size_min = 0.1;  // object extent as a fraction of the canvas
  double size_max = 0.7;
  double color_jitter = 0.1;
  double noise_sigma = 0.05;
  int train_count = 200;
  int eval_count = 50;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SceneConfig&) const = default;
};

enum class Split { kTrain, kEval };
const char* split_name(Split split);

struct SceneSample {
  std::string id;
  Tensor<float> image;              // [1, 3, canvas, canvas], values in [0, 1]
  std::vector<std::uint8_t> label;  // multi-hot over foreground classes
  LabelMap mask;                    // ground truth, evaluation only
  std::vector<double> object_sizes; // extent / canvas, per drawn object
};

/// Fully determined by (config.seed, split, index).
SceneSample generate_scene(const SceneConfig& config, int index, Split split = Split::kTrain);

/// label[c] = 1 iff class c + 1 covers at least one mask pixel.
std::vector<std::uint8_t> labels_from_mask(const LabelMap& mask, int num_fg);

struct DatasetEntry {
  std::string image;
  std::string mask;
  std::vector<std::uint8_t> label;
};

struct DatasetIndex {
  static constexpr int kVersion = 1;

  std::filesystem::path dir;
  std::vector<std::string> classes;
  int canvas = 0;
  std::uint64_t seed = 0;
  Split split = Split::kTrain;
  SceneConfig generator;
  std::vector<DatasetEntry> samples;

  int size() const { return static_cast<int>(samples.size()); }
};

/// Writes images (P6), masks (P5) and index.json for one split. Refuses a
/// non-empty directory unless `force`, in which case it is cleared first.
DatasetIndex generate_dataset(const SceneConfig& config, Split split,
                              const std::filesystem::path& out_dir, bool force = false);

DatasetIndex load_index(const std::filesystem::path& dir);
SceneSample load_sample(const DatasetIndex& index, int i);
std::vector<SceneSample> load_samples(const DatasetIndex& index);

/// Fraction of samples whose label contains each foreground class.
std::vector<double> class_frequencies(const std::vector<SceneSample>& samples);

}  // namespace ssecam
