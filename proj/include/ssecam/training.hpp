#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ssecam/model.hpp"
#include "ssecam/optim.hpp"
#include "ssecam/scenes.hpp"
#include "ssecam/tensor.hpp"

namespace ssecam {

/// Random rescale (longest edge), pad, crop and flip for the large branch.
struct AugmentConfig {
  int rescale_min = 64;
  int rescale_max = 96;
  int crop = 64;
  double hflip_prob = 0.5;

  void validate() const;
  bool operator==(const AugmentConfig&) const = default;
};

struct TrainConfig {
  double eta = 1.0;          // weight of the scale-equivariance term
  double branch_rate = 0.3;  // downsampling rate of the second branch
  int batch_size = 8;
  int epochs = 15;
  OptimizerConfig optimizer;  // max_itr is derived from the dataset size
  std::uint64_t seed = 0;
  int threads = 1;

  void validate(const AugmentConfig& augment) const;
  bool operator==(const TrainConfig& o) const {
    return eta == o.eta && branch_rate == o.branch_rate && batch_size == o.batch_size &&
           epochs == o.epochs && optimizer.lr_init == o.optimizer.lr_init &&
           optimizer.gamma == o.optimizer.gamma && optimizer.momentum == o.optimizer.momentum &&
           optimizer.weight_decay == o.optimizer.weight_decay && seed == o.seed;
  }
};

struct TrainRecord {
  int iteration = 0;
  double lr = 0.0;
  float cls_large = 0.0f;
  float cls_small = 0.0f;
  float ser = 0.0f;
  float total = 0.0f;
};

/// Thrown when a step produces a non-finite loss; carries the failing step.
class NumericAbort : public std::runtime_error {
 public:
  NumericAbort(const std::string& what, TrainRecord record)
      : std::runtime_error(what), record_(record) {}
  const TrainRecord& record() const { return record_; }

 private:
  TrainRecord record_;
};

/// Side length of the small branch: round(crop * rate) raised to a
/// multiple of 4. Throws ConfigError if the result is below 8.
int small_branch_size(int crop, double rate);

/// One augmented crop [1, 3, crop, crop] drawn from `rng`.
Tensor<float> augment_sample(const SceneSample& sample, const AugmentConfig& config,
                             std::mt19937_64& rng);

template <typename T>
struct StepOutput {
  Tensor<T> total;  // scalar, recorded on the tape
  Tensor<T> cls_large;
  Tensor<T> cls_small;
  Tensor<T> ser;
  Tensor<T> cam_large;
  Tensor<T> cam_small;
};

/// Scale-equivariance penalty: MSE between the large-branch CAM resized to
/// the small CAM's grid and the small-branch CAM.
template <typename T>
Tensor<T> ser_loss(const Tensor<T>& cam_large, const Tensor<T>& cam_small, Tape<T>* tape);

/// Shared-weight two-branch objective for a batch of crops.
/// images [N,3,S,S]; labels [N,K,1,1] (0/1). The small branch sees the
/// images resized to small_branch_size(S, branch_rate).
/// total = (cls_large + cls_small) / 2 + eta * ser.
template <typename T>
StepOutput<T> two_branch_step(const ModelParams<T>& params, const Tensor<T>& images,
                              const Tensor<T>& labels, const TrainConfig& config,
                              Tape<T>* tape);

struct TrainResult {
  ModelParams<float> params;
  std::vector<TrainRecord> trace;
};

using StepCallback = std::function<void(const TrainRecord&)>;

/// epochs * ceil(|dataset| / batch) SGD steps with the poly schedule.
/// Sample order is reshuffled every epoch with seed + epoch.
TrainResult train(const std::vector<SceneSample>& dataset, const BackboneConfig& model_config,
                  const TrainConfig& train_config, const AugmentConfig& augment_config,
                  const StepCallback& on_step = {});

/// CSV header and row format of the loss trace.
std::string loss_csv_header();
std::string loss_csv_row(const TrainRecord& r);

struct CheckpointMeta {
  BackboneConfig backbone;
  TrainConfig train;
  AugmentConfig augment;
  std::string name;
};

struct Checkpoint {
  CheckpointMeta meta;
  ModelParams<float> params;
};

inline constexpr int kCheckpointVersion = 1;

/// Writes <dir>/manifest.json and <dir>/params.bin (little-endian float32,
/// tensors concatenated in canonical order).
void save_checkpoint(const ModelParams<float>& params, const CheckpointMeta& meta,
                     const std::filesystem::path& dir);

/// Validates the manifest completely before reading any parameters.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace ssecam
