#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ssecam/label_map.hpp"
#include "ssecam/model.hpp"
#include "ssecam/tensor.hpp"

namespace ssecam {

/// Raw activation maps for one image at one test scale.
struct CamStack {
  Tensor<float> maps;  // [1, K, h, w]
  std::string image_id;
  double scale = 1.0;
  bool flipped = false;
};

struct BackgroundConfig {
  double alpha = 0.2;     // constant background score
  double epsilon = 1e-5;  // guards the per-class normaliser

  void validate() const;
  bool operator==(const BackgroundConfig&) const = default;
};

/// C x h x w scores; channel 0 is the background plane.
struct ScoreMap {
  Tensor<float> scores;  // [1, C, h, w]
};

/// Input side length at a test scale: round(side * scale) raised to a
/// multiple of 4. Throws std::invalid_argument if the result is below 8.
int scaled_input_size(int side, double scale);

/// Resize by `scale`, optionally mirror, run the backbone, and mirror the
/// CAM back so it lives in the unflipped frame.
CamStack infer_cam(const ModelParams<float>& params, const Tensor<float>& image, double scale,
                   bool flip, const std::string& image_id = {});

/// M_c = ReLU(cam_c - eps) / (max ReLU(cam_c) + eps) per foreground class,
/// background plane = alpha. Classes missing from `present` (a multi-hot
/// foreground label) score 0 everywhere.
ScoreMap score_map(const CamStack& cam, const BackgroundConfig& config,
                   const std::optional<std::vector<std::uint8_t>>& present = std::nullopt);

/// Bilinear upsampling of every score channel, then per-pixel argmax with
/// ties going to the lower class index.
LabelMap pseudo_label(const ScoreMap& score, int out_h, int out_w);

/// Mean of the raw CAMs over (scale, flip) variants, each resized to the
/// scale-1 CAM grid.
CamStack aggregate_cams(const std::vector<CamStack>& cams, int grid_h, int grid_w);

/// Multi-scale (and optionally flipped) test-time aggregation followed by a
/// single score_map.
ScoreMap multiscale_flip_aggregate(const ModelParams<float>& params, const Tensor<float>& image,
                                   const std::vector<double>& scales, bool use_flip,
                                   const BackgroundConfig& config,
                                   const std::optional<std::vector<std::uint8_t>>& present =
                                       std::nullopt);

struct GapResult {
  double gap = 0.0;
  bool degenerate = false;  // all-zero scale-1 CAM; gap reported as 0
};

/// MSE between the scale-1 CAM warped onto the grid of the CAM at `scale`
/// and that CAM, divided by the mean square of the scale-1 CAM.
GapResult equivariance_gap(const ModelParams<float>& params, const Tensor<float>& image,
                           double scale);

}  // namespace ssecam
