#pragma once

#include <string>
#include <vector>

#include "ssecam/cam.hpp"
#include "ssecam/metrics.hpp"
#include "ssecam/scenes.hpp"

namespace ssecam {

struct CurveOptions {
  std::vector<double> scales{0.5, 1.0, 1.5};
  bool flip = true;  // applies to the single-scale rows as well as MS
  BackgroundConfig background;
  bool filter_labels = true;
  int threads = 1;
};

struct CurveRow {
  std::string scale_label;  // "0.5", "1", ... or "MS"
  double scale = 0.0;       // 0 for the MS row
  ConfusionCounts counts;
  MetricsReport metrics;
};

/// One row per test scale plus a final "MS" row for the aggregate over all
/// scales. Counts are summed over images in dataset order. If `ms_labels`
/// is given it receives the MS pseudo label of every sample.
std::vector<CurveRow> per_scale_curves(const ModelParams<float>& params,
                                       const std::vector<SceneSample>& samples,
                                       const CurveOptions& options,
                                       std::vector<LabelMap>* ms_labels = nullptr);

/// Shortest decimal that round-trips the scale ("0.5", "1", "1.5").
std::string scale_label(double scale);

struct GapRow {
  double scale = 0.0;
  double mean_gap = 0.0;
  int images = 0;
  int degenerate = 0;  // images with an all-zero scale-1 CAM (gap counted as 0)
};

/// Mean equivariance_gap over samples, one row per scale.
std::vector<GapRow> mean_equivariance_gaps(const ModelParams<float>& params,
                                           const std::vector<SceneSample>& samples,
                                           const std::vector<double>& scales, int threads = 1);

}  // namespace ssecam
