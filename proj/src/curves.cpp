#include "ssecam/curves.hpp"

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <stdexcept>

#include "ssecam/parallel.hpp"

namespace ssecam {

std::string scale_label(double scale) {
  char buf[32];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, scale);
    if (std::strtod(buf, nullptr) == scale) break;
  }
  return buf;
}

std::vector<CurveRow> per_scale_curves(const ModelParams<float>& params,
                                       const std::vector<SceneSample>& samples,
                                       const CurveOptions& options,
                                       std::vector<LabelMap>* ms_labels) {
  if (samples.empty()) throw std::invalid_argument("per_scale_curves: empty dataset");
  if (options.scales.empty()) throw std::invalid_argument("per_scale_curves: empty scale list");
  options.background.validate();

  const int rows = static_cast<int>(options.scales.size()) + 1;
  const int classes = params.config.num_fg_classes + 1;
  const int n = static_cast<int>(samples.size());
  std::vector<std::vector<ConfusionCounts>> per_image(n);
  std::vector<LabelMap> labels(n);

  parallel_for(n, options.threads, [&](int i) {
    const SceneSample& s = samples[i];
    std::optional<std::vector<std::uint8_t>> present;
    if (options.filter_labels) present = s.label;
    const int out_h = s.mask.height;
    const int out_w = s.mask.width;

    std::vector<CamStack> all;
    std::vector<ConfusionCounts> counts(rows, ConfusionCounts(classes));
    for (std::size_t k = 0; k < options.scales.size(); ++k) {
      std::vector<CamStack> variants{infer_cam(params, s.image, options.scales[k], false, s.id)};
      if (options.flip) variants.push_back(infer_cam(params, s.image, options.scales[k], true, s.id));
      const Shape& g = variants.front().maps.shape();
      const ScoreMap score =
          score_map(aggregate_cams(variants, g.h, g.w), options.background, present);
      accumulate_confusion(pseudo_label(score, out_h, out_w), s.mask, counts[k]);
      all.insert(all.end(), variants.begin(), variants.end());
    }
    // Same variant order and grid as multiscale_flip_aggregate.
    const int stride = BackboneConfig::kOutputStride;
    const int gh = scaled_input_size(s.image.shape().h, 1.0) / stride;
    const int gw = scaled_input_size(s.image.shape().w, 1.0) / stride;
    const ScoreMap ms = score_map(aggregate_cams(all, gh, gw), options.background, present);
    labels[i] = pseudo_label(ms, out_h, out_w);
    accumulate_confusion(labels[i], s.mask, counts[rows - 1]);
    per_image[i] = std::move(counts);
  });

  std::vector<CurveRow> out(rows);
  for (int r = 0; r < rows; ++r) {
    out[r].counts = ConfusionCounts(classes);
    for (int i = 0; i < n; ++i) out[r].counts += per_image[i][r];
    out[r].metrics = make_report(out[r].counts);
    if (r + 1 < rows) {
      out[r].scale = options.scales[r];
      out[r].scale_label = scale_label(options.scales[r]);
    } else {
      out[r].scale_label = "MS";
    }
  }
  if (ms_labels) *ms_labels = std::move(labels);
  return out;
}

std::vector<GapRow> mean_equivariance_gaps(const ModelParams<float>& params,
                                           const std::vector<SceneSample>& samples,
                                           const std::vector<double>& scales, int threads) {
  if (samples.empty()) throw std::invalid_argument("mean_equivariance_gaps: empty dataset");
  std::vector<GapRow> out;
  for (double scale : scales) {
    const int n = static_cast<int>(samples.size());
    std::vector<GapResult> gaps(n);
    parallel_for(n, threads, [&](int i) { gaps[i] = equivariance_gap(params, samples[i].image, scale); });
    GapRow row{scale, 0.0, n, 0};
    for (const GapResult& g : gaps) {
      row.mean_gap += g.gap;
      row.degenerate += g.degenerate ? 1 : 0;
    }
    row.mean_gap /= n;
    out.push_back(row);
  }
  return out;
}

}  // namespace ssecam
