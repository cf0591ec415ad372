#include "ssecam/cam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ssecam/errors.hpp"
#include "ssecam/ops.hpp"

namespace ssecam {
namespace {

// Largest float strictly below 1; keeps normalised scores inside [0, 1).
constexpr float kBelowOne = 1.0f - 0x1p-24f;

}  // namespace

void BackgroundConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("background.alpha must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("background.epsilon must be positive");
}

int scaled_input_size(int side, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("test scale must be positive");
  const long rounded = std::lround(side * scale);
  const int size = static_cast<int>((rounded + 3) / 4 * 4);
  if (size < 8) {
    throw std::invalid_argument("scale " + std::to_string(scale) + " shrinks a " +
                                std::to_string(side) + " px side below 8 px");
  }
  return size;
}

CamStack infer_cam(const ModelParams<float>& params, const Tensor<float>& image, double scale,
                   bool flip, const std::string& image_id) {
  const Shape& s = image.shape();
  if (s.n != 1) throw ShapeError("infer_cam expects a single image, got batch " + s.str());
  const int h = scaled_input_size(s.h, scale);
  const int w = scaled_input_size(s.w, scale);
  Tensor<float> x = (h == s.h && w == s.w) ? image : ops::bilinear_resize<float>(image, h, w);
  if (flip) x = ops::horizontal_flip<float>(x);
  Tensor<float> cam = forward_cam(params, x);
  if (flip) cam = ops::horizontal_flip<float>(cam);
  return CamStack{cam, image_id, scale, flip};
}

ScoreMap score_map(const CamStack& cam, const BackgroundConfig& config,
                   const std::optional<std::vector<std::uint8_t>>& present) {
  const Shape& s = cam.maps.shape();
  if (present && static_cast<int>(present->size()) != s.c) {
    throw ShapeError("score_map: label length does not match the CAM channel count");
  }
  cam.maps.ensure_finite("score_map");
  ScoreMap out{Tensor<float>(Shape{1, s.c + 1, s.h, s.w})};
  const std::size_t plane = s.plane();
  std::fill(out.scores.data(), out.scores.data() + plane, static_cast<float>(config.alpha));
  for (int c = 0; c < s.c; ++c) {
    float* dst = out.scores.data() + (c + 1) * plane;
    if (present && (*present)[c] == 0) continue;  // already zero
    const float* src = cam.maps.data() + c * plane;
    double peak = 0.0;
    for (std::size_t i = 0; i < plane; ++i) peak = std::max(peak, static_cast<double>(src[i]));
    const double denom = peak + config.epsilon;
    for (std::size_t i = 0; i < plane; ++i) {
      const double num = std::max(0.0, static_cast<double>(src[i]) - config.epsilon);
      dst[i] = std::min(static_cast<float>(num / denom), kBelowOne);
    }
  }
  return out;
}

LabelMap pseudo_label(const ScoreMap& score, int out_h, int out_w) {
  const Tensor<float> up = ops::bilinear_resize<float>(score.scores, out_h, out_w);
  const int channels = up.shape().c;
  const std::size_t plane = up.shape().plane();
  LabelMap labels(out_h, out_w, 0);
  for (std::size_t i = 0; i < plane; ++i) {
    float best = up[i];
    int arg = 0;
    for (int c = 1; c < channels; ++c) {
      const float v = up[c * plane + i];
      if (v > best) {
        best = v;
        arg = c;
      }
    }
    labels.labels[i] = static_cast<std::uint8_t>(arg);
  }
  return labels;
}

CamStack aggregate_cams(const std::vector<CamStack>& cams, int grid_h, int grid_w) {
  if (cams.empty()) throw std::invalid_argument("aggregate_cams: no CAMs to aggregate");
  const int channels = cams.front().maps.shape().c;
  const Shape grid{1, channels, grid_h, grid_w};
  std::vector<double> acc(grid.numel(), 0.0);
  for (const CamStack& cam : cams) {
    const Shape& s = cam.maps.shape();
    const Tensor<float> r = (s.h == grid_h && s.w == grid_w)
                                ? cam.maps
                                : ops::bilinear_resize<float>(cam.maps, grid_h, grid_w);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += r[i];
  }
  CamStack out{Tensor<float>(grid), cams.front().image_id, 0.0, false};
  const double n = static_cast<double>(cams.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out.maps[i] = static_cast<float>(acc[i] / n);
  return out;
}

ScoreMap multiscale_flip_aggregate(const ModelParams<float>& params, const Tensor<float>& image,
                                   const std::vector<double>& scales, bool use_flip,
                                   const BackgroundConfig& config,
                                   const std::optional<std::vector<std::uint8_t>>& present) {
  if (scales.empty()) throw std::invalid_argument("multiscale_flip_aggregate: empty scale list");
  std::vector<CamStack> cams;
  for (double scale : scales) {
    cams.push_back(infer_cam(params, image, scale, false));
    if (use_flip) cams.push_back(infer_cam(params, image, scale, true));
  }
  const int stride = BackboneConfig::kOutputStride;
  const int gh = scaled_input_size(image.shape().h, 1.0) / stride;
  const int gw = scaled_input_size(image.shape().w, 1.0) / stride;
  return score_map(aggregate_cams(cams, gh, gw), config, present);
}

GapResult equivariance_gap(const ModelParams<float>& params, const Tensor<float>& image,
                           double scale) {
  const CamStack base = infer_cam(params, image, 1.0, false);
  const CamStack scaled = infer_cam(params, image, scale, false);
  const Shape& s = scaled.maps.shape();
  const Tensor<float> warped = ops::bilinear_resize<float>(base.maps, s.h, s.w);

  double energy = 0.0;
  for (std::size_t i = 0; i < base.maps.numel(); ++i) {
    energy += static_cast<double>(base.maps[i]) * base.maps[i];
  }
  energy /= static_cast<double>(base.maps.numel());
  if (energy == 0.0) return GapResult{0.0, true};

  double mse = 0.0;
  for (std::size_t i = 0; i < warped.numel(); ++i) {
    const double d = static_cast<double>(warped[i]) - scaled.maps[i];
    mse += d * d;
  }
  mse /= static_cast<double>(warped.numel());
  return GapResult{mse / energy, false};
}

}  // namespace ssecam
