#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssecam/ops.hpp"
#include "ssecam/tensor.hpp"

namespace ssecam {

/// Layout of the fully-convolutional CAM backbone.
///
/// The image is first standardised to (x - input_mean) / input_std. Each
/// entry of `widths` is a 3x3 conv followed by ReLU. Layers listed in
/// `stride2_layers` downsample by two; layers in `dilated_layers` use
/// dilation 2 (padding 2). A 1x1 classifier maps the last width to
/// `num_fg_classes` raw activation maps.
struct BackboneConfig {
  int in_channels = 3;
  std::vector<int> widths{16, 32, 32, 64, 64, 64};
  int num_fg_classes = 5;
  std::vector<int> stride2_layers{1, 3};
  std::vector<int> dilated_layers{5};
  double input_mean = 0.5;
  double input_std = 0.25;

  static constexpr int kOutputStride = 4;

  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

template <typename T>
struct ConvLayer {
  std::string name;
  Tensor<T> weight;  // [Cout, Cin, k, k]
  Tensor<T> bias;    // [1, Cout, 1, 1]
  ops::Conv2dParams conv;
  bool relu = true;
};

/// The trainable parameters. The vector order is the canonical parameter
/// order used by the optimizer and the checkpoint format.
template <typename T>
struct ModelParams {
  BackboneConfig config;
  std::vector<ConvLayer<T>> layers;

  /// Weight and bias handles in canonical order (shared storage).
  std::vector<Tensor<T>> tensors() const;
  std::vector<std::string> tensor_names() const;
  std::size_t parameter_count() const;
  void set_requires_grad(bool on);
  void zero_grad();
};

/// Number of scalar parameters implied by a config.
std::size_t parameter_count(const BackboneConfig& config);

/// He-normal weights (variance 2/fan_in), zero biases; deterministic in seed.
template <typename T>
ModelParams<T> init_params(const BackboneConfig& config, std::uint64_t seed);

/// image [N, in_channels, H, W] with H and W divisible by 4
/// -> raw class activation maps [N, num_fg_classes, H/4, W/4].
template <typename T>
Tensor<T> forward_cam(const ModelParams<T>& params, const Tensor<T>& image,
                      Tape<T>* tape = nullptr);

/// global_avg_pool(forward_cam(...)) as [N, num_fg_classes, 1, 1].
template <typename T>
Tensor<T> forward_logits(const ModelParams<T>& params, const Tensor<T>& image,
                         Tape<T>* tape = nullptr);

/// Deep copy with element conversion (e.g. float params to double for checks).
template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& params) {
  ModelParams<To> out;
  out.config = params.config;
  for (const ConvLayer<From>& l : params.layers) {
    out.layers.push_back(
        ConvLayer<To>{l.name, cast<To>(l.weight), cast<To>(l.bias), l.conv, l.relu});
  }
  return out;
}

extern template struct ModelParams<float>;
extern template struct ModelParams<double>;

}  // namespace ssecam
