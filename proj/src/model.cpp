#include "ssecam/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace ssecam {
namespace {

bool contains(const std::vector<int>& v, int x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

void BackboneConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("backbone.in_channels must be positive");
  if (widths.empty()) throw std::invalid_argument("backbone.widths must be non-empty");
  for (int w : widths) {
    if (w < 1) throw std::invalid_argument("backbone.widths entries must be positive");
  }
  if (!(input_std > 0.0) || !std::isfinite(input_mean)) {
    throw std::invalid_argument("backbone.input_std must be positive and input_mean finite");
  }
  if (num_fg_classes < 1) throw std::invalid_argument("backbone.num_fg_classes must be positive");
  const int layers = static_cast<int>(widths.size());
  if (stride2_layers.size() != 2) {
    throw std::invalid_argument("backbone needs exactly two stride-2 layers (output stride 4)");
  }
  for (int i : stride2_layers) {
    if (i < 0 || i >= layers) throw std::invalid_argument("backbone.stride2_layers out of range");
  }
  if (stride2_layers[0] == stride2_layers[1]) {
    throw std::invalid_argument("backbone.stride2_layers must be distinct");
  }
  for (int i : dilated_layers) {
    if (i < 0 || i >= layers) throw std::invalid_argument("backbone.dilated_layers out of range");
    if (contains(stride2_layers, i)) {
      throw std::invalid_argument("a layer cannot be both strided and dilated");
    }
  }
}

std::size_t parameter_count(const BackboneConfig& config) {
  std::size_t total = 0;
  int cin = config.in_channels;
  for (int w : config.widths) {
    total += static_cast<std::size_t>(w) * cin * 9 + w;
    cin = w;
  }
  total += static_cast<std::size_t>(config.num_fg_classes) * cin + config.num_fg_classes;
  return total;
}

template <typename T>
std::vector<Tensor<T>> ModelParams<T>::tensors() const {
  std::vector<Tensor<T>> out;
  for (const ConvLayer<T>& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

template <typename T>
std::vector<std::string> ModelParams<T>::tensor_names() const {
  std::vector<std::string> out;
  for (const ConvLayer<T>& l : layers) {
    out.push_back(l.name + ".weight");
    out.push_back(l.name + ".bias");
  }
  return out;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t total = 0;
  for (const ConvLayer<T>& l : layers) total += l.weight.numel() + l.bias.numel();
  return total;
}

template <typename T>
void ModelParams<T>::set_requires_grad(bool on) {
  for (ConvLayer<T>& l : layers) {
    l.weight.set_requires_grad(on);
    l.bias.set_requires_grad(on);
  }
}

template <typename T>
void ModelParams<T>::zero_grad() {
  for (ConvLayer<T>& l : layers) {
    l.weight.zero_grad();
    l.bias.zero_grad();
  }
}

template <typename T>
ModelParams<T> init_params(const BackboneConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams<T> params;
  params.config = config;

  auto make_layer = [&](std::string name, int cout, int cin, int k, ops::Conv2dParams conv,
                        bool relu) {
    const int fan_in = cin * k * k;
    double sd = std::sqrt(2.0 / fan_in);
    std::normal_distribution<double> dist(0.0, sd);
    Tensor<T> weight(Shape{cout, cin, k, k});
    for (T& v : weight.values()) v = static_cast<T>(dist(rng));
    params.layers.push_back(
        ConvLayer<T>{std::move(name), weight, Tensor<T>(Shape{1, cout, 1, 1}), conv, relu});
  };

  int cin = config.in_channels;
  for (std::size_t i = 0; i < config.widths.size(); ++i) {
    const int idx = static_cast<int>(i);
    ops::Conv2dParams conv{1, 1, 1};
    if (contains(config.stride2_layers, idx)) conv.stride = 2;
    if (contains(config.dilated_layers, idx)) conv = {1, 2, 2};
    make_layer("conv" + std::to_string(i + 1), config.widths[i], cin, 3, conv, true);
    cin = config.widths[i];
  }
  make_layer("classifier", config.num_fg_classes, cin, 1, ops::Conv2dParams{1, 0, 1}, false);
  return params;
}

template <typename T>
Tensor<T> forward_cam(const ModelParams<T>& params, const Tensor<T>& image, Tape<T>* tape) {
  const Shape& s = image.shape();
  if (s.c != params.config.in_channels) {
    throw ShapeError("forward_cam: expected " + std::to_string(params.config.in_channels) +
                     " input channels, got " + std::to_string(s.c));
  }
  if (s.h % BackboneConfig::kOutputStride != 0 || s.w % BackboneConfig::kOutputStride != 0) {
    throw ShapeError("forward_cam: input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " is not divisible by the output stride 4");
  }
  const BackboneConfig& c = params.config;
  Tensor<T> x = ops::affine(image, static_cast<T>(1.0 / c.input_std),
                            static_cast<T>(-c.input_mean / c.input_std), tape);
  for (const ConvLayer<T>& l : params.layers) {
    x = ops::conv2d(x, l.weight, l.bias, l.conv, tape);
    if (l.relu) x = ops::relu(x, tape);
  }
  return x;
}

template <typename T>
Tensor<T> forward_logits(const ModelParams<T>& params, const Tensor<T>& image, Tape<T>* tape) {
  return ops::global_avg_pool(forward_cam(params, image, tape), tape);
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> init_params(const BackboneConfig&, std::uint64_t);
template ModelParams<double> init_params(const BackboneConfig&, std::uint64_t);
template Tensor<float> forward_cam(const ModelParams<float>&, const Tensor<float>&, Tape<float>*);
template Tensor<double> forward_cam(const ModelParams<double>&, const Tensor<double>&,
                                    Tape<double>*);
template Tensor<float> forward_logits(const ModelParams<float>&, const Tensor<float>&,
                                      Tape<float>*);
template Tensor<double> forward_logits(const ModelParams<double>&, const Tensor<double>&,
                                       Tape<double>*);

}  // namespace ssecam
