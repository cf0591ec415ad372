#pragma once

#include <span>

#include "ssecam/tensor.hpp"

/// Differentiable operations. Every op takes an optional tape; when the tape
/// is non-null and some input requires a gradient, the op records its
/// backward rule. Passing nullptr runs the op in inference mode.
namespace ssecam::ops {

struct Conv2dParams {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

/// Output extent of a convolution along one axis; throws ShapeError if < 1.
int conv_output_size(int in, int kernel, const Conv2dParams& p);

/// input [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [1,Cout,1,1].
/// Zero padding outside the input.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv2dParams& params, Tape<T>* tape = nullptr);

/// Elementwise x * scale + shift with fixed (non-trainable) constants.
template <typename T>
Tensor<T> affine(const Tensor<T>& input, T scale, T shift, Tape<T>* tape = nullptr);

template <typename T>
Tensor<T> relu(const Tensor<T>& input, Tape<T>* tape = nullptr);

/// Bilinear resampling with half-pixel centers and edge clamping.
/// Linear in the input; the backward rule applies the exact transpose.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& input, int out_h, int out_w,
                          Tape<T>* tape = nullptr);

template <typename T>
Tensor<T> horizontal_flip(const Tensor<T>& input, Tape<T>* tape = nullptr);

/// [N,C,H,W] -> [N,C,1,1] spatial mean.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input, Tape<T>* tape = nullptr);

/// Mean binary cross-entropy with logits over all N*K entries. `labels`
/// must hold 0/1 values and match the logits' shape.
template <typename T>
Tensor<T> multilabel_cls_loss(const Tensor<T>& logits, const Tensor<T>& labels,
                              Tape<T>* tape = nullptr);

/// Mean over elements of (a - b)^2. Gradients flow to both arguments.
template <typename T>
Tensor<T> mean_squared_error(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr);

/// Sum of all elements, as a scalar.
template <typename T>
Tensor<T> sum(const Tensor<T>& input, Tape<T>* tape = nullptr);

/// Scalar <a, b>.
template <typename T>
Tensor<T> inner(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr);

/// sum_k weights[k] * terms[k] over scalar tensors.
template <typename T>
Tensor<T> weighted_sum(std::span<const Tensor<T>> terms, std::span<const T> weights,
                       Tape<T>* tape = nullptr);

}  // namespace ssecam::ops
