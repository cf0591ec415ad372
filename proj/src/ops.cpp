#include "ssecam/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <utility>

namespace ssecam::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  int n, cin, h, w;
  int cout, kh, kw;
  int oh, ow;
  Conv2dParams p;

  int patch() const { return cin * kh * kw; }
  int pixels() const { return oh * ow; }
  bool pointwise() const {
    return kh == 1 && kw == 1 && p.stride == 1 && p.padding == 0;
  }
};

// col is [cin*kh*kw, oh*ow] row-major.
template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* col) {
  const int pixels = g.pixels();
  for (int ci = 0; ci < g.cin; ++ci) {
    const T* plane = img + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int u = 0; u < g.kh; ++u) {
      for (int v = 0; v < g.kw; ++v) {
        T* row = col + static_cast<std::size_t>((ci * g.kh + u) * g.kw + v) * pixels;
        for (int i = 0; i < g.oh; ++i) {
          const int y = i * g.p.stride + u * g.p.dilation - g.p.padding;
          T* dst = row + static_cast<std::size_t>(i) * g.ow;
          if (y < 0 || y >= g.h) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(y) * g.w;
          for (int j = 0; j < g.ow; ++j) {
            const int x = j * g.p.stride + v * g.p.dilation - g.p.padding;
            dst[j] = (x >= 0 && x < g.w) ? src[x] : T(0);
          }
        }
      }
    }
  }
}

// Adds the columns back onto the image gradient; adjoint of im2col.
template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* img) {
  const int pixels = g.pixels();
  for (int ci = 0; ci < g.cin; ++ci) {
    T* plane = img + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int u = 0; u < g.kh; ++u) {
      for (int v = 0; v < g.kw; ++v) {
        const T* row = col + static_cast<std::size_t>((ci * g.kh + u) * g.kw + v) * pixels;
        for (int i = 0; i < g.oh; ++i) {
          const int y = i * g.p.stride + u * g.p.dilation - g.p.padding;
          if (y < 0 || y >= g.h) continue;
          const T* src = row + static_cast<std::size_t>(i) * g.ow;
          T* dst = plane + static_cast<std::size_t>(y) * g.w;
          for (int j = 0; j < g.ow; ++j) {
            const int x = j * g.p.stride + v * g.p.dilation - g.p.padding;
            if (x >= 0 && x < g.w) dst[x] += src[j];
          }
        }
      }
    }
  }
}

struct AxisTaps {
  std::vector<int> lo;
  std::vector<int> hi;
  std::vector<double> frac;
};

AxisTaps resize_taps(int in, int out) {
  AxisTaps taps;
  taps.lo.resize(out);
  taps.hi.resize(out);
  taps.frac.resize(out);
  const double ratio = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double s = (d + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(s));
    taps.lo[d] = i0;
    taps.hi[d] = std::min(i0 + 1, in - 1);
    taps.frac[d] = s - i0;
  }
  return taps;
}

template <typename T>
T sigmoid(T z) {
  if (z >= 0) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

}  // namespace

int conv_output_size(int in, int kernel, const Conv2dParams& p) {
  if (p.stride < 1 || p.dilation < 1 || p.padding < 0) {
    throw ShapeError("conv2d: stride and dilation must be positive, padding non-negative");
  }
  const int span = in + 2 * p.padding - p.dilation * (kernel - 1) - 1;
  const int out = span < 0 ? 0 : span / p.stride + 1;
  if (out < 1) {
    throw ShapeError("conv2d: non-positive output size for input extent " + std::to_string(in));
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv2dParams& params, Tape<T>* tape) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (ws.c != is.c) {
    throw ShapeError("conv2d: weight expects " + std::to_string(ws.c) + " input channels, input has " +
                     std::to_string(is.c));
  }
  if (!(bias.shape() == Shape{1, ws.n, 1, 1})) {
    throw ShapeError("conv2d: bias must be [1," + std::to_string(ws.n) + ",1,1], got " +
                     bias.shape().str());
  }
  ConvGeometry g{is.n, is.c, is.h, is.w, ws.n, ws.h, ws.w, 0, 0, params};
  g.oh = conv_output_size(is.h, ws.h, params);
  g.ow = conv_output_size(is.w, ws.w, params);

  Tensor<T> out(Shape{g.n, g.cout, g.oh, g.ow});
  const int K = g.patch();
  const int P = g.pixels();
  AlignedVector<T> col(g.pointwise() ? 0 : static_cast<std::size_t>(K) * P);
  ConstMapMat<T> wmat(weight.data(), g.cout, K);
  const std::size_t in_stride = static_cast<std::size_t>(g.cin) * g.h * g.w;
  const std::size_t out_stride = static_cast<std::size_t>(g.cout) * P;

  for (int n = 0; n < g.n; ++n) {
    const T* img = input.data() + n * in_stride;
    const T* colp = img;
    if (!g.pointwise()) {
      im2col(img, g, col.data());
      colp = col.data();
    }
    MapMat<T> omat(out.data() + n * out_stride, g.cout, P);
    omat.noalias() = wmat * ConstMapMat<T>(colp, K, P);
    for (int co = 0; co < g.cout; ++co) omat.row(co).array() += bias[co];
  }
  out.ensure_finite("conv2d");

  if (should_record(tape, {&input, &weight, &bias})) {
    tape->record("conv2d", {input, weight, bias}, out,
                 [input = Tensor<T>(input), weight = Tensor<T>(weight), bias = Tensor<T>(bias), out, g, in_stride, out_stride]() mutable {
                   const int K = g.patch();
                   const int P = g.pixels();
                   AlignedVector<T> col(static_cast<std::size_t>(K) * P);
                   std::span<const T> gout = std::as_const(out).grad();
                   ConstMapMat<T> wmat(weight.data(), g.cout, K);
                   for (int n = 0; n < g.n; ++n) {
                     ConstMapMat<T> dy(gout.data() + n * out_stride, g.cout, P);
                     if (weight.requires_grad() || input.requires_grad()) {
                       if (weight.requires_grad()) {
                         const T* colp = input.data() + n * in_stride;
                         if (!g.pointwise()) {
                           im2col(colp, g, col.data());
                           colp = col.data();
                         }
                         MapMat<T> dw(weight.grad().data(), g.cout, K);
                         dw.noalias() += dy * ConstMapMat<T>(colp, K, P).transpose();
                       }
                       if (input.requires_grad()) {
                         T* gin = input.grad().data() + n * in_stride;
                         if (g.pointwise()) {
                           MapMat<T>(gin, K, P).noalias() += wmat.transpose() * dy;
                         } else {
                           MapMat<T>(col.data(), K, P).noalias() = wmat.transpose() * dy;
                           col2im_add(col.data(), g, gin);
                         }
                       }
                     }
                     if (bias.requires_grad()) {
                       std::span<T> db = bias.grad();
                       for (int co = 0; co < g.cout; ++co) db[co] += dy.row(co).sum();
                     }
                   }
                 });
  }
  return out;
}

template <typename T>
Tensor<T> affine(const Tensor<T>& input, T scale, T shift, Tape<T>* tape) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) out[i] = input[i] * scale + shift;
  out.ensure_finite("affine");
  if (should_record(tape, {&input})) {
    tape->record("affine", {input}, out, [input = Tensor<T>(input), out, scale]() mutable {
      std::span<const T> gout = std::as_const(out).grad();
      std::span<T> gin = input.grad();
      for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += scale * gout[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input, Tape<T>* tape) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  out.ensure_finite("relu");
  if (should_record(tape, {&input})) {
    tape->record("relu", {input}, out, [input = Tensor<T>(input), out]() mutable {
      std::span<const T> gout = std::as_const(out).grad();
      std::span<T> gin = input.grad();
      for (std::size_t i = 0; i < gin.size(); ++i) {
        if (input[i] > T(0)) gin[i] += gout[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& input, int out_h, int out_w, Tape<T>* tape) {
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("bilinear_resize: target size must be positive, got " +
                     std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const Shape& is = input.shape();
  Tensor<T> out(Shape{is.n, is.c, out_h, out_w});
  const AxisTaps ty = resize_taps(is.h, out_h);
  const AxisTaps tx = resize_taps(is.w, out_w);
  const std::size_t planes = static_cast<std::size_t>(is.n) * is.c;

  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = input.data() + p * is.plane();
    T* dst = out.data() + p * out.shape().plane();
    for (int oy = 0; oy < out_h; ++oy) {
      const T* r0 = src + static_cast<std::size_t>(ty.lo[oy]) * is.w;
      const T* r1 = src + static_cast<std::size_t>(ty.hi[oy]) * is.w;
      const T fy = static_cast<T>(ty.frac[oy]);
      for (int ox = 0; ox < out_w; ++ox) {
        const int x0 = tx.lo[ox];
        const int x1 = tx.hi[ox];
        const T fx = static_cast<T>(tx.frac[ox]);
        // Difference form: a constant neighbourhood reproduces the constant exactly.
        const T top = r0[x0] + fx * (r0[x1] - r0[x0]);
        const T bot = r1[x0] + fx * (r1[x1] - r1[x0]);
        dst[static_cast<std::size_t>(oy) * out_w + ox] = top + fy * (bot - top);
      }
    }
  }
  out.ensure_finite("bilinear_resize");

  if (should_record(tape, {&input})) {
    tape->record("bilinear_resize", {input}, out, [input = Tensor<T>(input), out, ty, tx, planes]() mutable {
      const Shape is = input.shape();
      const Shape os = out.shape();
      std::span<const T> gout = std::as_const(out).grad();
      std::span<T> gin = input.grad();
      for (std::size_t p = 0; p < planes; ++p) {
        const T* g = gout.data() + p * os.plane();
        T* d = gin.data() + p * is.plane();
        for (int oy = 0; oy < os.h; ++oy) {
          T* r0 = d + static_cast<std::size_t>(ty.lo[oy]) * is.w;
          T* r1 = d + static_cast<std::size_t>(ty.hi[oy]) * is.w;
          const T fy = static_cast<T>(ty.frac[oy]);
          for (int ox = 0; ox < os.w; ++ox) {
            const T fx = static_cast<T>(tx.frac[ox]);
            const T v = g[static_cast<std::size_t>(oy) * os.w + ox];
            const T top = v * (T(1) - fy);
            const T bot = v * fy;
            r0[tx.lo[ox]] += top * (T(1) - fx);
            r0[tx.hi[ox]] += top * fx;
            r1[tx.lo[ox]] += bot * (T(1) - fx);
            r1[tx.hi[ox]] += bot * fx;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> horizontal_flip(const Tensor<T>& input, Tape<T>* tape) {
  const Shape& s = input.shape();
  Tensor<T> out(s);
  const std::size_t rows = static_cast<std::size_t>(s.n) * s.c * s.h;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = input.data() + r * s.w;
    T* dst = out.data() + r * s.w;
    for (int j = 0; j < s.w; ++j) dst[j] = src[s.w - 1 - j];
  }
  if (should_record(tape, {&input})) {
    tape->record("horizontal_flip", {input}, out, [input = Tensor<T>(input), out, rows]() mutable {
      const int w = input.shape().w;
      std::span<const T> gout = std::as_const(out).grad();
      std::span<T> gin = input.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (int j = 0; j < w; ++j) gin[r * w + j] += gout[r * w + (w - 1 - j)];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input, Tape<T>* tape) {
  const Shape& s = input.shape();
  Tensor<T> out(Shape{s.n, s.c, 1, 1});
  const std::size_t plane = s.plane();
  for (std::size_t p = 0; p < static_cast<std::size_t>(s.n) * s.c; ++p) {
    double acc = 0.0;
    const T* src = input.data() + p * plane;
    for (std::size_t i = 0; i < plane; ++i) acc += src[i];
    out[p] = static_cast<T>(acc / static_cast<double>(plane));
  }
  out.ensure_finite("global_avg_pool");
  if (should_record(tape, {&input})) {
    tape->record("global_avg_pool", {input}, out, [input = Tensor<T>(input), out, plane]() mutable {
      std::span<const T> gout = std::as_const(out).grad();
      std::span<T> gin = input.grad();
      const T scale = T(1) / static_cast<T>(plane);
      for (std::size_t p = 0; p < gout.size(); ++p) {
        const T g = gout[p] * scale;
        for (std::size_t i = 0; i < plane; ++i) gin[p * plane + i] += g;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> multilabel_cls_loss(const Tensor<T>& logits, const Tensor<T>& labels, Tape<T>* tape) {
  require_same_shape(logits.shape(), labels.shape(), "multilabel_cls_loss");
  for (std::size_t i = 0; i < labels.numel(); ++i) {
    if (labels[i] != T(0) && labels[i] != T(1)) {
      throw std::invalid_argument("multilabel_cls_loss: labels must be 0 or 1");
    }
  }
  const std::size_t count = logits.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double z = logits[i];
    acc += std::max(z, 0.0) - z * labels[i] + std::log1p(std::exp(-std::abs(z)));
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(count)));
  out.ensure_finite("multilabel_cls_loss");
  if (should_record(tape, {&logits})) {
    tape->record("multilabel_cls_loss", {logits}, out, [logits = Tensor<T>(logits), labels, out, count]() mutable {
      const T g = std::as_const(out).grad()[0] / static_cast<T>(count);
      std::span<T> gin = logits.grad();
      for (std::size_t i = 0; i < count; ++i) gin[i] += g * (sigmoid(logits[i]) - labels[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean_squared_error(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
  require_same_shape(a.shape(), b.shape(), "mean_squared_error");
  const std::size_t count = a.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(count)));
  out.ensure_finite("mean_squared_error");
  if (should_record(tape, {&a, &b})) {
    tape->record("mean_squared_error", {a, b}, out, [a = Tensor<T>(a), b = Tensor<T>(b), out, count]() mutable {
      const T g = std::as_const(out).grad()[0] * T(2) / static_cast<T>(count);
      if (a.requires_grad()) {
        std::span<T> ga = a.grad();
        for (std::size_t i = 0; i < count; ++i) ga[i] += g * (a[i] - b[i]);
      }
      if (b.requires_grad()) {
        std::span<T> gb = b.grad();
        for (std::size_t i = 0; i < count; ++i) gb[i] -= g * (a[i] - b[i]);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& input, Tape<T>* tape) {
  double acc = 0.0;
  for (std::size_t i = 0; i < input.numel(); ++i) acc += input[i];
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
  out.ensure_finite("sum");
  if (should_record(tape, {&input})) {
    tape->record("sum", {input}, out, [input = Tensor<T>(input), out]() mutable {
      const T g = std::as_const(out).grad()[0];
      for (T& v : input.grad()) v += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> inner(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
  require_same_shape(a.shape(), b.shape(), "inner");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(a[i]) * b[i];
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
  out.ensure_finite("inner");
  if (should_record(tape, {&a, &b})) {
    tape->record("inner", {a, b}, out, [a = Tensor<T>(a), b = Tensor<T>(b), out]() mutable {
      const T g = std::as_const(out).grad()[0];
      if (a.requires_grad()) {
        std::span<T> ga = a.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * b[i];
      }
      if (b.requires_grad()) {
        std::span<T> gb = b.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * a[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> weighted_sum(std::span<const Tensor<T>> terms, std::span<const T> weights,
                       Tape<T>* tape) {
  if (terms.size() != weights.size() || terms.empty()) {
    throw ShapeError("weighted_sum: need one weight per term");
  }
  T acc = T(0);
  bool record = false;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    acc += weights[k] * terms[k].item();
    record = record || terms[k].requires_grad();
  }
  Tensor<T> out = Tensor<T>::scalar(acc);
  out.ensure_finite("weighted_sum");
  if (tape != nullptr && record) {
    std::vector<Tensor<T>> inputs(terms.begin(), terms.end());
    std::vector<T> w(weights.begin(), weights.end());
    tape->record("weighted_sum", inputs, out, [inputs, w, out]() mutable {
      const T g = std::as_const(out).grad()[0];
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        if (inputs[k].requires_grad()) inputs[k].grad()[0] += g * w[k];
      }
    });
  }
  return out;
}

#define SSECAM_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,             \
                            const Conv2dParams&, Tape<T>*);                                   \
  template Tensor<T> affine(const Tensor<T>&, T, T, Tape<T>*);                                \
  template Tensor<T> relu(const Tensor<T>&, Tape<T>*);                                        \
  template Tensor<T> bilinear_resize(const Tensor<T>&, int, int, Tape<T>*);                   \
  template Tensor<T> horizontal_flip(const Tensor<T>&, Tape<T>*);                             \
  template Tensor<T> global_avg_pool(const Tensor<T>&, Tape<T>*);                             \
  template Tensor<T> multilabel_cls_loss(const Tensor<T>&, const Tensor<T>&, Tape<T>*);       \
  template Tensor<T> mean_squared_error(const Tensor<T>&, const Tensor<T>&, Tape<T>*);        \
  template Tensor<T> sum(const Tensor<T>&, Tape<T>*);                                         \
  template Tensor<T> inner(const Tensor<T>&, const Tensor<T>&, Tape<T>*);                     \
  template Tensor<T> weighted_sum(std::span<const Tensor<T>>, std::span<const T>, Tape<T>*);

SSECAM_INSTANTIATE_OPS(float)
SSECAM_INSTANTIATE_OPS(double)

}  // namespace ssecam::ops
