#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ssecam {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation produces NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// 64-byte aligned allocation. Vectorised kernels pick different summation
/// orders for different pointer alignments; fixing the alignment keeps
/// results independent of heap layout.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense N x C x H x W array with an optional gradient buffer.
///
/// Copies share storage. Use clone() for an independent copy. Operations
/// never write into their inputs; only the optimizer mutates parameters.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(Shape{1, 1, 1, 1}) {}
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T value) { return Tensor(Shape{1, 1, 1, 1}, value); }

  const Shape& shape() const { return s_->shape; }
  std::size_t numel() const { return s_->data.size(); }

  T* data() { return s_->data.data(); }
  const T* data() const { return s_->data.data(); }
  std::span<T> values() { return s_->data; }
  std::span<const T> values() const { return s_->data; }

  T& operator()(int n, int c, int h, int w) { return s_->data[offset(n, c, h, w)]; }
  T operator()(int n, int c, int h, int w) const { return s_->data[offset(n, c, h, w)]; }
  T& operator[](std::size_t i) { return s_->data[i]; }
  T operator[](std::size_t i) const { return s_->data[i]; }

  /// Value of a single-element tensor.
  T item() const;

  bool requires_grad() const { return s_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !s_->grad.empty(); }
  /// Gradient buffer, allocated as zeros on first access.
  std::span<T> grad();
  std::span<const T> grad() const { return s_->grad; }
  void zero_grad();

  Tensor clone() const;
  bool shares_storage(const Tensor& other) const { return s_ == other.s_; }

  /// Throws NumericError naming `where` if any element is NaN or Inf.
  void ensure_finite(std::string_view where) const;

 private:
  std::size_t offset(int n, int c, int h, int w) const {
    const Shape& sh = s_->shape;
    return ((static_cast<std::size_t>(n) * sh.c + c) * sh.h + h) * sh.w + w;
  }

  struct Storage {
    Shape shape;
    AlignedVector<T> data;
    AlignedVector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

/// Reverse-mode tape. Operations append nodes in execution order, so the
/// node sequence is a topological order of the computation graph.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Node {
    std::string op;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    BackwardFn backward;
  };

  void record(std::string op, std::vector<Tensor<T>> inputs, Tensor<T> output,
              BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 and replays the backward rules in reverse.
  /// Throws std::logic_error if called a second time without reset().
  void backward(const Tensor<T>& root);

  void reset();
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// True when an op with these inputs should be recorded on `tape`.
template <typename T>
bool should_record(const Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (tape == nullptr) return false;
  for (const Tensor<T>* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& in) {
  Tensor<To> out(in.shape());
  for (std::size_t i = 0; i < in.numel(); ++i) out[i] = static_cast<To>(in[i]);
  return out;
}

void require_same_shape(const Shape& a, const Shape& b, std::string_view what);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace ssecam
