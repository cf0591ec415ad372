#include "ssecam/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ssecam {

std::string Shape::str() const {
  std::ostringstream os;
  os << '[' << n << ',' << c << ',' << h << ',' << w << ']';
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, std::string_view what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : s_(std::make_shared<Storage>()) {
  if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1) {
    throw ShapeError("tensor dimensions must be positive, got " + shape.str());
  }
  s_->shape = shape;
  s_->data.assign(shape.numel(), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : s_(std::make_shared<Storage>()) {
  if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1) {
    throw ShapeError("tensor dimensions must be positive, got " + shape.str());
  }
  if (values.size() != shape.numel()) {
    throw ShapeError("tensor " + shape.str() + " needs " + std::to_string(shape.numel()) +
                     " values, got " + std::to_string(values.size()));
  }
  s_->shape = shape;
  s_->data.assign(values.begin(), values.end());
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape().str());
  return s_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  s_->requires_grad = on;
  return *this;
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
  return s_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(s_->grad.begin(), s_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor<T> out(s_->shape);
  out.s_->data = s_->data;
  return out;
}

template <typename T>
void Tensor<T>::ensure_finite(std::string_view where) const {
  for (std::size_t i = 0; i < s_->data.size(); ++i) {
    if (!std::isfinite(s_->data[i])) {
      throw NumericError(std::string(where) + ": non-finite value at element " +
                         std::to_string(i));
    }
  }
}

template <typename T>
void Tape<T>::record(std::string op, std::vector<Tensor<T>> inputs, Tensor<T> output,
                     BackwardFn backward) {
  if (consumed_) throw std::logic_error("tape already consumed; call reset() first");
  output.set_requires_grad(true);
  nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(output), std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& root) {
  if (consumed_) throw std::logic_error("backward called twice on the same tape");
  if (root.numel() != 1) {
    throw ShapeError("backward root must be a scalar, got " + root.shape().str());
  }
  consumed_ = true;
  Tensor<T> seed = root;
  seed.grad()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward();
  }
}

template <typename T>
void Tape<T>::reset() {
  nodes_.clear();
  consumed_ = false;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace ssecam
