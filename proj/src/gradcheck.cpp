#include "ssecam/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ssecam/ops.hpp"

namespace ssecam {

GradCheckResult finite_difference_check(const std::string& name, std::vector<Tensor<double>> leaves,
                                        const ScalarFn& fn, double tolerance, double step) {
  for (Tensor<double>& leaf : leaves) {
    if (!leaf.requires_grad()) {
      throw std::invalid_argument("finite_difference_check: leaf without requires_grad");
    }
    leaf.zero_grad();
  }
  Tape<double> tape;
  tape.backward(fn(&tape));

  GradCheckResult result{name, 0.0, tolerance, false};
  for (Tensor<double>& leaf : leaves) {
    const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
    std::vector<double> numeric(leaf.numel());
    for (std::size_t i = 0; i < leaf.numel(); ++i) {
      const double saved = leaf[i];
      leaf[i] = saved + step;
      const double up = fn(nullptr).item();
      leaf[i] = saved - step;
      const double down = fn(nullptr).item();
      leaf[i] = saved;
      numeric[i] = (up - down) / (2.0 * step);
    }
    double diff = 0.0, scale = 1e-8;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
      scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
    }
    result.max_rel_error = std::max(result.max_rel_error, diff / scale);
  }
  result.passed = result.max_rel_error < tolerance;
  return result;
}

double adjoint_defect(const LinearOp& op, const Shape& in_shape, const Shape& out_shape,
                      int trials, std::uint64_t seed) {
  // Samples are multiples of 2^-10, so products and their sums are exact
  // and pure permutations report a defect of exactly zero.
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> grid(-1024, 1024);
  auto draw = [&](const Shape& shape) {
    Tensor<double> t(shape);
    for (double& v : t.values()) v = grid(rng) / 1024.0;
    return t;
  };
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    Tensor<double> x = draw(in_shape);
    Tensor<double> y = draw(out_shape);
    x.set_requires_grad(true);
    Tape<double> tape;
    Tensor<double> ax = op(x, &tape);
    require_same_shape(ax.shape(), out_shape, "adjoint_defect");
    // d<A x, y>/dx = A^T y, produced by the op's backward rule.
    tape.backward(ops::inner(ax, y, &tape));
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < ax.numel(); ++i) lhs += ax[i] * y[i];
    std::span<const double> aty = std::as_const(x).grad();
    for (std::size_t i = 0; i < x.numel(); ++i) rhs += x[i] * aty[i];
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(shape);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Tensor<double> random_tensor_away_from_zero(const Shape& shape, std::mt19937_64& rng,
                                            double min_abs, double max_abs) {
  std::uniform_real_distribution<double> mag(min_abs, max_abs);
  std::bernoulli_distribution sign(0.5);
  Tensor<double> t(shape);
  for (double& v : t.values()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

}  // namespace ssecam
