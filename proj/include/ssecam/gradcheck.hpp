#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ssecam/tensor.hpp"

namespace ssecam {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Builds a scalar from the captured leaves; records on the tape if given.
using ScalarFn = std::function<Tensor<double>(Tape<double>*)>;

/// Compares reverse-mode gradients of `fn` against central differences
/// (fn(x+h) - fn(x-h)) / 2h for every element of every leaf.
///
/// Error per leaf is max_i |analytic_i - numeric_i| divided by the larger of
/// the two gradients' max-norms (floored at 1e-8); the result is the worst
/// leaf. Leaves must already have requires_grad set.
GradCheckResult finite_difference_check(const std::string& name, std::vector<Tensor<double>> leaves,
                                        const ScalarFn& fn, double tolerance,
                                        double step = 1e-6);

using LinearOp = std::function<Tensor<double>(const Tensor<double>&, Tape<double>*)>;

/// Dot-product test for a linear op whose backward rule should be its
/// transpose: max over trials of |<A x, y> - <x, A^T y>|, with A^T y taken
/// from the op's recorded backward rule.
double adjoint_defect(const LinearOp& op, const Shape& in_shape, const Shape& out_shape,
                      int trials, std::uint64_t seed);

/// Uniform samples in [lo, hi).
Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                             double hi = 1.0);

/// Uniform magnitude in [min_abs, max_abs] with random sign.
Tensor<double> random_tensor_away_from_zero(const Shape& shape, std::mt19937_64& rng,
                                            double min_abs, double max_abs);

}  // namespace ssecam
