#pragma once

#include <span>
#include <vector>

#include "ssecam/tensor.hpp"

namespace ssecam {

struct OptimizerConfig {
  double lr_init = 0.01;
  double gamma = 0.9;
  int max_itr = 1;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  /// Poly schedule lr_init * (1 - itr/max_itr)^gamma.
  double lr(int itr) const;
  void validate() const;
};

/// Momentum buffers, one per parameter tensor.
template <typename T>
struct SgdState {
  std::vector<std::vector<T>> velocity;
};

/// v <- momentum*v + grad + weight_decay*param;  param <- param - lr(itr)*v.
/// Reads each parameter's accumulated gradient; does not clear it.
template <typename T>
void sgd_update(std::span<Tensor<T>> params, SgdState<T>& state, const OptimizerConfig& config,
                int itr);

extern template void sgd_update(std::span<Tensor<float>>, SgdState<float>&,
                                const OptimizerConfig&, int);
extern template void sgd_update(std::span<Tensor<double>>, SgdState<double>&,
                                const OptimizerConfig&, int);

}  // namespace ssecam
