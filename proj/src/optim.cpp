#include "ssecam/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ssecam {

double OptimizerConfig::lr(int itr) const {
  if (itr >= max_itr) return 0.0;
  const double progress = 1.0 - static_cast<double>(itr) / static_cast<double>(max_itr);
  return lr_init * std::pow(progress, gamma);
}

void OptimizerConfig::validate() const {
  if (!(lr_init > 0.0)) throw std::invalid_argument("optimizer.lr_init must be positive");
  if (max_itr < 1) throw std::invalid_argument("optimizer.max_itr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("optimizer.momentum must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("optimizer.weight_decay must be >= 0");
}

template <typename T>
void sgd_update(std::span<Tensor<T>> params, SgdState<T>& state, const OptimizerConfig& config,
                int itr) {
  if (itr < 0 || itr >= config.max_itr) {
    throw std::out_of_range("sgd_update: iteration " + std::to_string(itr) +
                            " outside [0, max_itr)");
  }
  if (state.velocity.empty()) {
    for (const Tensor<T>& p : params) state.velocity.emplace_back(p.numel(), T(0));
  }
  if (state.velocity.size() != params.size()) {
    throw ShapeError("sgd_update: optimizer state does not match parameter list");
  }
  const T lr = static_cast<T>(config.lr(itr));
  const T momentum = static_cast<T>(config.momentum);
  const T decay = static_cast<T>(config.weight_decay);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = params[k];
    std::vector<T>& v = state.velocity[k];
    if (v.size() != p.numel()) throw ShapeError("sgd_update: velocity/parameter size mismatch");
    std::span<const T> g = std::as_const(p).grad();
    if (!g.empty() && g.size() != p.numel()) {
      throw ShapeError("sgd_update: gradient/parameter size mismatch");
    }
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const T gi = g.empty() ? T(0) : g[i];
      v[i] = momentum * v[i] + gi + decay * p[i];
      p[i] -= lr * v[i];
    }
  }
}

template void sgd_update(std::span<Tensor<float>>, SgdState<float>&, const OptimizerConfig&, int);
template void sgd_update(std::span<Tensor<double>>, SgdState<double>&, const OptimizerConfig&,
                         int);

}  // namespace ssecam
