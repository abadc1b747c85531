#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xcbam/layers.hpp"

namespace xcbam {

struct OptimConfig {
  double base_lr = 0.01;
  double min_lr = 1e-4;
  double power = 0.9;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::int64_t max_iter = 1000;

  void validate() const;
};

/// max(base_lr (1 - iter/max_iter)^power, min_lr); min_lr once iter > max_iter.
double poly_lr(std::int64_t iter, const OptimConfig& cfg);

/// SGD with momentum in velocity form:
///   v <- momentum v + (grad + weight_decay p)   (decay for ParamRole::weight only)
///   p <- p - lr v
template <typename T>
class Sgd {
 public:
  Sgd(std::vector<NamedParameter<T>> params, OptimConfig cfg);

  /// Parameters without a gradient are treated as having a zero gradient.
  void step(double lr);
  void zero_grad();

  const std::vector<NamedParameter<T>>& params() const noexcept { return params_; }
  const std::vector<Tensor<T>>& velocity() const noexcept { return velocity_; }
  const OptimConfig& config() const noexcept { return cfg_; }

 private:
  std::vector<NamedParameter<T>> params_;
  std::vector<Tensor<T>> velocity_;
  OptimConfig cfg_;
};

}  // namespace xcbam
