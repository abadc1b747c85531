#include "xcbam/optim.hpp"

#include <algorithm>
#include <cmath>

#include "xcbam/error.hpp"

namespace xcbam {

void OptimConfig::validate() const {
  if (!(min_lr < base_lr)) throw ConfigError("min_lr must be below base_lr");
  if (!(power > 0.0)) throw ConfigError("power must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (max_iter < 1) throw ConfigError("max_iter must be positive");
}

double poly_lr(std::int64_t iter, const OptimConfig& cfg) {
  if (iter < 0) throw UsageError("poly_lr: negative iteration");
  if (iter > cfg.max_iter) return cfg.min_lr;
  const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(cfg.max_iter);
  return std::max(cfg.base_lr * std::pow(frac, cfg.power), cfg.min_lr);
}

template <typename T>
Sgd<T>::Sgd(std::vector<NamedParameter<T>> params, OptimConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(p.param.shape());
}

template <typename T>
void Sgd<T>::step(double lr) {
  const T mom = static_cast<T>(cfg_.momentum);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Variable<T>& p = params_[i].param;
    Tensor<T>& v = velocity_[i];
    Tensor<T>& value = p.mutable_value();
    const bool has_grad = p.has_grad();
    if (has_grad && p.grad().shape() != value.shape()) {
      throw InternalError("sgd: gradient shape " + p.grad().shape().str() + " differs from " +
                          params_[i].name + " " + value.shape().str());
    }
    const T decay =
        params_[i].role == ParamRole::weight ? static_cast<T>(cfg_.weight_decay) : T{0};
    const T* g = has_grad ? p.grad().data() : nullptr;
    T* w = value.data();
    T* vel = v.data();
    const std::size_t count = value.numel();
#pragma omp parallel for schedule(static) if (count > 65536)
    for (std::size_t j = 0; j < count; ++j) {
      const T grad = (g ? g[j] : T{0}) + decay * w[j];
      vel[j] = mom * vel[j] + grad;
      w[j] -= rate * vel[j];
    }
  }
}

template <typename T>
void Sgd<T>::zero_grad() {
  for (auto& p : params_) p.param.zero_grad();
}

template class Sgd<float>;
template class Sgd<double>;

}  // namespace xcbam
