#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "xcbam/autograd.hpp"

namespace xcbam {

using Rng = std::mt19937_64;

/// How the optimizer treats a learnable tensor. Only conv/linear weights are
/// weight-decayed.
enum class ParamRole { weight, bias, bn_scale, bn_shift };

template <typename T>
class ParamVisitor {
 public:
  virtual ~ParamVisitor() = default;
  virtual void parameter(const std::string& name, Variable<T>& param, ParamRole role) = 0;
  /// Non-learnable state (batch-norm running statistics).
  virtual void buffer(const std::string& /*name*/, Tensor<T>& /*buffer*/) {}
};

/// Anything that owns parameters. Names are dotted paths built from `prefix`.
template <typename T>
class Module {
 public:
  virtual ~Module() = default;
  virtual void visit(const std::string& prefix, ParamVisitor<T>& visitor) = 0;
};

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

template <typename T>
struct NamedParameter {
  std::string name;
  Variable<T> param;
  ParamRole role;
};

template <typename T>
std::vector<NamedParameter<T>> named_parameters(Module<T>& module, const std::string& prefix = "");

template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* buffer;
};

template <typename T>
std::vector<NamedBuffer<T>> named_buffers(Module<T>& module, const std::string& prefix = "");

struct ConvSpec {
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 1;
  ConvGeometry geometry{};
  bool bias = false;
};

/// Convolution layer. Weights use fan-in Kaiming-normal scaling; biases start at zero.
template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d() = default;
  Conv2d(ConvSpec spec, Rng& rng);

  Variable<T> forward(const Variable<T>& x) const;
  void visit(const std::string& prefix, ParamVisitor<T>& visitor) override;

  const ConvSpec& spec() const noexcept { return spec_; }
  Variable<T>& weight() noexcept { return weight_; }
  Variable<T>& bias() noexcept { return bias_; }

 private:
  ConvSpec spec_{};
  Variable<T> weight_;
  Variable<T> bias_;
};

template <typename T>
class BatchNorm2d : public Module<T> {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels, BatchNormOptions options = {});

  Variable<T> forward(const Variable<T>& x, Mode mode);
  void visit(const std::string& prefix, ParamVisitor<T>& visitor) override;

  Variable<T>& gamma() noexcept { return gamma_; }
  Variable<T>& beta() noexcept { return beta_; }
  Tensor<T>& running_mean() noexcept { return running_mean_; }
  Tensor<T>& running_var() noexcept { return running_var_; }

 private:
  BatchNormOptions options_{};
  Variable<T> gamma_;
  Variable<T> beta_;
  Tensor<T> running_mean_;
  Tensor<T> running_var_;
};

/// Conv-BN-ReLU. The convolution carries no bias; the BN shift replaces it.
template <typename T>
class ConvX : public Module<T> {
 public:
  ConvX() = default;
  ConvX(int in_ch, int out_ch, int kernel, Rng& rng, int stride = 1, int dilation = 1);

  Variable<T> forward(const Variable<T>& x, Mode mode);
  void visit(const std::string& prefix, ParamVisitor<T>& visitor) override;

  Conv2d<T>& conv() noexcept { return conv_; }
  BatchNorm2d<T>& bn() noexcept { return bn_; }
  int out_channels() const noexcept { return conv_.spec().out_ch; }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
};

/// Element count of a ConvX without building it.
std::int64_t convx_param_count(int in_ch, int out_ch, int kernel);

}  // namespace xcbam
