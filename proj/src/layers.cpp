#include "xcbam/layers.hpp"

#include <cmath>

#include "xcbam/error.hpp"

namespace xcbam {

namespace {

template <typename T>
class ParameterCollector : public ParamVisitor<T> {
 public:
  void parameter(const std::string& name, Variable<T>& param, ParamRole role) override {
    out.push_back({name, param, role});
  }
  std::vector<NamedParameter<T>> out;
};

template <typename T>
class BufferCollector : public ParamVisitor<T> {
 public:
  void parameter(const std::string&, Variable<T>&, ParamRole) override {}
  void buffer(const std::string& name, Tensor<T>& buffer) override {
    out.push_back({name, &buffer});
  }
  std::vector<NamedBuffer<T>> out;
};

}  // namespace

template <typename T>
std::vector<NamedParameter<T>> named_parameters(Module<T>& module, const std::string& prefix) {
  ParameterCollector<T> collector;
  module.visit(prefix, collector);
  return std::move(collector.out);
}

template <typename T>
std::vector<NamedBuffer<T>> named_buffers(Module<T>& module, const std::string& prefix) {
  BufferCollector<T> collector;
  module.visit(prefix, collector);
  return std::move(collector.out);
}

template <typename T>
Conv2d<T>::Conv2d(ConvSpec spec, Rng& rng) : spec_(spec) {
  if (spec.in_ch < 1 || spec.out_ch < 1 || spec.kernel < 1) {
    throw ConfigError("conv layer needs positive channel counts and kernel size");
  }
  const Shape ws{spec.out_ch, spec.in_ch, spec.kernel, spec.kernel};
  const double fan_in = static_cast<double>(spec.in_ch) * spec.kernel * spec.kernel;
  Tensor<T> w(ws);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : w.values()) v = static_cast<T>(dist(rng));
  weight_ = Variable<T>(std::move(w), true);
  if (spec.bias) bias_ = Variable<T>(Tensor<T>(Shape{1, spec.out_ch, 1, 1}), true);
}

template <typename T>
Variable<T> Conv2d<T>::forward(const Variable<T>& x) const {
  return conv2d(x, weight_, bias_, spec_.geometry);
}

template <typename T>
void Conv2d<T>::visit(const std::string& prefix, ParamVisitor<T>& visitor) {
  visitor.parameter(join_name(prefix, "weight"), weight_, ParamRole::weight);
  if (bias_.defined()) visitor.parameter(join_name(prefix, "bias"), bias_, ParamRole::bias);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels, BatchNormOptions options)
    : options_(options),
      gamma_(Tensor<T>(Shape{1, channels, 1, 1}, T{1}), true),
      beta_(Tensor<T>(Shape{1, channels, 1, 1}, T{0}), true),
      running_mean_(Shape{1, channels, 1, 1}, T{0}),
      running_var_(Shape{1, channels, 1, 1}, T{1}) {}

template <typename T>
Variable<T> BatchNorm2d<T>::forward(const Variable<T>& x, Mode mode) {
  return batch_norm(x, gamma_, beta_, running_mean_, running_var_, options_, mode);
}

template <typename T>
void BatchNorm2d<T>::visit(const std::string& prefix, ParamVisitor<T>& visitor) {
  visitor.parameter(join_name(prefix, "gamma"), gamma_, ParamRole::bn_scale);
  visitor.parameter(join_name(prefix, "beta"), beta_, ParamRole::bn_shift);
  visitor.buffer(join_name(prefix, "running_mean"), running_mean_);
  visitor.buffer(join_name(prefix, "running_var"), running_var_);
}

template <typename T>
ConvX<T>::ConvX(int in_ch, int out_ch, int kernel, Rng& rng, int stride, int dilation)
    : conv_(ConvSpec{in_ch, out_ch, kernel,
                     ConvGeometry{stride, dilation * (kernel - 1) / 2, dilation}, false},
            rng),
      bn_(out_ch) {}

template <typename T>
Variable<T> ConvX<T>::forward(const Variable<T>& x, Mode mode) {
  return relu(bn_.forward(conv_.forward(x), mode));
}

template <typename T>
void ConvX<T>::visit(const std::string& prefix, ParamVisitor<T>& visitor) {
  conv_.visit(join_name(prefix, "conv"), visitor);
  bn_.visit(join_name(prefix, "bn"), visitor);
}

std::int64_t convx_param_count(int in_ch, int out_ch, int kernel) {
  return static_cast<std::int64_t>(in_ch) * out_ch * kernel * kernel + 2LL * out_ch;
}

#define XCBAM_INSTANTIATE(T)                                                                  \
  template std::vector<NamedParameter<T>> named_parameters<T>(Module<T>&, const std::string&); \
  template std::vector<NamedBuffer<T>> named_buffers<T>(Module<T>&, const std::string&);       \
  template class Conv2d<T>;                                                                   \
  template class BatchNorm2d<T>;                                                              \
  template class ConvX<T>;

XCBAM_INSTANTIATE(float)
XCBAM_INSTANTIATE(double)
#undef XCBAM_INSTANTIATE

}  // namespace xcbam
