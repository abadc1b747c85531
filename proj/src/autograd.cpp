#include "xcbam/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "xcbam/context.hpp"
#include "xcbam/error.hpp"

namespace xcbam {

template <typename T>
Tensor<T>& Node<T>::grad_buffer() {
  if (grad.empty() && value.numel() > 0) grad = Tensor<T>(value.shape());
  return grad;
}

template <typename T>
Variable<T>::Variable(Tensor<T> value, bool requires_grad)
    : node_(std::make_shared<Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename T>
void Variable<T>::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(T{0});
}

template <typename T>
Variable<T> make_op_result(Tensor<T> value, std::string_view op,
                           std::vector<std::shared_ptr<Node<T>>> inputs,
                           std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (context::grad_enabled() && !node->value.is_meta()) {
    for (const auto& in : inputs) needs = needs || (in && in->requires_grad);
  }
  if (needs) {
    node->requires_grad = true;
    std::erase_if(inputs, [](const auto& in) { return !in; });
    node->inputs = std::move(inputs);
    node->backward = std::move(backward_fn);
  }
  return Variable<T>(std::move(node));
}

template <typename T>
void backward(const Variable<T>& output) {
  if (!output.defined() || !output.requires_grad()) {
    throw UsageError("backward called on a tensor that is not attached to the tape");
  }
  if (!output.shape().is_scalar()) {
    throw UsageError("backward requires a (1, 1, 1, 1) scalar, got " + output.shape().str());
  }
  // Post-order DFS gives a topological order with inputs before consumers.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(output.node().get(), 0);
  visited.insert(output.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  output.node()->grad_buffer()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  for (Node<T>* node : order) {
    if (node->backward) {
      node->backward = nullptr;
      node->inputs.clear();
    }
  }
}

namespace {

void record_elementwise(std::size_t count) {
  if (auto* r = context::recorder()) r->add_elementwise(count);
}

template <typename T>
std::shared_ptr<Node<T>> node_of(const Variable<T>& v) {
  return v.defined() ? v.node() : nullptr;
}

template <typename T>
Tensor<T>* grad_target(const std::shared_ptr<Node<T>>& n) {
  return n && n->requires_grad ? &n->grad_buffer() : nullptr;
}

template <typename T>
Tensor<T> allocate(Shape s) {
  return context::shape_only() ? Tensor<T>::meta(s) : Tensor<T>(s);
}

template <typename T>
void require_values(const Variable<T>& v, const char* op) {
  if (!v.defined()) throw UsageError(std::string(op) + ": undefined input");
}

}  // namespace

template <typename T>
Variable<T> conv2d(const Variable<T>& x, const Variable<T>& weight, const Variable<T>& bias,
                   ConvGeometry g) {
  require_values(x, "conv2d");
  require_values(weight, "conv2d");
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (xs.c != ws.c) {
    throw ConfigError("conv2d: input has " + std::to_string(xs.c) + " channels, weight expects " +
                      std::to_string(ws.c));
  }
  if (bias.defined() && bias.value().numel() != static_cast<std::size_t>(ws.n) &&
      !bias.value().is_meta()) {
    throw ConfigError("conv2d: bias length does not match " + std::to_string(ws.n) +
                      " output channels");
  }
  const int oh = window_out_dim(xs.h, ws.h, g.stride, g.pad, g.dilation);
  const int ow = window_out_dim(xs.w, ws.w, g.stride, g.pad, g.dilation);
  const Shape ys{xs.n, ws.n, oh, ow};
  if (auto* r = context::recorder()) {
    r->add_conv_macs(static_cast<std::uint64_t>(ys.numel()) * ws.c * ws.h * ws.w);
  }
  Tensor<T> y = allocate<T>(ys);
  if (!y.is_meta()) {
    kernels::conv2d_forward(x.value(), weight.value(), bias.defined() ? &bias.value() : nullptr, g,
                            y);
  }
  auto xn = node_of(x);
  auto wn = node_of(weight);
  auto bn = node_of(bias);
  return make_op_result<T>(std::move(y), "conv2d", {xn, wn, bn}, [xn, wn, bn, g](Node<T>& self) {
    kernels::conv2d_backward(xn->value, wn->value, self.grad, g, grad_target(xn), grad_target(wn),
                             grad_target(bn));
  });
}

template <typename T>
Variable<T> batch_norm(const Variable<T>& x, const Variable<T>& gamma, const Variable<T>& beta,
                       Tensor<T>& running_mean, Tensor<T>& running_var, BatchNormOptions options,
                       Mode mode) {
  require_values(x, "batch_norm");
  const Shape xs = x.shape();
  const auto channels = static_cast<std::size_t>(xs.c);
  if (gamma.shape().numel() != channels || beta.shape().numel() != channels ||
      running_mean.shape().numel() != channels || running_var.shape().numel() != channels) {
    throw ConfigError("batch_norm: parameters sized for a different channel count than input " +
                      xs.str());
  }
  record_elementwise(xs.numel());
  if (context::shape_only()) return Variable<T>(Tensor<T>::meta(xs));

  const T eps = static_cast<T>(options.epsilon);
  std::vector<T> mean(channels);
  std::vector<T> inv_std(channels);
  if (mode == Mode::train) {
    std::vector<T> var;
    kernels::channel_moments(x.value(), mean, var);
    const double count = static_cast<double>(xs.n) * xs.plane();
    const double correction = count > 1 ? count / (count - 1) : 1.0;
    const T m = static_cast<T>(options.momentum);
    for (std::size_t c = 0; c < channels; ++c) {
      inv_std[c] = T{1} / std::sqrt(var[c] + eps);
      running_mean[c] = (T{1} - m) * running_mean[c] + m * mean[c];
      running_var[c] =
          (T{1} - m) * running_var[c] + m * static_cast<T>(var[c] * correction);
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = T{1} / std::sqrt(running_var[c] + eps);
    }
  }
  std::vector<T> scale(channels);
  std::vector<T> shift(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    scale[c] = gamma.value()[c] * inv_std[c];
    shift[c] = beta.value()[c] - mean[c] * scale[c];
  }
  Tensor<T> y(xs);
  kernels::channel_affine(x.value(), scale, shift, y);

  auto xn = node_of(x);
  auto gn = node_of(gamma);
  auto bn = node_of(beta);
  const bool batch_stats = mode == Mode::train;
  return make_op_result<T>(
      std::move(y), "batch_norm", {xn, gn, bn},
      [xn, gn, bn, mean = std::move(mean), inv_std = std::move(inv_std), batch_stats](
          Node<T>& self) {
        const Shape s = xn->value.shape();
        const std::size_t plane = s.plane();
        const double count = static_cast<double>(s.n) * plane;
        Tensor<T>* dx = grad_target(xn);
        Tensor<T>* dgamma = grad_target(gn);
        Tensor<T>* dbeta = grad_target(bn);
        const Tensor<T>& dy = self.grad;
#pragma omp parallel for schedule(static)
        for (int c = 0; c < s.c; ++c) {
          double sum_dy = 0.0;
          double sum_dy_xhat = 0.0;
          for (int n = 0; n < s.n; ++n) {
            const T* xp = xn->value.plane(n, c);
            const T* gp = dy.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy += gp[i];
              sum_dy_xhat += gp[i] * (xp[i] - mean[c]) * inv_std[c];
            }
          }
          if (dgamma) (*dgamma)[c] += static_cast<T>(sum_dy_xhat);
          if (dbeta) (*dbeta)[c] += static_cast<T>(sum_dy);
          if (!dx) continue;
          const T g = gn->value[c];
          for (int n = 0; n < s.n; ++n) {
            const T* xp = xn->value.plane(n, c);
            const T* gp = dy.plane(n, c);
            T* dp = dx->plane(n, c);
            if (batch_stats) {
              const T k = static_cast<T>(g * inv_std[c] / count);
              const T total_dy = static_cast<T>(sum_dy);
              const T total_dy_xhat = static_cast<T>(sum_dy_xhat);
              for (std::size_t i = 0; i < plane; ++i) {
                const T xhat = (xp[i] - mean[c]) * inv_std[c];
                dp[i] += k * (static_cast<T>(count) * gp[i] - total_dy - xhat * total_dy_xhat);
              }
            } else {
              const T k = g * inv_std[c];
              for (std::size_t i = 0; i < plane; ++i) dp[i] += k * gp[i];
            }
          }
        }
      });
}

template <typename T>
Variable<T> pool2d(const Variable<T>& x, PoolKind kind, int kernel, int stride, int pad) {
  require_values(x, "pool2d");
  const Shape xs = x.shape();
  if (2 * pad > kernel) {
    throw ConfigError("pool2d: padding " + std::to_string(pad) + " exceeds half of kernel " +
                      std::to_string(kernel));
  }
  const Shape ys{xs.n, xs.c, window_out_dim(xs.h, kernel, stride, pad),
                 window_out_dim(xs.w, kernel, stride, pad)};
  record_elementwise(ys.numel());
  if (context::shape_only()) return Variable<T>(Tensor<T>::meta(ys));
  Tensor<T> y(ys);
  auto argmax = std::make_shared<std::vector<std::int64_t>>();
  kernels::pool2d_forward(x.value(), kind, kernel, stride, pad, y,
                          kind == PoolKind::max ? argmax.get() : nullptr);
  auto xn = node_of(x);
  return make_op_result<T>(std::move(y), kind == PoolKind::max ? "max_pool2d" : "avg_pool2d",
                           {xn}, [xn, kind, kernel, stride, pad, argmax](Node<T>& self) {
                             kernels::pool2d_backward(self.grad, kind, kernel, stride, pad,
                                                      argmax.get(), xn->grad_buffer());
                           });
}

template <typename T>
Variable<T> global_pool(const Variable<T>& x, PoolKind kind) {
  require_values(x, "global_pool");
  const Shape xs = x.shape();
  if (xs.h < 1 || xs.w < 1) throw ConfigError("global_pool: empty spatial dims " + xs.str());
  const Shape ys{xs.n, xs.c, 1, 1};
  record_elementwise(xs.numel());
  if (context::shape_only()) return Variable<T>(Tensor<T>::meta(ys));
  Tensor<T> y(ys);
  auto argmax = std::make_shared<std::vector<std::size_t>>(ys.numel());
  const std::size_t plane = xs.plane();
  const int planes = xs.n * xs.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* src = x.value().data() + static_cast<std::size_t>(p) * plane;
    if (kind == PoolKind::avg) {
      T acc{0};
      for (std::size_t i = 0; i < plane; ++i) acc += src[i];
      y[p] = acc / static_cast<T>(plane);
    } else {
      std::size_t best = 0;
      for (std::size_t i = 1; i < plane; ++i)
        if (src[i] > src[best]) best = i;
      y[p] = src[best];
      (*argmax)[p] = best;
    }
  }
  auto xn = node_of(x);
  return make_op_result<T>(std::move(y), "global_pool", {xn},
                           [xn, kind, argmax, plane, planes](Node<T>& self) {
                             Tensor<T>& dx = xn->grad_buffer();
#pragma omp parallel for schedule(static)
                             for (int p = 0; p < planes; ++p) {
                               T* dst = dx.data() + static_cast<std::size_t>(p) * plane;
                               const T g = self.grad[p];
                               if (kind == PoolKind::max) {
                                 dst[(*argmax)[p]] += g;
                               } else {
                                 const T share = g / static_cast<T>(plane);
                                 for (std::size_t i = 0; i < plane; ++i) dst[i] += share;
                               }
                             }
                           });
}

template <typename T>
Variable<T> channelwise_reduce(const Variable<T>& x, PoolKind kind) {
  require_values(x, "channelwise_reduce");
  const Shape xs = x.shape();
  if (xs.c < 1) throw ConfigError("channelwise_reduce: no channels in " + xs.str());
  const Shape ys{xs.n, 1, xs.h, xs.w};
  record_elementwise(ys.numel());
  if (context::shape_only()) return Variable<T>(Tensor<T>::meta(ys));
  Tensor<T> y(ys);
  const std::size_t plane = xs.plane();
  auto argmax = std::make_shared<std::vector<int>>(kind == PoolKind::max ? ys.numel() : 0);
#pragma omp parallel for schedule(static)
  for (int n = 0; n < xs.n; ++n) {
    T* dst = y.plane(n, 0);
    const T* first = x.value().plane(n, 0);
    std::copy(first, first + plane, dst);
    int* best = kind == PoolKind::max ? argmax->data() + static_cast<std::size_t>(n) * plane
                                      : nullptr;
    if (best) std::fill(best, best + plane, 0);
    for (int c = 1; c < xs.c; ++c) {
      const T* src = x.value().plane(n, c);
      if (kind == PoolKind::avg) {
        for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
      } else {
        for (std::size_t i = 0; i < plane; ++i) {
          if (src[i] > dst[i]) {
            dst[i] = src[i];
            best[i] = c;
          }
        }
      }
    }
    if (kind == PoolKind::avg) {
      const T inv = T{1} / static_cast<T>(xs.c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] *= inv;
    }
  }
  auto xn = node_of(x);
  return make_op_result<T>(std::move(y), "channelwise_reduce", {xn},
                           [xn, kind, argmax](Node<T>& self) {
                             Tensor<T>& dx = xn->grad_buffer();
                             const Shape s = dx.shape();
                             const std::size_t plane = s.plane();
#pragma omp parallel for schedule(static)
                             for (int n = 0; n < s.n; ++n) {
                               const T* g = self.grad.plane(n, 0);
                               if (kind == PoolKind::max) {
                                 const int* best =
                                     argmax->data() + static_cast<std::size_t>(n) * plane;
                                 for (std::size_t i = 0; i < plane; ++i)
                                   dx.plane(n, best[i])[i] += g[i];
                               } else {
                                 const T inv = T{1} / static_cast<T>(s.c);
                                 for (int c = 0; c < s.c; ++c) {
                                   T* dst = dx.plane(n, c);
                                   for (std::size_t i = 0; i < plane; ++i) dst[i] += g[i] * inv;
                                 }
                               }
                             }
                           });
}

template <typename T>
Variable<T> bilinear_resize(const Variable<T>& x, int out_h, int out_w) {
  require_values(x, "bilinear_resize");
  const Shape xs = x.shape();
  if (out_h < 1 || out_w < 1 || xs.h < 1 || xs.w < 1) {
    throw ConfigError("bilinear_resize: cannot resize " + xs.str() + " to " +
                      std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const Shape ys{xs.n, xs.c, out_h, out_w};
  record_elementwise(ys.numel());
  if (context::shape_only()) return Variable<T>(Tensor<T>::meta(ys));
  Tensor<T> y(ys);
  kernels::bilinear_forward(x.value(), y);
  auto xn = node_of(x);
  return make_op_result<T>(std::move(y), "bilinear_resize", {xn}, [xn](Node<T>& self) {
    kernels::bilinear_backward(self.grad, xn->grad_buffer());
  });
}

namespace {

enum class Broadcast { none, channel, spatial };

Broadcast broadcast_kind(const Shape& a, const Shape& b) {
  if (a == b) return Broadcast::none;
  if (b.n == a.n && b.c == a.c && b.h == 1 && b.w == 1) return Broadcast::channel;
  if (b.n == a.n && b.c == 1 && b.h == a.h && b.w == a.w) return Broadcast::spatial;
  throw ConfigError("cannot broadcast " + b.str() + " onto " + a.str());
}

// Offset into b for element (n, c, i) of a.
inline std::size_t b_index(Broadcast mode, const Shape& a, int n, int c, std::size_t i) {
  switch (mode) {
    case Broadcast::none:
      return (static_cast<std::size_t>(n) * a.c + c) * a.plane() + i;
    case Broadcast::channel:
      return static_cast<std::size_t>(n) * a.c + c;
    case Broadcast::spatial:
      return static_cast<std::size_t>(n) * a.plane() + i;
  }
  return 0;
}

}  // namespace

template <typename T>
Variable<T> elementwise(const Variable<T>& a, const Variable<T>& b, ElementwiseKind kind) {
  require_values(a, "elementwise");
  require_values(b, "elementwise");
  const Shape as = a.shape();
  const Broadcast mode = broadcast_kind(as, b.shape());
  record_elementwise(as.numel());
  if (context::shape_only()) return Variable<T>(Tensor<T>::meta(as));
  Tensor<T> y(as);
  const std::size_t plane = as.plane();
  const T* av = a.value().data();
  const T* bv = b.value().data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < as.n; ++n) {
    for (int c = 0; c < as.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * as.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T rhs = bv[b_index(mode, as, n, c, i)];
        y[base + i] = kind == ElementwiseKind::add ? av[base + i] + rhs : av[base + i] * rhs;
      }
    }
  }
  auto an = node_of(a);
  auto bn = node_of(b);
  return make_op_result<T>(
      std::move(y), kind == ElementwiseKind::add ? "add" : "mul", {an, bn},
      [an, bn, mode, kind](Node<T>& self) {
        const Shape s = an->value.shape();
        const std::size_t plane = s.plane();
        const T* g = self.grad.data();
        if (Tensor<T>* da = grad_target(an)) {
          const T* bv = bn->value.data();
#pragma omp parallel for collapse(2) schedule(static)
          for (int n = 0; n < s.n; ++n) {
            for (int c = 0; c < s.c; ++c) {
              const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
              for (std::size_t i = 0; i < plane; ++i) {
                (*da)[base + i] += kind == ElementwiseKind::add
                                       ? g[base + i]
                                       : g[base + i] * bv[b_index(mode, s, n, c, i)];
              }
            }
          }
        }
        if (Tensor<T>* db = grad_target(bn)) {
          const T* av = an->value.data();
          auto term = [&](std::size_t k) {
            return kind == ElementwiseKind::add ? g[k] : g[k] * av[k];
          };
          if (mode == Broadcast::none) {
#pragma omp parallel for schedule(static)
            for (std::size_t k = 0; k < s.numel(); ++k) (*db)[k] += term(k);
          } else if (mode == Broadcast::channel) {
#pragma omp parallel for collapse(2) schedule(static)
            for (int n = 0; n < s.n; ++n) {
              for (int c = 0; c < s.c; ++c) {
                const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
                T acc{0};
                for (std::size_t i = 0; i < plane; ++i) acc += term(base + i);
                (*db)[static_cast<std::size_t>(n) * s.c + c] += acc;
              }
            }
          } else {
#pragma omp parallel for schedule(static)
            for (int n = 0; n < s.n; ++n) {
              T* dst = db->data() + static_cast<std::size_t>(n) * plane;
              for (int c = 0; c < s.c; ++c) {
                const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) dst[i] += term(base + i);
              }
            }
          }
        }
      });
}

namespace {

template <typename T>
T stable_sigmoid(T v) {
  if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
  const T e = std::exp(v);
  return e / (T{1} + e);
}

}  // namespace

template <typename T>
Variable<T> activation(const Variable<T>& x, ActivationKind kind) {
  require_values(x, "activation");
  const Shape xs = x.shape();
  record_elementwise(xs.numel());
  if (context::shape_only()) return Variable<T>(Tensor<T>::meta(xs));
  Tensor<T> y(xs);
  const T* src = x.value().data();
  const std::size_t count = xs.numel();
  if (kind == ActivationKind::relu) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < count; ++i) y[i] = src[i] > T{0} ? src[i] : T{0};
  } else {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < count; ++i) y[i] = stable_sigmoid(src[i]);
  }
  auto xn = node_of(x);
  const bool is_relu = kind == ActivationKind::relu;
  // The backward closure reads the op's own output for sigmoid.
  return make_op_result<T>(std::move(y), is_relu ? "relu" : "sigmoid", {xn},
                           [xn, is_relu](Node<T>& self) {
                             Tensor<T>& dx = xn->grad_buffer();
                             const std::size_t count = dx.numel();
                             const T* g = self.grad.data();
                             if (is_relu) {
                               const T* in = xn->value.data();
#pragma omp parallel for schedule(static)
                               for (std::size_t i = 0; i < count; ++i)
                                 if (in[i] > T{0}) dx[i] += g[i];
                             } else {
                               const T* out = self.value.data();
#pragma omp parallel for schedule(static)
                               for (std::size_t i = 0; i < count; ++i)
                                 dx[i] += g[i] * out[i] * (T{1} - out[i]);
                             }
                           });
}

template <typename T>
Variable<T> concat_channels(std::span<const Variable<T>> xs) {
  if (xs.empty()) throw ConfigError("concat_channels: no inputs");
  Shape ys = xs.front().shape();
  ys.c = 0;
  for (const auto& v : xs) {
    require_values(v, "concat_channels");
    const Shape s = v.shape();
    if (s.n != ys.n || s.h != ys.h || s.w != ys.w) {
      throw ConfigError("concat_channels: input " + s.str() + " does not match batch/spatial dims " +
                        "of " + xs.front().shape().str());
    }
    ys.c += s.c;
  }
  if (context::shape_only()) return Variable<T>(Tensor<T>::meta(ys));
  Tensor<T> y(ys);
  const std::size_t plane = ys.plane();
  std::vector<std::shared_ptr<Node<T>>> inputs;
  for (int n = 0; n < ys.n; ++n) {
    int offset = 0;
    for (const auto& v : xs) {
      const std::size_t len = static_cast<std::size_t>(v.shape().c) * plane;
      const T* src = v.value().plane(n, 0);
      std::copy(src, src + len, y.plane(n, offset));
      offset += v.shape().c;
    }
  }
  for (const auto& v : xs) inputs.push_back(v.node());
  auto captured = inputs;
  return make_op_result<T>(std::move(y), "concat_channels", std::move(inputs),
                           [captured](Node<T>& self) {
                             const Shape s = self.value.shape();
                             const std::size_t plane = s.plane();
                             for (int n = 0; n < s.n; ++n) {
                               int offset = 0;
                               for (const auto& in : captured) {
                                 const int c = in->value.shape().c;
                                 if (in->requires_grad) {
                                   const T* g = self.grad.plane(n, offset);
                                   T* dst = in->grad_buffer().plane(n, 0);
                                   const std::size_t len = static_cast<std::size_t>(c) * plane;
                                   for (std::size_t i = 0; i < len; ++i) dst[i] += g[i];
                                 }
                                 offset += c;
                               }
                             }
                           });
}

template <typename T>
Variable<T> slice_channels(const Variable<T>& x, int begin, int end) {
  require_values(x, "slice_channels");
  const Shape xs = x.shape();
  if (begin < 0 || end > xs.c || begin >= end) {
    throw ConfigError("slice_channels: invalid range [" + std::to_string(begin) + ", " +
                      std::to_string(end) + ") for " + xs.str());
  }
  const Shape ys{xs.n, end - begin, xs.h, xs.w};
  if (context::shape_only()) return Variable<T>(Tensor<T>::meta(ys));
  Tensor<T> y(ys);
  const std::size_t len = ys.c * ys.plane();
  for (int n = 0; n < xs.n; ++n) {
    const T* src = x.value().plane(n, begin);
    std::copy(src, src + len, y.plane(n, 0));
  }
  auto xn = node_of(x);
  return make_op_result<T>(std::move(y), "slice_channels", {xn}, [xn, begin, len](Node<T>& self) {
    Tensor<T>& dx = xn->grad_buffer();
    for (int n = 0; n < dx.shape().n; ++n) {
      const T* g = self.grad.plane(n, 0);
      T* dst = dx.plane(n, begin);
      for (std::size_t i = 0; i < len; ++i) dst[i] += g[i];
    }
  });
}

template <typename T>
Variable<T> sum(const Variable<T>& x) {
  require_values(x, "sum");
  const Shape one{1, 1, 1, 1};
  if (context::shape_only()) return Variable<T>(Tensor<T>::meta(one));
  Tensor<T> y(one);
  T acc{0};
  for (const T v : x.value().values()) acc += v;
  y[0] = acc;
  auto xn = node_of(x);
  return make_op_result<T>(std::move(y), "sum", {xn}, [xn](Node<T>& self) {
    Tensor<T>& dx = xn->grad_buffer();
    const T g = self.grad[0];
    for (auto& v : dx.values()) v += g;
  });
}

template <typename T>
Variable<T> scale(const Variable<T>& x, T factor) {
  require_values(x, "scale");
  if (context::shape_only()) return Variable<T>(Tensor<T>::meta(x.shape()));
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = x.value()[i] * factor;
  auto xn = node_of(x);
  return make_op_result<T>(std::move(y), "scale", {xn}, [xn, factor](Node<T>& self) {
    Tensor<T>& dx = xn->grad_buffer();
    for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += self.grad[i] * factor;
  });
}

#define XCBAM_INSTANTIATE(T)                                                                   \
  template struct Node<T>;                                                                     \
  template class Variable<T>;                                                                  \
  template void backward<T>(const Variable<T>&);                                               \
  template Variable<T> make_op_result<T>(Tensor<T>, std::string_view,                          \
                                         std::vector<std::shared_ptr<Node<T>>>,                \
                                         std::function<void(Node<T>&)>);                       \
  template Variable<T> conv2d<T>(const Variable<T>&, const Variable<T>&, const Variable<T>&,   \
                                 ConvGeometry);                                                \
  template Variable<T> batch_norm<T>(const Variable<T>&, const Variable<T>&,                   \
                                     const Variable<T>&, Tensor<T>&, Tensor<T>&,               \
                                     BatchNormOptions, Mode);                                  \
  template Variable<T> pool2d<T>(const Variable<T>&, PoolKind, int, int, int);                 \
  template Variable<T> global_pool<T>(const Variable<T>&, PoolKind);                           \
  template Variable<T> channelwise_reduce<T>(const Variable<T>&, PoolKind);                    \
  template Variable<T> bilinear_resize<T>(const Variable<T>&, int, int);                       \
  template Variable<T> elementwise<T>(const Variable<T>&, const Variable<T>&, ElementwiseKind); \
  template Variable<T> activation<T>(const Variable<T>&, ActivationKind);                      \
  template Variable<T> concat_channels<T>(std::span<const Variable<T>>);                       \
  template Variable<T> slice_channels<T>(const Variable<T>&, int, int);                        \
  template Variable<T> sum<T>(const Variable<T>&);                                             \
  template Variable<T> scale<T>(const Variable<T>&, T);

XCBAM_INSTANTIATE(float)
XCBAM_INSTANTIATE(double)
#undef XCBAM_INSTANTIATE

}  // namespace xcbam
