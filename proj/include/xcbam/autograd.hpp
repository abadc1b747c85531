#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "xcbam/kernels.hpp"
#include "xcbam/tensor.hpp"

namespace xcbam {

/// One entry of the tape: the value produced by an op, its gradient buffer,
/// and the closure that pushes that gradient into the op's inputs.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  /// Gradient storage, zero-initialized on first use.
  Tensor<T>& grad_buffer();
};

/// Shared handle to a tape node. Copies alias the same node.
template <typename T>
class Variable {
 public:
  Variable() = default;
  explicit Variable(Tensor<T> value, bool requires_grad = false);
  explicit Variable(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  /// In-place access for optimizers and checkpoint loading.
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad();

  std::string_view op() const { return node_->op; }
  const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Runs reverse-mode accumulation from a scalar (1,1,1,1) output. Every
/// reachable tensor with requires_grad receives d(output)/d(tensor), summed
/// over all uses. Interior nodes are released afterwards.
template <typename T>
void backward(const Variable<T>& output);

enum class ElementwiseKind { add, mul };
enum class ActivationKind { relu, sigmoid };
enum class Mode { train, infer };

struct BatchNormOptions {
  double epsilon = 1e-5;
  double momentum = 0.1;
};

template <typename T>
Variable<T> conv2d(const Variable<T>& x, const Variable<T>& weight, const Variable<T>& bias,
                   ConvGeometry geometry);

/// Train mode normalizes with batch statistics and updates the running
/// buffers; infer mode uses the running buffers.
template <typename T>
Variable<T> batch_norm(const Variable<T>& x, const Variable<T>& gamma, const Variable<T>& beta,
                       Tensor<T>& running_mean, Tensor<T>& running_var, BatchNormOptions options,
                       Mode mode);

template <typename T>
Variable<T> pool2d(const Variable<T>& x, PoolKind kind, int kernel, int stride, int pad);

template <typename T>
Variable<T> global_pool(const Variable<T>& x, PoolKind kind);

/// Max or mean across channels: (n, c, h, w) -> (n, 1, h, w).
template <typename T>
Variable<T> channelwise_reduce(const Variable<T>& x, PoolKind kind);

template <typename T>
Variable<T> bilinear_resize(const Variable<T>& x, int out_h, int out_w);

/// `b` may equal a's shape or broadcast as (n, c, 1, 1) or (n, 1, h, w).
template <typename T>
Variable<T> elementwise(const Variable<T>& a, const Variable<T>& b, ElementwiseKind kind);

template <typename T>
Variable<T> add(const Variable<T>& a, const Variable<T>& b) {
  return elementwise(a, b, ElementwiseKind::add);
}
template <typename T>
Variable<T> mul(const Variable<T>& a, const Variable<T>& b) {
  return elementwise(a, b, ElementwiseKind::mul);
}

template <typename T>
Variable<T> activation(const Variable<T>& x, ActivationKind kind);

template <typename T>
Variable<T> relu(const Variable<T>& x) {
  return activation(x, ActivationKind::relu);
}
template <typename T>
Variable<T> sigmoid(const Variable<T>& x) {
  return activation(x, ActivationKind::sigmoid);
}

template <typename T>
Variable<T> concat_channels(std::span<const Variable<T>> xs);

template <typename T>
Variable<T> concat_channels(std::initializer_list<Variable<T>> xs) {
  return concat_channels(std::span<const Variable<T>>(xs.begin(), xs.size()));
}

/// Channels [begin, end).
template <typename T>
Variable<T> slice_channels(const Variable<T>& x, int begin, int end);

/// Sum of all elements as a (1,1,1,1) scalar.
template <typename T>
Variable<T> sum(const Variable<T>& x);

template <typename T>
Variable<T> scale(const Variable<T>& x, T factor);

/// Builds a tape node from a forward value. Used by ops defined outside this
/// header (the losses). `backward_fn` must accumulate into the inputs' grad buffers.
template <typename T>
Variable<T> make_op_result(Tensor<T> value, std::string_view op,
                           std::vector<std::shared_ptr<Node<T>>> inputs,
                           std::function<void(Node<T>&)> backward_fn);

}  // namespace xcbam
