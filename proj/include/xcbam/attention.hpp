#pragma once

#include <string>

#include "xcbam/layers.hpp"

namespace xcbam {

inline constexpr int kAttentionReduction = 16;

/// Channel gate: sigmoid(mlp(maxpool(x)) + mlp(avgpool(x))), with the
/// bottleneck mlp = 1x1 conv C->C/r, relu, 1x1 conv C/r->C.
/// By default both pooled descriptors share one bottleneck.
template <typename T>
class ChannelAttention : public Module<T> {
 public:
  ChannelAttention(int channels, Rng& rng, int reduction = kAttentionReduction,
                   bool shared_bottleneck = true);

  /// (n, C, h, w) -> (n, C, 1, 1) gates in (0, 1).
  Variable<T> forward(const Variable<T>& x) const;
  void visit(const std::string& prefix, ParamVisitor<T>& visitor) override;

  Conv2d<T>& reduce() noexcept { return reduce_; }
  Conv2d<T>& expand() noexcept { return expand_; }
  /// Bottleneck applied to the average-pooled descriptor.
  Conv2d<T>& avg_reduce() noexcept { return shared_ ? reduce_ : avg_reduce_; }
  Conv2d<T>& avg_expand() noexcept { return shared_ ? expand_ : avg_expand_; }
  bool shared_bottleneck() const noexcept { return shared_; }
  int channels() const noexcept { return reduce_.spec().in_ch; }

 private:
  Conv2d<T> reduce_;
  Conv2d<T> expand_;
  bool shared_ = true;
  Conv2d<T> avg_reduce_;  // only when not shared
  Conv2d<T> avg_expand_;
};

/// Position gate: sigmoid(conv1x1([max_c(x), mean_c(x)])).
template <typename T>
class SpatialAttention : public Module<T> {
 public:
  explicit SpatialAttention(Rng& rng);

  /// (n, C, h, w) -> (n, 1, h, w) gates in (0, 1).
  Variable<T> forward(const Variable<T>& x) const;
  void visit(const std::string& prefix, ParamVisitor<T>& visitor) override;

  Conv2d<T>& fuse() noexcept { return fuse_; }

 private:
  Conv2d<T> fuse_;
};

/// Squeeze-and-excitation: x * sigmoid(mlp(avgpool(x))).
template <typename T>
class SEBlock : public Module<T> {
 public:
  SEBlock(int channels, Rng& rng, int reduction = kAttentionReduction);

  Variable<T> gates(const Variable<T>& x) const;
  Variable<T> forward(const Variable<T>& x) const;
  void visit(const std::string& prefix, ParamVisitor<T>& visitor) override;

  Conv2d<T>& squeeze() noexcept { return squeeze_; }
  Conv2d<T>& excite() noexcept { return excite_; }

 private:
  Conv2d<T> squeeze_;
  Conv2d<T> excite_;
};

/// Intermediate maps of one cross fusion, for inspection.
template <typename T>
struct CcbamTrace {
  Variable<T> c_high, c_low;  // channel responses
  Variable<T> f_high, f_low;  // cross-multiplied features
  Variable<T> s_high, s_low;  // spatial responses
  Variable<T> output;
};

/// Cross fusion of a decoder-side (high) and encoder-side (low) feature map:
///   C_high = CA_high(high), C_low = CA_low(low)
///   F_high = low * C_high,  F_low = high * C_low
///   S_high = SA_high(F_high), S_low = SA_low(F_low)
///   out = F_low * S_high + F_high * S_low
template <typename T>
class Ccbam : public Module<T> {
 public:
  Ccbam(int channels, Rng& rng, int reduction = kAttentionReduction,
        bool shared_bottleneck = true);

  Variable<T> forward(const Variable<T>& high, const Variable<T>& low) const;
  CcbamTrace<T> trace(const Variable<T>& high, const Variable<T>& low) const;
  void visit(const std::string& prefix, ParamVisitor<T>& visitor) override;

  ChannelAttention<T>& ca_high() noexcept { return ca_high_; }
  ChannelAttention<T>& ca_low() noexcept { return ca_low_; }
  SpatialAttention<T>& sa_high() noexcept { return sa_high_; }
  SpatialAttention<T>& sa_low() noexcept { return sa_low_; }

 private:
  ChannelAttention<T> ca_high_;
  ChannelAttention<T> ca_low_;
  SpatialAttention<T> sa_high_;
  SpatialAttention<T> sa_low_;
};

std::int64_t channel_attention_param_count(int channels, int reduction = kAttentionReduction,
                                           bool shared_bottleneck = true);
std::int64_t se_block_param_count(int channels, int reduction = kAttentionReduction);
std::int64_t ccbam_param_count(int channels, int reduction = kAttentionReduction,
                               bool shared_bottleneck = true);

}  // namespace xcbam
