#include "xcbam/attention.hpp"

#include "xcbam/error.hpp"

namespace xcbam {

namespace {

void check_reduction(int channels, int reduction, const char* who) {
  if (reduction < 1 || channels < reduction || channels % reduction != 0) {
    throw ConfigError(std::string(who) + ": " + std::to_string(channels) +
                      " channels not divisible by reduction ratio " + std::to_string(reduction));
  }
}

ConvSpec pointwise(int in, int out) { return ConvSpec{in, out, 1, {}, true}; }

}  // namespace

template <typename T>
ChannelAttention<T>::ChannelAttention(int channels, Rng& rng, int reduction,
                                      bool shared_bottleneck)
    : shared_(shared_bottleneck) {
  check_reduction(channels, reduction, "channel attention");
  const int hidden = channels / reduction;
  reduce_ = Conv2d<T>(pointwise(channels, hidden), rng);
  expand_ = Conv2d<T>(pointwise(hidden, channels), rng);
  if (!shared_) {
    avg_reduce_ = Conv2d<T>(pointwise(channels, hidden), rng);
    avg_expand_ = Conv2d<T>(pointwise(hidden, channels), rng);
  }
}

template <typename T>
Variable<T> ChannelAttention<T>::forward(const Variable<T>& x) const {
  if (x.shape().c != channels()) {
    throw ConfigError("channel attention built for " + std::to_string(channels()) +
                      " channels, got " + x.shape().str());
  }
  const Variable<T> max_desc = global_pool(x, PoolKind::max);
  const Variable<T> avg_desc = global_pool(x, PoolKind::avg);
  const Variable<T> from_max = expand_.forward(relu(reduce_.forward(max_desc)));
  const Variable<T> from_avg = shared_ ? expand_.forward(relu(reduce_.forward(avg_desc)))
                                       : avg_expand_.forward(relu(avg_reduce_.forward(avg_desc)));
  return sigmoid(add(from_max, from_avg));
}

template <typename T>
void ChannelAttention<T>::visit(const std::string& prefix, ParamVisitor<T>& visitor) {
  reduce_.visit(join_name(prefix, "reduce"), visitor);
  expand_.visit(join_name(prefix, "expand"), visitor);
  if (!shared_) {
    avg_reduce_.visit(join_name(prefix, "avg_reduce"), visitor);
    avg_expand_.visit(join_name(prefix, "avg_expand"), visitor);
  }
}

template <typename T>
SpatialAttention<T>::SpatialAttention(Rng& rng) : fuse_(pointwise(2, 1), rng) {}

template <typename T>
Variable<T> SpatialAttention<T>::forward(const Variable<T>& x) const {
  const Variable<T> descriptor = concat_channels<T>(
      {channelwise_reduce(x, PoolKind::max), channelwise_reduce(x, PoolKind::avg)});
  return sigmoid(fuse_.forward(descriptor));
}

template <typename T>
void SpatialAttention<T>::visit(const std::string& prefix, ParamVisitor<T>& visitor) {
  fuse_.visit(join_name(prefix, "fuse"), visitor);
}

template <typename T>
SEBlock<T>::SEBlock(int channels, Rng& rng, int reduction) {
  check_reduction(channels, reduction, "SE block");
  squeeze_ = Conv2d<T>(pointwise(channels, channels / reduction), rng);
  excite_ = Conv2d<T>(pointwise(channels / reduction, channels), rng);
}

template <typename T>
Variable<T> SEBlock<T>::gates(const Variable<T>& x) const {
  if (x.shape().c != squeeze_.spec().in_ch) {
    throw ConfigError("SE block built for " + std::to_string(squeeze_.spec().in_ch) +
                      " channels, got " + x.shape().str());
  }
  return sigmoid(excite_.forward(relu(squeeze_.forward(global_pool(x, PoolKind::avg)))));
}

template <typename T>
Variable<T> SEBlock<T>::forward(const Variable<T>& x) const {
  return mul(x, gates(x));
}

template <typename T>
void SEBlock<T>::visit(const std::string& prefix, ParamVisitor<T>& visitor) {
  squeeze_.visit(join_name(prefix, "squeeze"), visitor);
  excite_.visit(join_name(prefix, "excite"), visitor);
}

template <typename T>
Ccbam<T>::Ccbam(int channels, Rng& rng, int reduction, bool shared_bottleneck)
    : ca_high_(channels, rng, reduction, shared_bottleneck),
      ca_low_(channels, rng, reduction, shared_bottleneck),
      sa_high_(rng),
      sa_low_(rng) {}

template <typename T>
CcbamTrace<T> Ccbam<T>::trace(const Variable<T>& high, const Variable<T>& low) const {
  if (high.shape() != low.shape()) {
    throw UsageError("CCBAM inputs must have identical shapes: high " + high.shape().str() +
                     " vs low " + low.shape().str());
  }
  CcbamTrace<T> t;
  t.c_high = ca_high_.forward(high);
  t.c_low = ca_low_.forward(low);
  t.f_high = mul(low, t.c_high);
  t.f_low = mul(high, t.c_low);
  t.s_high = sa_high_.forward(t.f_high);
  t.s_low = sa_low_.forward(t.f_low);
  t.output = add(mul(t.f_low, t.s_high), mul(t.f_high, t.s_low));
  return t;
}

template <typename T>
Variable<T> Ccbam<T>::forward(const Variable<T>& high, const Variable<T>& low) const {
  return trace(high, low).output;
}

template <typename T>
void Ccbam<T>::visit(const std::string& prefix, ParamVisitor<T>& visitor) {
  ca_high_.visit(join_name(prefix, "ca_high"), visitor);
  ca_low_.visit(join_name(prefix, "ca_low"), visitor);
  sa_high_.visit(join_name(prefix, "sa_high"), visitor);
  sa_low_.visit(join_name(prefix, "sa_low"), visitor);
}

std::int64_t channel_attention_param_count(int channels, int reduction, bool shared_bottleneck) {
  const std::int64_t hidden = channels / reduction;
  const std::int64_t one = channels * hidden + hidden + hidden * channels + channels;
  return shared_bottleneck ? one : 2 * one;
}

std::int64_t se_block_param_count(int channels, int reduction) {
  return channel_attention_param_count(channels, reduction, true);
}

std::int64_t ccbam_param_count(int channels, int reduction, bool shared_bottleneck) {
  constexpr std::int64_t spatial = 2 + 1;
  return 2 * channel_attention_param_count(channels, reduction, shared_bottleneck) + 2 * spatial;
}

template class ChannelAttention<float>;
template class ChannelAttention<double>;
template class SpatialAttention<float>;
template class SpatialAttention<double>;
template class SEBlock<float>;
template class SEBlock<double>;
template class Ccbam<float>;
template class Ccbam<double>;

}  // namespace xcbam
