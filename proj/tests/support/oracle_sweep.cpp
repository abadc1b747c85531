#include "oracle_sweep.hpp"

#include <algorithm>
#include <cmath>

#include "xcbam/autograd.hpp"
#include "xcbam/context.hpp"
#include "xcbam/kernels.hpp"

namespace xcbam::testing {

namespace {

using Var = Variable<double>;
constexpr double kFloor = 1e-6;

int uniform_int(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng() % (hi - lo + 1)); }

std::vector<double> flat(const Variable<double>& v, std::size_t n) {
  if (!v.defined()) return std::vector<double>(n, 0.0);
  return {v.value().values().begin(), v.value().values().end()};
}

void track(SweepResult& r, double err) {
  r.worst = std::max(r.worst, err);
  ++r.cases;
}

SweepResult sweep_gemm(int cases, Rng& rng) {
  SweepResult r{"gemm"};
  for (int t = 0; t < cases; ++t) {
    const int m = uniform_int(rng, 1, 40), n = uniform_int(rng, 1, 300), k = uniform_int(rng, 1, 150);
    const bool ta = rng() % 2, tb = rng() % 2;
    const auto a = random_normal<double>(Shape{1, 1, m, k}, rng());
    const auto b = random_normal<double>(Shape{1, 1, k, n}, rng());
    Tensor<double> c(Shape{1, 1, m, n}, 0.5);
    Tensor<double> want = c;
    // The same buffers read as op(A) in the requested orientation.
    auto at = [&](int i, int p) { return ta ? a[static_cast<std::size_t>(p) * m + i] : a[static_cast<std::size_t>(i) * k + p]; };
    auto bt = [&](int p, int j) { return tb ? b[static_cast<std::size_t>(j) * k + p] : b[static_cast<std::size_t>(p) * n + j]; };
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int p = 0; p < k; ++p) s += at(i, p) * bt(p, j);
        want[static_cast<std::size_t>(i) * n + j] = 2.0 * s - 0.5 * want[static_cast<std::size_t>(i) * n + j];
      }
    }
    kernels::gemm<double>(ta, tb, m, n, k, 2.0, a.data(), ta ? m : k, b.data(), tb ? k : n, -0.5,
                          c.data(), n);
    track(r, max_relative_difference(c, want, kFloor));
  }
  return r;
}

SweepResult sweep_conv(int cases, Rng& rng) {
  SweepResult r{"conv2d"};
  for (int t = 0; t < cases; ++t) {
    const int k = std::array{1, 3, 5}[rng() % 3];
    const ConvGeometry g{uniform_int(rng, 1, 2), uniform_int(rng, 0, 4), uniform_int(rng, 1, 4)};
    const int extent = g.dilation * (k - 1) + 1;
    const int min_side = std::max(1, extent - 2 * g.pad);
    const Shape xs{uniform_int(rng, 1, 3), uniform_int(rng, 1, 20), uniform_int(rng, min_side, min_side + 30),
                   uniform_int(rng, min_side, min_side + 30)};
    const int out_ch = uniform_int(rng, 1, 24);
    const Var x(random_normal<double>(xs, rng()));
    const Var w(random_normal<double>(Shape{out_ch, xs.c, k, k}, rng()));
    const bool with_bias = rng() % 2;
    const Var b = with_bias ? Var(random_normal<double>(Shape{1, out_ch, 1, 1}, rng())) : Var();
    const auto got = conv2d(x, w, b, g).value();
    const auto want = ref::conv2d(x.value(), w.value(), with_bias ? flat(b, out_ch) : std::vector<double>{},
                                  g.stride, g.pad, g.dilation);
    track(r, max_relative_difference(got, want, kFloor));
  }
  return r;
}

SweepResult sweep_pool(int cases, Rng& rng) {
  SweepResult r{"pool2d"};
  for (int t = 0; t < cases; ++t) {
    const int k = uniform_int(rng, 1, 4), stride = uniform_int(rng, 1, 3), pad = uniform_int(rng, 0, k / 2);
    const Shape xs{uniform_int(rng, 1, 3), uniform_int(rng, 1, 8), uniform_int(rng, k, 33), uniform_int(rng, k, 33)};
    const Var x(random_normal<double>(xs, rng()));
    const bool is_max = rng() % 2;
    const auto got = pool2d(x, is_max ? PoolKind::max : PoolKind::avg, k, stride, pad).value();
    const auto want = is_max ? ref::max_pool(x.value(), k, stride, pad) : ref::avg_pool(x.value(), k, stride, pad);
    track(r, max_relative_difference(got, want, kFloor));
  }
  return r;
}

SweepResult sweep_bilinear(int cases, Rng& rng) {
  SweepResult r{"bilinear_resize"};
  for (int t = 0; t < cases; ++t) {
    const Shape xs{uniform_int(rng, 1, 2), uniform_int(rng, 1, 6), uniform_int(rng, 1, 24), uniform_int(rng, 1, 24)};
    const int oh = uniform_int(rng, 1, 64), ow = uniform_int(rng, 1, 64);
    const Var x(random_normal<double>(xs, rng()));
    track(r, max_relative_difference(bilinear_resize(x, oh, ow).value(), ref::bilinear(x.value(), oh, ow), kFloor));
  }
  return r;
}

Shape attention_shape(Rng& rng) {
  return Shape{uniform_int(rng, 1, 3), 4 * uniform_int(rng, 1, 6), uniform_int(rng, 1, 12), uniform_int(rng, 1, 12)};
}

SweepResult sweep_channel_attention(int cases, Rng& rng) {
  SweepResult r{"channel_attention"};
  for (int t = 0; t < cases; ++t) {
    const Shape xs = attention_shape(rng);
    ChannelAttention<double> m(xs.c, rng, 4, rng() % 2);
    randomize(m, rng());
    const Var x(random_normal<double>(xs, rng()));
    const auto want = ref::channel_attention(x.value(), to_mlp(m.reduce(), m.expand()),
                                             to_mlp(m.avg_reduce(), m.avg_expand()));
    track(r, max_relative_difference(m.forward(x).value(), want, kFloor));
  }
  return r;
}

SweepResult sweep_spatial_attention(int cases, Rng& rng) {
  SweepResult r{"spatial_attention"};
  for (int t = 0; t < cases; ++t) {
    const Shape xs = attention_shape(rng);
    SpatialAttention<double> m(rng);
    randomize(m, rng(), 1.0);
    const Var x(random_normal<double>(xs, rng()));
    const auto& w = m.fuse().weight().value();
    const double b = m.fuse().bias().defined() ? m.fuse().bias().value()[0] : 0.0;
    track(r, max_relative_difference(m.forward(x).value(), ref::spatial_attention(x.value(), w[0], w[1], b), kFloor));
  }
  return r;
}

SweepResult sweep_se_block(int cases, Rng& rng) {
  SweepResult r{"se_block"};
  for (int t = 0; t < cases; ++t) {
    const Shape xs = attention_shape(rng);
    SEBlock<double> m(xs.c, rng, 4);
    randomize(m, rng());
    const Var x(random_normal<double>(xs, rng()));
    track(r, max_relative_difference(m.forward(x).value(),
                                     ref::se_block(x.value(), to_mlp(m.squeeze(), m.excite())), kFloor));
  }
  return r;
}

SweepResult sweep_ccbam(int cases, Rng& rng) {
  SweepResult r{"ccbam_fuse"};
  for (int t = 0; t < cases; ++t) {
    const Shape xs = attention_shape(rng);
    Ccbam<double> m(xs.c, rng, 4, rng() % 2);
    randomize(m, rng());
    const Var high(random_normal<double>(xs, rng()));
    const Var low(random_normal<double>(xs, rng()));
    const auto want = ref::ccbam(high.value(), low.value(), to_ccbam_weights(m));
    track(r, max_relative_difference(m.forward(high, low).value(), want, kFloor));
  }
  return r;
}

}  // namespace

void randomize(Module<double>& m, std::uint64_t seed, double stddev) {
  Rng rng(seed);
  for (auto& p : named_parameters(m)) {
    p.param.mutable_value() = random_normal<double>(p.param.shape(), rng(), stddev);
  }
}

ref::Mlp to_mlp(Conv2d<double>& reduce, Conv2d<double>& expand) {
  const auto hidden = static_cast<std::size_t>(reduce.spec().out_ch);
  const auto channels = static_cast<std::size_t>(expand.spec().out_ch);
  return ref::Mlp{flat(reduce.weight(), hidden * channels), flat(reduce.bias(), hidden),
                  flat(expand.weight(), hidden * channels), flat(expand.bias(), channels)};
}

ref::CcbamWeights to_ccbam_weights(Ccbam<double>& m) {
  ref::CcbamWeights p;
  p.ca_high_max = to_mlp(m.ca_high().reduce(), m.ca_high().expand());
  p.ca_high_avg = to_mlp(m.ca_high().avg_reduce(), m.ca_high().avg_expand());
  p.ca_low_max = to_mlp(m.ca_low().reduce(), m.ca_low().expand());
  p.ca_low_avg = to_mlp(m.ca_low().avg_reduce(), m.ca_low().avg_expand());
  for (auto [sa, out] : {std::pair{&m.sa_high(), p.sa_high}, std::pair{&m.sa_low(), p.sa_low}}) {
    const auto& w = sa->fuse().weight().value();
    out[0] = w[0];
    out[1] = w[1];
    out[2] = sa->fuse().bias().defined() ? sa->fuse().bias().value()[0] : 0.0;
  }
  return p;
}

std::vector<SweepResult> reference_sweeps(int cases, std::uint64_t seed) {
  Rng rng(seed);
  NoGradGuard no_grad;
  return {sweep_gemm(cases, rng),         sweep_conv(cases, rng),
          sweep_pool(cases, rng),         sweep_bilinear(cases, rng),
          sweep_channel_attention(cases, rng), sweep_spatial_attention(cases, rng),
          sweep_se_block(cases, rng),     sweep_ccbam(cases, rng)};
}

}  // namespace xcbam::testing
