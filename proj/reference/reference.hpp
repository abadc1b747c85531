#pragma once

// Straight-line serial transcriptions used as oracles by the tests and as the
// baseline of the kernel benchmark. Nothing here shares code with src/.

#include <vector>

#include "xcbam/tensor.hpp"

namespace xcbam::ref {

using Tensor = xcbam::Tensor<double>;

/// Direct seven-loop convolution; `bias` may be empty.
Tensor conv2d(const Tensor& x, const Tensor& w, const std::vector<double>& bias, int stride,
              int pad, int dilation);

/// Window statistics over in-bounds pixels only; padding never contributes.
Tensor max_pool(const Tensor& x, int k, int stride, int pad);
Tensor avg_pool(const Tensor& x, int k, int stride, int pad);

/// Half-pixel bilinear resampling with edge clamping.
Tensor bilinear(const Tensor& x, int out_h, int out_w);

/// Weights of a bottleneck mlp: 1x1 conv C -> C/r, relu, 1x1 conv C/r -> C.
struct Mlp {
  std::vector<double> w1;  // (C/r) x C, row-major
  std::vector<double> b1;
  std::vector<double> w2;  // C x (C/r)
  std::vector<double> b2;
};

std::vector<double> mlp(const Mlp& p, const std::vector<double>& v);

/// (n, C, 1, 1) gates: sigmoid(mlp_max(maxpool x) + mlp_avg(avgpool x)).
Tensor channel_attention(const Tensor& x, const Mlp& on_max, const Mlp& on_avg);

/// (n, 1, h, w) gates: sigmoid(w[0] max_c x + w[1] mean_c x + b).
Tensor spatial_attention(const Tensor& x, double w_max, double w_avg, double b);

/// x * sigmoid(mlp(avgpool x)).
Tensor se_block(const Tensor& x, const Mlp& p);

struct CcbamWeights {
  Mlp ca_high_max, ca_high_avg;
  Mlp ca_low_max, ca_low_avg;
  double sa_high[3];  // w_max, w_avg, bias
  double sa_low[3];
};

Tensor ccbam(const Tensor& high, const Tensor& low, const CcbamWeights& p);

}  // namespace xcbam::ref
