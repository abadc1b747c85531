#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace xcbam::ref {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

int out_dim(int in, int k, int stride, int pad, int dilation) {
  return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const std::vector<double>& bias, int stride,
              int pad, int dilation) {
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  if (ws.c != xs.c) throw std::invalid_argument("ref::conv2d channel mismatch");
  const int oh = out_dim(xs.h, ws.h, stride, pad, dilation);
  const int ow = out_dim(xs.w, ws.w, stride, pad, dilation);
  Tensor y(Shape{xs.n, ws.n, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < ws.n; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (int c = 0; c < xs.c; ++c)
            for (int ki = 0; ki < ws.h; ++ki)
              for (int kj = 0; kj < ws.w; ++kj) {
                const int r = i * stride - pad + ki * dilation;
                const int s = j * stride - pad + kj * dilation;
                if (r < 0 || r >= xs.h || s < 0 || s >= xs.w) continue;
                acc += x.at(n, c, r, s) * w.at(o, c, ki, kj);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

namespace {

template <typename Reduce>
Tensor pool(const Tensor& x, int k, int stride, int pad, Reduce reduce) {
  const Shape xs = x.shape();
  const int oh = out_dim(xs.h, k, stride, pad, 1);
  const int ow = out_dim(xs.w, k, stride, pad, 1);
  Tensor y(Shape{xs.n, xs.c, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          std::vector<double> window;
          for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) {
              const int r = i * stride - pad + a;
              const int s = j * stride - pad + b;
              if (r >= 0 && r < xs.h && s >= 0 && s < xs.w) window.push_back(x.at(n, c, r, s));
            }
          y.at(n, c, i, j) = reduce(window);
        }
  return y;
}

}  // namespace

Tensor max_pool(const Tensor& x, int k, int stride, int pad) {
  return pool(x, k, stride, pad,
              [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); });
}

Tensor avg_pool(const Tensor& x, int k, int stride, int pad) {
  return pool(x, k, stride, pad, [](const std::vector<double>& v) {
    double s = 0.0;
    for (double e : v) s += e;
    return s / static_cast<double>(v.size());
  });
}

Tensor bilinear(const Tensor& x, int out_h, int out_w) {
  const Shape xs = x.shape();
  Tensor y(Shape{xs.n, xs.c, out_h, out_w});
  auto source = [](int o, int in, int out) {
    const double s = (o + 0.5) * static_cast<double>(in) / out - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      for (int i = 0; i < out_h; ++i)
        for (int j = 0; j < out_w; ++j) {
          const double sy = source(i, xs.h, out_h);
          const double sx = source(j, xs.w, out_w);
          const int y0 = static_cast<int>(std::floor(sy));
          const int x0 = static_cast<int>(std::floor(sx));
          const int y1 = std::min(y0 + 1, xs.h - 1);
          const int x1 = std::min(x0 + 1, xs.w - 1);
          const double ly = sy - y0;
          const double lx = sx - x0;
          y.at(n, c, i, j) = (1 - ly) * ((1 - lx) * x.at(n, c, y0, x0) + lx * x.at(n, c, y0, x1)) +
                             ly * ((1 - lx) * x.at(n, c, y1, x0) + lx * x.at(n, c, y1, x1));
        }
  return y;
}

std::vector<double> mlp(const Mlp& p, const std::vector<double>& v) {
  const std::size_t c = v.size();
  const std::size_t hidden = p.b1.size();
  std::vector<double> h(hidden), out(c);
  for (std::size_t i = 0; i < hidden; ++i) {
    double acc = p.b1[i];
    for (std::size_t j = 0; j < c; ++j) acc += p.w1[i * c + j] * v[j];
    h[i] = std::max(acc, 0.0);
  }
  for (std::size_t i = 0; i < c; ++i) {
    double acc = p.b2[i];
    for (std::size_t j = 0; j < hidden; ++j) acc += p.w2[i * hidden + j] * h[j];
    out[i] = acc;
  }
  return out;
}

namespace {

void pooled(const Tensor& x, int n, std::vector<double>& mx, std::vector<double>& avg) {
  const Shape s = x.shape();
  mx.assign(s.c, -std::numeric_limits<double>::infinity());
  avg.assign(s.c, 0.0);
  for (int c = 0; c < s.c; ++c) {
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j) {
        mx[c] = std::max(mx[c], x.at(n, c, i, j));
        avg[c] += x.at(n, c, i, j);
      }
    avg[c] /= static_cast<double>(s.h) * s.w;
  }
}

}  // namespace

Tensor channel_attention(const Tensor& x, const Mlp& on_max, const Mlp& on_avg) {
  const Shape s = x.shape();
  Tensor g(Shape{s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n) {
    std::vector<double> mx, avg;
    pooled(x, n, mx, avg);
    const auto a = mlp(on_max, mx);
    const auto b = mlp(on_avg, avg);
    for (int c = 0; c < s.c; ++c) g.at(n, c, 0, 0) = sigmoid(a[c] + b[c]);
  }
  return g;
}

Tensor spatial_attention(const Tensor& x, double w_max, double w_avg, double b) {
  const Shape s = x.shape();
  Tensor g(Shape{s.n, 1, s.h, s.w});
  for (int n = 0; n < s.n; ++n)
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j) {
        double mx = -std::numeric_limits<double>::infinity();
        double mean = 0.0;
        for (int c = 0; c < s.c; ++c) {
          mx = std::max(mx, x.at(n, c, i, j));
          mean += x.at(n, c, i, j);
        }
        mean /= s.c;
        g.at(n, 0, i, j) = sigmoid(w_max * mx + w_avg * mean + b);
      }
  return g;
}

Tensor se_block(const Tensor& x, const Mlp& p) {
  const Shape s = x.shape();
  Tensor y(s);
  for (int n = 0; n < s.n; ++n) {
    std::vector<double> mx, avg;
    pooled(x, n, mx, avg);
    const auto z = mlp(p, avg);
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < s.h; ++i)
        for (int j = 0; j < s.w; ++j) y.at(n, c, i, j) = x.at(n, c, i, j) * sigmoid(z[c]);
  }
  return y;
}

Tensor ccbam(const Tensor& high, const Tensor& low, const CcbamWeights& p) {
  const Shape s = high.shape();
  if (!(low.shape() == s)) throw std::invalid_argument("ref::ccbam shape mismatch");
  const Tensor c_high = channel_attention(high, p.ca_high_max, p.ca_high_avg);
  const Tensor c_low = channel_attention(low, p.ca_low_max, p.ca_low_avg);
  Tensor f_high(s), f_low(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < s.h; ++i)
        for (int j = 0; j < s.w; ++j) {
          f_high.at(n, c, i, j) = low.at(n, c, i, j) * c_high.at(n, c, 0, 0);
          f_low.at(n, c, i, j) = high.at(n, c, i, j) * c_low.at(n, c, 0, 0);
        }
  const Tensor s_high = spatial_attention(f_high, p.sa_high[0], p.sa_high[1], p.sa_high[2]);
  const Tensor s_low = spatial_attention(f_low, p.sa_low[0], p.sa_low[1], p.sa_low[2]);
  Tensor out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < s.h; ++i)
        for (int j = 0; j < s.w; ++j)
          out.at(n, c, i, j) = f_low.at(n, c, i, j) * s_high.at(n, 0, i, j) +
                               f_high.at(n, c, i, j) * s_low.at(n, 0, i, j);
  return out;
}

}  // namespace xcbam::ref
