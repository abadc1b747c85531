#include "xcbam/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "xcbam/error.hpp"

namespace xcbam {

int window_out_dim(int in, int kernel, int stride, int pad, int dilation) {
  if (kernel < 1 || stride < 1 || pad < 0 || dilation < 1) {
    throw ConfigError("invalid window geometry: kernel " + std::to_string(kernel) + ", stride " +
                      std::to_string(stride) + ", pad " + std::to_string(pad) + ", dilation " +
                      std::to_string(dilation));
  }
  const int extent = dilation * (kernel - 1) + 1;
  const int padded = in + 2 * pad;
  if (in < 1 || extent > padded) {
    throw ConfigError("window extent " + std::to_string(extent) + " exceeds padded input extent " +
                      std::to_string(padded));
  }
  return (padded - extent) / stride + 1;
}

namespace kernels {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using ConstView = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda, const T* b,
          int ldb, T beta, T* c, int ldc) {
  Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>> out(c, m, n, Eigen::OuterStride<>(ldc));
  if (beta == T{0}) {
    out.setZero();
  } else if (beta != T{1}) {
    out *= beta;
  }
  const ConstView<T> av(a, trans_a ? k : m, trans_a ? m : k, Eigen::OuterStride<>(lda));
  const ConstView<T> bv(b, trans_b ? n : k, trans_b ? k : n, Eigen::OuterStride<>(ldb));
  if (trans_a && trans_b) {
    out.noalias() += alpha * av.transpose() * bv.transpose();
  } else if (trans_a) {
    out.noalias() += alpha * av.transpose() * bv;
  } else if (trans_b) {
    out.noalias() += alpha * av * bv.transpose();
  } else {
    out.noalias() += alpha * av * bv;
  }
}

namespace {

// Columns [lo, hi) of an output row whose input column lands inside [0, width).
void valid_range(int out_w, int width, int stride, int offset, int& lo, int& hi) {
  // iw = ow * stride + offset must satisfy 0 <= iw < width
  lo = offset >= 0 ? 0 : std::min(out_w, (-offset + stride - 1) / stride);
  const int last = width - 1 - offset;  // ow * stride <= last
  hi = last < 0 ? 0 : std::min(out_w, last / stride + 1);
  if (hi < lo) hi = lo;
}

}  // namespace

template <typename T>
void im2col(const T* image, int channels, int height, int width, int kh, int kw, ConvGeometry g,
            int out_h, int out_w, T* columns) {
  const std::size_t cols = static_cast<std::size_t>(out_h) * out_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    const T* src_plane = image + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* dst = columns + ((static_cast<std::size_t>(c) * kh + ki) * kw + kj) * cols;
        const int col_offset = kj * g.dilation - g.pad;
        int lo = 0;
        int hi = 0;
        valid_range(out_w, width, g.stride, col_offset, lo, hi);
        for (int oh = 0; oh < out_h; ++oh) {
          T* row = dst + static_cast<std::size_t>(oh) * out_w;
          const int ih = oh * g.stride - g.pad + ki * g.dilation;
          if (ih < 0 || ih >= height) {
            std::fill(row, row + out_w, T{0});
            continue;
          }
          const T* src = src_plane + static_cast<std::size_t>(ih) * width;
          std::fill(row, row + lo, T{0});
          if (g.stride == 1) {
            std::copy(src + lo + col_offset, src + hi + col_offset, row + lo);
          } else {
            for (int ow = lo; ow < hi; ++ow) row[ow] = src[ow * g.stride + col_offset];
          }
          std::fill(row + hi, row + out_w, T{0});
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* columns, int channels, int height, int width, int kh, int kw, ConvGeometry g,
            int out_h, int out_w, T* image) {
  const std::size_t cols = static_cast<std::size_t>(out_h) * out_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    T* dst_plane = image + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* src = columns + ((static_cast<std::size_t>(c) * kh + ki) * kw + kj) * cols;
        const int col_offset = kj * g.dilation - g.pad;
        int lo = 0;
        int hi = 0;
        valid_range(out_w, width, g.stride, col_offset, lo, hi);
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * g.stride - g.pad + ki * g.dilation;
          if (ih < 0 || ih >= height) continue;
          const T* row = src + static_cast<std::size_t>(oh) * out_w;
          T* dst = dst_plane + static_cast<std::size_t>(ih) * width;
          for (int ow = lo; ow < hi; ++ow) dst[ow * g.stride + col_offset] += row[ow];
        }
      }
    }
  }
}

namespace {

bool is_pointwise(const Shape& w, ConvGeometry g) {
  return w.h == 1 && w.w == 1 && g.stride == 1 && g.pad == 0;
}

}  // namespace

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                    ConvGeometry g, Tensor<T>& y) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const Shape& ys = y.shape();
  const int k = ws.c * ws.h * ws.w;
  const int p = ys.h * ys.w;
  const bool pointwise = is_pointwise(ws, g);
  std::vector<T> columns(pointwise ? 0 : static_cast<std::size_t>(k) * p);
  for (int n = 0; n < xs.n; ++n) {
    const T* cols = x.plane(n, 0);
    if (!pointwise) {
      im2col(x.plane(n, 0), xs.c, xs.h, xs.w, ws.h, ws.w, g, ys.h, ys.w, columns.data());
      cols = columns.data();
    }
    T* out = y.plane(n, 0);
    gemm<T>(false, false, ws.n, p, k, T{1}, weight.data(), k, cols, p, T{0}, out, p);
    if (bias != nullptr) {
#pragma omp parallel for schedule(static)
      for (int oc = 0; oc < ws.n; ++oc) {
        T* row = out + static_cast<std::size_t>(oc) * p;
        const T b = (*bias)[oc];
        for (int i = 0; i < p; ++i) row[i] += b;
      }
    }
  }
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy,
                     ConvGeometry g, Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const Shape& ys = dy.shape();
  const int k = ws.c * ws.h * ws.w;
  const int p = ys.h * ys.w;
  const bool pointwise = is_pointwise(ws, g);
  std::vector<T> columns(pointwise ? 0 : static_cast<std::size_t>(k) * p);
  for (int n = 0; n < xs.n; ++n) {
    const T* grad_out = dy.plane(n, 0);
    if (dweight != nullptr) {
      const T* cols = x.plane(n, 0);
      if (!pointwise) {
        im2col(x.plane(n, 0), xs.c, xs.h, xs.w, ws.h, ws.w, g, ys.h, ys.w, columns.data());
        cols = columns.data();
      }
      gemm<T>(false, true, ws.n, k, p, T{1}, grad_out, p, cols, p, T{1}, dweight->data(), k);
    }
    if (dx != nullptr) {
      if (pointwise) {
        gemm<T>(true, false, k, p, ws.n, T{1}, weight.data(), k, grad_out, p, T{1},
                dx->plane(n, 0), p);
      } else {
        gemm<T>(true, false, k, p, ws.n, T{1}, weight.data(), k, grad_out, p, T{0},
                columns.data(), p);
        col2im(columns.data(), xs.c, xs.h, xs.w, ws.h, ws.w, g, ys.h, ys.w, dx->plane(n, 0));
      }
    }
    if (dbias != nullptr) {
#pragma omp parallel for schedule(static)
      for (int oc = 0; oc < ws.n; ++oc) {
        const T* row = grad_out + static_cast<std::size_t>(oc) * p;
        T acc{0};
        for (int i = 0; i < p; ++i) acc += row[i];
        (*dbias)[oc] += acc;
      }
    }
  }
}

template <typename T>
void channel_moments(const Tensor<T>& x, std::vector<T>& mean, std::vector<T>& var) {
  const Shape& s = x.shape();
  mean.assign(s.c, T{0});
  var.assign(s.c, T{0});
  const double count = static_cast<double>(s.n) * s.plane();
#pragma omp parallel for schedule(static)
  for (int c = 0; c < s.c; ++c) {
    double acc = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const T* src = x.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) acc += src[i];
    }
    const double mu = acc / count;
    double sq = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const T* src = x.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const double d = src[i] - mu;
        sq += d * d;
      }
    }
    mean[c] = static_cast<T>(mu);
    var[c] = static_cast<T>(sq / count);
  }
}

template <typename T>
void channel_affine(const Tensor<T>& x, const std::vector<T>& scale, const std::vector<T>& shift,
                    Tensor<T>& y) {
  const Shape& s = x.shape();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* src = x.plane(n, c);
      T* dst = y.plane(n, c);
      const T a = scale[c];
      const T b = shift[c];
      for (std::size_t i = 0; i < s.plane(); ++i) dst[i] = src[i] * a + b;
    }
  }
}

template <typename T>
void pool2d_forward(const Tensor<T>& x, PoolKind kind, int kernel, int stride, int pad,
                    Tensor<T>& y, std::vector<std::int64_t>* argmax) {
  const Shape& xs = x.shape();
  const Shape& ys = y.shape();
  if (argmax != nullptr) argmax->assign(ys.numel(), -1);
  const int planes = xs.n * xs.c;
#pragma omp parallel for schedule(static)
  for (int pl = 0; pl < planes; ++pl) {
    const std::size_t in_base = static_cast<std::size_t>(pl) * xs.plane();
    const std::size_t out_base = static_cast<std::size_t>(pl) * ys.plane();
    const T* src = x.data() + in_base;
    T* dst = y.data() + out_base;
    for (int oh = 0; oh < ys.h; ++oh) {
      const int h0 = std::max(oh * stride - pad, 0);
      const int h1 = std::min(oh * stride - pad + kernel, xs.h);
      for (int ow = 0; ow < ys.w; ++ow) {
        const int w0 = std::max(ow * stride - pad, 0);
        const int w1 = std::min(ow * stride - pad + kernel, xs.w);
        if (kind == PoolKind::avg) {
          T acc{0};
          for (int ih = h0; ih < h1; ++ih)
            for (int iw = w0; iw < w1; ++iw) acc += src[ih * xs.w + iw];
          dst[oh * ys.w + ow] = acc / static_cast<T>((h1 - h0) * (w1 - w0));
        } else {
          T best = -std::numeric_limits<T>::infinity();
          std::int64_t best_index = -1;
          for (int ih = h0; ih < h1; ++ih) {
            for (int iw = w0; iw < w1; ++iw) {
              const T v = src[ih * xs.w + iw];
              if (best_index < 0 || v > best) {
                best = v;
                best_index = ih * xs.w + iw;
              }
            }
          }
          dst[oh * ys.w + ow] = best;
          if (argmax != nullptr) {
            (*argmax)[out_base + oh * ys.w + ow] = static_cast<std::int64_t>(in_base) + best_index;
          }
        }
      }
    }
  }
}

template <typename T>
void pool2d_backward(const Tensor<T>& dy, PoolKind kind, int kernel, int stride, int pad,
                     const std::vector<std::int64_t>* argmax, Tensor<T>& dx) {
  const Shape& xs = dx.shape();
  const Shape& ys = dy.shape();
  const int planes = xs.n * xs.c;
#pragma omp parallel for schedule(static)
  for (int pl = 0; pl < planes; ++pl) {
    const std::size_t out_base = static_cast<std::size_t>(pl) * ys.plane();
    T* dst = dx.data() + static_cast<std::size_t>(pl) * xs.plane();
    const T* src = dy.data() + out_base;
    for (int oh = 0; oh < ys.h; ++oh) {
      for (int ow = 0; ow < ys.w; ++ow) {
        const T g = src[oh * ys.w + ow];
        if (kind == PoolKind::max) {
          dx[static_cast<std::size_t>((*argmax)[out_base + oh * ys.w + ow])] += g;
          continue;
        }
        const int h0 = std::max(oh * stride - pad, 0);
        const int h1 = std::min(oh * stride - pad + kernel, xs.h);
        const int w0 = std::max(ow * stride - pad, 0);
        const int w1 = std::min(ow * stride - pad + kernel, xs.w);
        const T share = g / static_cast<T>((h1 - h0) * (w1 - w0));
        for (int ih = h0; ih < h1; ++ih)
          for (int iw = w0; iw < w1; ++iw) dst[ih * xs.w + iw] += share;
      }
    }
  }
}

LinearTap half_pixel_tap(int out_index, int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  double src = (out_index + 0.5) * scale - 0.5;
  if (src < 0.0) src = 0.0;
  LinearTap tap;
  tap.i0 = std::min(static_cast<int>(src), in_size - 1);
  tap.i1 = std::min(tap.i0 + 1, in_size - 1);
  tap.frac = tap.i0 == in_size - 1 ? 0.0 : src - tap.i0;
  return tap;
}

namespace {

std::vector<LinearTap> taps(int in_size, int out_size) {
  std::vector<LinearTap> t(out_size);
  for (int i = 0; i < out_size; ++i) t[i] = half_pixel_tap(i, in_size, out_size);
  return t;
}

}  // namespace

template <typename T>
void bilinear_forward(const Tensor<T>& x, Tensor<T>& y) {
  const Shape& xs = x.shape();
  const Shape& ys = y.shape();
  const auto ty = taps(xs.h, ys.h);
  const auto tx = taps(xs.w, ys.w);
  const int planes = xs.n * xs.c;
#pragma omp parallel for schedule(static)
  for (int pl = 0; pl < planes; ++pl) {
    const T* src = x.data() + static_cast<std::size_t>(pl) * xs.plane();
    T* dst = y.data() + static_cast<std::size_t>(pl) * ys.plane();
    for (int oy = 0; oy < ys.h; ++oy) {
      const T fy = static_cast<T>(ty[oy].frac);
      const T* r0 = src + static_cast<std::size_t>(ty[oy].i0) * xs.w;
      const T* r1 = src + static_cast<std::size_t>(ty[oy].i1) * xs.w;
      for (int ox = 0; ox < ys.w; ++ox) {
        const T fx = static_cast<T>(tx[ox].frac);
        const int x0 = tx[ox].i0;
        const int x1 = tx[ox].i1;
        const T top = (T{1} - fx) * r0[x0] + fx * r0[x1];
        const T bottom = (T{1} - fx) * r1[x0] + fx * r1[x1];
        dst[static_cast<std::size_t>(oy) * ys.w + ox] = (T{1} - fy) * top + fy * bottom;
      }
    }
  }
}

template <typename T>
void bilinear_backward(const Tensor<T>& dy, Tensor<T>& dx) {
  const Shape& xs = dx.shape();
  const Shape& ys = dy.shape();
  const auto ty = taps(xs.h, ys.h);
  const auto tx = taps(xs.w, ys.w);
  const int planes = xs.n * xs.c;
#pragma omp parallel for schedule(static)
  for (int pl = 0; pl < planes; ++pl) {
    const T* src = dy.data() + static_cast<std::size_t>(pl) * ys.plane();
    T* dst = dx.data() + static_cast<std::size_t>(pl) * xs.plane();
    for (int oy = 0; oy < ys.h; ++oy) {
      const T fy = static_cast<T>(ty[oy].frac);
      T* r0 = dst + static_cast<std::size_t>(ty[oy].i0) * xs.w;
      T* r1 = dst + static_cast<std::size_t>(ty[oy].i1) * xs.w;
      for (int ox = 0; ox < ys.w; ++ox) {
        const T g = src[static_cast<std::size_t>(oy) * ys.w + ox];
        const T fx = static_cast<T>(tx[ox].frac);
        const int x0 = tx[ox].i0;
        const int x1 = tx[ox].i1;
        r0[x0] += (T{1} - fy) * (T{1} - fx) * g;
        r0[x1] += (T{1} - fy) * fx * g;
        r1[x0] += fy * (T{1} - fx) * g;
        r1[x1] += fy * fx * g;
      }
    }
  }
}

#define XCBAM_INSTANTIATE(T)                                                                 \
  template void gemm<T>(bool, bool, int, int, int, T, const T*, int, const T*, int, T, T*, int); \
  template void im2col<T>(const T*, int, int, int, int, int, ConvGeometry, int, int, T*);     \
  template void col2im<T>(const T*, int, int, int, int, int, ConvGeometry, int, int, T*);     \
  template void conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,       \
                                  ConvGeometry, Tensor<T>&);                                  \
  template void conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                   ConvGeometry, Tensor<T>*, Tensor<T>*, Tensor<T>*);         \
  template void channel_moments<T>(const Tensor<T>&, std::vector<T>&, std::vector<T>&);       \
  template void channel_affine<T>(const Tensor<T>&, const std::vector<T>&,                    \
                                  const std::vector<T>&, Tensor<T>&);                         \
  template void pool2d_forward<T>(const Tensor<T>&, PoolKind, int, int, int, Tensor<T>&,      \
                                  std::vector<std::int64_t>*);                                \
  template void pool2d_backward<T>(const Tensor<T>&, PoolKind, int, int, int,                 \
                                   const std::vector<std::int64_t>*, Tensor<T>&);             \
  template void bilinear_forward<T>(const Tensor<T>&, Tensor<T>&);                            \
  template void bilinear_backward<T>(const Tensor<T>&, Tensor<T>&);

XCBAM_INSTANTIATE(float)
XCBAM_INSTANTIATE(double)
#undef XCBAM_INSTANTIATE

}  // namespace kernels
}  // namespace xcbam
