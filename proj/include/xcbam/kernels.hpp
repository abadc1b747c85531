#pragma once

// Raw compute kernels on dense tensors. Outer loops are OpenMP-parallel over
// independent output planes; no kernel splits a reduction across threads, so
// results are bit-identical for any thread count.

#include <cstdint>
#include <vector>

#include "xcbam/tensor.hpp"

namespace xcbam {

enum class PoolKind { max, avg };

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
};

/// Output extent of a strided, padded, dilated window; throws ConfigError
/// when the window does not fit.
int window_out_dim(int in, int kernel, int stride, int pad, int dilation = 1);

namespace kernels {

// C = alpha * op(A) * op(B) + beta * C, row-major.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);

/// Unfolds one image (c, h, w) into rows (c*kh*kw) x cols (oh*ow).
template <typename T>
void im2col(const T* image, int channels, int height, int width, int kh, int kw,
            ConvGeometry g, int out_h, int out_w, T* columns);

/// Adjoint of im2col: scatters columns back into an image buffer (accumulating).
template <typename T>
void col2im(const T* columns, int channels, int height, int width, int kh, int kw,
            ConvGeometry g, int out_h, int out_w, T* image);

/// y = conv(x, weight) + bias. `bias` may be null; `y` must be pre-shaped.
template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                    ConvGeometry g, Tensor<T>& y);

/// Accumulates gradients into any non-null destination.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy,
                     ConvGeometry g, Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias);

/// Per-channel mean and biased variance over (n, h, w), sequential per channel.
template <typename T>
void channel_moments(const Tensor<T>& x, std::vector<T>& mean, std::vector<T>& var);

/// y = x * scale[c] + shift[c].
template <typename T>
void channel_affine(const Tensor<T>& x, const std::vector<T>& scale, const std::vector<T>& shift,
                    Tensor<T>& y);

/// Window pooling. Average pooling divides by the count of in-bounds cells.
/// For max pooling `argmax` receives the flat input index per output element.
template <typename T>
void pool2d_forward(const Tensor<T>& x, PoolKind kind, int kernel, int stride, int pad,
                    Tensor<T>& y, std::vector<std::int64_t>* argmax);

template <typename T>
void pool2d_backward(const Tensor<T>& dy, PoolKind kind, int kernel, int stride, int pad,
                     const std::vector<std::int64_t>* argmax, Tensor<T>& dx);

/// Half-pixel bilinear sampling (no corner alignment), border clamped.
template <typename T>
void bilinear_forward(const Tensor<T>& x, Tensor<T>& y);

template <typename T>
void bilinear_backward(const Tensor<T>& dy, Tensor<T>& dx);

/// Source taps for one output coordinate under the half-pixel convention.
struct LinearTap {
  int i0 = 0;
  int i1 = 0;
  double frac = 0.0;  ///< weight of i1
};
LinearTap half_pixel_tap(int out_index, int in_size, int out_size);

}  // namespace kernels
}  // namespace xcbam
