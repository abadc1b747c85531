#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace xcbam {

/// Dimensions of a dense NCHW array.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  constexpr std::size_t numel() const noexcept {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  constexpr std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  constexpr bool is_scalar() const noexcept { return n == 1 && c == 1 && h == 1 && w == 1; }

  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const;
};

std::ostream& operator<<(std::ostream& os, const Shape& s);

/// Dense 4-D array stored row-major in n -> c -> h -> w order.
///
/// A "meta" tensor carries a shape but no storage; it only appears while the
/// profiler propagates shapes through a model without computing values.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> values);

  static Tensor meta(Shape shape);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t numel() const noexcept { return shape_.numel(); }
  bool is_meta() const noexcept { return meta_; }
  bool empty() const noexcept { return data_.empty() && !meta_; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::size_t offset(int n, int c, int h, int w) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(int n, int c, int h, int w) noexcept { return data_[offset(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const noexcept { return data_[offset(n, c, h, w)]; }

  /// Pointer to the (h, w) plane of image n, channel c.
  T* plane(int n, int c) noexcept { return data_.data() + offset(n, c, 0, 0); }
  const T* plane(int n, int c) const noexcept { return data_.data() + offset(n, c, 0, 0); }

  void fill(T v);

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
  bool meta_ = false;
};

/// i.i.d. normal values, reproducible from the seed.
template <typename T>
Tensor<T> random_normal(Shape shape, std::uint64_t seed, T stddev = T{1}, T mean = T{0});

/// i.i.d. uniform values in [lo, hi), reproducible from the seed.
template <typename T>
Tensor<T> random_uniform(Shape shape, std::uint64_t seed, T lo, T hi);

/// Largest |a - b| / max(|a|, |b|, floor) over all elements.
template <typename T>
double max_relative_difference(const Tensor<T>& a, const Tensor<T>& b, double floor = 1e-12);

/// True when both tensors have equal shapes and bit-identical values.
template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace xcbam
