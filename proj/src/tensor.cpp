#include "xcbam/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "xcbam/error.hpp"

namespace xcbam {

std::string Shape::str() const {
  std::ostringstream os;
  os << *this;
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const Shape& s) {
  return os << '(' << s.n << ", " << s.c << ", " << s.h << ", " << s.w << ')';
}

namespace {

void check_dims(const Shape& s) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
    throw ConfigError("negative tensor dimension in shape " + s.str());
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(shape) {
  check_dims(shape);
  data_.assign(shape.numel(), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(shape), data_(std::move(values)) {
  check_dims(shape);
  if (data_.size() != shape.numel()) {
    throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                      " does not match shape " + shape.str());
  }
}

template <typename T>
Tensor<T> Tensor<T>::meta(Shape shape) {
  check_dims(shape);
  Tensor t;
  t.shape_ = shape;
  t.meta_ = true;
  return t;
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
Tensor<T> random_normal(Shape shape, std::uint64_t seed, T stddev, T mean) {
  Tensor<T> t(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.values()) v = static_cast<T>(mean + stddev * dist(rng));
  return t;
}

template <typename T>
Tensor<T> random_uniform(Shape shape, std::uint64_t seed, T lo, T hi) {
  Tensor<T> t(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
double max_relative_difference(const Tensor<T>& a, const Tensor<T>& b, double floor) {
  if (a.shape() != b.shape()) {
    throw ConfigError("cannot compare tensors of shapes " + a.shape().str() + " and " +
                      b.shape().str());
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double x = a[i];
    const double y = b[i];
    const double denom = std::max({std::abs(x), std::abs(y), floor});
    worst = std::max(worst, std::abs(x - y) / denom);
  }
  return worst;
}

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  return a.numel() == 0 || std::memcmp(a.data(), b.data(), a.numel() * sizeof(T)) == 0;
}

#define XCBAM_INSTANTIATE(T)                                                               \
  template class Tensor<T>;                                                                \
  template Tensor<T> random_normal<T>(Shape, std::uint64_t, T, T);                         \
  template Tensor<T> random_uniform<T>(Shape, std::uint64_t, T, T);                        \
  template double max_relative_difference<T>(const Tensor<T>&, const Tensor<T>&, double); \
  template bool bit_equal<T>(const Tensor<T>&, const Tensor<T>&);

XCBAM_INSTANTIATE(float)
XCBAM_INSTANTIATE(double)
#undef XCBAM_INSTANTIATE

}  // namespace xcbam
