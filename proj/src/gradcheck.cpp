#include "xcbam/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace xcbam {

template <typename T>
T finite_diff_at(const std::function<T()>& f, Tensor<T>& x, std::size_t index, T eps) {
  const T original = x[index];
  x[index] = original + eps;
  const T plus = f();
  x[index] = original - eps;
  const T minus = f();
  x[index] = original;
  return (plus - minus) / (T{2} * eps);
}

template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x,
                           T eps) {
  Tensor<T> probe = x;
  Tensor<T> grad(x.shape());
  const std::function<T()> eval = [&] { return f(probe); };
  for (std::size_t i = 0; i < probe.numel(); ++i) grad[i] = finite_diff_at(eval, probe, i, eps);
  return grad;
}

double gradient_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

template float finite_diff_at<float>(const std::function<float()>&, Tensor<float>&, std::size_t,
                                     float);
template double finite_diff_at<double>(const std::function<double()>&, Tensor<double>&,
                                       std::size_t, double);
template Tensor<float> finite_diff_grad<float>(const std::function<float(const Tensor<float>&)>&,
                                               const Tensor<float>&, float);
template Tensor<double> finite_diff_grad<double>(
    const std::function<double(const Tensor<double>&)>&, const Tensor<double>&, double);

}  // namespace xcbam
