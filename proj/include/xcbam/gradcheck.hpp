#pragma once

#include <cstddef>
#include <functional>

#include "xcbam/tensor.hpp"

namespace xcbam {

/// Central-difference gradient of a scalar function:
/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every coordinate i.
template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x,
                           T eps = T(1e-5));

/// Central difference for one coordinate of a tensor that `f` reads in place.
/// The coordinate is restored bit-exactly afterwards.
template <typename T>
T finite_diff_at(const std::function<T()>& f, Tensor<T>& x, std::size_t index, T eps = T(1e-5));

/// Error measure used by every gradient comparison:
/// |a - b| / max(|a|, |b|, floor). Below `floor` the measure becomes absolute.
double gradient_error(double analytic, double numeric, double floor);

}  // namespace xcbam
