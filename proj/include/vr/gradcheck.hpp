#pragma once

#include <functional>
#include <vector>

#include "vr/tensor.hpp"

namespace vr {

// Central-difference gradient of a scalar-valued function, same shape as x.
// The function is re-evaluated 2*size(x) times on perturbed copies; x itself
// is left untouched. Non-finite function values raise NumericError.
std::vector<double> finite_diff_gradient(const std::function<double(const Tensor&)>& f,
                                         const Tensor& x, double step);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor); 0 when both sides are tiny
double max_relative_error(const std::vector<double>& a, const std::vector<double>& b,
                          double floor = 1e-8);

}  // namespace vr
