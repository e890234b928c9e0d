#pragma once

#include <vector>

#include "vr/tensor.hpp"

// Differentiable op set. Each op validates shapes up front (errors name both
// shapes), computes the forward value, and records a VJP closure when any
// input requires grad. Only rank-1/rank-2 tensors are supported; rank-1 is
// treated as a single row where a matrix is expected.
namespace vr::ops {

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m,k] x [n,k]^T -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// [m,n] + [n] broadcast over rows
Tensor add_rowvec(const Tensor& a, const Tensor& v);

// exp(x_ij / temperature) normalized per row, with row-max subtraction
Tensor softmax_rows(const Tensor& x, double temperature);
// per-row standardization (biased variance) then elementwise gain/bias
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
Tensor clamp_values(const Tensor& x, double lo, double hi);
// value-identical copy that blocks all backward flow
Tensor stop_gradient(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor abs_elems(const Tensor& x);

// row selection; also serves as embedding lookup
Tensor gather_rows(const Tensor& x, const std::vector<int>& indices);
Tensor concat_rows(const std::vector<Tensor>& parts);
// half-open column range [c0, c1)
Tensor slice_cols(const Tensor& x, int c0, int c1);
Tensor concat_cols(const std::vector<Tensor>& parts);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// mean over rows of (logsumexp(row) - row[target])
Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& targets);
// sum over all entries of (p_ij + eps) * log((p_ij + eps) / (q_ij + eps));
// the epsilon shift keeps zero-probability entries finite
Tensor kl_shifted(const Tensor& p, const Tensor& q, double eps);

}  // namespace vr::ops
