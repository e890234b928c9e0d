#pragma once

#include <cstddef>

// Hot inner loops, kept as flat-array kernels so the tensor layer stays thin.
// Every kernel exists twice: a plain serial reference under kernels::serial
// and an OpenMP version under kernels::par. The dispatching wrappers pick the
// parallel variant when it is compiled in and enabled. Both variants use the
// same per-element accumulation order, so their outputs are bitwise equal and
// results do not depend on the thread count.
namespace vr::kernels {

bool parallel_enabled();
void set_parallel(bool on);
int thread_count();

namespace serial {

// c[m x n] = a[m x k] * b[k x n]
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n);
// c[m x n] = a[m x k] * b[n x k]^T
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);
// c[m x n] = a[k x m]^T * b[k x n]
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);
// y = softmax(x / temperature) per row, with row-max subtraction
void softmax_rows(const double* x, double* y, int m, int n, double temperature);

}  // namespace serial

namespace par {

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);
void softmax_rows(const double* x, double* y, int m, int n, double temperature);

}  // namespace par

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);
void softmax_rows(const double* x, double* y, int m, int n, double temperature);

}  // namespace vr::kernels
