#include "vr/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>

#ifdef VR_OPENMP
#include <omp.h>
#endif

namespace vr::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

bool parallel_enabled() {
#ifdef VR_OPENMP
    return g_parallel.load(std::memory_order_relaxed);
#else
    return false;
#endif
}

void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

int thread_count() {
#ifdef VR_OPENMP
    return parallel_enabled() ? omp_get_max_threads() : 1;
#else
    return 1;
#endif
}

namespace {

// Row-block of a general matmul: rows [i0, i1) of c = a * b, ikj order so the
// inner loop streams b and c rows.
inline void nn_rows(const double* a, const double* b, double* c, int i0, int i1, int k, int n) {
    for (int i = i0; i < i1; ++i) {
        double* crow = c + static_cast<size_t>(i) * n;
        std::memset(crow, 0, sizeof(double) * static_cast<size_t>(n));
        const double* arow = a + static_cast<size_t>(i) * k;
        for (int t = 0; t < k; ++t) {
            const double ait = arow[t];
            const double* brow = b + static_cast<size_t>(t) * n;
            for (int j = 0; j < n; ++j) crow[j] += ait * brow[j];
        }
    }
}

inline void nt_rows(const double* a, const double* b, double* c, int i0, int i1, int k, int n) {
    for (int i = i0; i < i1; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<size_t>(j) * k;
            double acc = 0.0;
            for (int t = 0; t < k; ++t) acc += arow[t] * brow[t];
            crow[j] = acc;
        }
    }
}

// c[i][j] = sum_t a[t][i] * b[t][j]; parallelized over output rows i so each
// row is written by exactly one thread.
inline void tn_rows(const double* a, const double* b, double* c, int i0, int i1, int k, int m, int n) {
    (void)m;
    for (int i = i0; i < i1; ++i) {
        double* crow = c + static_cast<size_t>(i) * n;
        std::memset(crow, 0, sizeof(double) * static_cast<size_t>(n));
        for (int t = 0; t < k; ++t) {
            const double ati = a[static_cast<size_t>(t) * m + i];
            const double* brow = b + static_cast<size_t>(t) * n;
            for (int j = 0; j < n; ++j) crow[j] += ati * brow[j];
        }
    }
}

inline void softmax_row(const double* x, double* y, int n, double inv_temp) {
    double mx = x[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
        y[j] = std::exp((x[j] - mx) * inv_temp);
        sum += y[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < n; ++j) y[j] *= inv;
}

}  // namespace

namespace serial {

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    nn_rows(a, b, c, 0, m, k, n);
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    nt_rows(a, b, c, 0, m, k, n);
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
    tn_rows(a, b, c, 0, m, k, m, n);
}

void softmax_rows(const double* x, double* y, int m, int n, double temperature) {
    const double inv_temp = 1.0 / temperature;
    for (int i = 0; i < m; ++i)
        softmax_row(x + static_cast<size_t>(i) * n, y + static_cast<size_t>(i) * n, n, inv_temp);
}

}  // namespace serial

namespace par {

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n) {
#ifdef VR_OPENMP
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) nn_rows(a, b, c, i, i + 1, k, n);
#else
    serial::matmul_nn(a, b, c, m, k, n);
#endif
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
#ifdef VR_OPENMP
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) nt_rows(a, b, c, i, i + 1, k, n);
#else
    serial::matmul_nt(a, b, c, m, k, n);
#endif
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
#ifdef VR_OPENMP
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) tn_rows(a, b, c, i, i + 1, k, m, n);
#else
    serial::matmul_tn(a, b, c, m, k, n);
#endif
}

void softmax_rows(const double* x, double* y, int m, int n, double temperature) {
#ifdef VR_OPENMP
    const double inv_temp = 1.0 / temperature;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i)
        softmax_row(x + static_cast<size_t>(i) * n, y + static_cast<size_t>(i) * n, n, inv_temp);
#else
    serial::softmax_rows(x, y, m, n, temperature);
#endif
}

}  // namespace par

// Dispatch. Tiny shapes skip the parallel path; the fork/join overhead
// exceeds the loop body below a few thousand flops.
namespace {
constexpr long kParallelThreshold = 8 * 1024;
inline bool go_par(long flops) { return parallel_enabled() && flops >= kParallelThreshold; }
}  // namespace

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    if (go_par(static_cast<long>(m) * k * n))
        par::matmul_nn(a, b, c, m, k, n);
    else
        serial::matmul_nn(a, b, c, m, k, n);
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    if (go_par(static_cast<long>(m) * k * n))
        par::matmul_nt(a, b, c, m, k, n);
    else
        serial::matmul_nt(a, b, c, m, k, n);
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
    if (go_par(static_cast<long>(m) * k * n))
        par::matmul_tn(a, b, c, m, k, n);
    else
        serial::matmul_tn(a, b, c, m, k, n);
}

void softmax_rows(const double* x, double* y, int m, int n, double temperature) {
    if (go_par(static_cast<long>(m) * n * 8))
        par::softmax_rows(x, y, m, n, temperature);
    else
        serial::softmax_rows(x, y, m, n, temperature);
}

}  // namespace vr::kernels
