// Times the serial reference kernels against the OpenMP variants and checks
// that both produce bitwise-identical output.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#include "vr/kernels.hpp"
#include "vr/rng.hpp"

using namespace vr;

namespace {

using Kernel = std::function<void(const double*, const double*, double*, int, int, int)>;

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void bench_matmul(const char* name, const Kernel& serial_fn, const Kernel& par_fn, int size) {
    Rng rng(42);
    std::vector<double> a(static_cast<size_t>(size) * size), b(a.size()), c1(a.size()),
        c2(a.size());
    for (double& v : a) v = rng.normal();
    for (double& v : b) v = rng.normal();

    const int reps = size <= 128 ? 20 : 5;
    const double ms_serial =
        time_ms([&] { serial_fn(a.data(), b.data(), c1.data(), size, size, size); }, reps);
    const double ms_par =
        time_ms([&] { par_fn(a.data(), b.data(), c2.data(), size, size, size); }, reps);
    const bool same = std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(double)) == 0;

    const double gflop = 2.0 * size * size * size / 1e9;
    std::printf("%-10s %5d   %9.3f ms (%6.2f GF/s)   %9.3f ms (%6.2f GF/s)   %5.2fx   %s\n",
                name, size, ms_serial, gflop / (ms_serial / 1e3), ms_par,
                gflop / (ms_par / 1e3), ms_serial / ms_par, same ? "bitwise" : "MISMATCH");
}

void bench_softmax(int rows, int cols) {
    Rng rng(43);
    std::vector<double> x(static_cast<size_t>(rows) * cols), y1(x.size()), y2(x.size());
    for (double& v : x) v = rng.normal();

    const double ms_serial =
        time_ms([&] { kernels::serial::softmax_rows(x.data(), y1.data(), rows, cols, 1.0); }, 20);
    const double ms_par =
        time_ms([&] { kernels::par::softmax_rows(x.data(), y2.data(), rows, cols, 1.0); }, 20);
    const bool same = std::memcmp(y1.data(), y2.data(), y1.size() * sizeof(double)) == 0;
    std::printf("%-10s %5dx%-5d %7.3f ms %21.3f ms %27.2fx   %s\n", "softmax", rows, cols,
                ms_serial, ms_par, ms_serial / ms_par, same ? "bitwise" : "MISMATCH");
}

}  // namespace

int main() {
    std::printf("threads: %d, parallel dispatch: %s\n\n", kernels::thread_count(),
                kernels::parallel_enabled() ? "on" : "off");
    std::printf("%-10s %5s   %-28s   %-28s   %-7s %s\n", "kernel", "size", "serial", "parallel",
                "speedup", "parity");

    for (int size : {64, 128, 256, 512}) {
        bench_matmul("matmul_nn", kernels::serial::matmul_nn, kernels::par::matmul_nn, size);
        bench_matmul("matmul_nt", kernels::serial::matmul_nt, kernels::par::matmul_nt, size);
        bench_matmul("matmul_tn", kernels::serial::matmul_tn, kernels::par::matmul_tn, size);
    }
    std::printf("\n");
    bench_softmax(512, 512);
    bench_softmax(2048, 256);
    return 0;
}
