// Benchmark comparing the serial reference kernels against the OpenMP
// flavors, and verifying that both produce bit-identical output.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "foodfuse/kernels.hpp"
#include "foodfuse/rng.hpp"

using namespace foodfuse;

namespace {

double now_ms() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e30;
    for (int r = 0; r < reps; r++) {
        const double t0 = now_ms();
        f();
        best = std::min(best, now_ms() - t0);
    }
    return best;
}

void bench_gemm(int M, int N, int K) {
    RngStream rng(42, "bench", static_cast<uint64_t>(M * 131071 + N * 8191 + K));
    std::vector<float> a(static_cast<size_t>(M) * K), b(static_cast<size_t>(K) * N);
    std::vector<float> cs(static_cast<size_t>(M) * N), cp(cs.size());
    rng.fill_uniform(a.data(), static_cast<int64_t>(a.size()), -1.0, 1.0);
    rng.fill_uniform(b.data(), static_cast<int64_t>(b.size()), -1.0, 1.0);

    const double ts = time_best_of(3, [&] { gemm_nn_serial(M, N, K, a.data(), b.data(), cs.data(), false); });
    const double tp = time_best_of(3, [&] { gemm_nn_parallel(M, N, K, a.data(), b.data(), cp.data(), false); });
    const bool same = std::memcmp(cs.data(), cp.data(), cs.size() * sizeof(float)) == 0;
    const double gflop = 2.0 * M * N * K / 1e9;
    std::printf("gemm_nn %4dx%4dx%4d  serial %8.2f ms (%6.2f GF/s)  parallel %8.2f ms (%6.2f GF/s)  speedup %5.2fx  bitwise %s\n",
                M, N, K, ts, gflop / (ts / 1e3), tp, gflop / (tp / 1e3), ts / tp, same ? "equal" : "DIFFER");
}

void bench_im2col(int C, int H, int W, int k) {
    RngStream rng(42, "bench-im2col", static_cast<uint64_t>(C * 31 + H));
    const int oh = H - k + 1, ow = W - k + 1;
    std::vector<float> src(static_cast<size_t>(C) * H * W);
    std::vector<float> cols_s(static_cast<size_t>(C) * k * k * oh * ow), cols_p(cols_s.size());
    rng.fill_uniform(src.data(), static_cast<int64_t>(src.size()), -1.0, 1.0);

    set_kernel_mode(KernelMode::serial);
    const double ts = time_best_of(3, [&] { im2col(src.data(), C, H, W, k, k, 1, 0, oh, ow, cols_s.data()); });
    set_kernel_mode(KernelMode::parallel);
    const double tp = time_best_of(3, [&] { im2col(src.data(), C, H, W, k, k, 1, 0, oh, ow, cols_p.data()); });
    const bool same = std::memcmp(cols_s.data(), cols_p.data(), cols_s.size() * sizeof(float)) == 0;
    std::printf("im2col  C=%3d %3dx%3d k=%d   serial %8.2f ms              parallel %8.2f ms              speedup %5.2fx  bitwise %s\n",
                C, H, W, k, ts, tp, ts / tp, same ? "equal" : "DIFFER");
}

}  // namespace

int main() {
    std::printf("serial reference vs OpenMP kernels (best of 3)\n\n");
    bench_gemm(128, 128, 128);
    bench_gemm(256, 256, 256);
    bench_gemm(512, 512, 512);
    bench_gemm(64, 1024, 288);
    std::printf("\n");
    bench_im2col(32, 64, 64, 3);
    bench_im2col(64, 32, 32, 3);
    set_kernel_mode(KernelMode::parallel);
    return 0;
}
