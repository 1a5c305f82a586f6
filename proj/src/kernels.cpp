#include "foodfuse/kernels.hpp"

#include <cstring>

namespace foodfuse {

static KernelMode g_mode = KernelMode::parallel;

void set_kernel_mode(KernelMode m) { g_mode = m; }
KernelMode kernel_mode() { return g_mode; }

// ---------------------------------------------------------------------------
// gemm_nn: row-major, ikj order. The k loop is outermost per output row so
// each C[m,n] accumulates in ascending k regardless of threading.
// ---------------------------------------------------------------------------

// kept out of line so the serial and OpenMP flavors run identical code
template <typename T>
__attribute__((noinline)) static void gemm_nn_row(int N, int K, const T* a_row, const T* B, T* c_row, bool accumulate) {
    if (!accumulate) {
        for (int n = 0; n < N; n++) c_row[n] = T(0);
    }
    for (int k = 0; k < K; k++) {
        const T a = a_row[k];
        if (a == T(0)) continue;
        const T* b_row = B + static_cast<int64_t>(k) * N;
        for (int n = 0; n < N; n++) c_row[n] += a * b_row[n];
    }
}

template <typename T>
void gemm_nn_serial(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
    for (int m = 0; m < M; m++) {
        gemm_nn_row(N, K, A + static_cast<int64_t>(m) * K, B, C + static_cast<int64_t>(m) * N, accumulate);
    }
}

template <typename T>
void gemm_nn_parallel(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int m = 0; m < M; m++) {
        gemm_nn_row(N, K, A + static_cast<int64_t>(m) * K, B, C + static_cast<int64_t>(m) * N, accumulate);
    }
}

// ---------------------------------------------------------------------------
// gemm_nt: C[m,n] = dot(A row m, B row n). Plain dot products, ascending k.
// ---------------------------------------------------------------------------

template <typename T>
__attribute__((noinline)) static void gemm_nt_row(int N, int K, const T* a_row, const T* B, T* c_row, bool accumulate) {
    for (int n = 0; n < N; n++) {
        const T* b_row = B + static_cast<int64_t>(n) * K;
        T acc = T(0);
        for (int k = 0; k < K; k++) acc += a_row[k] * b_row[k];
        if (accumulate) {
            c_row[n] += acc;
        } else {
            c_row[n] = acc;
        }
    }
}

template <typename T>
void gemm_nt_serial(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
    for (int m = 0; m < M; m++) {
        gemm_nt_row(N, K, A + static_cast<int64_t>(m) * K, B, C + static_cast<int64_t>(m) * N, accumulate);
    }
}

template <typename T>
void gemm_nt_parallel(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int m = 0; m < M; m++) {
        gemm_nt_row(N, K, A + static_cast<int64_t>(m) * K, B, C + static_cast<int64_t>(m) * N, accumulate);
    }
}

// ---------------------------------------------------------------------------
// gemm_tn: C[m,n] = sum_k A[k,m] * B[k,n]. Parallel over output rows m; the
// inner accumulation walks k ascending with stride-M access into A.
// ---------------------------------------------------------------------------

template <typename T>
__attribute__((noinline)) static void gemm_tn_row(int m, int M, int N, int K, const T* A, const T* B, T* c_row, bool accumulate) {
    if (!accumulate) {
        for (int n = 0; n < N; n++) c_row[n] = T(0);
    }
    for (int k = 0; k < K; k++) {
        const T a = A[static_cast<int64_t>(k) * M + m];
        if (a == T(0)) continue;
        const T* b_row = B + static_cast<int64_t>(k) * N;
        for (int n = 0; n < N; n++) c_row[n] += a * b_row[n];
    }
}

template <typename T>
void gemm_tn_serial(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
    for (int m = 0; m < M; m++) {
        gemm_tn_row(m, M, N, K, A, B, C + static_cast<int64_t>(m) * N, accumulate);
    }
}

template <typename T>
void gemm_tn_parallel(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int m = 0; m < M; m++) {
        gemm_tn_row(m, M, N, K, A, B, C + static_cast<int64_t>(m) * N, accumulate);
    }
}

template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
    if (g_mode == KernelMode::parallel) {
        gemm_nn_parallel(M, N, K, A, B, C, accumulate);
    } else {
        gemm_nn_serial(M, N, K, A, B, C, accumulate);
    }
}

template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
    if (g_mode == KernelMode::parallel) {
        gemm_nt_parallel(M, N, K, A, B, C, accumulate);
    } else {
        gemm_nt_serial(M, N, K, A, B, C, accumulate);
    }
}

template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
    if (g_mode == KernelMode::parallel) {
        gemm_tn_parallel(M, N, K, A, B, C, accumulate);
    } else {
        gemm_tn_serial(M, N, K, A, B, C, accumulate);
    }
}

// ---------------------------------------------------------------------------
// im2col / col2im
// ---------------------------------------------------------------------------

template <typename T>
void im2col(const T* src, int C, int H, int W, int kh, int kw, int stride, int pad,
            int oh, int ow, T* cols) {
    const int64_t plane = static_cast<int64_t>(oh) * ow;
#pragma omp parallel for schedule(static) if (kernel_mode() == KernelMode::parallel)
    for (int c = 0; c < C; c++) {
        for (int ky = 0; ky < kh; ky++) {
            for (int kx = 0; kx < kw; kx++) {
                T* dst = cols + ((static_cast<int64_t>(c) * kh + ky) * kw + kx) * plane;
                for (int y = 0; y < oh; y++) {
                    const int sy = y * stride - pad + ky;
                    if (sy < 0 || sy >= H) {
                        for (int x = 0; x < ow; x++) dst[static_cast<int64_t>(y) * ow + x] = T(0);
                        continue;
                    }
                    const T* src_row = src + (static_cast<int64_t>(c) * H + sy) * W;
                    for (int x = 0; x < ow; x++) {
                        const int sx = x * stride - pad + kx;
                        dst[static_cast<int64_t>(y) * ow + x] =
                            (sx >= 0 && sx < W) ? src_row[sx] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* cols, int C, int H, int W, int kh, int kw, int stride, int pad,
            int oh, int ow, T* dst) {
    const int64_t plane = static_cast<int64_t>(oh) * ow;
#pragma omp parallel for schedule(static) if (kernel_mode() == KernelMode::parallel)
    for (int c = 0; c < C; c++) {
        for (int y = 0; y < H; y++) {
            for (int x = 0; x < W; x++) {
                T acc = T(0);
                for (int ky = 0; ky < kh; ky++) {
                    const int ty = y + pad - ky;
                    if (ty < 0 || ty % stride != 0) continue;
                    const int oy = ty / stride;
                    if (oy >= oh) continue;
                    for (int kx = 0; kx < kw; kx++) {
                        const int tx = x + pad - kx;
                        if (tx < 0 || tx % stride != 0) continue;
                        const int ox = tx / stride;
                        if (ox >= ow) continue;
                        acc += cols[((static_cast<int64_t>(c) * kh + ky) * kw + kx) * plane +
                                    static_cast<int64_t>(oy) * ow + ox];
                    }
                }
                dst[(static_cast<int64_t>(c) * H + y) * W + x] += acc;
            }
        }
    }
}

#define FF_INSTANTIATE_KERNELS(T)                                                              \
    template void gemm_nn_serial<T>(int, int, int, const T*, const T*, T*, bool);              \
    template void gemm_nn_parallel<T>(int, int, int, const T*, const T*, T*, bool);            \
    template void gemm_nt_serial<T>(int, int, int, const T*, const T*, T*, bool);              \
    template void gemm_nt_parallel<T>(int, int, int, const T*, const T*, T*, bool);            \
    template void gemm_tn_serial<T>(int, int, int, const T*, const T*, T*, bool);              \
    template void gemm_tn_parallel<T>(int, int, int, const T*, const T*, T*, bool);            \
    template void gemm_nn<T>(int, int, int, const T*, const T*, T*, bool);                     \
    template void gemm_nt<T>(int, int, int, const T*, const T*, T*, bool);                     \
    template void gemm_tn<T>(int, int, int, const T*, const T*, T*, bool);                     \
    template void im2col<T>(const T*, int, int, int, int, int, int, int, int, int, T*);        \
    template void col2im<T>(const T*, int, int, int, int, int, int, int, int, int, T*);

FF_INSTANTIATE_KERNELS(float)
FF_INSTANTIATE_KERNELS(double)

#undef FF_INSTANTIATE_KERNELS

}  // namespace foodfuse
