#pragma once

#include <cstdint>

namespace foodfuse {

// Dense kernels backing the tensor ops. Every kernel comes in a serial
// reference flavor and an OpenMP flavor; both accumulate each output element
// in the same order, so the two paths (and any thread count) produce
// bit-identical results. The global mode picks the flavor used by the ops.
enum class KernelMode { serial, parallel };

void set_kernel_mode(KernelMode m);
KernelMode kernel_mode();

// C[M,N] = A[M,K] * B[K,N]   (+= when accumulate)
template <typename T>
void gemm_nn_serial(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);
template <typename T>
void gemm_nn_parallel(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);

// C[M,N] = A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt_serial(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);
template <typename T>
void gemm_nt_parallel(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);

// C[M,N] = A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn_serial(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);
template <typename T>
void gemm_tn_parallel(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);

// Mode-dispatched entry points used by the ops layer.
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate = false);
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate = false);
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate = false);

// im2col for one image: src [C,H,W] -> cols [C*kh*kw, oh*ow].
template <typename T>
void im2col(const T* src, int C, int H, int W, int kh, int kw, int stride, int pad,
            int oh, int ow, T* cols);

// Gather-form adjoint of im2col: dst [C,H,W] += scatter(cols). Each input
// pixel sums its own contributions, so the loop parallelizes without races.
template <typename T>
void col2im(const T* cols, int C, int H, int W, int kh, int kw, int stride, int pad,
            int oh, int ow, T* dst);

}  // namespace foodfuse
