#include "foodfuse/ops.hpp"

#include <algorithm>
#include <cmath>

#include "foodfuse/kernels.hpp"

namespace foodfuse {

namespace {

// broadcast classification for add/sub/mul
enum class Bcast { same, suffix, scalar };

template <typename T>
Bcast classify(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() == b.shape()) return Bcast::same;
    if (b.numel() == 1) return Bcast::scalar;
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sb.size() < sa.size() &&
        std::equal(sb.begin(), sb.end(), sa.end() - static_cast<int64_t>(sb.size())))
        return Bcast::suffix;
    throw ShapeError(op, sa, sb);
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------

template <typename T>
static Tensor<T> binary_elementwise(const char* name, const Tensor<T>& a, const Tensor<T>& b,
                                    bool is_mul, double b_sign = 1.0) {
    Bcast bc = classify(name, a, b);
    auto an = a.node(), bn = b.node();
    const int64_t n = a.numel();
    const int64_t bn_n = b.numel();
    Tensor<T> out = detail::make_result<T>(
        a.shape(), {an, bn}, [an, bn, bc, is_mul, b_sign](TensorNode<T>& self) {
            const int64_t n = self.numel();
            const int64_t m = bn->numel();
            if (is_mul) {
                if (an->requires_grad) {
                    an->ensure_grad();
                    if (bc == Bcast::same) {
                        for (int64_t i = 0; i < n; i++)
                            an->grad[i] += self.grad[i] * bn->value[i];
                    } else {
                        for (int64_t r = 0; r < n / m; r++)
                            for (int64_t i = 0; i < m; i++)
                                an->grad[r * m + i] += self.grad[r * m + i] * bn->value[i];
                    }
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    if (bc == Bcast::same) {
                        for (int64_t i = 0; i < n; i++)
                            bn->grad[i] += self.grad[i] * an->value[i];
                    } else {
                        for (int64_t r = 0; r < n / m; r++)
                            for (int64_t i = 0; i < m; i++)
                                bn->grad[i] += self.grad[r * m + i] * an->value[r * m + i];
                    }
                }
            } else {
                const T sgn = static_cast<T>(b_sign);
                if (an->requires_grad) {
                    an->ensure_grad();
                    for (int64_t i = 0; i < n; i++) an->grad[i] += self.grad[i];
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    if (bc == Bcast::same) {
                        for (int64_t i = 0; i < n; i++) bn->grad[i] += sgn * self.grad[i];
                    } else {
                        for (int64_t r = 0; r < n / m; r++)
                            for (int64_t i = 0; i < m; i++)
                                bn->grad[i] += sgn * self.grad[r * m + i];
                    }
                }
            }
        });
    T* o = out.data();
    const T* pa = a.data();
    const T* pb = b.data();
    const T sgn = static_cast<T>(b_sign);
    if (is_mul) {
        if (bc == Bcast::same) {
            for (int64_t i = 0; i < n; i++) o[i] = pa[i] * pb[i];
        } else {
            for (int64_t r = 0; r < n / bn_n; r++)
                for (int64_t i = 0; i < bn_n; i++) o[r * bn_n + i] = pa[r * bn_n + i] * pb[i];
        }
    } else {
        if (bc == Bcast::same) {
            for (int64_t i = 0; i < n; i++) o[i] = pa[i] + sgn * pb[i];
        } else {
            for (int64_t r = 0; r < n / bn_n; r++)
                for (int64_t i = 0; i < bn_n; i++) o[r * bn_n + i] = pa[r * bn_n + i] + sgn * pb[i];
        }
    }
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_elementwise("add", a, b, false, 1.0);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_elementwise("sub", a, b, false, -1.0);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_elementwise("mul", a, b, true);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double c) {
    auto an = a.node();
    Tensor<T> out = detail::make_result<T>(a.shape(), {an}, [an, c](TensorNode<T>& self) {
        an->ensure_grad();
        const T cc = static_cast<T>(c);
        for (int64_t i = 0; i < self.numel(); i++) an->grad[i] += cc * self.grad[i];
    });
    const T cc = static_cast<T>(c);
    for (int64_t i = 0; i < a.numel(); i++) out.data()[i] = cc * a.data()[i];
    return out;
}

template <typename T>
Tensor<T> scale_per_batch(const Tensor<T>& x, const Tensor<T>& s) {
    if (x.ndim() < 1 || s.ndim() != 1 || s.dim(0) != x.dim(0))
        throw ShapeError("scale_per_batch", x.shape(), s.shape());
    auto xn = x.node(), sn = s.node();
    const int B = x.dim(0);
    const int64_t stride = x.numel() / B;
    Tensor<T> out = detail::make_result<T>(x.shape(), {xn, sn}, [xn, sn, B, stride](TensorNode<T>& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (int b = 0; b < B; b++) {
                const T sv = sn->value[static_cast<size_t>(b)];
                for (int64_t i = 0; i < stride; i++)
                    xn->grad[b * stride + i] += sv * self.grad[b * stride + i];
            }
        }
        if (sn->requires_grad) {
            sn->ensure_grad();
            for (int b = 0; b < B; b++) {
                T acc = T(0);
                for (int64_t i = 0; i < stride; i++)
                    acc += self.grad[b * stride + i] * xn->value[b * stride + i];
                sn->grad[static_cast<size_t>(b)] += acc;
            }
        }
    });
    for (int b = 0; b < B; b++) {
        const T sv = s.data()[b];
        for (int64_t i = 0; i < stride; i++) out.data()[b * stride + i] = sv * x.data()[b * stride + i];
    }
    return out;
}

template <typename T>
Tensor<T> add_per_channel(const Tensor<T>& x, const Tensor<T>& b) {
    if (x.ndim() != 4 || b.ndim() != 2 || b.dim(0) != x.dim(0) || b.dim(1) != x.dim(1))
        throw ShapeError("add_per_channel", x.shape(), b.shape());
    auto xn = x.node(), bn = b.node();
    const int B = x.dim(0), C = x.dim(1);
    const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    Tensor<T> out = detail::make_result<T>(x.shape(), {xn, bn}, [xn, bn, B, C, hw](TensorNode<T>& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (int64_t i = 0; i < self.numel(); i++) xn->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t p = 0; p < static_cast<int64_t>(B) * C; p++) {
                T acc = T(0);
                const T* g = self.grad.data() + p * hw;
                for (int64_t i = 0; i < hw; i++) acc += g[i];
                bn->grad[p] += acc;
            }
        }
    });
    for (int64_t p = 0; p < static_cast<int64_t>(B) * C; p++) {
        const T bv = b.data()[p];
        const T* src = x.data() + p * hw;
        T* dst = out.data() + p * hw;
        for (int64_t i = 0; i < hw; i++) dst[i] = src[i] + bv;
    }
    return out;
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    int B = 1, M, K, N;
    bool batched_a = false, batched_b = false;
    if (sa.size() == 2 && sb.size() == 2) {
        M = sa[0]; K = sa[1]; N = sb[1];
        if (sb[0] != K) throw ShapeError("matmul", sa, sb);
    } else if (sa.size() == 3 && sb.size() == 2) {
        B = sa[0]; M = sa[1]; K = sa[2]; N = sb[1];
        batched_a = true;
        if (sb[0] != K) throw ShapeError("matmul", sa, sb);
    } else if (sa.size() == 3 && sb.size() == 3) {
        B = sa[0]; M = sa[1]; K = sa[2]; N = sb[2];
        batched_a = batched_b = true;
        if (sb[0] != B || sb[1] != K) throw ShapeError("matmul", sa, sb);
    } else {
        throw ShapeError("matmul", sa, sb);
    }
    Shape out_shape = batched_a ? Shape{B, M, N} : Shape{M, N};
    auto an = a.node(), bn = b.node();
    Tensor<T> out = detail::make_result<T>(
        out_shape, {an, bn}, [an, bn, B, M, K, N, batched_b](TensorNode<T>& self) {
            const int64_t a_stride = static_cast<int64_t>(M) * K;
            const int64_t b_stride = batched_b ? static_cast<int64_t>(K) * N : 0;
            const int64_t g_stride = static_cast<int64_t>(M) * N;
            if (an->requires_grad) {
                an->ensure_grad();
                for (int i = 0; i < B; i++)
                    gemm_nt(M, K, N, self.grad.data() + i * g_stride,
                            bn->value.data() + i * b_stride, an->grad.data() + i * a_stride, true);
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                // shared rhs accumulates over the batch in ascending order
                for (int i = 0; i < B; i++)
                    gemm_tn(K, N, M, an->value.data() + i * a_stride,
                            self.grad.data() + i * g_stride, bn->grad.data() + i * b_stride, true);
            }
        });
    const int64_t a_stride = static_cast<int64_t>(M) * K;
    const int64_t b_stride = batched_b ? static_cast<int64_t>(K) * N : 0;
    const int64_t o_stride = static_cast<int64_t>(M) * N;
    for (int i = 0; i < B; i++)
        gemm_nn(M, N, K, a.data() + i * a_stride, b.data() + i * b_stride,
                out.data() + i * o_stride, false);
    return out;
}

// ---------------------------------------------------------------------------
// conv2d (im2col + matmul, one well-tested matmul path)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride, int pad) {
    if (x.ndim() != 4 || w.ndim() != 4 || x.dim(1) != w.dim(1))
        throw ShapeError("conv2d", x.shape(), w.shape());
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const bool has_bias = bias.defined();
    if (has_bias && (bias.ndim() != 1 || bias.dim(0) != Cout))
        throw ShapeError("conv2d", w.shape(), bias.shape());
    const int oh = (H + 2 * pad - kh) / stride + 1;
    const int ow = (W + 2 * pad - kw) / stride + 1;
    if (oh <= 0 || ow <= 0) throw ShapeError("conv2d", "kernel larger than padded input");
    const int ckk = C * kh * kw;
    const int64_t plane = static_cast<int64_t>(oh) * ow;

    // cols saved for the backward pass: [N][ckk, oh*ow]
    auto cols = std::make_shared<std::vector<T>>(static_cast<size_t>(N) * ckk * plane);
    const int64_t x_stride = static_cast<int64_t>(C) * H * W;
    for (int n = 0; n < N; n++)
        im2col(x.data() + n * x_stride, C, H, W, kh, kw, stride, pad, oh, ow,
               cols->data() + static_cast<int64_t>(n) * ckk * plane);

    auto xn = x.node(), wn = w.node();
    auto bn = has_bias ? bias.node() : nullptr;
    std::vector<std::shared_ptr<TensorNode<T>>> parents = {xn, wn};
    if (has_bias) parents.push_back(bn);

    Tensor<T> out = detail::make_result<T>(
        {N, Cout, oh, ow}, std::move(parents),
        [xn, wn, bn, cols, N, C, H, W, Cout, kh, kw, stride, pad, oh, ow](TensorNode<T>& self) {
            const int ckk = C * kh * kw;
            const int64_t plane = static_cast<int64_t>(oh) * ow;
            const int64_t g_stride = static_cast<int64_t>(Cout) * plane;
            const int64_t x_stride = static_cast<int64_t>(C) * H * W;
            if (wn->requires_grad) {
                wn->ensure_grad();
                for (int n = 0; n < N; n++)
                    gemm_nt(Cout, ckk, static_cast<int>(plane), self.grad.data() + n * g_stride,
                            cols->data() + static_cast<int64_t>(n) * ckk * plane,
                            wn->grad.data(), true);
            }
            if (bn && bn->requires_grad) {
                bn->ensure_grad();
                for (int n = 0; n < N; n++)
                    for (int c = 0; c < Cout; c++) {
                        T acc = T(0);
                        const T* g = self.grad.data() + n * g_stride + c * plane;
                        for (int64_t i = 0; i < plane; i++) acc += g[i];
                        bn->grad[static_cast<size_t>(c)] += acc;
                    }
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                std::vector<T> dcols(static_cast<size_t>(ckk) * plane);
                for (int n = 0; n < N; n++) {
                    gemm_tn(ckk, static_cast<int>(plane), Cout, wn->value.data(),
                            self.grad.data() + n * g_stride, dcols.data(), false);
                    col2im(dcols.data(), C, H, W, kh, kw, stride, pad, oh, ow,
                           xn->grad.data() + n * x_stride);
                }
            }
        });

    const int64_t o_stride = static_cast<int64_t>(Cout) * plane;
    for (int n = 0; n < N; n++)
        gemm_nn(Cout, static_cast<int>(plane), ckk, w.data(),
                cols->data() + static_cast<int64_t>(n) * ckk * plane, out.data() + n * o_stride,
                false);
    if (has_bias) {
        for (int n = 0; n < N; n++)
            for (int c = 0; c < Cout; c++) {
                T* o = out.data() + n * o_stride + c * plane;
                const T bv = bias.data()[c];
                for (int64_t i = 0; i < plane; i++) o[i] += bv;
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int groups, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps) {
    if (x.ndim() != 4) throw ShapeError("group_norm", "expected (N,C,H,W), got " + shape_str(x.shape()));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (C % groups != 0)
        throw ShapeError("group_norm", "channels " + std::to_string(C) + " not divisible by groups " +
                                           std::to_string(groups));
    if (gamma.ndim() != 1 || gamma.dim(0) != C) throw ShapeError("group_norm", x.shape(), gamma.shape());
    if (beta.ndim() != 1 || beta.dim(0) != C) throw ShapeError("group_norm", x.shape(), beta.shape());

    const int cg = C / groups;
    const int64_t hw = static_cast<int64_t>(H) * W;
    const int64_t gsz = cg * hw;
    auto stats = std::make_shared<std::vector<double>>(static_cast<size_t>(N) * groups * 2);
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();

    Tensor<T> out = detail::make_result<T>(
        x.shape(), {xn, gn, bn}, [xn, gn, bn, stats, N, C, H, W, groups](TensorNode<T>& self) {
            const int cg = C / groups;
            const int64_t hw = static_cast<int64_t>(H) * W;
            const int64_t gsz = cg * hw;
            std::vector<T> xhat(static_cast<size_t>(gsz));
            for (int n = 0; n < N; n++) {
                for (int g = 0; g < groups; g++) {
                    const double mean = (*stats)[(static_cast<size_t>(n) * groups + g) * 2];
                    const double istd = (*stats)[(static_cast<size_t>(n) * groups + g) * 2 + 1];
                    const int64_t base = (static_cast<int64_t>(n) * C + static_cast<int64_t>(g) * cg) * hw;
                    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                    for (int64_t i = 0; i < gsz; i++) {
                        const int c = g * cg + static_cast<int>(i / hw);
                        const T xh = static_cast<T>((xn->value[base + i] - mean) * istd);
                        xhat[static_cast<size_t>(i)] = xh;
                        const double dxh = static_cast<double>(self.grad[base + i]) * gn->value[c];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xh;
                    }
                    if (gn->requires_grad || bn->requires_grad) {
                        gn->ensure_grad();
                        bn->ensure_grad();
                        for (int c0 = 0; c0 < cg; c0++) {
                            const int c = g * cg + c0;
                            double dg = 0.0, db = 0.0;
                            for (int64_t i = 0; i < hw; i++) {
                                const double gr = self.grad[base + c0 * hw + i];
                                dg += gr * xhat[static_cast<size_t>(c0 * hw + i)];
                                db += gr;
                            }
                            gn->grad[c] += static_cast<T>(dg);
                            bn->grad[c] += static_cast<T>(db);
                        }
                    }
                    if (xn->requires_grad) {
                        xn->ensure_grad();
                        const double inv_m = 1.0 / static_cast<double>(gsz);
                        for (int64_t i = 0; i < gsz; i++) {
                            const int c = g * cg + static_cast<int>(i / hw);
                            const double dxh = static_cast<double>(self.grad[base + i]) * gn->value[c];
                            xn->grad[base + i] += static_cast<T>(
                                istd * (dxh - inv_m * sum_dxhat -
                                        xhat[static_cast<size_t>(i)] * inv_m * sum_dxhat_xhat));
                        }
                    }
                }
            }
        });

#pragma omp parallel for collapse(2) schedule(static) if (kernel_mode() == KernelMode::parallel)
    for (int n = 0; n < N; n++) {
        for (int g = 0; g < groups; g++) {
            const int64_t base = (static_cast<int64_t>(n) * C + static_cast<int64_t>(g) * cg) * hw;
            double sum = 0.0, sq = 0.0;
            for (int64_t i = 0; i < gsz; i++) {
                const double v = x.data()[base + i];
                sum += v;
                sq += v * v;
            }
            const double mean = sum / static_cast<double>(gsz);
            const double var = std::max(0.0, sq / static_cast<double>(gsz) - mean * mean);
            const double istd = 1.0 / std::sqrt(var + eps);
            (*stats)[(static_cast<size_t>(n) * groups + g) * 2] = mean;
            (*stats)[(static_cast<size_t>(n) * groups + g) * 2 + 1] = istd;
            for (int64_t i = 0; i < gsz; i++) {
                const int c = g * cg + static_cast<int>(i / hw);
                out.data()[base + i] = static_cast<T>(
                    (x.data()[base + i] - mean) * istd * gamma.data()[c] + beta.data()[c]);
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
    const int D = x.dim(x.ndim() - 1);
    if (gamma.ndim() != 1 || gamma.dim(0) != D) throw ShapeError("layer_norm", x.shape(), gamma.shape());
    if (beta.ndim() != 1 || beta.dim(0) != D) throw ShapeError("layer_norm", x.shape(), beta.shape());
    const int64_t rows = x.numel() / D;
    auto stats = std::make_shared<std::vector<double>>(static_cast<size_t>(rows) * 2);
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();

    Tensor<T> out = detail::make_result<T>(
        x.shape(), {xn, gn, bn}, [xn, gn, bn, stats, rows, D](TensorNode<T>& self) {
            for (int64_t r = 0; r < rows; r++) {
                const double mean = (*stats)[static_cast<size_t>(r) * 2];
                const double istd = (*stats)[static_cast<size_t>(r) * 2 + 1];
                const int64_t base = r * D;
                double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                for (int d = 0; d < D; d++) {
                    const double xh = (xn->value[base + d] - mean) * istd;
                    const double dxh = static_cast<double>(self.grad[base + d]) * gn->value[d];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xh;
                }
                if (gn->requires_grad || bn->requires_grad) {
                    gn->ensure_grad();
                    bn->ensure_grad();
                    for (int d = 0; d < D; d++) {
                        const double xh = (xn->value[base + d] - mean) * istd;
                        gn->grad[d] += static_cast<T>(self.grad[base + d] * xh);
                        bn->grad[d] += self.grad[base + d];
                    }
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    const double inv_d = 1.0 / D;
                    for (int d = 0; d < D; d++) {
                        const double xh = (xn->value[base + d] - mean) * istd;
                        const double dxh = static_cast<double>(self.grad[base + d]) * gn->value[d];
                        xn->grad[base + d] +=
                            static_cast<T>(istd * (dxh - inv_d * sum_dxh - xh * inv_d * sum_dxh_xh));
                    }
                }
            }
        });

#pragma omp parallel for schedule(static) if (kernel_mode() == KernelMode::parallel)
    for (int64_t r = 0; r < rows; r++) {
        const int64_t base = r * D;
        double sum = 0.0, sq = 0.0;
        for (int d = 0; d < D; d++) {
            const double v = x.data()[base + d];
            sum += v;
            sq += v * v;
        }
        const double mean = sum / D;
        const double var = std::max(0.0, sq / D - mean * mean);
        const double istd = 1.0 / std::sqrt(var + eps);
        (*stats)[static_cast<size_t>(r) * 2] = mean;
        (*stats)[static_cast<size_t>(r) * 2 + 1] = istd;
        for (int d = 0; d < D; d++)
            out.data()[base + d] = static_cast<T>(
                (x.data()[base + d] - mean) * istd * gamma.data()[d] + beta.data()[d]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// softmax / activations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
    const int D = x.dim(x.ndim() - 1);
    const int64_t rows = x.numel() / D;
    auto xn = x.node();
    // backward reads the saved output: dx = (g - dot(g, y)) * y per row
    Tensor<T> out = detail::make_result<T>(x.shape(), {xn}, [xn, rows, D](TensorNode<T>& self) {
        xn->ensure_grad();
        for (int64_t r = 0; r < rows; r++) {
            const int64_t base = r * D;
            double dot = 0.0;
            for (int d = 0; d < D; d++) dot += static_cast<double>(self.grad[base + d]) * self.value[base + d];
            for (int d = 0; d < D; d++)
                xn->grad[base + d] +=
                    static_cast<T>((static_cast<double>(self.grad[base + d]) - dot) * self.value[base + d]);
        }
    });
#pragma omp parallel for schedule(static) if (kernel_mode() == KernelMode::parallel)
    for (int64_t r = 0; r < rows; r++) {
        const int64_t base = r * D;
        T mx = x.data()[base];
        for (int d = 1; d < D; d++) mx = std::max(mx, x.data()[base + d]);
        double sum = 0.0;
        for (int d = 0; d < D; d++) {
            const double e = std::exp(static_cast<double>(x.data()[base + d] - mx));
            out.data()[base + d] = static_cast<T>(e);
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (int d = 0; d < D; d++) out.data()[base + d] = static_cast<T>(out.data()[base + d] * inv);
    }
    return out;
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
    auto xn = x.node();
    Tensor<T> out = detail::make_result<T>(x.shape(), {xn}, [xn](TensorNode<T>& self) {
        xn->ensure_grad();
        for (int64_t i = 0; i < self.numel(); i++) {
            const double v = xn->value[i];
            const double s = 1.0 / (1.0 + std::exp(-v));
            xn->grad[i] += static_cast<T>(self.grad[i] * (s * (1.0 + v * (1.0 - s))));
        }
    });
    for (int64_t i = 0; i < x.numel(); i++) {
        const double v = x.data()[i];
        out.data()[i] = static_cast<T>(v / (1.0 + std::exp(-v)));
    }
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    auto xn = x.node();
    Tensor<T> out = detail::make_result<T>(x.shape(), {xn}, [xn](TensorNode<T>& self) {
        xn->ensure_grad();
        for (int64_t i = 0; i < self.numel(); i++) {
            const double y = self.value[i];
            xn->grad[i] += static_cast<T>(self.grad[i] * (y * (1.0 - y)));
        }
    });
    for (int64_t i = 0; i < x.numel(); i++) {
        const double v = x.data()[i];
        out.data()[i] = static_cast<T>(1.0 / (1.0 + std::exp(-v)));
    }
    return out;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    auto xn = x.node();
    Tensor<T> out = detail::make_result<T>(x.shape(), {xn}, [xn](TensorNode<T>& self) {
        xn->ensure_grad();
        for (int64_t i = 0; i < self.numel(); i++) {
            const double v = xn->value[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            xn->grad[i] += static_cast<T>(self.grad[i] * (cdf + v * pdf));
        }
    });
    for (int64_t i = 0; i < x.numel(); i++) {
        const double v = x.data()[i];
        out.data()[i] = static_cast<T>(v * 0.5 * (1.0 + std::erf(v * kInvSqrt2)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// resampling
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> nearest_upsample(const Tensor<T>& x, int factor) {
    if (x.ndim() != 4) throw ShapeError("nearest_upsample", "expected (N,C,H,W), got " + shape_str(x.shape()));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int OH = H * factor, OW = W * factor;
    auto xn = x.node();
    Tensor<T> out = detail::make_result<T>({N, C, OH, OW}, {xn}, [xn, N, C, H, W, factor](TensorNode<T>& self) {
        xn->ensure_grad();
        const int OW = W * factor;
        for (int64_t p = 0; p < static_cast<int64_t>(N) * C; p++) {
            const T* g = self.grad.data() + p * (static_cast<int64_t>(H) * factor) * OW;
            T* dx = xn->grad.data() + p * static_cast<int64_t>(H) * W;
            for (int y = 0; y < H; y++)
                for (int x2 = 0; x2 < W; x2++) {
                    T acc = T(0);
                    for (int fy = 0; fy < factor; fy++)
                        for (int fx = 0; fx < factor; fx++)
                            acc += g[(static_cast<int64_t>(y) * factor + fy) * OW + x2 * factor + fx];
                    dx[static_cast<int64_t>(y) * W + x2] += acc;
                }
        }
    });
    for (int64_t p = 0; p < static_cast<int64_t>(N) * C; p++) {
        const T* src = x.data() + p * static_cast<int64_t>(H) * W;
        T* dst = out.data() + p * static_cast<int64_t>(OH) * OW;
        for (int y = 0; y < OH; y++)
            for (int x2 = 0; x2 < OW; x2++)
                dst[static_cast<int64_t>(y) * OW + x2] = src[static_cast<int64_t>(y / factor) * W + x2 / factor];
    }
    return out;
}

template <typename T>
Tensor<T> avg_downsample(const Tensor<T>& x, int factor) {
    if (x.ndim() != 4) throw ShapeError("avg_downsample", "expected (N,C,H,W), got " + shape_str(x.shape()));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % factor != 0 || W % factor != 0)
        throw ShapeError("avg_downsample", "extents " + shape_str(x.shape()) + " not divisible by factor " +
                                               std::to_string(factor));
    const int OH = H / factor, OW = W / factor;
    const double inv = 1.0 / (factor * factor);
    auto xn = x.node();
    Tensor<T> out = detail::make_result<T>({N, C, OH, OW}, {xn}, [xn, N, C, H, W, factor, inv](TensorNode<T>& self) {
        xn->ensure_grad();
        const int OW = W / factor;
        for (int64_t p = 0; p < static_cast<int64_t>(N) * C; p++) {
            const T* g = self.grad.data() + p * (static_cast<int64_t>(H) / factor) * OW;
            T* dx = xn->grad.data() + p * static_cast<int64_t>(H) * W;
            for (int y = 0; y < H; y++)
                for (int x2 = 0; x2 < W; x2++)
                    dx[static_cast<int64_t>(y) * W + x2] += static_cast<T>(
                        g[(static_cast<int64_t>(y) / factor) * OW + x2 / factor] * inv);
        }
    });
    for (int64_t p = 0; p < static_cast<int64_t>(N) * C; p++) {
        const T* src = x.data() + p * static_cast<int64_t>(H) * W;
        T* dst = out.data() + p * static_cast<int64_t>(OH) * OW;
        for (int y = 0; y < OH; y++)
            for (int x2 = 0; x2 < OW; x2++) {
                double acc = 0.0;
                for (int fy = 0; fy < factor; fy++)
                    for (int fx = 0; fx < factor; fx++)
                        acc += src[(static_cast<int64_t>(y) * factor + fy) * W + x2 * factor + fx];
                dst[static_cast<int64_t>(y) * OW + x2] = static_cast<T>(acc * inv);
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// layout ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
    if (foodfuse::numel(shape) != x.numel()) throw ShapeError("reshape", x.shape(), shape);
    auto xn = x.node();
    Tensor<T> out = detail::make_result<T>(shape, {xn}, [xn](TensorNode<T>& self) {
        xn->ensure_grad();
        for (int64_t i = 0; i < self.numel(); i++) xn->grad[i] += self.grad[i];
    });
    out.vec() = x.vec();
    return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
    if (xs.empty()) throw ShapeError("concat", "no inputs");
    const int nd = xs[0].ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) throw ShapeError("concat", "axis out of range");
    Shape out_shape = xs[0].shape();
    int total = 0;
    for (const auto& t : xs) {
        if (t.ndim() != nd) throw ShapeError("concat", xs[0].shape(), t.shape());
        for (int d = 0; d < nd; d++)
            if (d != axis && t.dim(d) != out_shape[static_cast<size_t>(d)])
                throw ShapeError("concat", xs[0].shape(), t.shape());
        total += t.dim(axis);
    }
    out_shape[static_cast<size_t>(axis)] = total;

    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; d++) outer *= out_shape[static_cast<size_t>(d)];
    for (int d = axis + 1; d < nd; d++) inner *= out_shape[static_cast<size_t>(d)];

    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::vector<int> extents;
    for (const auto& t : xs) {
        parents.push_back(t.node());
        extents.push_back(t.dim(axis));
    }
    auto parents_copy = parents;
    Tensor<T> out = detail::make_result<T>(
        out_shape, std::move(parents), [parents_copy, extents, outer, inner, total](TensorNode<T>& self) {
            int64_t offset = 0;
            for (size_t j = 0; j < parents_copy.size(); j++) {
                auto& p = parents_copy[j];
                const int64_t chunk = static_cast<int64_t>(extents[j]) * inner;
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (int64_t o = 0; o < outer; o++) {
                        const T* g = self.grad.data() + o * (static_cast<int64_t>(total) * inner) + offset;
                        T* dst = p->grad.data() + o * chunk;
                        for (int64_t i = 0; i < chunk; i++) dst[i] += g[i];
                    }
                }
                offset += chunk;
            }
        });
    int64_t offset = 0;
    for (const auto& t : xs) {
        const int64_t chunk = static_cast<int64_t>(t.dim(axis)) * inner;
        for (int64_t o = 0; o < outer; o++) {
            const T* src = t.data() + o * chunk;
            T* dst = out.data() + o * (static_cast<int64_t>(total) * inner) + offset;
            for (int64_t i = 0; i < chunk; i++) dst[i] = src[i];
        }
        offset += chunk;
    }
    return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, const std::vector<int>& perm) {
    const int nd = x.ndim();
    if (static_cast<int>(perm.size()) != nd) throw ShapeError("transpose", "perm rank mismatch");
    Shape out_shape(static_cast<size_t>(nd));
    std::vector<bool> used(static_cast<size_t>(nd), false);
    for (int d = 0; d < nd; d++) {
        const int p = perm[static_cast<size_t>(d)];
        if (p < 0 || p >= nd || used[static_cast<size_t>(p)]) throw ShapeError("transpose", "invalid perm");
        used[static_cast<size_t>(p)] = true;
        out_shape[static_cast<size_t>(d)] = x.dim(p);
    }
    // strides of the input, mapped through perm
    std::vector<int64_t> in_strides(static_cast<size_t>(nd), 1);
    for (int d = nd - 2; d >= 0; d--)
        in_strides[static_cast<size_t>(d)] = in_strides[static_cast<size_t>(d + 1)] * x.dim(d + 1);
    std::vector<int64_t> gather(static_cast<size_t>(nd));
    for (int d = 0; d < nd; d++) gather[static_cast<size_t>(d)] = in_strides[static_cast<size_t>(perm[static_cast<size_t>(d)])];

    auto xn = x.node();
    const int64_t n = x.numel();
    auto index_map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n));
    {
        std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
        for (int64_t i = 0; i < n; i++) {
            int64_t src = 0;
            for (int d = 0; d < nd; d++) src += idx[static_cast<size_t>(d)] * gather[static_cast<size_t>(d)];
            (*index_map)[static_cast<size_t>(i)] = src;
            for (int d = nd - 1; d >= 0; d--) {
                if (++idx[static_cast<size_t>(d)] < out_shape[static_cast<size_t>(d)]) break;
                idx[static_cast<size_t>(d)] = 0;
            }
        }
    }
    Tensor<T> out = detail::make_result<T>(out_shape, {xn}, [xn, index_map](TensorNode<T>& self) {
        xn->ensure_grad();
        for (int64_t i = 0; i < self.numel(); i++) xn->grad[(*index_map)[static_cast<size_t>(i)]] += self.grad[i];
    });
    for (int64_t i = 0; i < n; i++) out.data()[i] = x.data()[(*index_map)[static_cast<size_t>(i)]];
    return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int start, int len) {
    const int nd = x.ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd || start < 0 || len <= 0 || start + len > x.dim(axis))
        throw ShapeError("slice", "range [" + std::to_string(start) + "," + std::to_string(start + len) +
                                      ") invalid for axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
    Shape out_shape = x.shape();
    out_shape[static_cast<size_t>(axis)] = len;
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; d++) outer *= x.dim(d);
    for (int d = axis + 1; d < nd; d++) inner *= x.dim(d);
    const int64_t in_axis = x.dim(axis);
    auto xn = x.node();
    Tensor<T> out = detail::make_result<T>(out_shape, {xn},
                                           [xn, outer, inner, in_axis, start, len](TensorNode<T>& self) {
                                               xn->ensure_grad();
                                               for (int64_t o = 0; o < outer; o++) {
                                                   const T* g = self.grad.data() + o * len * inner;
                                                   T* dst = xn->grad.data() + (o * in_axis + start) * inner;
                                                   for (int64_t i = 0; i < static_cast<int64_t>(len) * inner; i++)
                                                       dst[i] += g[i];
                                               }
                                           });
    for (int64_t o = 0; o < outer; o++) {
        const T* src = x.data() + (o * in_axis + start) * inner;
        T* dst = out.data() + o * len * inner;
        for (int64_t i = 0; i < static_cast<int64_t>(len) * inner; i++) dst[i] = src[i];
    }
    return out;
}

template <typename T>
Tensor<T> embed_lookup(const Tensor<T>& table, const std::vector<int>& indices) {
    if (table.ndim() != 2) throw ShapeError("embed_lookup", "table must be (V,D), got " + shape_str(table.shape()));
    const int V = table.dim(0), D = table.dim(1);
    for (int id : indices)
        if (id < 0 || id >= V)
            throw ShapeError("embed_lookup", "index " + std::to_string(id) + " out of range for table " +
                                                 shape_str(table.shape()));
    auto tn = table.node();
    auto ids = std::make_shared<std::vector<int>>(indices);
    Tensor<T> out = detail::make_result<T>({static_cast<int>(indices.size()), D}, {tn},
                                           [tn, ids, D](TensorNode<T>& self) {
                                               tn->ensure_grad();
                                               for (size_t i = 0; i < ids->size(); i++) {
                                                   T* dst = tn->grad.data() + static_cast<int64_t>((*ids)[i]) * D;
                                                   const T* g = self.grad.data() + static_cast<int64_t>(i) * D;
                                                   for (int d = 0; d < D; d++) dst[d] += g[d];
                                               }
                                           });
    for (size_t i = 0; i < indices.size(); i++) {
        const T* src = table.data() + static_cast<int64_t>(indices[i]) * D;
        T* dst = out.data() + static_cast<int64_t>(i) * D;
        for (int d = 0; d < D; d++) dst[d] = src[d];
    }
    return out;
}

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw ShapeError("mse", a.shape(), b.shape());
    auto an = a.node(), bn = b.node();
    const int64_t n = a.numel();
    Tensor<T> out = detail::make_result<T>({1}, {an, bn}, [an, bn, n](TensorNode<T>& self) {
        const double g = static_cast<double>(self.grad[0]) * 2.0 / static_cast<double>(n);
        if (an->requires_grad) {
            an->ensure_grad();
            for (int64_t i = 0; i < n; i++)
                an->grad[i] += static_cast<T>(g * (an->value[i] - bn->value[i]));
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t i = 0; i < n; i++)
                bn->grad[i] -= static_cast<T>(g * (an->value[i] - bn->value[i]));
        }
    });
    double acc = 0.0;
    for (int64_t i = 0; i < n; i++) {
        const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
        acc += d * d;
    }
    out.data()[0] = static_cast<T>(acc / static_cast<double>(n));
    return out;
}

template <typename T>
Tensor<T> tile_batch(const Tensor<T>& x, int batch) {
    Shape s = x.shape();
    s.insert(s.begin(), 1);
    Tensor<T> row = reshape(x, s);
    std::vector<Tensor<T>> copies(static_cast<size_t>(batch), row);
    return concat(copies, 0);
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
    const int nd = q.ndim();
    bool ok = nd >= 2 && k.ndim() == nd && v.ndim() == nd &&
              q.dim(nd - 1) == k.dim(nd - 1) && k.dim(nd - 2) == v.dim(nd - 2);
    for (int i = 0; ok && i < nd - 2; i++)
        ok = q.dim(i) == k.dim(i) && k.dim(i) == v.dim(i);
    if (!ok)
        throw ShapeError("attention", "q " + shape_str(q.shape()) + ", k " +
                                          shape_str(k.shape()) + ", v " + shape_str(v.shape()) +
                                          " are inconsistent");
    const int d = q.dim(q.ndim() - 1);
    std::vector<int> perm(static_cast<size_t>(q.ndim()));
    for (size_t i = 0; i < perm.size(); i++) perm[i] = static_cast<int>(i);
    std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
    Tensor<T> scores = matmul(q, transpose(k, perm));            // (..., Lq, Lk)
    Tensor<T> weights = softmax(scale(scores, 1.0 / std::sqrt(static_cast<double>(d))));
    return matmul(weights, v);                                   // (..., Lq, d)
}

#define FF_INSTANTIATE_OPS(T)                                                              \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                         \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                         \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                         \
    template Tensor<T> scale<T>(const Tensor<T>&, double);                                 \
    template Tensor<T> scale_per_batch<T>(const Tensor<T>&, const Tensor<T>&);             \
    template Tensor<T> add_per_channel<T>(const Tensor<T>&, const Tensor<T>&);             \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int); \
    template Tensor<T> group_norm<T>(const Tensor<T>&, int, const Tensor<T>&, const Tensor<T>&, double); \
    template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double); \
    template Tensor<T> softmax<T>(const Tensor<T>&);                                       \
    template Tensor<T> silu<T>(const Tensor<T>&);                                          \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                       \
    template Tensor<T> gelu<T>(const Tensor<T>&);                                          \
    template Tensor<T> nearest_upsample<T>(const Tensor<T>&, int);                         \
    template Tensor<T> avg_downsample<T>(const Tensor<T>&, int);                           \
    template Tensor<T> reshape<T>(const Tensor<T>&, const Shape&);                         \
    template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, int);                      \
    template Tensor<T> transpose<T>(const Tensor<T>&, const std::vector<int>&);            \
    template Tensor<T> slice<T>(const Tensor<T>&, int, int, int);                          \
    template Tensor<T> embed_lookup<T>(const Tensor<T>&, const std::vector<int>&);         \
    template Tensor<T> mse<T>(const Tensor<T>&, const Tensor<T>&);                         \
    template Tensor<T> tile_batch<T>(const Tensor<T>&, int);                               \
    template Tensor<T> attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

FF_INSTANTIATE_OPS(float)
FF_INSTANTIATE_OPS(double)

#undef FF_INSTANTIATE_OPS

}  // namespace foodfuse
