#pragma once

#include "foodfuse/tensor.hpp"

namespace foodfuse {

// Differentiable primitives. Broadcasting is deliberately narrow: an operand
// may be a scalar or match a trailing suffix of the other's shape; anything
// else needs an explicit reshape. Every op validates shapes and raises
// ShapeError naming the op and both shapes.

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, double c);

// x[b,...] * s[b] with s of shape (B); per-sample scalar weighting.
template <typename T> Tensor<T> scale_per_batch(const Tensor<T>& x, const Tensor<T>& s);

// x (B,C,H,W) + b (B,C) broadcast over the spatial extent.
template <typename T> Tensor<T> add_per_channel(const Tensor<T>& x, const Tensor<T>& b);

// (M,K)x(K,N); (B,M,K)x(K,N) shared rhs; (B,M,K)x(B,K,N) batched.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// x (N,Cin,H,W), w (Cout,Cin,kh,kw), optional bias (Cout). im2col + matmul.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 int stride = 1, int pad = 0);

// x (N,C,H,W); per-(sample,group) normalization, per-channel affine.
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int groups, const Tensor<T>& gamma,
                     const Tensor<T>& beta, double eps = 1e-5);

// normalization over the last axis, affine of that width
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = 1e-5);

// softmax over the last axis
template <typename T> Tensor<T> softmax(const Tensor<T>& x);

template <typename T> Tensor<T> silu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> gelu(const Tensor<T>& x);

// (N,C,H,W) -> (N,C,H*f,W*f) / (N,C,H/f,W/f)
template <typename T> Tensor<T> nearest_upsample(const Tensor<T>& x, int factor = 2);
template <typename T> Tensor<T> avg_downsample(const Tensor<T>& x, int factor = 2);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis);
template <typename T> Tensor<T> transpose(const Tensor<T>& x, const std::vector<int>& perm);
template <typename T> Tensor<T> slice(const Tensor<T>& x, int axis, int start, int len);

// table (V,D), indices into [0,V) -> (n,D); backward scatter-adds rows
template <typename T>
Tensor<T> embed_lookup(const Tensor<T>& table, const std::vector<int>& indices);

// mean squared error over all elements -> scalar
template <typename T> Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);

// (K,d) -> (B,K,d) by repetition; gradient sums over the batch copies
template <typename T> Tensor<T> tile_batch(const Tensor<T>& x, int batch);

// softmax(q k^T / sqrt(d)) v for q (...,Lq,d), k (...,Lk,d), v (...,Lk,dv);
// the bare attention core, no projections, no residual
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v);

}  // namespace foodfuse
