#pragma once

#include "foodfuse/config.hpp"
#include "foodfuse/ops.hpp"
#include "foodfuse/params.hpp"
#include "foodfuse/rng.hpp"

namespace foodfuse {

// Turns one or more RGB images into a compact conditioning sequence.
//
// encode_image: patchify with a strided conv, add a learned positional
// embedding, run pre-norm single-head transformer blocks, and concatenate the
// token matrices tapped at the configured depths, giving one feature row per
// patch position with d_total = taps * width columns.
//
// fuse: every foreground and background token is tagged with a learned
// source embedding plus a learned grid-position embedding; K learned queries
// cross-attend over the combined sequence and pass through a low-rank
// residual refinement, producing the (K, d_ctx) conditioning block consumed
// by the denoiser. Foreground sequences may stack several encoded images.
//
// null_embedding: a learned (K, d_ctx) stand-in used when conditioning is
// dropped, so "no condition" is itself trainable.
template <typename T>
class FusionModule {
  public:
    FusionModule(const FusionEncoderConfig& cfg, uint64_t seed);

    // (3,S,S) -> (N, d_total) or (B,3,S,S) -> (B, N, d_total)
    Tensor<T> encode_image(const Tensor<T>& image) const;

    // h_fore (m*N, d_total) for m >= 1 foregrounds, h_back (N, d_total)
    // -> (K, d_ctx); a leading batch axis on both inputs is carried through.
    Tensor<T> fuse(const Tensor<T>& h_fore, const Tensor<T>& h_back) const;

    // Ablation path: the conditioning block computed from one source
    // sequence alone — no background tokens take part, so nothing is fused.
    // h_tokens (m*N, d_total) -> (K, d_ctx); leading batch axis carried.
    Tensor<T> single_image_context(const Tensor<T>& h_tokens) const;

    const Tensor<T>& null_embedding() const { return null_; }
    // (B, K, d_ctx) copies of the null embedding
    Tensor<T> null_context(int batch) const { return tile_batch(null_, batch); }

    void collect_params(const std::string& prefix, ParamRegistry<T>& reg);
    const FusionEncoderConfig& config() const { return cfg_; }

  private:
    struct Linear {
        Tensor<T> w;  // (in, out)
        Tensor<T> b;  // (out)
    };
    struct Block {
        Tensor<T> ln1_g, ln1_b;
        Linear wq, wk, wv, wo;
        Tensor<T> ln2_g, ln2_b;
        Linear mlp1, mlp2;
    };

    static Tensor<T> apply(const Tensor<T>& x, const Linear& l) {
        return add(matmul(x, l.w), l.b);
    }
    Tensor<T> run_block(const Tensor<T>& x, const Block& blk) const;
    Tensor<T> tag_tokens(const Tensor<T>& h, const Tensor<T>& source_embed,
                         const char* label) const;

    FusionEncoderConfig cfg_;
    Tensor<T> patch_w_, patch_b_;  // (width,3,p,p), (width)
    Tensor<T> pos_;                // (N, width)
    std::vector<Block> blocks_;

    Tensor<T> map_src_fore_, map_src_back_;  // (d_total)
    Tensor<T> map_pos_;                      // (N, d_total)
    Linear map_k_, map_v_;                   // d_total -> d_ctx
    Tensor<T> queries_;                      // (K, d_ctx)
    Tensor<T> rank_down_, rank_up_;          // (d_ctx, r), (r, d_ctx)
    Tensor<T> out_bias_;                     // (d_ctx)
    Tensor<T> null_;                         // (K, d_ctx)
};

using FusionModule32 = FusionModule<float>;
using FusionModule64 = FusionModule<double>;

}  // namespace foodfuse
