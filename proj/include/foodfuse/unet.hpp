#pragma once

#include "foodfuse/config.hpp"
#include "foodfuse/ops.hpp"
#include "foodfuse/params.hpp"
#include "foodfuse/rng.hpp"

namespace foodfuse {

template <typename T>
class ControlModule;

// Noise-prediction UNet over latents.
//
// Encoder: 3x3 stem conv, then one residual stage per level with stride-2
// downsampling between levels; every attending level cross-attends from its
// spatial tokens to the conditioning rows. Mid: residual / cross-attention /
// residual. Decoder mirrors the encoder, consuming one skip connection per
// junction. The output head is zero-initialised so an untrained model
// predicts exactly zero noise.
//
// Injection points: one tensor per decoder skip junction plus one for the
// mid feature, ordered [stem skip, level skips shallow->deep, mid]; each is
// added to the corresponding feature right before the decoder consumes it.
// An absent injection set is computed as all-zeros through the same code
// path, so supplying explicit zero tensors is bit-identical to supplying
// none.
template <typename T>
class DenoiserUNet {
  public:
    DenoiserUNet(const UNetConfig& cfg, uint64_t seed);

    // z_t (B,C,H,W); t one timestep per sample (or a single shared value);
    // ctx (B,K,d_ctx) or (K,d_ctx) shared across the batch; injections
    // either empty or exactly injection_count() tensors with
    // injection_shapes(...) shapes.
    Tensor<T> forward(const Tensor<T>& z_t, const std::vector<int>& t, const Tensor<T>& ctx,
                      const std::vector<Tensor<T>>* injections = nullptr) const;
    Tensor<T> forward(const Tensor<T>& z_t, int t, const Tensor<T>& ctx,
                      const std::vector<Tensor<T>>* injections = nullptr) const {
        return forward(z_t, std::vector<int>{t}, ctx, injections);
    }

    int injection_count() const { return cfg_.levels() + 2; }
    std::vector<Shape> injection_shapes(int batch, int h, int w) const;

    void collect_params(const std::string& prefix, ParamRegistry<T>& reg);
    // just the q/k/v/out projections of every cross-attention block; the
    // names match the ones used by collect_params
    void collect_attention_projection_params(const std::string& prefix, ParamRegistry<T>& reg);

    const UNetConfig& config() const { return cfg_; }
    int channels_at(int level) const {
        return cfg_.base_channels * cfg_.channel_multipliers[static_cast<size_t>(level)];
    }

  private:
    template <typename U>
    friend class ControlModule;

    struct ResBlock {
        Tensor<T> gn1_g, gn1_b, conv1_w, conv1_b;
        Tensor<T> temb_w, temb_b;
        Tensor<T> gn2_g, gn2_b, conv2_w, conv2_b;
        Tensor<T> skip_w, skip_b;  // present only when channels change
        int c_in = 0, c_out = 0, groups = 1;

        void init(RngStream& rng, int in, int out, int temb_dim, int norm_groups);
        Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& temb_act) const;
        void collect(const std::string& p, ParamRegistry<T>& reg);
        ResBlock copy() const;
    };

    struct AttnBlock {
        Tensor<T> gn_g, gn_b;
        Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
        int channels = 0, groups = 1;

        void init(RngStream& rng, int ch, int d_ctx, int norm_groups);
        Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& ctx) const;
        void collect(const std::string& p, ParamRegistry<T>& reg);
        void collect_projections(const std::string& p, ParamRegistry<T>& reg);
        AttnBlock copy() const;
    };

    bool attends(int level) const;
    // (B, temb_dim) activated embedding shared by every residual block
    Tensor<T> time_embedding(const std::vector<int>& t, int batch) const;

    UNetConfig cfg_;
    Tensor<T> temb_w1_, temb_b1_, temb_w2_, temb_b2_;
    Tensor<T> conv_in_w_, conv_in_b_;
    std::vector<Tensor<T>> down_w_, down_b_;  // between levels
    std::vector<ResBlock> enc_res_;
    std::vector<AttnBlock> enc_attn_;  // only for attending levels (indexed by level)
    ResBlock mid_res1_, mid_res2_;
    AttnBlock mid_attn_;
    std::vector<ResBlock> dec_res_;  // per level, deep to shallow applied
    std::vector<AttnBlock> dec_attn_;
    std::vector<Tensor<T>> up_w_, up_b_;
    ResBlock final_res_;  // stem-skip junction
    Tensor<T> out_gn_g_, out_gn_b_, conv_out_w_, conv_out_b_;
};

using DenoiserUNet32 = DenoiserUNet<float>;
using DenoiserUNet64 = DenoiserUNet<double>;

// Background-structure control branch: a trainable copy of the denoiser's
// encoder (stem, residual stages, mid) taken at construction time. It reads
// the noisy latent plus a zero-initialised projection of the background
// latent, runs the copied encoder with its own learned conditioning token,
// and emits one zero-initialised 1x1-projected injection per junction. With
// projections still at zero the injections are exactly zero, so the combined
// model reproduces the plain denoiser bit for bit.
template <typename T>
class ControlModule {
  public:
    ControlModule(const DenoiserUNet<T>& base, uint64_t seed);

    // -> injection_count() tensors ordered like DenoiserUNet's injections
    std::vector<Tensor<T>> forward(const Tensor<T>& z_t, const Tensor<T>& bg_latent,
                                   const std::vector<int>& t) const;
    std::vector<Tensor<T>> forward(const Tensor<T>& z_t, const Tensor<T>& bg_latent,
                                   int t) const {
        return forward(z_t, bg_latent, std::vector<int>{t});
    }

    void collect_params(const std::string& prefix, ParamRegistry<T>& reg);
    const UNetConfig& config() const { return cfg_; }

  private:
    UNetConfig cfg_;
    Tensor<T> zero_in_w_, zero_in_b_;  // 1x1 latent hint projection, zero-init
    Tensor<T> null_ctx_;               // (1, d_ctx) learned conditioning token
    Tensor<T> temb_w1_, temb_b1_, temb_w2_, temb_b2_;
    Tensor<T> conv_in_w_, conv_in_b_;
    std::vector<Tensor<T>> down_w_, down_b_;
    std::vector<typename DenoiserUNet<T>::ResBlock> enc_res_;
    std::vector<typename DenoiserUNet<T>::AttnBlock> enc_attn_;
    typename DenoiserUNet<T>::ResBlock mid_res1_, mid_res2_;
    typename DenoiserUNet<T>::AttnBlock mid_attn_;
    std::vector<Tensor<T>> proj_w_, proj_b_;  // per-junction zero 1x1
};

using ControlModule32 = ControlModule<float>;
using ControlModule64 = ControlModule<double>;

}  // namespace foodfuse
