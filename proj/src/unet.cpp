#include "foodfuse/unet.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace foodfuse {

namespace {

template <typename T>
Tensor<T> conv_init(RngStream& rng, int c_out, int c_in, int k) {
    const double std = std::sqrt(2.0 / (static_cast<double>(c_in) * k * k));
    return Tensor<T>::randn({c_out, c_in, k, k}, rng, std);
}

template <typename T>
Tensor<T> clone_param(const Tensor<T>& t) {
    Tensor<T> c = t.detach();
    c.set_requires_grad(true);
    return c;
}

// (B, dim) sin/cos features of the timestep, constant w.r.t. the graph
template <typename T>
Tensor<T> sinusoidal_embedding(const std::vector<int>& t, int batch, int dim) {
    const int half = dim / 2;
    const double denom = half > 1 ? half - 1 : 1;
    Tensor<T> emb = Tensor<T>::zeros({batch, dim});
    for (int b = 0; b < batch; b++) {
        const double tt = static_cast<double>(t.size() == 1 ? t[0] : t[static_cast<size_t>(b)]);
        for (int i = 0; i < half; i++) {
            const double f = std::exp(-std::log(10000.0) * i / denom);
            emb.data()[b * dim + i] = static_cast<T>(std::sin(tt * f));
            emb.data()[b * dim + half + i] = static_cast<T>(std::cos(tt * f));
        }
    }
    return emb;
}

}  // namespace

// ---------------------------------------------------------------- ResBlock

template <typename T>
void DenoiserUNet<T>::ResBlock::init(RngStream& rng, int in, int out, int temb_dim,
                                     int norm_groups) {
    c_in = in;
    c_out = out;
    groups = norm_groups;
    gn1_g = Tensor<T>::full({in}, T(1)).set_requires_grad();
    gn1_b = Tensor<T>::zeros({in}).set_requires_grad();
    conv1_w = conv_init<T>(rng, out, in, 3).set_requires_grad();
    conv1_b = Tensor<T>::zeros({out}).set_requires_grad();
    temb_w = Tensor<T>::randn({temb_dim, out}, rng, 1.0 / std::sqrt(static_cast<double>(temb_dim)))
                 .set_requires_grad();
    temb_b = Tensor<T>::zeros({out}).set_requires_grad();
    gn2_g = Tensor<T>::full({out}, T(1)).set_requires_grad();
    gn2_b = Tensor<T>::zeros({out}).set_requires_grad();
    conv2_w = conv_init<T>(rng, out, out, 3).set_requires_grad();
    conv2_b = Tensor<T>::zeros({out}).set_requires_grad();
    if (in != out) {
        skip_w = conv_init<T>(rng, out, in, 1).set_requires_grad();
        skip_b = Tensor<T>::zeros({out}).set_requires_grad();
    }
}

template <typename T>
Tensor<T> DenoiserUNet<T>::ResBlock::forward(const Tensor<T>& x,
                                             const Tensor<T>& temb_act) const {
    Tensor<T> h = conv2d(silu(group_norm(x, groups, gn1_g, gn1_b)), conv1_w, conv1_b, 1, 1);
    h = add_per_channel(h, add(matmul(temb_act, temb_w), temb_b));
    h = conv2d(silu(group_norm(h, groups, gn2_g, gn2_b)), conv2_w, conv2_b, 1, 1);
    if (c_in != c_out) return add(h, conv2d(x, skip_w, skip_b, 1, 0));
    return add(h, x);
}

template <typename T>
void DenoiserUNet<T>::ResBlock::collect(const std::string& p, ParamRegistry<T>& reg) {
    reg.add(p + "gn1.g", gn1_g);
    reg.add(p + "gn1.b", gn1_b);
    reg.add(p + "conv1.w", conv1_w);
    reg.add(p + "conv1.b", conv1_b);
    reg.add(p + "temb.w", temb_w);
    reg.add(p + "temb.b", temb_b);
    reg.add(p + "gn2.g", gn2_g);
    reg.add(p + "gn2.b", gn2_b);
    reg.add(p + "conv2.w", conv2_w);
    reg.add(p + "conv2.b", conv2_b);
    if (c_in != c_out) {
        reg.add(p + "skip.w", skip_w);
        reg.add(p + "skip.b", skip_b);
    }
}

template <typename T>
typename DenoiserUNet<T>::ResBlock DenoiserUNet<T>::ResBlock::copy() const {
    ResBlock c;
    c.c_in = c_in;
    c.c_out = c_out;
    c.groups = groups;
    c.gn1_g = clone_param(gn1_g);
    c.gn1_b = clone_param(gn1_b);
    c.conv1_w = clone_param(conv1_w);
    c.conv1_b = clone_param(conv1_b);
    c.temb_w = clone_param(temb_w);
    c.temb_b = clone_param(temb_b);
    c.gn2_g = clone_param(gn2_g);
    c.gn2_b = clone_param(gn2_b);
    c.conv2_w = clone_param(conv2_w);
    c.conv2_b = clone_param(conv2_b);
    if (c_in != c_out) {
        c.skip_w = clone_param(skip_w);
        c.skip_b = clone_param(skip_b);
    }
    return c;
}

// ---------------------------------------------------------------- AttnBlock

template <typename T>
void DenoiserUNet<T>::AttnBlock::init(RngStream& rng, int ch, int d_ctx, int norm_groups) {
    channels = ch;
    groups = norm_groups;
    gn_g = Tensor<T>::full({ch}, T(1)).set_requires_grad();
    gn_b = Tensor<T>::zeros({ch}).set_requires_grad();
    const double sq = 1.0 / std::sqrt(static_cast<double>(ch));
    const double sc = 1.0 / std::sqrt(static_cast<double>(d_ctx));
    wq = Tensor<T>::randn({ch, ch}, rng, sq).set_requires_grad();
    bq = Tensor<T>::zeros({ch}).set_requires_grad();
    wk = Tensor<T>::randn({d_ctx, ch}, rng, sc).set_requires_grad();
    bk = Tensor<T>::zeros({ch}).set_requires_grad();
    wv = Tensor<T>::randn({d_ctx, ch}, rng, sc).set_requires_grad();
    bv = Tensor<T>::zeros({ch}).set_requires_grad();
    // zero out-projection: the block starts as an exact identity and the
    // conditioning cannot influence the stream until it learns to
    wo = Tensor<T>::zeros({ch, ch}).set_requires_grad();
    bo = Tensor<T>::zeros({ch}).set_requires_grad();
}

template <typename T>
Tensor<T> DenoiserUNet<T>::AttnBlock::forward(const Tensor<T>& x, const Tensor<T>& ctx) const {
    const Shape& s = x.shape();
    const int b = s[0], c = s[1], hw = s[2] * s[3];
    Tensor<T> tok = transpose(reshape(group_norm(x, groups, gn_g, gn_b), {b, c, hw}), {0, 2, 1});
    Tensor<T> q = add(matmul(tok, wq), bq);
    Tensor<T> k = add(matmul(ctx, wk), bk);
    Tensor<T> v = add(matmul(ctx, wv), bv);
    Tensor<T> o = add(matmul(attention(q, k, v), wo), bo);
    return add(x, reshape(transpose(o, {0, 2, 1}), {b, c, s[2], s[3]}));
}

template <typename T>
void DenoiserUNet<T>::AttnBlock::collect(const std::string& p, ParamRegistry<T>& reg) {
    reg.add(p + "gn.g", gn_g);
    reg.add(p + "gn.b", gn_b);
    collect_projections(p, reg);
}

template <typename T>
void DenoiserUNet<T>::AttnBlock::collect_projections(const std::string& p,
                                                     ParamRegistry<T>& reg) {
    reg.add(p + "q.w", wq);
    reg.add(p + "q.b", bq);
    reg.add(p + "k.w", wk);
    reg.add(p + "k.b", bk);
    reg.add(p + "v.w", wv);
    reg.add(p + "v.b", bv);
    reg.add(p + "o.w", wo);
    reg.add(p + "o.b", bo);
}

template <typename T>
typename DenoiserUNet<T>::AttnBlock DenoiserUNet<T>::AttnBlock::copy() const {
    AttnBlock c;
    c.channels = channels;
    c.groups = groups;
    c.gn_g = clone_param(gn_g);
    c.gn_b = clone_param(gn_b);
    c.wq = clone_param(wq);
    c.bq = clone_param(bq);
    c.wk = clone_param(wk);
    c.bk = clone_param(bk);
    c.wv = clone_param(wv);
    c.bv = clone_param(bv);
    c.wo = clone_param(wo);
    c.bo = clone_param(bo);
    return c;
}

// ------------------------------------------------------------ DenoiserUNet

template <typename T>
DenoiserUNet<T>::DenoiserUNet(const UNetConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    RngStream rng(seed, "unet.init");
    const int levels = cfg_.levels();
    const int dt = cfg_.timestep_embed_dim;
    const int g = cfg_.norm_groups;

    temb_w1_ = Tensor<T>::randn({dt, dt}, rng, 1.0 / std::sqrt(static_cast<double>(dt)))
                   .set_requires_grad();
    temb_b1_ = Tensor<T>::zeros({dt}).set_requires_grad();
    temb_w2_ = Tensor<T>::randn({dt, dt}, rng, 1.0 / std::sqrt(static_cast<double>(dt)))
                   .set_requires_grad();
    temb_b2_ = Tensor<T>::zeros({dt}).set_requires_grad();

    const int c0 = channels_at(0);
    conv_in_w_ = conv_init<T>(rng, c0, cfg_.in_channels, 3).set_requires_grad();
    conv_in_b_ = Tensor<T>::zeros({c0}).set_requires_grad();

    enc_res_.resize(static_cast<size_t>(levels));
    enc_attn_.resize(static_cast<size_t>(levels));
    int prev = c0;
    for (int l = 0; l < levels; l++) {
        if (l > 0) {
            down_w_.push_back(conv_init<T>(rng, prev, prev, 3).set_requires_grad());
            down_b_.push_back(Tensor<T>::zeros({prev}).set_requires_grad());
        }
        const int cl = channels_at(l);
        enc_res_[static_cast<size_t>(l)].init(rng, prev, cl, dt, g);
        if (attends(l)) enc_attn_[static_cast<size_t>(l)].init(rng, cl, cfg_.d_ctx, g);
        prev = cl;
    }

    mid_res1_.init(rng, prev, prev, dt, g);
    mid_attn_.init(rng, prev, cfg_.d_ctx, g);
    mid_res2_.init(rng, prev, prev, dt, g);

    dec_res_.resize(static_cast<size_t>(levels));
    dec_attn_.resize(static_cast<size_t>(levels));
    up_w_.resize(static_cast<size_t>(levels > 0 ? levels - 1 : 0));
    up_b_.resize(up_w_.size());
    for (int l = levels - 1; l >= 0; l--) {
        const int cl = channels_at(l);
        dec_res_[static_cast<size_t>(l)].init(rng, 2 * cl, cl, dt, g);
        if (attends(l)) dec_attn_[static_cast<size_t>(l)].init(rng, cl, cfg_.d_ctx, g);
        if (l > 0) {
            up_w_[static_cast<size_t>(l - 1)] =
                conv_init<T>(rng, channels_at(l - 1), cl, 3).set_requires_grad();
            up_b_[static_cast<size_t>(l - 1)] =
                Tensor<T>::zeros({channels_at(l - 1)}).set_requires_grad();
        }
    }
    final_res_.init(rng, 2 * c0, c0, dt, g);

    out_gn_g_ = Tensor<T>::full({c0}, T(1)).set_requires_grad();
    out_gn_b_ = Tensor<T>::zeros({c0}).set_requires_grad();
    // zero head: the untrained model predicts exactly zero noise
    conv_out_w_ = Tensor<T>::zeros({cfg_.in_channels, c0, 3, 3}).set_requires_grad();
    conv_out_b_ = Tensor<T>::zeros({cfg_.in_channels}).set_requires_grad();
}

template <typename T>
bool DenoiserUNet<T>::attends(int level) const {
    return std::find(cfg_.attention_levels.begin(), cfg_.attention_levels.end(), level) !=
           cfg_.attention_levels.end();
}

template <typename T>
Tensor<T> DenoiserUNet<T>::time_embedding(const std::vector<int>& t, int batch) const {
    Tensor<T> emb = sinusoidal_embedding<T>(t, batch, cfg_.timestep_embed_dim);
    Tensor<T> h = silu(add(matmul(emb, temb_w1_), temb_b1_));
    return silu(add(matmul(h, temb_w2_), temb_b2_));
}

template <typename T>
std::vector<Shape> DenoiserUNet<T>::injection_shapes(int batch, int h, int w) const {
    std::vector<Shape> out;
    out.push_back({batch, channels_at(0), h, w});
    for (int l = 0; l < cfg_.levels(); l++)
        out.push_back({batch, channels_at(l), h >> l, w >> l});
    const int last = cfg_.levels() - 1;
    out.push_back({batch, channels_at(last), h >> last, w >> last});
    return out;
}

template <typename T>
Tensor<T> DenoiserUNet<T>::forward(const Tensor<T>& z_t, const std::vector<int>& t,
                                   const Tensor<T>& ctx,
                                   const std::vector<Tensor<T>>* injections) const {
    const Shape& s = z_t.shape();
    if (s.size() != 4 || s[1] != cfg_.in_channels)
        throw ShapeError("denoiser", "expected latent (B," + std::to_string(cfg_.in_channels) +
                                         ",H,W), got " + shape_str(s));
    const int batch = s[0], h = s[2], w = s[3];
    const int div = 1 << (cfg_.levels() - 1);
    if (h % div != 0 || w % div != 0)
        throw ShapeError("denoiser", "latent extent " + std::to_string(h) + "x" +
                                         std::to_string(w) + " is not divisible by " +
                                         std::to_string(div));
    if (t.size() != 1 && t.size() != static_cast<size_t>(batch))
        throw ConfigError("denoiser: got " + std::to_string(t.size()) + " timesteps for batch " +
                          std::to_string(batch));
    for (int tv : t)
        if (tv < 0) throw ConfigError("denoiser: negative timestep " + std::to_string(tv));

    Tensor<T> c = ctx;
    if (c.shape().size() == 2) c = tile_batch(c, batch);
    if (c.shape().size() != 3 || c.shape()[0] != batch || c.shape()[2] != cfg_.d_ctx)
        throw ShapeError("denoiser", "conditioning must be (B,K," + std::to_string(cfg_.d_ctx) +
                                         "), got " + shape_str(ctx.shape()));

    const std::vector<Shape> want = injection_shapes(batch, h, w);
    std::vector<Tensor<T>> inj;
    if (injections != nullptr && !injections->empty()) {
        if (static_cast<int>(injections->size()) != injection_count())
            throw ShapeError("denoiser", "expected " + std::to_string(injection_count()) +
                                             " injections, got " +
                                             std::to_string(injections->size()));
        for (size_t i = 0; i < injections->size(); i++) {
            if ((*injections)[i].shape() != want[i])
                throw ShapeError("denoiser", "injection " + std::to_string(i) + " has shape " +
                                                 shape_str((*injections)[i].shape()) +
                                                 ", expected " + shape_str(want[i]));
            inj.push_back((*injections)[i]);
        }
    } else {
        // an absent set runs as zeros through the very same adds, so the
        // two calls are computationally identical
        for (const Shape& sh : want) inj.push_back(Tensor<T>::zeros(sh));
    }

    const Tensor<T> temb = time_embedding(t, batch);
    const int levels = cfg_.levels();

    std::vector<Tensor<T>> skips;
    Tensor<T> x = conv2d(z_t, conv_in_w_, conv_in_b_, 1, 1);
    skips.push_back(x);
    for (int l = 0; l < levels; l++) {
        if (l > 0)
            x = conv2d(x, down_w_[static_cast<size_t>(l - 1)], down_b_[static_cast<size_t>(l - 1)],
                       2, 1);
        x = enc_res_[static_cast<size_t>(l)].forward(x, temb);
        if (attends(l)) x = enc_attn_[static_cast<size_t>(l)].forward(x, c);
        skips.push_back(x);
    }

    x = mid_res1_.forward(x, temb);
    x = mid_attn_.forward(x, c);
    x = mid_res2_.forward(x, temb);
    x = add(x, inj[static_cast<size_t>(levels + 1)]);

    for (int l = levels - 1; l >= 0; l--) {
        Tensor<T> sk = add(skips[static_cast<size_t>(l + 1)], inj[static_cast<size_t>(l + 1)]);
        x = dec_res_[static_cast<size_t>(l)].forward(
            concat(std::vector<Tensor<T>>{x, sk}, 1), temb);
        if (attends(l)) x = dec_attn_[static_cast<size_t>(l)].forward(x, c);
        if (l > 0)
            x = conv2d(nearest_upsample(x, 2), up_w_[static_cast<size_t>(l - 1)],
                       up_b_[static_cast<size_t>(l - 1)], 1, 1);
    }

    Tensor<T> sk0 = add(skips[0], inj[0]);
    x = final_res_.forward(concat(std::vector<Tensor<T>>{x, sk0}, 1), temb);
    return conv2d(silu(group_norm(x, cfg_.norm_groups, out_gn_g_, out_gn_b_)), conv_out_w_,
                  conv_out_b_, 1, 1);
}

template <typename T>
void DenoiserUNet<T>::collect_params(const std::string& prefix, ParamRegistry<T>& reg) {
    reg.add(prefix + "temb.mlp1.w", temb_w1_);
    reg.add(prefix + "temb.mlp1.b", temb_b1_);
    reg.add(prefix + "temb.mlp2.w", temb_w2_);
    reg.add(prefix + "temb.mlp2.b", temb_b2_);
    reg.add(prefix + "stem.w", conv_in_w_);
    reg.add(prefix + "stem.b", conv_in_b_);
    for (size_t i = 0; i < down_w_.size(); i++) {
        reg.add(prefix + "down" + std::to_string(i + 1) + ".w", down_w_[i]);
        reg.add(prefix + "down" + std::to_string(i + 1) + ".b", down_b_[i]);
    }
    for (int l = 0; l < cfg_.levels(); l++) {
        const std::string pl = prefix + "enc" + std::to_string(l) + ".";
        enc_res_[static_cast<size_t>(l)].collect(pl + "res.", reg);
        if (attends(l)) enc_attn_[static_cast<size_t>(l)].collect(pl + "xattn.", reg);
    }
    mid_res1_.collect(prefix + "mid.res1.", reg);
    mid_attn_.collect(prefix + "mid.xattn.", reg);
    mid_res2_.collect(prefix + "mid.res2.", reg);
    for (int l = cfg_.levels() - 1; l >= 0; l--) {
        const std::string pl = prefix + "dec" + std::to_string(l) + ".";
        dec_res_[static_cast<size_t>(l)].collect(pl + "res.", reg);
        if (attends(l)) dec_attn_[static_cast<size_t>(l)].collect(pl + "xattn.", reg);
        if (l > 0) {
            reg.add(prefix + "up" + std::to_string(l) + ".w", up_w_[static_cast<size_t>(l - 1)]);
            reg.add(prefix + "up" + std::to_string(l) + ".b", up_b_[static_cast<size_t>(l - 1)]);
        }
    }
    final_res_.collect(prefix + "final.res.", reg);
    reg.add(prefix + "out.gn.g", out_gn_g_);
    reg.add(prefix + "out.gn.b", out_gn_b_);
    reg.add(prefix + "out.conv.w", conv_out_w_);
    reg.add(prefix + "out.conv.b", conv_out_b_);
}

template <typename T>
void DenoiserUNet<T>::collect_attention_projection_params(const std::string& prefix,
                                                          ParamRegistry<T>& reg) {
    for (int l = 0; l < cfg_.levels(); l++)
        if (attends(l))
            enc_attn_[static_cast<size_t>(l)].collect_projections(
                prefix + "enc" + std::to_string(l) + ".xattn.", reg);
    mid_attn_.collect_projections(prefix + "mid.xattn.", reg);
    for (int l = cfg_.levels() - 1; l >= 0; l--)
        if (attends(l))
            dec_attn_[static_cast<size_t>(l)].collect_projections(
                prefix + "dec" + std::to_string(l) + ".xattn.", reg);
}

// ----------------------------------------------------------- ControlModule

template <typename T>
ControlModule<T>::ControlModule(const DenoiserUNet<T>& base, uint64_t seed) : cfg_(base.cfg_) {
    RngStream rng(seed, "cscm.init");
    const int cin = cfg_.in_channels;

    zero_in_w_ = Tensor<T>::zeros({cin, cin, 1, 1}).set_requires_grad();
    zero_in_b_ = Tensor<T>::zeros({cin}).set_requires_grad();
    null_ctx_ = Tensor<T>::randn({1, cfg_.d_ctx}, rng, 0.02).set_requires_grad();

    temb_w1_ = clone_param(base.temb_w1_);
    temb_b1_ = clone_param(base.temb_b1_);
    temb_w2_ = clone_param(base.temb_w2_);
    temb_b2_ = clone_param(base.temb_b2_);
    conv_in_w_ = clone_param(base.conv_in_w_);
    conv_in_b_ = clone_param(base.conv_in_b_);
    for (size_t i = 0; i < base.down_w_.size(); i++) {
        down_w_.push_back(clone_param(base.down_w_[i]));
        down_b_.push_back(clone_param(base.down_b_[i]));
    }
    for (int l = 0; l < cfg_.levels(); l++) {
        enc_res_.push_back(base.enc_res_[static_cast<size_t>(l)].copy());
        enc_attn_.push_back(base.attends(l) ? base.enc_attn_[static_cast<size_t>(l)].copy()
                                            : typename DenoiserUNet<T>::AttnBlock{});
    }
    mid_res1_ = base.mid_res1_.copy();
    mid_attn_ = base.mid_attn_.copy();
    mid_res2_ = base.mid_res2_.copy();

    // one zero 1x1 projection per junction; until these move off zero the
    // control branch contributes nothing at all
    const std::vector<Shape> shapes = base.injection_shapes(1, 0, 0);
    for (const Shape& sh : shapes) {
        const int ch = sh[1];
        proj_w_.push_back(Tensor<T>::zeros({ch, ch, 1, 1}).set_requires_grad());
        proj_b_.push_back(Tensor<T>::zeros({ch}).set_requires_grad());
    }
}

template <typename T>
std::vector<Tensor<T>> ControlModule<T>::forward(const Tensor<T>& z_t,
                                                 const Tensor<T>& bg_latent,
                                                 const std::vector<int>& t) const {
    if (z_t.shape() != bg_latent.shape())
        throw ShapeError("control", z_t.shape(), bg_latent.shape());
    const Shape& s = z_t.shape();
    if (s.size() != 4 || s[1] != cfg_.in_channels)
        throw ShapeError("control", "expected latent (B," + std::to_string(cfg_.in_channels) +
                                        ",H,W), got " + shape_str(s));
    const int batch = s[0];
    if (t.size() != 1 && t.size() != static_cast<size_t>(batch))
        throw ConfigError("control: got " + std::to_string(t.size()) + " timesteps for batch " +
                          std::to_string(batch));

    // activated timestep embedding, same construction as the denoiser's
    Tensor<T> emb = sinusoidal_embedding<T>(t, batch, cfg_.timestep_embed_dim);
    Tensor<T> temb = silu(add(matmul(emb, temb_w1_), temb_b1_));
    temb = silu(add(matmul(temb, temb_w2_), temb_b2_));

    const Tensor<T> ctx = tile_batch(null_ctx_, batch);
    Tensor<T> x = add(z_t, conv2d(bg_latent, zero_in_w_, zero_in_b_, 1, 0));

    std::vector<Tensor<T>> taps;
    x = conv2d(x, conv_in_w_, conv_in_b_, 1, 1);
    taps.push_back(x);
    for (int l = 0; l < cfg_.levels(); l++) {
        if (l > 0)
            x = conv2d(x, down_w_[static_cast<size_t>(l - 1)], down_b_[static_cast<size_t>(l - 1)],
                       2, 1);
        x = enc_res_[static_cast<size_t>(l)].forward(x, temb);
        const auto& ab = enc_attn_[static_cast<size_t>(l)];
        if (ab.channels > 0) x = ab.forward(x, ctx);
        taps.push_back(x);
    }
    x = mid_res1_.forward(x, temb);
    x = mid_attn_.forward(x, ctx);
    x = mid_res2_.forward(x, temb);
    taps.push_back(x);

    std::vector<Tensor<T>> out;
    for (size_t i = 0; i < taps.size(); i++)
        out.push_back(conv2d(taps[i], proj_w_[i], proj_b_[i], 1, 0));
    return out;
}

template <typename T>
void ControlModule<T>::collect_params(const std::string& prefix, ParamRegistry<T>& reg) {
    reg.add(prefix + "zero_in.w", zero_in_w_);
    reg.add(prefix + "zero_in.b", zero_in_b_);
    reg.add(prefix + "null_ctx", null_ctx_);
    reg.add(prefix + "temb.mlp1.w", temb_w1_);
    reg.add(prefix + "temb.mlp1.b", temb_b1_);
    reg.add(prefix + "temb.mlp2.w", temb_w2_);
    reg.add(prefix + "temb.mlp2.b", temb_b2_);
    reg.add(prefix + "stem.w", conv_in_w_);
    reg.add(prefix + "stem.b", conv_in_b_);
    for (size_t i = 0; i < down_w_.size(); i++) {
        reg.add(prefix + "down" + std::to_string(i + 1) + ".w", down_w_[i]);
        reg.add(prefix + "down" + std::to_string(i + 1) + ".b", down_b_[i]);
    }
    for (int l = 0; l < cfg_.levels(); l++) {
        const std::string pl = prefix + "enc" + std::to_string(l) + ".";
        enc_res_[static_cast<size_t>(l)].collect(pl + "res.", reg);
        if (enc_attn_[static_cast<size_t>(l)].channels > 0)
            enc_attn_[static_cast<size_t>(l)].collect(pl + "xattn.", reg);
    }
    mid_res1_.collect(prefix + "mid.res1.", reg);
    mid_attn_.collect(prefix + "mid.xattn.", reg);
    mid_res2_.collect(prefix + "mid.res2.", reg);
    for (size_t i = 0; i < proj_w_.size(); i++) {
        reg.add(prefix + "proj" + std::to_string(i) + ".w", proj_w_[i]);
        reg.add(prefix + "proj" + std::to_string(i) + ".b", proj_b_[i]);
    }
}

template class DenoiserUNet<float>;
template class DenoiserUNet<double>;
template class ControlModule<float>;
template class ControlModule<double>;

}  // namespace foodfuse
