#include "foodfuse/fusion.hpp"

#include <cmath>
#include <string>

namespace foodfuse {

namespace {

template <typename T>
Tensor<T> linear_init(RngStream& rng, int in, int out) {
    return Tensor<T>::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
}

}  // namespace

template <typename T>
FusionModule<T>::FusionModule(const FusionEncoderConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    RngStream rng(seed, "fusion.init");
    const int w = cfg_.width;
    const int n = cfg_.token_count();
    const int d_total = cfg_.d_total();
    const int d_ctx = cfg_.d_ctx;
    const int p = cfg_.patch_size;

    const double patch_std = std::sqrt(2.0 / (3.0 * p * p));
    patch_w_ = Tensor<T>::randn({w, 3, p, p}, rng, patch_std).set_requires_grad();
    patch_b_ = Tensor<T>::zeros({w}).set_requires_grad();
    pos_ = Tensor<T>::randn({n, w}, rng, 0.02).set_requires_grad();

    blocks_.resize(static_cast<size_t>(cfg_.blocks));
    for (auto& blk : blocks_) {
        blk.ln1_g = Tensor<T>::full({w}, T(1)).set_requires_grad();
        blk.ln1_b = Tensor<T>::zeros({w}).set_requires_grad();
        for (Linear* l : {&blk.wq, &blk.wk, &blk.wv, &blk.wo}) {
            l->w = linear_init<T>(rng, w, w).set_requires_grad();
            l->b = Tensor<T>::zeros({w}).set_requires_grad();
        }
        blk.ln2_g = Tensor<T>::full({w}, T(1)).set_requires_grad();
        blk.ln2_b = Tensor<T>::zeros({w}).set_requires_grad();
        blk.mlp1.w = linear_init<T>(rng, w, 4 * w).set_requires_grad();
        blk.mlp1.b = Tensor<T>::zeros({4 * w}).set_requires_grad();
        blk.mlp2.w = linear_init<T>(rng, 4 * w, w).set_requires_grad();
        blk.mlp2.b = Tensor<T>::zeros({w}).set_requires_grad();
    }

    map_src_fore_ = Tensor<T>::randn({d_total}, rng, 0.02).set_requires_grad();
    map_src_back_ = Tensor<T>::randn({d_total}, rng, 0.02).set_requires_grad();
    map_pos_ = Tensor<T>::randn({n, d_total}, rng, 0.02).set_requires_grad();
    map_k_.w = linear_init<T>(rng, d_total, d_ctx).set_requires_grad();
    map_k_.b = Tensor<T>::zeros({d_ctx}).set_requires_grad();
    map_v_.w = linear_init<T>(rng, d_total, d_ctx).set_requires_grad();
    map_v_.b = Tensor<T>::zeros({d_ctx}).set_requires_grad();
    queries_ = Tensor<T>::randn({cfg_.num_queries, d_ctx}, rng, 0.02).set_requires_grad();
    rank_down_ = linear_init<T>(rng, d_ctx, cfg_.low_rank).set_requires_grad();
    rank_up_ = linear_init<T>(rng, cfg_.low_rank, d_ctx).set_requires_grad();
    out_bias_ = Tensor<T>::zeros({d_ctx}).set_requires_grad();
    null_ = Tensor<T>::randn({cfg_.num_queries, d_ctx}, rng, 0.02).set_requires_grad();
}

template <typename T>
Tensor<T> FusionModule<T>::run_block(const Tensor<T>& x, const Block& blk) const {
    Tensor<T> h = layer_norm(x, blk.ln1_g, blk.ln1_b);
    Tensor<T> a =
        attention(apply(h, blk.wq), apply(h, blk.wk), apply(h, blk.wv));
    Tensor<T> y = add(x, apply(a, blk.wo));
    Tensor<T> h2 = layer_norm(y, blk.ln2_g, blk.ln2_b);
    return add(y, apply(gelu(apply(h2, blk.mlp1)), blk.mlp2));
}

template <typename T>
Tensor<T> FusionModule<T>::encode_image(const Tensor<T>& image) const {
    const bool batched = image.shape().size() == 4;
    if (!batched && image.shape().size() != 3)
        throw ShapeError("encode_image",
                         "expected (3,S,S) or (B,3,S,S), got " + shape_str(image.shape()));
    Tensor<T> x = batched ? image
                          : reshape(image, {1, image.shape()[0], image.shape()[1],
                                            image.shape()[2]});
    const Shape& s = x.shape();
    if (s[1] != 3 || s[2] != cfg_.image_size || s[3] != cfg_.image_size)
        throw ShapeError("encode_image", "expected (B,3," + std::to_string(cfg_.image_size) +
                                             "," + std::to_string(cfg_.image_size) + "), got " +
                                             shape_str(x.shape()));
    const int batch = s[0];
    const int n = cfg_.token_count();

    // map pixel values from [0,1] to a symmetric range before patchifying
    Tensor<T> centered = scale(sub(x, Tensor<T>::scalar(T(0.5))), 2.0);
    Tensor<T> patches = conv2d(centered, patch_w_, patch_b_, cfg_.patch_size, 0);
    Tensor<T> tokens = transpose(reshape(patches, {batch, cfg_.width, n}), {0, 2, 1});
    tokens = add(tokens, pos_);

    std::vector<Tensor<T>> taps;
    int next_tap = 0;
    for (int i = 0; i < cfg_.blocks; i++) {
        tokens = run_block(tokens, blocks_[static_cast<size_t>(i)]);
        if (next_tap < static_cast<int>(cfg_.tap_layers.size()) &&
            cfg_.tap_layers[static_cast<size_t>(next_tap)] == i + 1) {
            taps.push_back(tokens);
            next_tap++;
        }
    }
    Tensor<T> out = taps.size() == 1 ? taps[0] : concat(taps, 2);
    if (!batched) out = reshape(out, {n, cfg_.d_total()});
    return out;
}

template <typename T>
Tensor<T> FusionModule<T>::tag_tokens(const Tensor<T>& h, const Tensor<T>& source_embed,
                                      const char* label) const {
    const Shape& s = h.shape();
    const int n = cfg_.token_count();
    const int d_total = cfg_.d_total();
    const int rows = s[static_cast<size_t>(s.size() - 2)];
    const int cols = s[static_cast<size_t>(s.size() - 1)];
    if (cols != d_total || rows < n || rows % n != 0)
        throw ShapeError("fuse", std::string(label) + " tokens must be (m*" +
                                     std::to_string(n) + "," + std::to_string(d_total) +
                                     "), got " + shape_str(s));
    Tensor<T> pos = map_pos_;
    if (rows != n) {
        std::vector<Tensor<T>> copies(static_cast<size_t>(rows / n), map_pos_);
        pos = concat(copies, 0);
    }
    return add(add(h, pos), source_embed);
}

template <typename T>
Tensor<T> FusionModule<T>::fuse(const Tensor<T>& h_fore, const Tensor<T>& h_back) const {
    const bool batched = h_fore.shape().size() == 3;
    if (h_back.shape().size() != h_fore.shape().size())
        throw ShapeError("fuse", h_fore.shape(), h_back.shape());
    if (!batched && h_fore.shape().size() != 2)
        throw ShapeError("fuse", "expected rank-2 or rank-3 token sequences, got " +
                                     shape_str(h_fore.shape()));
    if (batched && h_fore.shape()[0] != h_back.shape()[0])
        throw ShapeError("fuse", h_fore.shape(), h_back.shape());
    const int n = cfg_.token_count();
    const int back_rows = h_back.shape()[static_cast<size_t>(h_back.shape().size() - 2)];
    if (back_rows != n)
        throw ShapeError("fuse", "background tokens must be exactly (" + std::to_string(n) +
                                     "," + std::to_string(cfg_.d_total()) + "), got " +
                                     shape_str(h_back.shape()));

    Tensor<T> fore = tag_tokens(h_fore, map_src_fore_, "foreground");
    Tensor<T> back = tag_tokens(h_back, map_src_back_, "background");
    Tensor<T> tokens = concat(std::vector<Tensor<T>>{fore, back}, batched ? 1 : 0);

    Tensor<T> k = apply(tokens, map_k_);
    Tensor<T> v = apply(tokens, map_v_);
    Tensor<T> q = batched ? tile_batch(queries_, h_fore.shape()[0]) : queries_;
    Tensor<T> attended = attention(q, k, v);
    Tensor<T> refined = matmul(matmul(attended, rank_down_), rank_up_);
    return add(add(attended, refined), out_bias_);
}

template <typename T>
Tensor<T> FusionModule<T>::single_image_context(const Tensor<T>& h_tokens) const {
    const bool batched = h_tokens.shape().size() == 3;
    if (!batched && h_tokens.shape().size() != 2)
        throw ShapeError("single_image_context",
                         "expected rank-2 or rank-3 token sequences, got " +
                             shape_str(h_tokens.shape()));

    Tensor<T> tokens = tag_tokens(h_tokens, map_src_fore_, "foreground");
    Tensor<T> k = apply(tokens, map_k_);
    Tensor<T> v = apply(tokens, map_v_);
    Tensor<T> q = batched ? tile_batch(queries_, h_tokens.shape()[0]) : queries_;
    Tensor<T> attended = attention(q, k, v);
    Tensor<T> refined = matmul(matmul(attended, rank_down_), rank_up_);
    return add(add(attended, refined), out_bias_);
}

template <typename T>
void FusionModule<T>::collect_params(const std::string& prefix, ParamRegistry<T>& reg) {
    reg.add(prefix + "patch.w", patch_w_);
    reg.add(prefix + "patch.b", patch_b_);
    reg.add(prefix + "pos", pos_);
    for (size_t i = 0; i < blocks_.size(); i++) {
        const std::string b = prefix + "blk" + std::to_string(i) + ".";
        Block& blk = blocks_[i];
        reg.add(b + "ln1.g", blk.ln1_g);
        reg.add(b + "ln1.b", blk.ln1_b);
        reg.add(b + "attn.wq.w", blk.wq.w);
        reg.add(b + "attn.wq.b", blk.wq.b);
        reg.add(b + "attn.wk.w", blk.wk.w);
        reg.add(b + "attn.wk.b", blk.wk.b);
        reg.add(b + "attn.wv.w", blk.wv.w);
        reg.add(b + "attn.wv.b", blk.wv.b);
        reg.add(b + "attn.wo.w", blk.wo.w);
        reg.add(b + "attn.wo.b", blk.wo.b);
        reg.add(b + "ln2.g", blk.ln2_g);
        reg.add(b + "ln2.b", blk.ln2_b);
        reg.add(b + "mlp1.w", blk.mlp1.w);
        reg.add(b + "mlp1.b", blk.mlp1.b);
        reg.add(b + "mlp2.w", blk.mlp2.w);
        reg.add(b + "mlp2.b", blk.mlp2.b);
    }
    reg.add(prefix + "map.src_fore", map_src_fore_);
    reg.add(prefix + "map.src_back", map_src_back_);
    reg.add(prefix + "map.pos", map_pos_);
    reg.add(prefix + "map.k.w", map_k_.w);
    reg.add(prefix + "map.k.b", map_k_.b);
    reg.add(prefix + "map.v.w", map_v_.w);
    reg.add(prefix + "map.v.b", map_v_.b);
    reg.add(prefix + "map.queries", queries_);
    reg.add(prefix + "map.rank_down", rank_down_);
    reg.add(prefix + "map.rank_up", rank_up_);
    reg.add(prefix + "map.out_bias", out_bias_);
    reg.add(prefix + "null", null_);
}

template class FusionModule<float>;
template class FusionModule<double>;

}  // namespace foodfuse
