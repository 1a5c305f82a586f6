#include "foodfuse/codec.hpp"

#include <cmath>

#include "foodfuse/adam.hpp"
#include "foodfuse/ops.hpp"
#include "foodfuse/rng.hpp"

namespace foodfuse {

namespace {

// [0,1] float -> nearest 8-bit level
inline int to_level(float x) {
    const long k = std::lround(static_cast<double>(x) * 255.0);
    return static_cast<int>(k < 0 ? 0 : (k > 255 ? 255 : k));
}

// level k -> [-1,1]; (2k-255)/255 is computed from exact integers so the
// inverse below recovers k for every level
inline float level_to_latent(int k) {
    return static_cast<float>(2 * k - 255) / 255.0f;
}

inline int latent_to_level(float y) {
    const long k = std::lround((static_cast<double>(y) * 255.0 + 255.0) / 2.0);
    return static_cast<int>(k < 0 ? 0 : (k > 255 ? 255 : k));
}

template <typename T>
Tensor<T> he_normal(const Shape& shape, int fan_in, RngStream& rng) {
    Tensor<T> w = Tensor<T>::zeros(shape);
    rng.fill_normal(w.data(), w.numel(), std::sqrt(2.0 / fan_in));
    return w;
}

}  // namespace

void LatentCodecConfig::validate() const {
    if (downsample_factor < 1)
        throw ConfigError("codec: downsample factor must be >= 1, got " +
                          std::to_string(downsample_factor));
    if (latent_channels < 1)
        throw ConfigError("codec: latent channels must be >= 1");
    if (mode == CodecMode::patch &&
        latent_channels != 3 * downsample_factor * downsample_factor)
        throw ConfigError("codec: patch mode requires latent_channels = 3*f*f = " +
                          std::to_string(3 * downsample_factor * downsample_factor) + ", got " +
                          std::to_string(latent_channels));
    if (mode == CodecMode::learned && hidden_channels < 1)
        throw ConfigError("codec: hidden channels must be >= 1");
}

template <typename T>
LatentCodec<T>::LatentCodec(const LatentCodecConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.mode != CodecMode::learned) return;
    const int f = cfg_.downsample_factor;
    const int h = cfg_.hidden_channels;
    const int c = cfg_.latent_channels;
    RngStream rng(seed, "codec.init");
    enc_in_w_ = he_normal<T>({h, 3, 3, 3}, 3 * 9, rng).set_requires_grad();
    enc_in_b_ = Tensor<T>::zeros({h}).set_requires_grad();
    enc_down_w_ = he_normal<T>({h, h, f, f}, h * f * f, rng).set_requires_grad();
    enc_down_b_ = Tensor<T>::zeros({h}).set_requires_grad();
    enc_out_w_ = he_normal<T>({c, h, 3, 3}, h * 9, rng).set_requires_grad();
    enc_out_b_ = Tensor<T>::zeros({c}).set_requires_grad();
    dec_in_w_ = he_normal<T>({h, c, 3, 3}, c * 9, rng).set_requires_grad();
    dec_in_b_ = Tensor<T>::zeros({h}).set_requires_grad();
    dec_mid_w_ = he_normal<T>({h, h, 3, 3}, h * 9, rng).set_requires_grad();
    dec_mid_b_ = Tensor<T>::zeros({h}).set_requires_grad();
    dec_out_w_ = he_normal<T>({3, h, 3, 3}, h * 9, rng).set_requires_grad();
    dec_out_b_ = Tensor<T>::zeros({3}).set_requires_grad();
}

template <typename T>
Shape LatentCodec<T>::latent_shape(int height, int width) const {
    const int f = cfg_.downsample_factor;
    if (height % f != 0 || width % f != 0)
        throw ConfigError("codec: image extent " + std::to_string(width) + "x" +
                          std::to_string(height) + " not divisible by downsample factor " +
                          std::to_string(f));
    return {cfg_.latent_channels, height / f, width / f};
}

template <typename T>
Tensor<T> LatentCodec<T>::encode(const Tensor<T>& image) const {
    if (image.ndim() == 3) {
        Shape batched = image.shape();
        batched.insert(batched.begin(), 1);
        Tensor<T> out = encode4(reshape(image, batched));
        Shape s = out.shape();
        s.erase(s.begin());
        return reshape(out, s);
    }
    if (image.ndim() == 4) return encode4(image);
    throw ShapeError("encode", "expected (3,H,W) or (B,3,H,W), got " + shape_str(image.shape()));
}

template <typename T>
Tensor<T> LatentCodec<T>::decode(const Tensor<T>& latent) const {
    if (latent.ndim() == 3) {
        Shape batched = latent.shape();
        batched.insert(batched.begin(), 1);
        Tensor<T> out = decode4(reshape(latent, batched));
        Shape s = out.shape();
        s.erase(s.begin());
        return reshape(out, s);
    }
    if (latent.ndim() == 4) return decode4(latent);
    throw ShapeError("decode", "expected (c,h,w) or (B,c,h,w), got " + shape_str(latent.shape()));
}

template <typename T>
Tensor<T> LatentCodec<T>::encode4(const Tensor<T>& image) const {
    const Shape& s = image.shape();
    if (s[1] != 3)
        throw ShapeError("encode", "expected 3 image channels, got " + shape_str(s));
    const int f = cfg_.downsample_factor;
    if (s[2] % f != 0 || s[3] % f != 0)
        throw ConfigError("codec: image extent " + std::to_string(s[3]) + "x" +
                          std::to_string(s[2]) + " not divisible by downsample factor " +
                          std::to_string(f));

    if (cfg_.mode == CodecMode::learned) {
        // shift [0,1] input to [-1,1] before the convs
        Tensor<T> x = scale(sub(image, Tensor<T>::full({1}, static_cast<T>(0.5))), 2.0);
        x = silu(conv2d(x, enc_in_w_, enc_in_b_, 1, 1));
        x = silu(conv2d(x, enc_down_w_, enc_down_b_, f, 0));
        return conv2d(x, enc_out_w_, enc_out_b_, 1, 1);
    }

    // patch mode: deterministic space-to-depth on the 8-bit grid
    const int B = s[0], H = s[2], W = s[3];
    const int oh = H / f, ow = W / f;
    Tensor<T> out = Tensor<T>::zeros({B, 3 * f * f, oh, ow});
    const T* src = image.data();
    T* dst = out.data();
    const int64_t in_plane = static_cast<int64_t>(H) * W;
    const int64_t out_plane = static_cast<int64_t>(oh) * ow;
    for (int b = 0; b < B; b++)
        for (int c = 0; c < 3; c++)
            for (int dy = 0; dy < f; dy++)
                for (int dx = 0; dx < f; dx++) {
                    const int lc = (c * f + dy) * f + dx;
                    const T* ip = src + (static_cast<int64_t>(b) * 3 + c) * in_plane;
                    T* op = dst + (static_cast<int64_t>(b) * 3 * f * f + lc) * out_plane;
                    for (int y = 0; y < oh; y++)
                        for (int x = 0; x < ow; x++)
                            op[static_cast<int64_t>(y) * ow + x] = static_cast<T>(level_to_latent(
                                to_level(static_cast<float>(
                                    ip[static_cast<int64_t>(y * f + dy) * W + (x * f + dx)]))));
                }
    return out;
}

template <typename T>
Tensor<T> LatentCodec<T>::decode4(const Tensor<T>& latent) const {
    const Shape& s = latent.shape();
    if (s[1] != cfg_.latent_channels)
        throw ShapeError("decode", "expected " + std::to_string(cfg_.latent_channels) +
                                       " latent channels, got " + shape_str(s));
    const int f = cfg_.downsample_factor;

    if (cfg_.mode == CodecMode::learned) {
        Tensor<T> x = silu(conv2d(latent, dec_in_w_, dec_in_b_, 1, 1));
        x = nearest_upsample(x, f);
        x = silu(conv2d(x, dec_mid_w_, dec_mid_b_, 1, 1));
        return sigmoid(conv2d(x, dec_out_w_, dec_out_b_, 1, 1));
    }

    const int B = s[0], oh = s[2], ow = s[3];
    const int H = oh * f, W = ow * f;
    Tensor<T> out = Tensor<T>::zeros({B, 3, H, W});
    const T* src = latent.data();
    T* dst = out.data();
    const int64_t in_plane = static_cast<int64_t>(oh) * ow;
    const int64_t out_plane = static_cast<int64_t>(H) * W;
    for (int b = 0; b < B; b++)
        for (int c = 0; c < 3; c++)
            for (int dy = 0; dy < f; dy++)
                for (int dx = 0; dx < f; dx++) {
                    const int lc = (c * f + dy) * f + dx;
                    const T* ip = src + (static_cast<int64_t>(b) * 3 * f * f + lc) * in_plane;
                    T* op = dst + (static_cast<int64_t>(b) * 3 + c) * out_plane;
                    for (int y = 0; y < oh; y++)
                        for (int x = 0; x < ow; x++)
                            op[static_cast<int64_t>(y * f + dy) * W + (x * f + dx)] =
                                static_cast<T>(latent_to_level(static_cast<float>(
                                                   ip[static_cast<int64_t>(y) * ow + x])) /
                                               255.0f);
                }
    return out;
}

template <typename T>
Tensor<T> LatentCodec<T>::encode_image(const Image& img) const {
    if (img.channels != 3) throw ConfigError("codec: expected a 3-channel image");
    Tensor32 t = image_to_tensor(img);
    if constexpr (std::is_same_v<T, float>) {
        return encode(t);
    } else {
        Tensor<T> cast = Tensor<T>::zeros(t.shape());
        for (int64_t i = 0; i < t.numel(); i++) cast.data()[i] = static_cast<T>(t.data()[i]);
        return encode(cast);
    }
}

template <typename T>
Image LatentCodec<T>::decode_to_image(const Tensor<T>& latent) const {
    Tensor<T> img = decode(latent.ndim() == 4 ? Tensor<T>(slice(latent, 0, 0, 1)) : latent);
    if (img.ndim() == 4) {
        Shape s = img.shape();
        s.erase(s.begin());
        img = reshape(img, s);
    }
    if constexpr (std::is_same_v<T, float>) {
        return tensor_to_image(img, true);
    } else {
        Tensor32 cast = Tensor32::zeros(img.shape());
        for (int64_t i = 0; i < img.numel(); i++)
            cast.data()[i] = static_cast<float>(img.data()[i]);
        return tensor_to_image(cast, true);
    }
}

template <typename T>
void LatentCodec<T>::collect_params(const std::string& prefix, ParamRegistry<T>& out) {
    if (cfg_.mode != CodecMode::learned) return;
    out.add(prefix + "enc.in.w", enc_in_w_);
    out.add(prefix + "enc.in.b", enc_in_b_);
    out.add(prefix + "enc.down.w", enc_down_w_);
    out.add(prefix + "enc.down.b", enc_down_b_);
    out.add(prefix + "enc.out.w", enc_out_w_);
    out.add(prefix + "enc.out.b", enc_out_b_);
    out.add(prefix + "dec.in.w", dec_in_w_);
    out.add(prefix + "dec.in.b", dec_in_b_);
    out.add(prefix + "dec.mid.w", dec_mid_w_);
    out.add(prefix + "dec.mid.b", dec_mid_b_);
    out.add(prefix + "dec.out.w", dec_out_w_);
    out.add(prefix + "dec.out.b", dec_out_b_);
}

template <typename T>
double train_codec_reconstruction(LatentCodec<T>& codec, const Tensor<T>& images, int steps,
                                  int batch, double lr, uint64_t seed) {
    if (codec.config().mode != CodecMode::learned)
        throw ConfigError("codec training requires learned mode");
    if (images.ndim() != 4) throw ShapeError("codec training", "expected (N,3,H,W) images");
    const int N = images.shape()[0];
    if (batch < 1 || batch > N) batch = N;

    typename Adam<T>::Config acfg;
    acfg.lr = lr;
    acfg.beta1 = 0.9;
    acfg.beta2 = 0.999;
    Adam<T> opt(acfg);
    ParamRegistry<T> reg;
    codec.collect_params("codec.", reg);

    RngStream pick(seed, "codec.batch");
    double last = 0.0;
    for (int s = 0; s < steps; s++) {
        std::vector<Tensor<T>> rows;
        rows.reserve(static_cast<size_t>(batch));
        for (int i = 0; i < batch; i++)
            rows.push_back(slice(images, 0, static_cast<int>(pick.uniform_int(N)), 1));
        Tensor<T> x = batch == 1 ? rows[0] : concat(rows, 0);
        reg.zero_grads();
        Tensor<T> loss = mse(codec.decode(codec.encode(x)), x);
        loss.backward();
        opt.step(reg);
        last = static_cast<double>(loss.item());
    }
    return last;
}

template class LatentCodec<float>;
template class LatentCodec<double>;
template double train_codec_reconstruction<float>(LatentCodec<float>&, const Tensor32&, int, int,
                                                  double, uint64_t);
template double train_codec_reconstruction<double>(LatentCodec<double>&, const Tensor64&, int,
                                                   int, double, uint64_t);

}  // namespace foodfuse
