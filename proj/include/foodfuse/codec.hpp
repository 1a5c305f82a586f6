#pragma once

#include <cstdint>
#include <string>

#include "foodfuse/image.hpp"
#include "foodfuse/params.hpp"
#include "foodfuse/tensor.hpp"

namespace foodfuse {

enum class CodecMode { patch, learned };

struct LatentCodecConfig {
    CodecMode mode = CodecMode::patch;
    int downsample_factor = 4;  // f
    int latent_channels = 48;   // c; patch mode forces 3*f*f
    int hidden_channels = 32;   // learned-mode conv width

    void validate() const;
};

// Encoder/decoder pair between RGB images in [0,1] and the latent space the
// diffusion process runs in.
//
// patch mode: a lossless space-to-depth rearrangement. Pixels are snapped to
// the 8-bit grid (the grid every PNG-sourced image already lives on) and
// mapped to [-1,1] through an integer-exact transform, so
// decode(encode(x)) == x bit-for-bit whenever x came from 8-bit data. No
// parameters, fully deterministic.
//
// learned mode: a small convolutional autoencoder (pixel-MSE trainable via
// train_codec_reconstruction). Encode output is linear; decode ends in a
// sigmoid so images always land in [0,1].
template <typename T>
class LatentCodec {
public:
    explicit LatentCodec(const LatentCodecConfig& cfg, uint64_t seed = 0);

    const LatentCodecConfig& config() const { return cfg_; }

    // (3,H,W) -> (c,H/f,W/f), or batched (B,3,H,W) -> (B,c,H/f,W/f)
    Tensor<T> encode(const Tensor<T>& image) const;
    // inverse arrangement; accepts the same ranks encode produces
    Tensor<T> decode(const Tensor<T>& latent) const;

    Tensor<T> encode_image(const Image& img) const;
    Image decode_to_image(const Tensor<T>& latent) const;

    Shape latent_shape(int height, int width) const;

    void collect_params(const std::string& prefix, ParamRegistry<T>& out);

private:
    Tensor<T> encode4(const Tensor<T>& image) const;
    Tensor<T> decode4(const Tensor<T>& latent) const;

    LatentCodecConfig cfg_;
    // learned-mode weights (empty tensors in patch mode)
    Tensor<T> enc_in_w_, enc_in_b_, enc_down_w_, enc_down_b_, enc_out_w_, enc_out_b_;
    Tensor<T> dec_in_w_, dec_in_b_, dec_mid_w_, dec_mid_b_, dec_out_w_, dec_out_b_;
};

// Overfit the codec on a small image set (N,3,H,W) with pixel MSE and Adam;
// returns the final batch loss. Only meaningful in learned mode.
template <typename T>
double train_codec_reconstruction(LatentCodec<T>& codec, const Tensor<T>& images, int steps,
                                  int batch, double lr, uint64_t seed = 0);

using LatentCodec32 = LatentCodec<float>;
using LatentCodec64 = LatentCodec<double>;

}  // namespace foodfuse
