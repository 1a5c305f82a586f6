#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "foodfuse/codec.hpp"
#include "foodfuse/diffusion.hpp"

namespace foodfuse {

// Vision-transformer encoder + fusion mapper settings.
struct FusionEncoderConfig {
    int image_size = 64;                  // extent the encoder is built for
    int patch_size = 8;                   // p
    int width = 96;                       // token width per block
    int blocks = 4;                       // transformer depth
    std::vector<int> tap_layers = {2, 3, 4};  // 1-indexed blocks whose outputs concat
    int num_queries = 16;                 // K fused tokens
    int d_ctx = 128;                      // fused token width
    int low_rank = 16;                    // bottleneck rank r

    int token_count() const { return (image_size / patch_size) * (image_size / patch_size); }
    int d_total() const { return static_cast<int>(tap_layers.size()) * width; }
    void validate() const;
};

struct UNetConfig {
    int in_channels = 48;                      // latent channels
    int base_channels = 64;
    std::vector<int> channel_multipliers = {1, 2};  // one entry per level
    std::vector<int> attention_levels = {0, 1};     // levels carrying cross-attention
    int d_ctx = 128;
    int timestep_embed_dim = 128;
    int norm_groups = 8;

    int levels() const { return static_cast<int>(channel_multipliers.size()); }
    void validate() const;
};

struct ScheduleConfig {
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    void validate() const;
    Schedule build() const { return build_schedule(T, beta_start, beta_end); }
};

struct ForgeConfig {
    int image_size = 64;
    int triplet_count = 100;
    bool shadow_enabled = true;
    int views_per_foreground = 1;
    double quality_threshold = 0.5;
    double min_mask_frac = 0.05;
    double max_mask_frac = 0.6;
    uint64_t seed = 0;

    void validate() const;
};

struct TrainConfig {
    int batch_size = 12;
    double learning_rate = 5e-5;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.99;
    int epochs = 300;
    double condition_dropout_prob = 0.1;
    bool augment_foreground = true;
    bool augment_background = true;
    uint64_t seed = 0;
    int early_stop_patience = 20;
    int max_steps = 0;  // 0 = no cap
    bool freeze_trunk = false;

    void validate() const;
};

// The whole run: every module's settings plus paths. The config file is the
// source of truth; a digest of the canonical serialization identifies it in
// checkpoints and reports.
struct RunConfig {
    LatentCodecConfig codec;
    FusionEncoderConfig fusion;
    UNetConfig unet;
    ScheduleConfig schedule;
    ForgeConfig forge;
    TrainConfig train;
    SamplerConfig sampler;
    std::string data_dir;
    std::string checkpoint_path;
    std::string report_dir;
    std::string out_dir;
    uint64_t seed = 0;

    // per-struct checks plus cross-field consistency (context widths agree,
    // image extents divisible by codec factor and patch size, ...)
    void validate() const;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::string& path);
    void save(const std::string& path) const;

    // sorted keys, shortest round-trip floats — byte-stable across runs
    std::string canonical_text() const;
    uint64_t digest() const;
    std::string digest_hex() const;
};

uint64_t fnv1a64(const void* data, size_t n);
std::string to_hex64(uint64_t v);

// Section serializers used where a dataset manifest echoes the settings it
// was produced with. Unknown keys are rejected with the offending name.
nlohmann::json forge_to_json(const ForgeConfig& c);
ForgeConfig forge_from_json(const nlohmann::json& j);

}  // namespace foodfuse
