#include "foodfuse/config.hpp"

#include <fstream>
#include <sstream>

namespace foodfuse {

using nlohmann::json;

uint64_t fnv1a64(const void* data, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < n; i++) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string to_hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; i--) {
        s[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

namespace {

[[noreturn]] void bad_field(const std::string& path, const std::string& why) {
    throw ConfigError("config field " + path + ": " + why);
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) bad_field(where, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                ok = true;
                break;
            }
        if (!ok) bad_field(where.empty() ? it.key() : where + "." + it.key(), "unknown field");
    }
}

template <typename T>
void read_field(const json& j, const std::string& where, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const json::exception& e) {
        bad_field(where.empty() ? key : where + "." + std::string(key), e.what());
    }
}

void read_mode(const json& j, const std::string& where, CodecMode& out) {
    if (!j.contains("mode")) return;
    const std::string s = j.at("mode").is_string() ? j.at("mode").get<std::string>() : "";
    if (s == "patch")
        out = CodecMode::patch;
    else if (s == "learned")
        out = CodecMode::learned;
    else
        bad_field(where + ".mode", "expected \"patch\" or \"learned\"");
}

json codec_to_json(const LatentCodecConfig& c) {
    return json{{"mode", c.mode == CodecMode::patch ? "patch" : "learned"},
                {"downsample_factor", c.downsample_factor},
                {"latent_channels", c.latent_channels},
                {"hidden_channels", c.hidden_channels}};
}

LatentCodecConfig codec_from_json(const json& j) {
    LatentCodecConfig c;
    check_keys(j, "codec", {"mode", "downsample_factor", "latent_channels", "hidden_channels"});
    read_mode(j, "codec", c.mode);
    read_field(j, "codec", "downsample_factor", c.downsample_factor);
    read_field(j, "codec", "latent_channels", c.latent_channels);
    read_field(j, "codec", "hidden_channels", c.hidden_channels);
    return c;
}

json fusion_to_json(const FusionEncoderConfig& c) {
    return json{{"image_size", c.image_size}, {"patch_size", c.patch_size},
                {"width", c.width},           {"blocks", c.blocks},
                {"tap_layers", c.tap_layers}, {"num_queries", c.num_queries},
                {"d_ctx", c.d_ctx},           {"low_rank", c.low_rank}};
}

FusionEncoderConfig fusion_from_json(const json& j) {
    FusionEncoderConfig c;
    check_keys(j, "fusion",
               {"image_size", "patch_size", "width", "blocks", "tap_layers", "num_queries",
                "d_ctx", "low_rank"});
    read_field(j, "fusion", "image_size", c.image_size);
    read_field(j, "fusion", "patch_size", c.patch_size);
    read_field(j, "fusion", "width", c.width);
    read_field(j, "fusion", "blocks", c.blocks);
    read_field(j, "fusion", "tap_layers", c.tap_layers);
    read_field(j, "fusion", "num_queries", c.num_queries);
    read_field(j, "fusion", "d_ctx", c.d_ctx);
    read_field(j, "fusion", "low_rank", c.low_rank);
    return c;
}

json unet_to_json(const UNetConfig& c) {
    return json{{"in_channels", c.in_channels},
                {"base_channels", c.base_channels},
                {"channel_multipliers", c.channel_multipliers},
                {"attention_levels", c.attention_levels},
                {"d_ctx", c.d_ctx},
                {"timestep_embed_dim", c.timestep_embed_dim},
                {"norm_groups", c.norm_groups}};
}

UNetConfig unet_from_json(const json& j) {
    UNetConfig c;
    check_keys(j, "unet",
               {"in_channels", "base_channels", "channel_multipliers", "attention_levels",
                "d_ctx", "timestep_embed_dim", "norm_groups"});
    read_field(j, "unet", "in_channels", c.in_channels);
    read_field(j, "unet", "base_channels", c.base_channels);
    read_field(j, "unet", "channel_multipliers", c.channel_multipliers);
    read_field(j, "unet", "attention_levels", c.attention_levels);
    read_field(j, "unet", "d_ctx", c.d_ctx);
    read_field(j, "unet", "timestep_embed_dim", c.timestep_embed_dim);
    read_field(j, "unet", "norm_groups", c.norm_groups);
    return c;
}

json schedule_to_json(const ScheduleConfig& c) {
    return json{{"T", c.T}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}};
}

ScheduleConfig schedule_from_json(const json& j) {
    ScheduleConfig c;
    check_keys(j, "schedule", {"T", "beta_start", "beta_end"});
    read_field(j, "schedule", "T", c.T);
    read_field(j, "schedule", "beta_start", c.beta_start);
    read_field(j, "schedule", "beta_end", c.beta_end);
    return c;
}

json train_to_json(const TrainConfig& c) {
    return json{{"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"adam_beta1", c.adam_beta1},
                {"adam_beta2", c.adam_beta2},
                {"epochs", c.epochs},
                {"condition_dropout_prob", c.condition_dropout_prob},
                {"augment_foreground", c.augment_foreground},
                {"augment_background", c.augment_background},
                {"seed", c.seed},
                {"early_stop_patience", c.early_stop_patience},
                {"max_steps", c.max_steps},
                {"freeze_trunk", c.freeze_trunk}};
}

TrainConfig train_from_json(const json& j) {
    TrainConfig c;
    check_keys(j, "train",
               {"batch_size", "learning_rate", "adam_beta1", "adam_beta2", "epochs",
                "condition_dropout_prob", "augment_foreground", "augment_background", "seed",
                "early_stop_patience", "max_steps", "freeze_trunk"});
    read_field(j, "train", "batch_size", c.batch_size);
    read_field(j, "train", "learning_rate", c.learning_rate);
    read_field(j, "train", "adam_beta1", c.adam_beta1);
    read_field(j, "train", "adam_beta2", c.adam_beta2);
    read_field(j, "train", "epochs", c.epochs);
    read_field(j, "train", "condition_dropout_prob", c.condition_dropout_prob);
    read_field(j, "train", "augment_foreground", c.augment_foreground);
    read_field(j, "train", "augment_background", c.augment_background);
    read_field(j, "train", "seed", c.seed);
    read_field(j, "train", "early_stop_patience", c.early_stop_patience);
    read_field(j, "train", "max_steps", c.max_steps);
    read_field(j, "train", "freeze_trunk", c.freeze_trunk);
    return c;
}

json sampler_to_json(const SamplerConfig& c) {
    return json{{"steps", c.steps},
                {"guidance_scale", c.guidance_scale},
                {"eta", c.eta},
                {"seed", c.seed}};
}

SamplerConfig sampler_from_json(const json& j) {
    SamplerConfig c;
    check_keys(j, "sampler", {"steps", "guidance_scale", "eta", "seed"});
    read_field(j, "sampler", "steps", c.steps);
    read_field(j, "sampler", "guidance_scale", c.guidance_scale);
    read_field(j, "sampler", "eta", c.eta);
    read_field(j, "sampler", "seed", c.seed);
    return c;
}

}  // namespace

json forge_to_json(const ForgeConfig& c) {
    return json{{"image_size", c.image_size},
                {"triplet_count", c.triplet_count},
                {"shadow_enabled", c.shadow_enabled},
                {"views_per_foreground", c.views_per_foreground},
                {"quality_threshold", c.quality_threshold},
                {"min_mask_frac", c.min_mask_frac},
                {"max_mask_frac", c.max_mask_frac},
                {"seed", c.seed}};
}

ForgeConfig forge_from_json(const json& j) {
    ForgeConfig c;
    check_keys(j, "forge",
               {"image_size", "triplet_count", "shadow_enabled", "views_per_foreground",
                "quality_threshold", "min_mask_frac", "max_mask_frac", "seed"});
    read_field(j, "forge", "image_size", c.image_size);
    read_field(j, "forge", "triplet_count", c.triplet_count);
    read_field(j, "forge", "shadow_enabled", c.shadow_enabled);
    read_field(j, "forge", "views_per_foreground", c.views_per_foreground);
    read_field(j, "forge", "quality_threshold", c.quality_threshold);
    read_field(j, "forge", "min_mask_frac", c.min_mask_frac);
    read_field(j, "forge", "max_mask_frac", c.max_mask_frac);
    read_field(j, "forge", "seed", c.seed);
    return c;
}


void FusionEncoderConfig::validate() const {
    if (image_size < 1) bad_field("fusion.image_size", "must be positive");
    if (patch_size < 1) bad_field("fusion.patch_size", "must be positive");
    if (image_size % patch_size != 0)
        bad_field("fusion.image_size",
                  std::to_string(image_size) + " not divisible by patch_size " +
                      std::to_string(patch_size));
    if (width < 1) bad_field("fusion.width", "must be positive");
    if (blocks < 1) bad_field("fusion.blocks", "must be positive");
    if (tap_layers.empty()) bad_field("fusion.tap_layers", "must be non-empty");
    for (size_t i = 0; i < tap_layers.size(); i++) {
        if (tap_layers[i] < 1 || tap_layers[i] > blocks)
            bad_field("fusion.tap_layers", "entry " + std::to_string(tap_layers[i]) +
                                               " outside [1, " + std::to_string(blocks) + "]");
        if (i > 0 && tap_layers[i] <= tap_layers[i - 1])
            bad_field("fusion.tap_layers", "must be strictly increasing");
    }
    if (num_queries < 1) bad_field("fusion.num_queries", "must be positive");
    if (d_ctx < 1) bad_field("fusion.d_ctx", "must be positive");
    if (low_rank < 1 || low_rank > d_ctx)
        bad_field("fusion.low_rank", "must lie in [1, d_ctx]");
}

void UNetConfig::validate() const {
    if (in_channels < 1) bad_field("unet.in_channels", "must be positive");
    if (base_channels < 1) bad_field("unet.base_channels", "must be positive");
    if (levels() < 2) bad_field("unet.channel_multipliers", "need at least 2 levels");
    for (int m : channel_multipliers)
        if (m < 1) bad_field("unet.channel_multipliers", "multipliers must be positive");
    for (int a : attention_levels)
        if (a < 0 || a >= levels())
            bad_field("unet.attention_levels", "level " + std::to_string(a) + " outside [0, " +
                                                   std::to_string(levels()) + ")");
    if (d_ctx < 1) bad_field("unet.d_ctx", "must be positive");
    if (timestep_embed_dim < 2 || timestep_embed_dim % 2 != 0)
        bad_field("unet.timestep_embed_dim", "must be a positive even number");
    if (norm_groups < 1) bad_field("unet.norm_groups", "must be positive");
    if (base_channels % norm_groups != 0)
        bad_field("unet.norm_groups", "must divide base_channels");
}

void ScheduleConfig::validate() const {
    if (T < 1) bad_field("schedule.T", "must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        bad_field("schedule.beta_start/beta_end", "need 0 < beta_start <= beta_end < 1");
}

void ForgeConfig::validate() const {
    if (image_size < 8) bad_field("forge.image_size", "must be at least 8");
    if (triplet_count < 1) bad_field("forge.triplet_count", "must be positive");
    if (views_per_foreground < 1) bad_field("forge.views_per_foreground", "must be positive");
    if (quality_threshold < 0.0 || quality_threshold > 1.0)
        bad_field("forge.quality_threshold", "must lie in [0,1]");
    if (!(min_mask_frac > 0.0) || !(min_mask_frac < max_mask_frac) || !(max_mask_frac < 1.0))
        bad_field("forge.min_mask_frac/max_mask_frac", "need 0 < min < max < 1");
}

void TrainConfig::validate() const {
    if (batch_size < 1) bad_field("train.batch_size", "must be positive");
    if (!(learning_rate > 0.0)) bad_field("train.learning_rate", "must be positive");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0) bad_field("train.adam_beta1", "must lie in [0,1)");
    if (adam_beta2 < 0.0 || adam_beta2 >= 1.0) bad_field("train.adam_beta2", "must lie in [0,1)");
    if (epochs < 1) bad_field("train.epochs", "must be positive");
    if (condition_dropout_prob < 0.0 || condition_dropout_prob > 1.0)
        bad_field("train.condition_dropout_prob", "must lie in [0,1]");
    if (early_stop_patience < 1) bad_field("train.early_stop_patience", "must be positive");
    if (max_steps < 0) bad_field("train.max_steps", "must be >= 0");
}

void RunConfig::validate() const {
    codec.validate();
    fusion.validate();
    unet.validate();
    schedule.validate();
    forge.validate();
    train.validate();

    if (sampler.steps < 1 || sampler.steps > schedule.T)
        bad_field("sampler.steps", "must lie in [1, schedule.T=" + std::to_string(schedule.T) + "]");
    if (sampler.guidance_scale < 0.0) bad_field("sampler.guidance_scale", "must be >= 0");
    if (sampler.eta < 0.0 || sampler.eta > 1.0) bad_field("sampler.eta", "must lie in [0,1]");

    if (unet.d_ctx != fusion.d_ctx)
        bad_field("unet.d_ctx", "(" + std::to_string(unet.d_ctx) + ") must match fusion.d_ctx (" +
                                    std::to_string(fusion.d_ctx) + ")");
    if (unet.in_channels != codec.latent_channels)
        bad_field("unet.in_channels", "(" + std::to_string(unet.in_channels) +
                                          ") must match codec.latent_channels (" +
                                          std::to_string(codec.latent_channels) + ")");
    if (fusion.image_size != forge.image_size)
        bad_field("fusion.image_size", "(" + std::to_string(fusion.image_size) +
                                           ") must match forge.image_size (" +
                                           std::to_string(forge.image_size) + ")");
    if (forge.image_size % codec.downsample_factor != 0)
        bad_field("forge.image_size", std::to_string(forge.image_size) +
                                          " not divisible by codec.downsample_factor " +
                                          std::to_string(codec.downsample_factor));
    if (forge.image_size % fusion.patch_size != 0)
        bad_field("forge.image_size", std::to_string(forge.image_size) +
                                          " not divisible by fusion.patch_size " +
                                          std::to_string(fusion.patch_size));
    const int latent_hw = forge.image_size / codec.downsample_factor;
    const int down = 1 << (unet.levels() - 1);
    if (latent_hw % down != 0)
        bad_field("unet.channel_multipliers",
                  "latent extent " + std::to_string(latent_hw) + " not divisible by 2^(levels-1) = " +
                      std::to_string(down));
}

json RunConfig::to_json() const {
    return json{{"codec", codec_to_json(codec)},
                {"fusion", fusion_to_json(fusion)},
                {"unet", unet_to_json(unet)},
                {"schedule", schedule_to_json(schedule)},
                {"forge", forge_to_json(forge)},
                {"train", train_to_json(train)},
                {"sampler", sampler_to_json(sampler)},
                {"data_dir", data_dir},
                {"checkpoint_path", checkpoint_path},
                {"report_dir", report_dir},
                {"out_dir", out_dir},
                {"seed", seed}};
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    check_keys(j, "",
               {"codec", "fusion", "unet", "schedule", "forge", "train", "sampler", "data_dir",
                "checkpoint_path", "report_dir", "out_dir", "seed"});
    if (j.contains("codec")) c.codec = codec_from_json(j.at("codec"));
    if (j.contains("fusion")) c.fusion = fusion_from_json(j.at("fusion"));
    if (j.contains("unet")) c.unet = unet_from_json(j.at("unet"));
    if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
    if (j.contains("forge")) c.forge = forge_from_json(j.at("forge"));
    if (j.contains("train")) c.train = train_from_json(j.at("train"));
    if (j.contains("sampler")) c.sampler = sampler_from_json(j.at("sampler"));
    read_field(j, "", "data_dir", c.data_dir);
    read_field(j, "", "checkpoint_path", c.checkpoint_path);
    read_field(j, "", "report_dir", c.report_dir);
    read_field(j, "", "out_dir", c.out_dir);
    read_field(j, "", "seed", c.seed);
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
    }
    RunConfig c = from_json(j);
    c.validate();
    return c;
}

void RunConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("config: cannot write " + path);
    out << to_json().dump(2) << "\n";
    if (!out) throw IoError("config: short write to " + path);
}

std::string RunConfig::canonical_text() const { return to_json().dump(); }

uint64_t RunConfig::digest() const {
    const std::string t = canonical_text();
    return fnv1a64(t.data(), t.size());
}

std::string RunConfig::digest_hex() const { return to_hex64(digest()); }

}  // namespace foodfuse
