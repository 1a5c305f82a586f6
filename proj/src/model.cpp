#include "foodfuse/model.hpp"

#include <algorithm>
#include <set>

#include "foodfuse/checkpoint.hpp"
#include "foodfuse/common.hpp"

namespace foodfuse {

namespace {

using nlohmann::json;

// incremental FNV-1a so a group hash can chain names, shapes and payloads
void fnv_mix(uint64_t& h, const void* data, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; i++) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
}

bool starts_with(const std::string& s, const char* prefix) {
    return s.rfind(prefix, 0) == 0;
}

}  // namespace

ComposerModel::ComposerModel(const RunConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    schedule_ = cfg_.schedule.build();
    codec_ = std::make_unique<LatentCodec32>(cfg_.codec, cfg_.seed);
    fusion_ = std::make_unique<FusionModule32>(cfg_.fusion, cfg_.seed);
    unet_ = std::make_unique<DenoiserUNet32>(cfg_.unet, cfg_.seed);
    control_ = std::make_unique<ControlModule32>(*unet_, cfg_.seed);

    codec_->collect_params("codec.", params_);
    fusion_->collect_params("fusion.", params_);
    unet_->collect_params("unet.", params_);
    control_->collect_params("cscm.", params_);

    // the denoiser's attention projections form their own group
    ParamRegistry32 attn;
    unet_->collect_attention_projection_params("unet.", attn);
    std::set<std::string> attn_names;
    for (const auto& p : attn.items()) attn_names.insert(p.name);

    for (const auto& p : params_.items()) {
        const std::string& n = p.name;
        std::string g;
        if (starts_with(n, "codec."))
            g = "latent_codec";
        else if (n == "fusion.null" || n == "cscm.null_ctx")
            g = "null_embeddings";
        else if (starts_with(n, "fusion."))
            g = "fusion_module";
        else if (starts_with(n, "cscm."))
            g = "cscm";
        else if (starts_with(n, "unet."))
            g = attn_names.count(n) ? "cross_attention_projections" : "unet_trunk";
        else
            throw ConfigError("parameter outside every group: " + n);
        group_of_[n] = g;
    }
}

const std::vector<std::string>& ComposerModel::group_names() {
    static const std::vector<std::string> names = {
        "fusion_module", "cross_attention_projections", "cscm",
        "null_embeddings", "latent_codec", "unet_trunk"};
    return names;
}

const std::string& ComposerModel::group_of(const std::string& param_name) const {
    auto it = group_of_.find(param_name);
    if (it == group_of_.end()) throw ConfigError("unknown parameter: " + param_name);
    return it->second;
}

std::map<std::string, int64_t> ComposerModel::group_param_counts() const {
    std::map<std::string, int64_t> counts;
    for (const std::string& g : group_names()) counts[g] = 0;
    for (const auto& p : params_.items()) counts[group_of_.at(p.name)] += p.tensor.numel();
    return counts;
}

uint64_t ComposerModel::group_hash(const std::string& group) const {
    if (std::find(group_names().begin(), group_names().end(), group) == group_names().end())
        throw ConfigError("unknown parameter group: " + group);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params_.items()) {
        if (group_of_.at(p.name) != group) continue;
        fnv_mix(h, p.name.data(), p.name.size());
        for (int64_t d = 0; d < p.tensor.ndim(); d++) {
            const int64_t e = p.tensor.dim(static_cast<int>(d));
            fnv_mix(h, &e, sizeof e);
        }
        fnv_mix(h, p.tensor.data(),
                static_cast<size_t>(p.tensor.numel()) * sizeof(float));
    }
    return h;
}

void ComposerModel::set_group_trainable(const std::string& group, bool trainable) {
    if (std::find(group_names().begin(), group_names().end(), group) == group_names().end())
        throw ConfigError("unknown parameter group: " + group);
    for (auto& p : params_.items_mut())
        if (group_of_.at(p.name) == group) p.tensor.set_requires_grad(trainable);
}

void ComposerModel::save_checkpoint(const std::string& path, const Adam32* opt,
                                    const nlohmann::json& extra) const {
    json header = json::object();
    if (extra.is_object())
        for (auto it = extra.begin(); it != extra.end(); ++it) header[it.key()] = it.value();
    header["config"] = cfg_.to_json();
    header["config_digest"] = cfg_.digest_hex();
    CheckpointWriter w(header);
    add_params(w, params_);
    if (opt) add_adam_state(w, *opt);
    w.write(path);
}

ComposerModel ComposerModel::load_checkpoint(const std::string& path, nlohmann::json* header_out,
                                             Adam32* opt) {
    Checkpoint ck = Checkpoint::read(path);
    if (!ck.header.contains("config") || !ck.header.contains("config_digest"))
        throw ConfigError("checkpoint " + path + " has no embedded config");
    RunConfig cfg = RunConfig::from_json(ck.header.at("config"));
    const std::string stored = ck.header.at("config_digest").get<std::string>();
    const std::string actual = cfg.digest_hex();
    if (stored != actual)
        throw ConfigError("checkpoint " + path + " config digest mismatch: header says " +
                          stored + " but the embedded config hashes to " + actual);
    ComposerModel model(cfg);
    load_params(ck, model.params_);
    if (opt) load_adam_state(ck, *opt);
    if (header_out) *header_out = ck.header;
    return model;
}

}  // namespace foodfuse
