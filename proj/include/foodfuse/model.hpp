#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "foodfuse/adam.hpp"
#include "foodfuse/codec.hpp"
#include "foodfuse/config.hpp"
#include "foodfuse/diffusion.hpp"
#include "foodfuse/fusion.hpp"
#include "foodfuse/params.hpp"
#include "foodfuse/unet.hpp"

namespace foodfuse {

// The complete composer: latent codec, fusion encoder, denoiser, and the
// background control branch, built from one validated config and registered
// under stable dotted parameter names ("codec.*", "fusion.*", "unet.*",
// "cscm.*"). The registry shares storage with the modules, so optimizer
// updates through it take effect immediately.
class ComposerModel {
public:
    // Fresh weights, initialized from cfg.seed.
    explicit ComposerModel(const RunConfig& cfg);

    ComposerModel(ComposerModel&&) = default;
    ComposerModel& operator=(ComposerModel&&) = default;

    const RunConfig& config() const { return cfg_; }
    const Schedule& schedule() const { return schedule_; }

    LatentCodec32& codec() { return *codec_; }
    const LatentCodec32& codec() const { return *codec_; }
    FusionModule32& fusion() { return *fusion_; }
    const FusionModule32& fusion() const { return *fusion_; }
    DenoiserUNet32& unet() { return *unet_; }
    const DenoiserUNet32& unet() const { return *unet_; }
    ControlModule32& control() { return *control_; }
    const ControlModule32& control() const { return *control_; }

    ParamRegistry32& params() { return params_; }
    const ParamRegistry32& params() const { return params_; }

    // --- parameter groups ---------------------------------------------
    // Every parameter belongs to exactly one of these groups:
    //   latent_codec                  codec.*
    //   fusion_module                 fusion.* except the null row
    //   null_embeddings               fusion.null and cscm.null_ctx
    //   cscm                          cscm.* except its null context
    //   cross_attention_projections   the denoiser's attention q/k/v/o maps
    //   unet_trunk                    every remaining unet.*
    static const std::vector<std::string>& group_names();
    // Throws ConfigError for a name that is not registered.
    const std::string& group_of(const std::string& param_name) const;
    std::map<std::string, int64_t> group_param_counts() const;
    // Hash of the group's current values (names, shapes, raw bytes) — for
    // asserting that frozen groups never move.
    uint64_t group_hash(const std::string& group) const;
    // Unknown group names are a ConfigError.
    void set_group_trainable(const std::string& group, bool trainable);

    // --- persistence ----------------------------------------------------
    // Header: format_version, the full config JSON, and its digest. Blobs:
    // every parameter, plus the Adam state when `opt` is given. `extra`
    // merges additional header fields (e.g. the step count).
    void save_checkpoint(const std::string& path, const Adam32* opt = nullptr,
                         const nlohmann::json& extra = nlohmann::json::object()) const;
    // Rebuilds model and weights from the file. The embedded config must
    // re-hash to the digest stored next to it; a mismatch is refused with
    // both digests in the message. When `opt` is given, its moments are
    // restored too; `header_out` receives the raw header if non-null.
    static ComposerModel load_checkpoint(const std::string& path,
                                         nlohmann::json* header_out = nullptr,
                                         Adam32* opt = nullptr);

private:
    RunConfig cfg_;
    Schedule schedule_;
    std::unique_ptr<LatentCodec32> codec_;
    std::unique_ptr<FusionModule32> fusion_;
    std::unique_ptr<DenoiserUNet32> unet_;
    std::unique_ptr<ControlModule32> control_;
    ParamRegistry32 params_;
    std::map<std::string, std::string> group_of_;
};

}  // namespace foodfuse
