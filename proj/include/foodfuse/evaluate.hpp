#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "foodfuse/forge.hpp"
#include "foodfuse/image.hpp"
#include "foodfuse/model.hpp"

namespace foodfuse {

// --- metrics ---------------------------------------------------------------

// 10*log10(1/MSE) for images in [0,1], capped at 100 dB (the value returned
// for MSE = 0). Weakly decreasing in MSE, strictly below the cap.
double psnr_from_mse(double mse);
// Mean squared error over all pixels and channels, accumulated in double.
double mse_between(const Image& a, const Image& b);
double psnr(const Image& a, const Image& b);

// Perceptual distance proxy: both images run through the conditioning
// encoder, every token feature row is normalized to unit length, and the
// L2 distances between corresponding rows are averaged per tap layer, then
// across tap layers. Zero for identical inputs, symmetric, >= 0. This is a
// stand-in computed with the model's own encoder — reports label it "proxy";
// it is not comparable to scores from pretrained perceptual networks.
double perceptual_proxy_distance(const FusionModule32& encoder, const Image& a, const Image& b);

// --- composition -----------------------------------------------------------

struct ComposeFlags {
    bool use_cscm = true;    // feed background structure injections
    bool use_fusion = true;  // false: condition on the foreground embedding alone
};

// Full sampling pipeline: encode the conditioning images, run the guided
// denoising loop from pure noise, and decode the result. Several foregrounds
// concatenate their token sequences before the fuse step. Deterministic in
// (model weights, inputs, sampler settings). Images must match the model's
// configured extent.
Image compose(const ComposerModel& model, const std::vector<Image>& foregrounds,
              const Image& background, const SamplerConfig& sampler,
              const ComposeFlags& flags = {});

// --- split evaluation ------------------------------------------------------

struct EvalFlags {
    bool no_cscm = false;   // drop the structure injections at sampling time
    bool no_fusion = false;  // replace the fused context with the foreground embedding
    bool oracle_gt = false;  // score the ground truth against itself (harness check)
};

struct EvalRow {
    std::string id;
    double psnr_db = 0.0;
    double proxy = 0.0;
};

struct EvalReport {
    std::string split;
    EvalFlags flags;
    std::vector<EvalRow> rows;
    double mean_psnr_db = 0.0;
    double mean_proxy = 0.0;
    std::string config_digest;
    std::string checkpoint_digest;

    nlohmann::json to_json() const;
};

// Composes every record of the split with the model's configured sampler
// (each record's noise seeded from the sampler seed and the record id) and
// scores the result against the stored ground truth. When report_dir is
// non-empty, writes per_sample.csv, summary.json, and a sheets/<id>.png
// strip (foreground | background | composite | ground truth) per record.
EvalReport evaluate(const ComposerModel& model, const DatasetManifest& manifest,
                    const std::string& data_root, const std::string& split,
                    const EvalFlags& flags = {}, const std::string& report_dir = "",
                    const std::string& checkpoint_digest = "");

}  // namespace foodfuse
