#pragma once

#include <string>
#include <vector>

#include "foodfuse/config.hpp"
#include "foodfuse/image.hpp"
#include "foodfuse/rng.hpp"

namespace foodfuse {

// Procedural triplet factory. Every record is a pure function of
// (config seed, candidate index): scenes, view warps and background noise
// each draw from their own keyed stream, so a rebuild with the same config
// reproduces the dataset byte for byte.

// One synthesized tabletop scene at its canonical pose.
//   scene    - subject composited over the backdrop (RGB)
//   backdrop - the same frame without the subject (RGB)
//   mask     - exact binary subject mask (single channel, values 0/1)
struct SceneSample {
    Image scene;
    Image backdrop;
    Image mask;
};

// Draw a full scene: gradient backdrop with a faint sinusoidal texture and a
// tabletop band, a light plate ellipse, and 1-3 wobbly-radius blobs in
// saturated colors sitting on the plate. The mask is computed from the same
// analytic inside-test used to paint the blobs, so it matches the rendered
// subject exactly. Redraws until the mask fraction lands inside
// [min_mask_frac, max_mask_frac]; gives up with NumericError after 100
// attempts.
SceneSample synthesize_scene(const ForgeConfig& cfg, RngStream& rng);

// Subject cut out over white: mask ? scene : 1. An all-zero mask is a
// ConfigError (there is no subject); an all-one mask returns the scene
// unchanged.
Image acquire_foreground(const Image& scene, const Image& mask);

// One randomized view of a foreground/mask pair, produced by a single shared
// warp (rotation up to 30 degrees, scale 0.7-1.3, mild shear, perspective and
// shift). The foreground is resampled against a white fill, the mask against
// black and re-thresholded to stay binary.
struct ViewSample {
    Image foreground;
    Image mask;
    WarpParams warp;
};

// Draws warps until the warped mask keeps at least min_mask_frac of the
// frame; NumericError after 100 attempts.
ViewSample generate_view(const Image& foreground, const Image& mask, RngStream& rng,
                         double min_mask_frac);

// Per-pixel select: mask ? fore : back.
Image composite_over(const Image& fore, const Image& mask, const Image& back);

// Deterministic soft drop shadow: the mask is shifted by a fixed offset
// (a fraction of the frame), feathered, and used to darken the backdrop -
// but only outside the subject mask itself. No randomness.
Image apply_shadow(const Image& backdrop, const Image& mask);

// Fill the masked region of a ground-truth frame by boundary diffusion
// (Gauss-Seidel Laplace relaxation seeded with the boundary mean), then add
// noise inside the region matched to the high-frequency texture measured
// outside it. Pixels outside the mask are returned verbatim. An all-one mask
// is a ConfigError (no boundary to diffuse from); an all-zero mask returns
// the input unchanged.
Image generate_background(const Image& ground_truth, const Image& mask, RngStream& rng);

// Product of three gates in [0,1]: mask fraction inside the configured range
// (linear falloff outside), seam contrast between subject and filled
// background inside the mask, and verbatim agreement outside the mask.
// Records scoring below cfg.quality_threshold are dropped by build_dataset.
double quality_score(const Image& ground_truth, const Image& mask, const Image& background,
                     const ForgeConfig& cfg);

// One manifest row. `id` doubles as the record directory name.
struct RecordInfo {
    std::string id;
    std::string split;  // "train" | "val" | "test"
    int scene = 0;      // index of the canonical scene this view came from
    double quality = 0.0;
    double mask_frac = 0.0;
};

// manifest.json contents: the forge settings the set was produced with plus
// one row per record.
struct DatasetManifest {
    ForgeConfig forge;
    std::vector<RecordInfo> records;

    std::vector<RecordInfo> split(const std::string& name) const;

    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j);
    // Reads <root>/manifest.json.
    static DatasetManifest load(const std::string& root);
};

// <root>/<split>/<id>
std::string record_dir(const std::string& root, const RecordInfo& rec);

// The four images of one record, loaded back from disk. The mask is
// re-thresholded to exact 0/1 after PNG decoding.
struct Triplet {
    Image foreground;
    Image mask;
    Image background;
    Image ground_truth;
};

Triplet load_triplet(const std::string& root, const RecordInfo& rec);

// Synthesize cfg.triplet_count records under root:
//   <root>/<split>/<id>/{foreground,mask,background,ground_truth}.png
// plus <root>/manifest.json. Splits are 80/10/10 assigned by hashing record
// ids (floor quotas, remainder to test). Candidates that fail the quality
// gate are skipped; NumericError if the accepted count cannot be reached
// within 20x the requested number of candidates.
// Candidate accounting for one build, reported by build_dataset on request.
struct ForgeStats {
    int64_t accepted = 0;
    int64_t rejected = 0;  // candidates that failed the quality gate
};

DatasetManifest build_dataset(const ForgeConfig& cfg, const std::string& root,
                              ForgeStats* stats = nullptr);

}  // namespace foodfuse
