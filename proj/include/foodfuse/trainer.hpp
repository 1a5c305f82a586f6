#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "foodfuse/forge.hpp"
#include "foodfuse/image.hpp"
#include "foodfuse/model.hpp"
#include "foodfuse/rng.hpp"

namespace foodfuse {

// Photometric jitter applied strictly inside the subject mask: additive
// Gaussian noise (sigma up to 0.05), a mild box blur (radius up to 2), and
// ~5% pixel dropout onto the white canvas. Pixels outside the mask are
// returned untouched.
Image jitter_foreground_pixels(const Image& fore, const Image& mask, RngStream& rng);

// Full foreground augmentation: the jitter above followed by one mild
// geometric warp shared by image and mask (parameters stay well inside the
// dataset-view bounds: rotation within 30 degrees, scale within 0.7-1.3,
// and so on). Identity (exact copies, no draws) when disabled.
std::pair<Image, Image> augment_foreground(const Image& fore, const Image& mask, RngStream& rng,
                                           bool enabled);

// Random resized crop, scale drawn from [0.8, 1.0], resampled back to the
// full extent. Identity (exact copy, no draws) when disabled.
Image augment_background(const Image& back, RngStream& rng, bool enabled);

// One already-stacked training batch, each tensor (B,3,S,S) in [0,1].
struct TrainBatch {
    Tensor32 ground_truth;
    Tensor32 foreground;
    Tensor32 background;
};

// Test hook replacing the denoiser prediction: receives the noised latent,
// the per-sample timesteps and the drawn noise, returns the prediction to
// score. Lets tests pin the objective's fixed points (predicting the noise
// itself scores 0; predicting zeros scores the noise's mean square).
using PredictionHook =
    std::function<Tensor32(const Tensor32& z_t, const std::vector<int>& t, const Tensor32& eps)>;

struct LossStats {
    std::vector<int> timesteps;
    int dropped_conditions = 0;
};

// The denoising objective on one batch:
//   z0 = encode(ground truth); t ~ U{0..T-1} per sample; eps ~ N(0,1);
//   z_t = add_noise(z0, t, eps);
//   h = fuse(fore tokens, back tokens), replaced per sample by the learned
//       null context with probability condition_dropout;
//   injections = control branch(z_t, encode(background), t);
//   loss = MSE(prediction, eps).
// Draw order per call: t (one per sample), eps, dropout coins (always drawn,
// also at probability 0 or 1, so streams stay aligned across settings).
// A non-finite loss raises NumericError carrying batch diagnostics.
Tensor32 composition_loss(ComposerModel& model, const TrainBatch& batch, RngStream& rng,
                          double condition_dropout, const PredictionHook* hook = nullptr,
                          LossStats* stats = nullptr);

struct StepRecord {
    int64_t step = 0;  // 1-based optimizer step
    double train_loss = 0.0;
    double val_loss = 0.0;  // meaningful only when has_val
    bool has_val = false;
};

struct FitResult {
    std::vector<StepRecord> curve;
    int64_t steps = 0;      // optimizer steps actually run
    int64_t epochs = 0;
    int64_t best_step = 0;  // step whose validation loss was lowest
    double best_val = 0.0;
    bool early_stopped = false;
};

struct FitOptions {
    std::string csv_path;         // loss curve ("" = none)
    std::string checkpoint_path;  // trained weights ("" = none)
    // called once per epoch with the epoch-final row (val filled in)
    std::function<void(const StepRecord&)> on_epoch_end;
};

// Training loop driven by model.config().train:
//   - one optimizer step per batch, deterministic shuffle per epoch;
//   - per-epoch validation on the val split (or on the train split when the
//     val split is empty), with noise draws fixed per batch index so epochs
//     are comparable;
//   - early stop after early_stop_patience epochs without val improvement;
//   - CSV columns exactly "step,train_loss,val_loss"; the val column is
//     filled on the last step of each epoch and empty elsewhere;
//   - whenever the validation loss improves, the weights and optimizer
//     moments are snapshotted; at the end the model is rolled back to that
//     best snapshot and the checkpoint is written from it (header carries
//     its step), so the selected weights never have a validation loss worse
//     than the best observed; on a non-finite loss or gradient the
//     still-good pre-step weights are saved instead and the error is
//     rethrown;
//   - every random draw is keyed by (train.seed, purpose, step/epoch), so a
//     rerun with the same config reproduces the curve exactly.
FitResult fit(ComposerModel& model, const DatasetManifest& manifest, const std::string& data_root,
              const FitOptions& opts = {});

}  // namespace foodfuse
