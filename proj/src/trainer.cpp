#include "foodfuse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "foodfuse/common.hpp"
#include "foodfuse/diffusion.hpp"
#include "foodfuse/ops.hpp"

namespace foodfuse {

namespace {

void check_fore_mask(const char* op, const Image& img, const Image& mask) {
    if (img.width <= 0 || img.height <= 0) throw ShapeError(op, "image is empty");
    if (mask.channels != 1 || mask.width != img.width || mask.height != img.height)
        throw ShapeError(op, "mask must be single-channel with the image's extent");
}

float clamp01f(double v) { return static_cast<float>(std::min(1.0, std::max(0.0, v))); }

double max_abs(const Tensor32& t) {
    double m = 0.0;
    const float* d = t.data();
    for (int64_t i = 0; i < t.numel(); i++) m = std::max(m, std::abs(static_cast<double>(d[i])));
    return m;
}

// stack images as one (B,C,H,W) input tensor
Tensor32 stack_batch(const std::vector<Image>& imgs) {
    const Image& f = imgs.front();
    std::vector<float> buf;
    buf.reserve(imgs.size() * f.pix.size());
    for (const Image& img : imgs) {
        Tensor32 t = image_to_tensor(img);
        const std::vector<float>& v = t.vec();
        buf.insert(buf.end(), v.begin(), v.end());
    }
    return Tensor32::from({static_cast<int>(imgs.size()), f.channels, f.height, f.width}, buf);
}

}  // namespace

Image jitter_foreground_pixels(const Image& fore, const Image& mask, RngStream& rng) {
    check_fore_mask("jitter_foreground_pixels", fore, mask);
    const double sigma = rng.uniform(0.0, 0.05);
    const int blur_r = static_cast<int>(rng.uniform_int(3));  // {0,1,2}

    Image out = fore;
    for (int y = 0; y < out.height; y++)
        for (int x = 0; x < out.width; x++) {
            if (mask.at(y, x, 0) < 0.5f) continue;
            for (int c = 0; c < out.channels; c++)
                out.at(y, x, c) = clamp01f(out.at(y, x, c) + sigma * rng.normal());
        }
    if (blur_r > 0) {
        const Image blurred = box_blur(out, blur_r);
        for (int y = 0; y < out.height; y++)
            for (int x = 0; x < out.width; x++) {
                if (mask.at(y, x, 0) < 0.5f) continue;
                for (int c = 0; c < out.channels; c++) out.at(y, x, c) = blurred.at(y, x, c);
            }
    }
    // ~5% of subject pixels erased to the white canvas
    for (int y = 0; y < out.height; y++)
        for (int x = 0; x < out.width; x++) {
            if (mask.at(y, x, 0) < 0.5f) continue;
            if (rng.uniform() < 0.05)
                for (int c = 0; c < out.channels; c++) out.at(y, x, c) = 1.f;
        }
    return out;
}

std::pair<Image, Image> augment_foreground(const Image& fore, const Image& mask, RngStream& rng,
                                           bool enabled) {
    check_fore_mask("augment_foreground", fore, mask);
    if (!enabled) return {fore, mask};
    Image jittered = jitter_foreground_pixels(fore, mask, rng);
    WarpParams p;
    p.rotation_deg = rng.uniform(-10.0, 10.0);
    p.scale = rng.uniform(0.9, 1.1);
    p.shear_x = rng.uniform(-0.03, 0.03);
    p.shear_y = rng.uniform(-0.03, 0.03);
    p.perspective_x = rng.uniform(-0.001, 0.001);
    p.perspective_y = rng.uniform(-0.001, 0.001);
    p.shift_x = rng.uniform(-0.02, 0.02);
    p.shift_y = rng.uniform(-0.02, 0.02);
    Image wf = warp_image(jittered, p, 1.f);
    Image wm = threshold_mask(warp_image(mask, p, 0.f));
    return {std::move(wf), std::move(wm)};
}

Image augment_background(const Image& back, RngStream& rng, bool enabled) {
    if (!enabled) return back;
    const double s = rng.uniform(0.8, 1.0);
    const double w0 = s * back.width, h0 = s * back.height;
    const double x0 = rng.uniform(0.0, back.width - w0);
    const double y0 = rng.uniform(0.0, back.height - h0);
    return resize_crop_bilinear(back, x0, y0, w0, h0, back.width, back.height);
}

Tensor32 composition_loss(ComposerModel& model, const TrainBatch& batch, RngStream& rng,
                          double condition_dropout, const PredictionHook* hook,
                          LossStats* stats) {
    const Tensor32& gt = batch.ground_truth;
    if (gt.ndim() != 4 || batch.foreground.ndim() != 4 || batch.background.ndim() != 4)
        throw ShapeError("composition_loss", "batch tensors must be (B,3,S,S)");
    const int B = gt.dim(0);
    if (batch.foreground.dim(0) != B || batch.background.dim(0) != B)
        throw ShapeError("composition_loss", "batch tensors disagree on the batch size");

    const Schedule& sched = model.schedule();

    Tensor32 z0 = model.codec().encode(gt);
    std::vector<int> t(static_cast<size_t>(B));
    for (int i = 0; i < B; i++) t[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(sched.T));
    Tensor32 eps = Tensor32::randn(z0.shape(), rng);
    Tensor32 z_t = add_noise(z0, t, eps, sched);

    // fused context, each sample dropped onto the learned null row with the
    // given probability (the coins are always drawn to keep streams aligned)
    Tensor32 fore_tokens = model.fusion().encode_image(batch.foreground);
    Tensor32 back_tokens = model.fusion().encode_image(batch.background);
    Tensor32 h = model.fusion().fuse(fore_tokens, back_tokens);
    std::vector<float> keep(static_cast<size_t>(B)), drop(static_cast<size_t>(B));
    int dropped = 0;
    for (int i = 0; i < B; i++) {
        const bool d = rng.uniform() < condition_dropout;
        keep[static_cast<size_t>(i)] = d ? 0.f : 1.f;
        drop[static_cast<size_t>(i)] = d ? 1.f : 0.f;
        dropped += d ? 1 : 0;
    }
    h = add(scale_per_batch(h, Tensor32::from({B}, keep)),
            scale_per_batch(model.fusion().null_context(B), Tensor32::from({B}, drop)));

    Tensor32 bg_latent = model.codec().encode(batch.background);
    std::vector<Tensor32> injections = model.control().forward(z_t, bg_latent, t);

    Tensor32 eps_hat = hook ? (*hook)(z_t, t, eps) : model.unet().forward(z_t, t, h, &injections);
    Tensor32 loss = mse(eps_hat, eps);

    const double value = loss.item();
    if (!std::isfinite(value)) {
        std::ostringstream os;
        os << "composition_loss: loss is not finite; t=[";
        for (size_t i = 0; i < t.size(); i++) os << (i ? "," : "") << t[i];
        os << "], max|z0|=" << max_abs(z0) << ", max|z_t|=" << max_abs(z_t)
           << ", max|prediction|=" << max_abs(eps_hat);
        throw NumericError(os.str());
    }
    if (stats) {
        stats->timesteps = t;
        stats->dropped_conditions = dropped;
    }
    return loss;
}

FitResult fit(ComposerModel& model, const DatasetManifest& manifest, const std::string& data_root,
              const FitOptions& opts) {
    const RunConfig& cfg = model.config();
    const TrainConfig& tc = cfg.train;

    const std::vector<RecordInfo> train_recs = manifest.split("train");
    std::vector<RecordInfo> val_recs = manifest.split("val");
    if (train_recs.empty()) throw ConfigError("fit: the train split is empty");
    if (val_recs.empty()) val_recs = train_recs;  // documented fallback

    auto preload = [&](const std::vector<RecordInfo>& recs) {
        std::vector<Triplet> out;
        out.reserve(recs.size());
        for (const RecordInfo& r : recs) {
            Triplet t = load_triplet(data_root, r);
            if (t.ground_truth.width != cfg.fusion.image_size ||
                t.ground_truth.height != cfg.fusion.image_size)
                throw ConfigError("fit: record " + r.id + " is " +
                                  std::to_string(t.ground_truth.width) + "x" +
                                  std::to_string(t.ground_truth.height) +
                                  " but the model expects " + std::to_string(cfg.fusion.image_size));
            out.push_back(std::move(t));
        }
        return out;
    };
    const std::vector<Triplet> train_data = preload(train_recs);
    const std::vector<Triplet> val_data = preload(val_recs);

    if (tc.freeze_trunk) {
        model.set_group_trainable("unet_trunk", false);
        model.set_group_trainable("latent_codec", false);
    }

    Adam32::Config oc;
    oc.lr = tc.learning_rate;
    oc.beta1 = tc.adam_beta1;
    oc.beta2 = tc.adam_beta2;
    Adam32 opt(oc);

    std::ofstream csv;
    if (!opts.csv_path.empty()) {
        csv.open(opts.csv_path, std::ios::trunc);
        if (!csv) throw IoError("cannot write " + opts.csv_path);
        csv << "step,train_loss,val_loss\n";
        csv << std::setprecision(10);
    }

    FitResult res;
    size_t flushed = 0;
    auto flush_csv = [&]() {
        if (!csv.is_open()) return;
        for (; flushed < res.curve.size(); flushed++) {
            const StepRecord& r = res.curve[flushed];
            csv << r.step << "," << r.train_loss << ",";
            if (r.has_val) csv << r.val_loss;
            csv << "\n";
        }
        csv.flush();
    };
    auto save_checkpoint_now = [&](int64_t at_step) {
        if (opts.checkpoint_path.empty()) return;
        model.save_checkpoint(opts.checkpoint_path, &opt,
                              nlohmann::json{{"step", at_step}});
    };

    const size_t bs = static_cast<size_t>(tc.batch_size);
    auto make_batch = [&](const std::vector<Triplet>& data, const std::vector<size_t>& idx,
                          size_t lo, size_t hi, bool augment, RngStream& aug_rng) {
        std::vector<Image> gts, fores, backs;
        gts.reserve(hi - lo);
        fores.reserve(hi - lo);
        backs.reserve(hi - lo);
        for (size_t i = lo; i < hi; i++) {
            const Triplet& t = data[idx[i]];
            gts.push_back(t.ground_truth);
            if (augment) {
                auto fm = augment_foreground(t.foreground, t.mask, aug_rng, tc.augment_foreground);
                fores.push_back(std::move(fm.first));
                backs.push_back(augment_background(t.background, aug_rng, tc.augment_background));
            } else {
                fores.push_back(t.foreground);
                backs.push_back(t.background);
            }
        }
        TrainBatch b;
        b.ground_truth = stack_batch(gts);
        b.foreground = stack_batch(fores);
        b.background = stack_batch(backs);
        return b;
    };

    std::vector<size_t> val_idx(val_data.size());
    std::iota(val_idx.begin(), val_idx.end(), size_t{0});
    auto run_val = [&]() {
        NoGradGuard ng;
        double acc = 0.0;
        int64_t batches = 0;
        for (size_t lo = 0; lo < val_data.size(); lo += bs) {
            const size_t hi = std::min(lo + bs, val_data.size());
            RngStream no_aug(0, "unused");
            TrainBatch b = make_batch(val_data, val_idx, lo, hi, false, no_aug);
            // noise fixed per batch index: identical draws every epoch
            RngStream vr(tc.seed, "train.val", static_cast<uint64_t>(lo));
            acc += composition_loss(model, b, vr, 0.0).item();
            batches++;
        }
        return acc / static_cast<double>(batches);
    };

    const int64_t max_steps =
        tc.max_steps > 0 ? tc.max_steps : std::numeric_limits<int64_t>::max();
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    int64_t step = 0;
    bool stop = false;

    // best-validation snapshot: the checkpoint never carries weights whose
    // validation loss is worse than the best seen
    std::vector<std::vector<float>> best_weights;
    std::unordered_map<std::string, Adam32::State> best_opt_state;
    int64_t best_step = 0;
    auto take_snapshot = [&]() {
        best_weights.clear();
        for (const auto& p : model.params().items()) best_weights.push_back(p.tensor.vec());
        best_opt_state = opt.states();
        best_step = step;
    };
    auto restore_snapshot = [&]() {
        auto& items = model.params().items_mut();
        for (size_t i = 0; i < items.size(); i++) items[i].tensor.vec() = best_weights[i];
    };

    for (int64_t epoch = 0; epoch < tc.epochs && !stop; epoch++) {
        res.epochs = epoch + 1;
        std::vector<size_t> idx(train_data.size());
        std::iota(idx.begin(), idx.end(), size_t{0});
        RngStream shuffle_rng(tc.seed, "train.order", static_cast<uint64_t>(epoch));
        for (size_t i = idx.size(); i > 1; i--)
            std::swap(idx[i - 1],
                      idx[static_cast<size_t>(shuffle_rng.uniform_int(static_cast<int64_t>(i)))]);

        for (size_t lo = 0; lo < idx.size() && !stop; lo += bs) {
            const size_t hi = std::min(lo + bs, idx.size());
            step++;
            RngStream aug_rng(tc.seed, "train.aug", static_cast<uint64_t>(step));
            TrainBatch batch = make_batch(train_data, idx, lo, hi, true, aug_rng);
            RngStream loss_rng(tc.seed, "train.step", static_cast<uint64_t>(step));
            Tensor32 loss;
            try {
                loss = composition_loss(model, batch, loss_rng, tc.condition_dropout_prob);
            } catch (const NumericError& e) {
                flush_csv();
                save_checkpoint_now(step - 1);
                throw NumericError(std::string(e.what()) + " (step " + std::to_string(step) +
                                   "; the weights from before this step were saved)");
            }
            const double lv = loss.item();
            model.params().zero_grads();
            loss.backward();
            for (const auto& p : model.params().items()) {
                if (!p.tensor.has_grad()) continue;
                for (const float g : p.tensor.grad())
                    if (!std::isfinite(g)) {
                        flush_csv();
                        save_checkpoint_now(step - 1);
                        throw NumericError("fit: non-finite gradient in " + p.name + " at step " +
                                           std::to_string(step) +
                                           "; the weights from before this step were saved");
                    }
            }
            opt.step(model.params());
            res.curve.push_back(StepRecord{step, lv, 0.0, false});
            if (step >= max_steps) stop = true;
        }

        const double vl = run_val();
        if (!res.curve.empty()) {
            res.curve.back().val_loss = vl;
            res.curve.back().has_val = true;
        }
        flush_csv();
        if (vl < best_val) {
            best_val = vl;
            since_best = 0;
            take_snapshot();
        } else if (++since_best >= tc.early_stop_patience && !stop) {
            stop = true;
            res.early_stopped = true;
        }
    }

    res.steps = step;
    res.best_step = best_step;
    res.best_val = best_val;
    flush_csv();

    // roll the model back to the best-validation weights and persist those
    restore_snapshot();
    if (!opts.checkpoint_path.empty()) {
        Adam32 best_opt(oc);
        for (const auto& [name, st] : best_opt_state) best_opt.restore_state(name, st);
        model.save_checkpoint(opts.checkpoint_path, &best_opt,
                              nlohmann::json{{"step", best_step}});
    }
    return res;
}

}  // namespace foodfuse
