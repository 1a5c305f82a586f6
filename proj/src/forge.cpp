#include "foodfuse/forge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "foodfuse/common.hpp"
#include "foodfuse/png_io.hpp"

namespace foodfuse {

namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

double sq(double v) { return v * v; }

float clamp01(double v) { return static_cast<float>(std::min(1.0, std::max(0.0, v))); }

struct Rgb {
    double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
    h -= std::floor(h);
    const double x = h * 6.0;
    const int i = std::min(5, static_cast<int>(x));
    const double f = x - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (i) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

void check_mask_pair(const char* op, const Image& img, const Image& mask) {
    if (img.width <= 0 || img.height <= 0)
        throw ShapeError(op, "image is empty");
    if (mask.channels != 1 || mask.width != img.width || mask.height != img.height)
        throw ShapeError(op, "mask must be single-channel with the image's extent");
}

double mask_fraction(const Image& mask) {
    if (mask.pix.empty()) return 0.0;
    double s = 0.0;
    for (float v : mask.pix) s += (v >= 0.5f) ? 1.0 : 0.0;
    return s / static_cast<double>(mask.pix.size());
}

// A closed curve with a wobbly radius: r(theta) = r0 * (1 + sum_k a_k sin(k theta + phi_k)).
struct Blob {
    double cx = 0, cy = 0, r0 = 1;
    double amp[4] = {0, 0, 0, 0};  // harmonics k = 2..5
    double phase[4] = {0, 0, 0, 0};
    double hue = 0, sat = 0, val = 0;
    double tex_amp = 0, tex_fx = 0, tex_fy = 0, tex_phase = 0;

    // distance-to-radius ratio along the pixel's bearing; <= 1 means inside
    double rho(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double d = std::sqrt(dx * dx + dy * dy);
        const double th = std::atan2(dy, dx);
        double r = 1.0;
        for (int j = 0; j < 4; j++) r += amp[j] * std::sin((j + 2) * th + phase[j]);
        return d / (std::max(0.2, r) * r0);
    }
};

void require_exact_keys(const json& j, const std::string& ctx,
                        std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError(ctx + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : keys)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw ConfigError("unknown key " + ctx + "." + it.key());
    }
    for (const char* k : keys)
        if (!j.contains(k)) throw ConfigError("missing key " + ctx + "." + k);
}

}  // namespace

SceneSample synthesize_scene(const ForgeConfig& cfg, RngStream& rng) {
    const int S = cfg.image_size;
    if (S < 8) throw ConfigError("synthesize_scene: image_size must be at least 8");

    for (int attempt = 0; attempt < 100; attempt++) {
        // Draw the whole recipe up front in a fixed order so the stream stays
        // aligned across rejection retries.
        const double grad_top = rng.uniform(0.25, 0.55);
        const double grad_bot = rng.uniform(0.20, 0.50);
        double tint_top[3], tint_bot[3];
        for (double& v : tint_top) v = rng.uniform(-0.06, 0.06);
        for (double& v : tint_bot) v = rng.uniform(-0.06, 0.06);
        const double tex_amp = rng.uniform(0.01, 0.03);
        const double tex_fx = 1.0 + static_cast<double>(rng.uniform_int(4));
        const double tex_fy = 1.0 + static_cast<double>(rng.uniform_int(4));
        const double tex_phase = rng.uniform(0.0, 2.0 * kPi);
        const double band_y = rng.uniform(0.55, 0.75) * S;
        const double band_l = rng.uniform(0.45, 0.70);
        double tint_band[3];
        for (double& v : tint_band) v = rng.uniform(-0.08, 0.08);
        const double pcx = rng.uniform(0.35, 0.65) * S;
        const double pcy = rng.uniform(0.65, 0.80) * S;
        const double prx = rng.uniform(0.18, 0.30) * S;
        const double pry = prx * rng.uniform(0.35, 0.55);
        const double plate_l = rng.uniform(0.85, 0.97);
        double tint_plate[3];
        for (double& v : tint_plate) v = rng.uniform(-0.03, 0.03);

        const int n_blobs = 1 + static_cast<int>(rng.uniform_int(3));
        const double target_frac = rng.uniform(0.08, 0.30);
        static const double kAmpMax[4] = {0.12, 0.08, 0.05, 0.04};
        std::vector<Blob> blobs(static_cast<size_t>(n_blobs));
        for (Blob& b : blobs) {
            b.r0 = S * std::sqrt(target_frac / n_blobs / kPi) * (1.0 + rng.uniform(-0.1, 0.1));
            const double margin = std::min(1.3 * b.r0 + 1.0, 0.4 * S);
            b.cx = std::clamp(pcx + rng.uniform(-0.12, 0.12) * S, margin, S - 1.0 - margin);
            b.cy = std::clamp(pcy - 0.03 * S + rng.uniform(-0.10, 0.06) * S, margin,
                              S - 1.0 - margin);
            for (int j = 0; j < 4; j++) {
                b.amp[j] = rng.uniform(0.0, kAmpMax[j]);
                b.phase[j] = rng.uniform(0.0, 2.0 * kPi);
            }
            b.hue = rng.uniform(0.0, 1.0);
            b.sat = rng.uniform(0.60, 0.95);
            b.val = rng.uniform(0.55, 0.95);
            b.tex_amp = rng.uniform(0.01, 0.03);
            b.tex_fx = 2.0 + static_cast<double>(rng.uniform_int(5));
            b.tex_fy = 2.0 + static_cast<double>(rng.uniform_int(5));
            b.tex_phase = rng.uniform(0.0, 2.0 * kPi);
        }

        // Rasterize subject and mask together from one inside-test so they
        // can never disagree.
        Image mask(S, S, 1, 0.f);
        Image fore(S, S, 3, 1.f);
        for (int y = 0; y < S; y++)
            for (int x = 0; x < S; x++) {
                double best = std::numeric_limits<double>::infinity();
                const Blob* hit = nullptr;
                for (const Blob& b : blobs) {
                    const double r = b.rho(x, y);
                    if (r < best) {
                        best = r;
                        hit = &b;
                    }
                }
                if (best > 1.0) continue;
                mask.at(y, x, 0) = 1.f;
                const Rgb col = hsv_to_rgb(hit->hue, hit->sat, hit->val * (1.0 - 0.3 * best * best));
                const double btex =
                    hit->tex_amp *
                    std::sin(2.0 * kPi * (hit->tex_fx * x + hit->tex_fy * y) / S + hit->tex_phase);
                fore.at(y, x, 0) = clamp01(col.r + btex);
                fore.at(y, x, 1) = clamp01(col.g + btex);
                fore.at(y, x, 2) = clamp01(col.b + btex);
            }

        const double frac = mask_fraction(mask);
        if (frac < cfg.min_mask_frac || frac > cfg.max_mask_frac) continue;

        // Backdrop: vertical gradient, tabletop band, plate ellipse, and a
        // faint full-frame sinusoidal texture.
        Image backdrop(S, S, 3);
        for (int y = 0; y < S; y++) {
            const double g = S > 1 ? static_cast<double>(y) / (S - 1) : 0.0;
            const double bw = std::clamp((y - band_y) / 2.0, 0.0, 1.0);
            for (int x = 0; x < S; x++) {
                const double e = sq((x - pcx) / prx) + sq((y - pcy) / pry);
                const double tex =
                    tex_amp * std::sin(2.0 * kPi * (tex_fx * x + tex_fy * y) / S + tex_phase);
                for (int c = 0; c < 3; c++) {
                    double v = (1.0 - g) * (grad_top + tint_top[c]) + g * (grad_bot + tint_bot[c]);
                    v = (1.0 - bw) * v + bw * (band_l + tint_band[c]);
                    if (e <= 1.0) {
                        v = plate_l + tint_plate[c];
                        if (e >= 0.82) v *= 0.88;  // rim
                    }
                    backdrop.at(y, x, c) = clamp01(v + tex);
                }
            }
        }

        Image base = cfg.shadow_enabled ? apply_shadow(backdrop, mask) : backdrop;
        SceneSample out;
        out.scene = composite_over(fore, mask, base);
        out.backdrop = std::move(backdrop);
        out.mask = std::move(mask);
        return out;
    }
    throw NumericError(
        "synthesize_scene: no draw landed a mask fraction inside the configured range "
        "within 100 attempts");
}

Image acquire_foreground(const Image& scene, const Image& mask) {
    check_mask_pair("acquire_foreground", scene, mask);
    bool any = false;
    for (float v : mask.pix)
        if (v >= 0.5f) {
            any = true;
            break;
        }
    if (!any) throw ConfigError("acquire_foreground: mask selects no pixels");
    Image out(scene.width, scene.height, scene.channels, 1.f);
    for (int y = 0; y < scene.height; y++)
        for (int x = 0; x < scene.width; x++)
            if (mask.at(y, x, 0) >= 0.5f)
                for (int c = 0; c < scene.channels; c++) out.at(y, x, c) = scene.at(y, x, c);
    return out;
}

ViewSample generate_view(const Image& foreground, const Image& mask, RngStream& rng,
                         double min_mask_frac) {
    check_mask_pair("generate_view", foreground, mask);
    for (int attempt = 0; attempt < 100; attempt++) {
        WarpParams p;
        p.rotation_deg = rng.uniform(-30.0, 30.0);
        p.scale = rng.uniform(0.7, 1.3);
        p.shear_x = rng.uniform(-0.08, 0.08);
        p.shear_y = rng.uniform(-0.08, 0.08);
        p.perspective_x = rng.uniform(-0.002, 0.002);
        p.perspective_y = rng.uniform(-0.002, 0.002);
        p.shift_x = rng.uniform(-0.05, 0.05);
        p.shift_y = rng.uniform(-0.05, 0.05);
        Image wm = threshold_mask(warp_image(mask, p, 0.f));
        if (mask_fraction(wm) < min_mask_frac) continue;
        ViewSample v;
        v.foreground = warp_image(foreground, p, 1.f);
        v.mask = std::move(wm);
        v.warp = p;
        return v;
    }
    throw NumericError(
        "generate_view: no warp kept enough of the subject in frame within 100 attempts");
}

Image composite_over(const Image& fore, const Image& mask, const Image& back) {
    if (!fore.same_extent(back))
        throw ShapeError("composite_over", "foreground and background extents differ");
    check_mask_pair("composite_over", fore, mask);
    Image out = back;
    for (int y = 0; y < out.height; y++)
        for (int x = 0; x < out.width; x++)
            if (mask.at(y, x, 0) >= 0.5f)
                for (int c = 0; c < out.channels; c++) out.at(y, x, c) = fore.at(y, x, c);
    return out;
}

Image apply_shadow(const Image& backdrop, const Image& mask) {
    check_mask_pair("apply_shadow", backdrop, mask);
    const int w = backdrop.width, h = backdrop.height;
    const int dx = std::max(1, static_cast<int>(std::lround(0.04 * w)));
    const int dy = std::max(1, static_cast<int>(std::lround(0.05 * h)));
    Image shifted(w, h, 1, 0.f);
    for (int y = 0; y < h; y++) {
        const int sy = y - dy;
        if (sy < 0) continue;
        for (int x = dx; x < w; x++) shifted.at(y, x, 0) = mask.at(sy, x - dx, 0);
    }
    const Image soft = box_blur(shifted, std::max(1, w / 32));
    Image out = backdrop;
    for (int y = 0; y < h; y++)
        for (int x = 0; x < w; x++) {
            if (mask.at(y, x, 0) >= 0.5f) continue;
            const double f = 1.0 - 0.35 * soft.at(y, x, 0);
            for (int c = 0; c < out.channels; c++)
                out.at(y, x, c) = clamp01(out.at(y, x, c) * f);
        }
    return out;
}

Image generate_background(const Image& ground_truth, const Image& mask, RngStream& rng) {
    check_mask_pair("generate_background", ground_truth, mask);
    const int w = ground_truth.width, h = ground_truth.height, ch = ground_truth.channels;

    std::vector<std::pair<int, int>> inside;  // (y, x), raster order
    for (int y = 0; y < h; y++)
        for (int x = 0; x < w; x++)
            if (mask.at(y, x, 0) >= 0.5f) inside.emplace_back(y, x);
    if (inside.empty()) return ground_truth;
    if (inside.size() == static_cast<size_t>(w) * static_cast<size_t>(h))
        throw ConfigError("generate_background: mask covers the entire frame; no boundary to fill from");

    Image out = ground_truth;

    // Seed the region with the mean of the just-outside boundary ring (fall
    // back to the mean of everything outside if the region only touches the
    // frame edge).
    std::vector<double> seed(static_cast<size_t>(ch), 0.0);
    int64_t seed_n = 0;
    static const int kOff[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (const auto& [y, x] : inside)
        for (const auto& o : kOff) {
            const int ny = y + o[0], nx = x + o[1];
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            if (mask.at(ny, nx, 0) >= 0.5f) continue;
            for (int c = 0; c < ch; c++) seed[static_cast<size_t>(c)] += ground_truth.at(ny, nx, c);
            seed_n++;
        }
    if (seed_n == 0) {
        for (int y = 0; y < h; y++)
            for (int x = 0; x < w; x++) {
                if (mask.at(y, x, 0) >= 0.5f) continue;
                for (int c = 0; c < ch; c++) seed[static_cast<size_t>(c)] += ground_truth.at(y, x, c);
                seed_n++;
            }
    }
    for (int c = 0; c < ch; c++) seed[static_cast<size_t>(c)] /= static_cast<double>(seed_n);
    for (const auto& [y, x] : inside)
        for (int c = 0; c < ch; c++) out.at(y, x, c) = static_cast<float>(seed[static_cast<size_t>(c)]);

    // Gauss-Seidel Laplace relaxation: repeatedly replace each inside pixel
    // by the average of its in-frame neighbors. Outside pixels act as fixed
    // boundary values, so the fill diffuses the surrounding colors inward.
    const int iters = 500;
    for (int it = 0; it < iters; it++)
        for (const auto& [y, x] : inside) {
            double acc[3] = {0, 0, 0};
            int cnt = 0;
            for (const auto& o : kOff) {
                const int ny = y + o[0], nx = x + o[1];
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                for (int c = 0; c < ch; c++) acc[c] += out.at(ny, nx, c);
                cnt++;
            }
            if (cnt == 0) continue;
            for (int c = 0; c < ch; c++) out.at(y, x, c) = static_cast<float>(acc[c] / cnt);
        }

    // Match the high-frequency texture measured outside the region: add
    // Gaussian noise with the per-channel standard deviation of the outside
    // high-pass residual. The residual is sampled only where the blur window
    // cannot overlap the masked region, so subject colors bleeding through
    // the low-pass never inflate the estimate. Only inside pixels are
    // touched.
    const int blur_r = 2;
    const Image low = box_blur(ground_truth, blur_r);
    const Image keepout = dilate_mask(mask, blur_r);
    std::vector<double> m1(static_cast<size_t>(ch), 0.0), m2(static_cast<size_t>(ch), 0.0);
    int64_t n_out = 0;
    for (int pass = 0; pass < 2 && n_out == 0; pass++) {
        // second pass (only if the dilated mask swallowed everything): fall
        // back to all outside pixels
        const Image& region = pass == 0 ? keepout : mask;
        for (int y = 0; y < h; y++)
            for (int x = 0; x < w; x++) {
                if (region.at(y, x, 0) >= 0.5f) continue;
                for (int c = 0; c < ch; c++) {
                    const double d = ground_truth.at(y, x, c) - low.at(y, x, c);
                    m1[static_cast<size_t>(c)] += d;
                    m2[static_cast<size_t>(c)] += d * d;
                }
                n_out++;
            }
    }
    std::vector<double> sigma(static_cast<size_t>(ch), 0.0);
    for (int c = 0; c < ch; c++) {
        const double mean = m1[static_cast<size_t>(c)] / static_cast<double>(n_out);
        const double var = m2[static_cast<size_t>(c)] / static_cast<double>(n_out) - mean * mean;
        sigma[static_cast<size_t>(c)] = std::min(0.1, std::sqrt(std::max(0.0, var)));
    }
    for (const auto& [y, x] : inside)
        for (int c = 0; c < ch; c++)
            out.at(y, x, c) = clamp01(out.at(y, x, c) + sigma[static_cast<size_t>(c)] * rng.normal());

    return out;
}

double quality_score(const Image& ground_truth, const Image& mask, const Image& background,
                     const ForgeConfig& cfg) {
    check_mask_pair("quality_score", ground_truth, mask);
    if (!ground_truth.same_extent(background))
        throw ShapeError("quality_score", "ground truth and background extents differ");

    const double frac = mask_fraction(mask);
    const double over =
        std::max(0.0, frac - cfg.max_mask_frac) + std::max(0.0, cfg.min_mask_frac - frac);
    const double s_frac = std::clamp(1.0 - over / 0.1, 0.0, 1.0);

    const double seam = mean_abs_diff_where(ground_truth, background, mask, true);
    const double s_seam = std::clamp(seam / 0.08, 0.0, 1.0);

    const double outside = mean_abs_diff_where(ground_truth, background, mask, false);
    const double s_agree = 1.0 - std::clamp(outside / (2.0 / 255.0), 0.0, 1.0);

    return s_frac * s_seam * s_agree;
}

std::vector<RecordInfo> DatasetManifest::split(const std::string& name) const {
    std::vector<RecordInfo> out;
    for (const RecordInfo& r : records)
        if (r.split == name) out.push_back(r);
    return out;
}

json DatasetManifest::to_json() const {
    json rows = json::array();
    for (const RecordInfo& r : records)
        rows.push_back(json{{"id", r.id},
                            {"split", r.split},
                            {"scene", r.scene},
                            {"quality", r.quality},
                            {"mask_frac", r.mask_frac}});
    return json{{"forge", forge_to_json(forge)}, {"records", std::move(rows)}};
}

DatasetManifest DatasetManifest::from_json(const json& j) {
    require_exact_keys(j, "manifest", {"forge", "records"});
    DatasetManifest m;
    m.forge = forge_from_json(j.at("forge"));
    if (!j.at("records").is_array()) throw ConfigError("manifest.records must be an array");
    for (const json& row : j.at("records")) {
        require_exact_keys(row, "manifest.records[]", {"id", "split", "scene", "quality", "mask_frac"});
        RecordInfo r;
        try {
            row.at("id").get_to(r.id);
            row.at("split").get_to(r.split);
            row.at("scene").get_to(r.scene);
            row.at("quality").get_to(r.quality);
            row.at("mask_frac").get_to(r.mask_frac);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("manifest.records[]: ") + e.what());
        }
        if (r.split != "train" && r.split != "val" && r.split != "test")
            throw ConfigError("manifest.records[]: unknown split \"" + r.split + "\"");
        m.records.push_back(std::move(r));
    }
    return m;
}

DatasetManifest DatasetManifest::load(const std::string& root) {
    const std::string path = root + "/manifest.json";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    json j;
    try {
        j = json::parse(ss.str());
    } catch (const json::exception& e) {
        throw ConfigError("manifest " + path + ": " + e.what());
    }
    return from_json(j);
}

std::string record_dir(const std::string& root, const RecordInfo& rec) {
    return root + "/" + rec.split + "/" + rec.id;
}

Triplet load_triplet(const std::string& root, const RecordInfo& rec) {
    const std::string dir = record_dir(root, rec);
    Triplet t;
    t.foreground = read_png(dir + "/foreground.png");
    t.mask = threshold_mask(read_png(dir + "/mask.png"));
    t.background = read_png(dir + "/background.png");
    t.ground_truth = read_png(dir + "/ground_truth.png");
    return t;
}

DatasetManifest build_dataset(const ForgeConfig& cfg, const std::string& root,
                              ForgeStats* stats) {
    cfg.validate();
    const int want = cfg.triplet_count;
    int64_t tried = 0;
    const int64_t budget = static_cast<int64_t>(want) * 20;
    const int vpf = std::max(1, cfg.views_per_foreground);

    struct Pending {
        RecordInfo info;
        Image fore, mask, back, gt;
    };
    std::vector<Pending> accepted;
    accepted.reserve(static_cast<size_t>(want));

    int cached_scene = -1;
    SceneSample scene;
    for (int64_t c = 0; c < budget && static_cast<int>(accepted.size()) < want; c++) {
        tried++;
        const int scene_idx = static_cast<int>(c / vpf);
        if (scene_idx != cached_scene) {
            RngStream scene_rng(cfg.seed, "forge.scene", static_cast<uint64_t>(scene_idx));
            scene = synthesize_scene(cfg, scene_rng);
            cached_scene = scene_idx;
        }
        const Image fore0 = acquire_foreground(scene.scene, scene.mask);
        RngStream view_rng(cfg.seed, "forge.view", static_cast<uint64_t>(c));
        ViewSample view = generate_view(fore0, scene.mask, view_rng, cfg.min_mask_frac);
        const Image base = cfg.shadow_enabled ? apply_shadow(scene.backdrop, view.mask)
                                              : scene.backdrop;
        Image gt = composite_over(view.foreground, view.mask, base);
        RngStream bg_rng(cfg.seed, "forge.bg", static_cast<uint64_t>(c));
        Image back = generate_background(gt, view.mask, bg_rng);
        const double q = quality_score(gt, view.mask, back, cfg);
        if (q < cfg.quality_threshold) continue;

        char idbuf[16];
        std::snprintf(idbuf, sizeof idbuf, "r%05lld", static_cast<long long>(c));
        Pending p;
        p.info = RecordInfo{idbuf, "", scene_idx, q, mask_fraction(view.mask)};
        p.fore = std::move(view.foreground);
        p.mask = std::move(view.mask);
        p.back = std::move(back);
        p.gt = std::move(gt);
        accepted.push_back(std::move(p));
    }
    if (static_cast<int>(accepted.size()) < want)
        throw NumericError("build_dataset: only " + std::to_string(accepted.size()) + " of " +
                           std::to_string(want) +
                           " requested records passed the quality gate within the candidate budget");

    // 80/10/10 by record-id hash: order ids by (hash, id), then fill floor
    // quotas for train and val; the remainder goes to test.
    std::vector<size_t> order(accepted.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        const std::string& ia = accepted[a].info.id;
        const std::string& ib = accepted[b].info.id;
        const uint64_t ha = fnv1a64(ia.data(), ia.size());
        const uint64_t hb = fnv1a64(ib.data(), ib.size());
        if (ha != hb) return ha < hb;
        return ia < ib;
    });
    const size_t n = accepted.size();
    const size_t n_train = n * 8 / 10;
    const size_t n_val = n / 10;
    for (size_t i = 0; i < n; i++) {
        RecordInfo& rec = accepted[order[i]].info;
        rec.split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    }

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw IoError("cannot create " + root + ": " + ec.message());

    DatasetManifest manifest;
    manifest.forge = cfg;
    manifest.records.reserve(n);
    for (Pending& p : accepted) {
        const std::string dir = record_dir(root, p.info);
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
        write_png(dir + "/foreground.png", p.fore);
        write_png(dir + "/mask.png", p.mask);
        write_png(dir + "/background.png", p.back);
        write_png(dir + "/ground_truth.png", p.gt);
        manifest.records.push_back(p.info);
    }

    const std::string mpath = root + "/manifest.json";
    std::ofstream out(mpath, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + mpath);
    out << manifest.to_json().dump(2) << "\n";
    out.flush();
    if (!out) throw IoError("failed while writing " + mpath);
    if (stats) {
        stats->accepted = static_cast<int64_t>(n);
        stats->rejected = tried - static_cast<int64_t>(n);
    }
    return manifest;
}

}  // namespace foodfuse
