#include "foodfuse/evaluate.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "foodfuse/common.hpp"
#include "foodfuse/diffusion.hpp"
#include "foodfuse/ops.hpp"
#include "foodfuse/png_io.hpp"

namespace foodfuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_same_extent(const char* op, const Image& a, const Image& b) {
    if (!a.same_extent(b))
        throw ShapeError(op, "images differ in extent: " + std::to_string(a.width) + "x" +
                                 std::to_string(a.height) + "x" + std::to_string(a.channels) +
                                 " vs " + std::to_string(b.width) + "x" +
                                 std::to_string(b.height) + "x" + std::to_string(b.channels));
}

void check_model_extent(const char* what, const Image& img, int size) {
    if (img.width != size || img.height != size || img.channels != 3)
        throw ConfigError(std::string("compose: ") + what + " is " + std::to_string(img.width) +
                          "x" + std::to_string(img.height) + "x" + std::to_string(img.channels) +
                          " but the model expects " + std::to_string(size) + "x" +
                          std::to_string(size) + "x3");
}

// horizontal strip with a thin white separator between panels
Image contact_sheet(const std::vector<const Image*>& panels) {
    const int S = panels.front()->width;
    const int H = panels.front()->height;
    const int sep = 2;
    Image sheet(static_cast<int>(panels.size()) * (S + sep) - sep, H, 3, 1.f);
    for (size_t i = 0; i < panels.size(); i++) {
        const Image& p = *panels[i];
        const int x0 = static_cast<int>(i) * (S + sep);
        for (int y = 0; y < H; y++)
            for (int x = 0; x < S; x++)
                for (int c = 0; c < 3; c++) sheet.at(y, x0 + x, c) = p.at(y, x, c);
    }
    return sheet;
}

}  // namespace

double psnr_from_mse(double mse) {
    if (mse <= 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double mse_between(const Image& a, const Image& b) {
    check_same_extent("psnr", a, b);
    double acc = 0.0;
    for (size_t i = 0; i < a.pix.size(); i++) {
        const double d = static_cast<double>(a.pix[i]) - static_cast<double>(b.pix[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.pix.size());
}

double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse_between(a, b)); }

double perceptual_proxy_distance(const FusionModule32& encoder, const Image& a, const Image& b) {
    check_same_extent("perceptual_proxy_distance", a, b);
    NoGradGuard ng;
    const Tensor32 ta = encoder.encode_image(image_to_tensor(a));
    const Tensor32 tb = encoder.encode_image(image_to_tensor(b));

    const int n = ta.dim(0);
    const int width = encoder.config().width;
    const int taps = static_cast<int>(encoder.config().tap_layers.size());
    const float* pa = ta.data();
    const float* pb = tb.data();

    auto unit = [width](const float* row, std::vector<double>& out) {
        double norm = 0.0;
        for (int j = 0; j < width; j++) norm += static_cast<double>(row[j]) * row[j];
        norm = std::sqrt(norm);
        for (int j = 0; j < width; j++)
            out[static_cast<size_t>(j)] = norm > 0.0 ? row[j] / norm : 0.0;
    };

    std::vector<double> ua(static_cast<size_t>(width)), ub(static_cast<size_t>(width));
    double tap_mean_sum = 0.0;
    for (int k = 0; k < taps; k++) {
        double row_sum = 0.0;
        for (int i = 0; i < n; i++) {
            const float* ra = pa + (static_cast<size_t>(i) * taps + k) * width;
            const float* rb = pb + (static_cast<size_t>(i) * taps + k) * width;
            unit(ra, ua);
            unit(rb, ub);
            double d2 = 0.0;
            for (int j = 0; j < width; j++) {
                const double d = ua[static_cast<size_t>(j)] - ub[static_cast<size_t>(j)];
                d2 += d * d;
            }
            row_sum += std::sqrt(d2);
        }
        tap_mean_sum += row_sum / n;
    }
    return tap_mean_sum / taps;
}

Image compose(const ComposerModel& model, const std::vector<Image>& foregrounds,
              const Image& background, const SamplerConfig& sampler, const ComposeFlags& flags) {
    if (foregrounds.empty())
        throw ConfigError("compose: at least one foreground image is required");
    const int S = model.config().fusion.image_size;
    for (const Image& f : foregrounds) check_model_extent("a foreground", f, S);
    check_model_extent("the background", background, S);

    NoGradGuard ng;
    std::vector<Tensor32> seqs;
    seqs.reserve(foregrounds.size());
    for (const Image& f : foregrounds) seqs.push_back(model.fusion().encode_image(image_to_tensor(f)));
    Tensor32 h_fore = seqs.size() == 1 ? seqs.front() : concat(seqs, 0);

    Tensor32 h_ctx =
        flags.use_fusion
            ? model.fusion().fuse(h_fore, model.fusion().encode_image(image_to_tensor(background)))
            : model.fusion().single_image_context(h_fore);
    Tensor32 null_ctx = model.fusion().null_context(1);

    const Shape ls = model.codec().latent_shape(S, S);
    Tensor32 bg_latent =
        reshape(model.codec().encode_image(background), {1, ls[0], ls[1], ls[2]});

    EpsFn<float> fn = [&](const Tensor32& z_t, int t, bool cond) {
        std::vector<Tensor32> inj;
        const std::vector<Tensor32>* injp = nullptr;
        if (flags.use_cscm) {
            inj = model.control().forward(z_t, bg_latent, t);
            injp = &inj;
        }
        return model.unet().forward(z_t, t, cond ? h_ctx : null_ctx, injp);
    };

    Tensor32 z0 = sample(fn, Shape{1, ls[0], ls[1], ls[2]}, sampler, model.schedule());
    return model.codec().decode_to_image(reshape(z0, ls));
}

json EvalReport::to_json() const {
    json j;
    j["split"] = split;
    j["count"] = rows.size();
    j["mean_psnr_db"] = mean_psnr_db;
    j["mean_perceptual_proxy_distance"] = mean_proxy;
    j["perceptual_metric"] =
        "proxy: normalized feature-space L2 under the run's own conditioning encoder";
    j["flags"] = {{"no_cscm", flags.no_cscm},
                  {"no_fusion", flags.no_fusion},
                  {"oracle_gt", flags.oracle_gt}};
    j["config_digest"] = config_digest;
    j["checkpoint_digest"] = checkpoint_digest;
    return j;
}

EvalReport evaluate(const ComposerModel& model, const DatasetManifest& manifest,
                    const std::string& data_root, const std::string& split,
                    const EvalFlags& flags, const std::string& report_dir,
                    const std::string& checkpoint_digest) {
    const std::vector<RecordInfo> records = manifest.split(split);
    if (records.empty()) throw ConfigError("evaluate: split '" + split + "' has no records");

    EvalReport rep;
    rep.split = split;
    rep.flags = flags;
    rep.config_digest = model.config().digest_hex();
    rep.checkpoint_digest = checkpoint_digest;

    const bool write_files = !report_dir.empty();
    if (write_files) {
        std::error_code ec;
        fs::create_directories(fs::path(report_dir) / "sheets", ec);
        if (ec) throw IoError("cannot create report directory " + report_dir + ": " + ec.message());
    }

    ComposeFlags cf;
    cf.use_cscm = !flags.no_cscm;
    cf.use_fusion = !flags.no_fusion;
    const SamplerConfig base = model.config().sampler;

    double psnr_sum = 0.0, proxy_sum = 0.0;
    for (const RecordInfo& rec : records) {
        const Triplet t = load_triplet(data_root, rec);
        SamplerConfig sc = base;
        // every record gets its own reproducible noise stream
        sc.seed = base.seed ^ fnv1a64(rec.id.data(), rec.id.size());
        const Image composite = flags.oracle_gt
                                    ? t.ground_truth
                                    : compose(model, {t.foreground}, t.background, sc, cf);
        EvalRow row;
        row.id = rec.id;
        row.psnr_db = psnr(composite, t.ground_truth);
        row.proxy = perceptual_proxy_distance(model.fusion(), composite, t.ground_truth);
        psnr_sum += row.psnr_db;
        proxy_sum += row.proxy;
        rep.rows.push_back(row);

        if (write_files) {
            const Image sheet =
                contact_sheet({&t.foreground, &t.background, &composite, &t.ground_truth});
            write_png((fs::path(report_dir) / "sheets" / (rec.id + ".png")).string(), sheet);
        }
    }
    rep.mean_psnr_db = psnr_sum / static_cast<double>(rep.rows.size());
    rep.mean_proxy = proxy_sum / static_cast<double>(rep.rows.size());

    if (write_files) {
        const std::string csv_path = (fs::path(report_dir) / "per_sample.csv").string();
        std::ofstream csv(csv_path, std::ios::trunc);
        if (!csv) throw IoError("cannot write " + csv_path);
        csv << "id,psnr_db,perceptual_proxy_distance\n" << std::setprecision(10);
        for (const EvalRow& r : rep.rows)
            csv << r.id << "," << r.psnr_db << "," << r.proxy << "\n";

        const std::string json_path = (fs::path(report_dir) / "summary.json").string();
        std::ofstream js(json_path, std::ios::trunc);
        if (!js) throw IoError("cannot write " + json_path);
        js << rep.to_json().dump(2) << "\n";
    }
    return rep;
}

}  // namespace foodfuse
