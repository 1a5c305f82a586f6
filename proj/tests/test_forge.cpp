#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "foodfuse/common.hpp"
#include "foodfuse/config.hpp"
#include "foodfuse/forge.hpp"
#include "foodfuse/image.hpp"
#include "foodfuse/rng.hpp"

using namespace foodfuse;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        const auto tick = std::chrono::steady_clock::now().time_since_epoch().count();
        path = fs::temp_directory_path() /
               ("foodfuse_forge_" + std::to_string(tick) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
};

bool images_equal(const Image& a, const Image& b) {
    if (!a.same_extent(b)) return false;
    for (size_t i = 0; i < a.pix.size(); i++)
        if (a.pix[i] != b.pix[i]) return false;
    return true;
}

bool mask_is_binary(const Image& m) {
    for (float v : m.pix)
        if (v != 0.f && v != 1.f) return false;
    return true;
}

double mask_frac(const Image& m) {
    double s = 0.0;
    for (float v : m.pix) s += (v >= 0.5f) ? 1.0 : 0.0;
    return s / static_cast<double>(m.pix.size());
}

uint64_t file_hash(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string s = ss.str();
    return fnv1a64(s.data(), s.size());
}

std::map<std::string, uint64_t> tree_hashes(const fs::path& root) {
    std::map<std::string, uint64_t> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file())
            out[fs::relative(e.path(), root).generic_string()] = file_hash(e.path());
    return out;
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

ForgeConfig small_cfg() {
    ForgeConfig c;
    c.image_size = 32;
    c.triplet_count = 100;
    c.shadow_enabled = true;
    c.views_per_foreground = 2;
    c.quality_threshold = 0.5;
    c.min_mask_frac = 0.05;
    c.max_mask_frac = 0.6;
    c.seed = 123;
    return c;
}

}  // namespace

TEST_CASE("synthesized scenes are well-formed, deterministic, and fraction-bounded") {
    ForgeConfig cfg = small_cfg();
    cfg.image_size = 48;
    cfg.shadow_enabled = false;

    RngStream rng(cfg.seed, "forge.scene", 0);
    SceneSample s = synthesize_scene(cfg, rng);
    CHECK(s.scene.width == 48);
    CHECK(s.scene.height == 48);
    CHECK(s.scene.channels == 3);
    CHECK(s.backdrop.same_extent(s.scene));
    CHECK(s.mask.width == 48);
    CHECK(s.mask.height == 48);
    CHECK(s.mask.channels == 1);
    CHECK(mask_is_binary(s.mask));

    const double frac = mask_frac(s.mask);
    CHECK(frac >= cfg.min_mask_frac);
    CHECK(frac <= cfg.max_mask_frac);

    // without a shadow the composite equals the backdrop everywhere outside
    // the mask, and carries a subject inside it
    CHECK(mean_abs_diff_where(s.scene, s.backdrop, s.mask, false) == 0.0);
    CHECK(mean_abs_diff_where(s.scene, s.backdrop, s.mask, true) > 0.02);

    RngStream again(cfg.seed, "forge.scene", 0);
    SceneSample s2 = synthesize_scene(cfg, again);
    CHECK(images_equal(s.scene, s2.scene));
    CHECK(images_equal(s.backdrop, s2.backdrop));
    CHECK(images_equal(s.mask, s2.mask));

    RngStream other(cfg.seed, "forge.scene", 1);
    SceneSample s3 = synthesize_scene(cfg, other);
    CHECK(!images_equal(s.scene, s3.scene));

    // an unreachable fraction window exhausts the redraw budget
    ForgeConfig bad = cfg;
    bad.min_mask_frac = 0.55;
    bad.max_mask_frac = 0.60;
    RngStream rb(1, "forge.scene", 0);
    CHECK_THROWS_AS(synthesize_scene(bad, rb), NumericError);
}

TEST_CASE("foreground extraction masks the scene onto white") {
    ForgeConfig cfg = small_cfg();
    cfg.shadow_enabled = false;
    RngStream rng(3, "forge.scene", 0);
    SceneSample s = synthesize_scene(cfg, rng);

    Image fore = acquire_foreground(s.scene, s.mask);
    for (int y = 0; y < 32; y++)
        for (int x = 0; x < 32; x++)
            for (int c = 0; c < 3; c++) {
                if (s.mask.at(y, x, 0) == 1.f)
                    CHECK(fore.at(y, x, c) == s.scene.at(y, x, c));
                else
                    CHECK(fore.at(y, x, c) == 1.f);
            }

    Image full(32, 32, 1, 1.f);
    CHECK(images_equal(acquire_foreground(s.scene, full), s.scene));

    Image empty(32, 32, 1, 0.f);
    CHECK_THROWS_AS(acquire_foreground(s.scene, empty), ConfigError);

    Image wrong(16, 16, 1, 1.f);
    CHECK_THROWS_AS(acquire_foreground(s.scene, wrong), ShapeError);
    Image rgbmask(32, 32, 3, 1.f);
    CHECK_THROWS_AS(acquire_foreground(s.scene, rgbmask), ShapeError);
}

TEST_CASE("views warp foreground and mask with one shared bounded transform") {
    ForgeConfig cfg = small_cfg();
    cfg.shadow_enabled = false;
    RngStream rng(5, "forge.scene", 0);
    SceneSample s = synthesize_scene(cfg, rng);
    Image fore = acquire_foreground(s.scene, s.mask);

    RngStream vr(5, "forge.view", 0);
    ViewSample v = generate_view(fore, s.mask, vr, cfg.min_mask_frac);

    CHECK(std::abs(v.warp.rotation_deg) <= 30.0);
    CHECK(v.warp.scale >= 0.7);
    CHECK(v.warp.scale <= 1.3);
    CHECK(std::abs(v.warp.shear_x) <= 0.08);
    CHECK(std::abs(v.warp.shear_y) <= 0.08);
    CHECK(std::abs(v.warp.perspective_x) <= 0.002);
    CHECK(std::abs(v.warp.perspective_y) <= 0.002);
    CHECK(std::abs(v.warp.shift_x) <= 0.05);
    CHECK(std::abs(v.warp.shift_y) <= 0.05);

    CHECK(mask_is_binary(v.mask));
    CHECK(mask_frac(v.mask) >= cfg.min_mask_frac);

    // exactly the same warp is applied to both planes
    CHECK(images_equal(v.mask, threshold_mask(warp_image(s.mask, v.warp, 0.f))));
    CHECK(images_equal(v.foreground, warp_image(fore, v.warp, 1.f)));

    RngStream vr2(5, "forge.view", 0);
    ViewSample v2 = generate_view(fore, s.mask, vr2, cfg.min_mask_frac);
    CHECK(images_equal(v.foreground, v2.foreground));
    CHECK(images_equal(v.mask, v2.mask));
    CHECK(v.warp.rotation_deg == v2.warp.rotation_deg);
    CHECK(v.warp.scale == v2.warp.scale);
    CHECK(v.warp.shift_x == v2.warp.shift_x);

    RngStream vr3(5, "forge.view", 1);
    CHECK_THROWS_AS(generate_view(fore, s.mask, vr3, 0.9), NumericError);
}

TEST_CASE("composite selects per pixel by mask") {
    Image f(2, 2, 3, 0.25f), b(2, 2, 3, 0.75f), m(2, 2, 1, 0.f);
    m.at(0, 0, 0) = 1.f;
    m.at(1, 1, 0) = 1.f;
    Image out = composite_over(f, m, b);
    for (int c = 0; c < 3; c++) {
        CHECK(out.at(0, 0, c) == 0.25f);
        CHECK(out.at(0, 1, c) == 0.75f);
        CHECK(out.at(1, 0, c) == 0.75f);
        CHECK(out.at(1, 1, c) == 0.25f);
    }
    Image b3(3, 2, 3);
    CHECK_THROWS_AS(composite_over(f, m, b3), ShapeError);
    Image m3(2, 2, 3);
    CHECK_THROWS_AS(composite_over(f, m3, b), ShapeError);
}

TEST_CASE("shadow darkens only outside the subject and is a pure function") {
    Image back(32, 32, 3, 0.8f);
    Image m(32, 32, 1, 0.f);
    for (int y = 8; y <= 15; y++)
        for (int x = 8; x <= 15; x++) m.at(y, x, 0) = 1.f;

    Image sh = apply_shadow(back, m);
    // subject pixels untouched
    for (int y = 8; y <= 15; y++)
        for (int x = 8; x <= 15; x++)
            for (int c = 0; c < 3; c++) CHECK(sh.at(y, x, c) == 0.8f);
    // nothing ever brightens
    for (size_t i = 0; i < sh.pix.size(); i++) CHECK(sh.pix[i] <= back.pix[i]);
    // somewhere just south-east of the subject is darker
    bool darker = false;
    for (int y = 16; y <= 19 && !darker; y++)
        for (int x = 9; x <= 16 && !darker; x++)
            if (sh.at(y, x, 0) < 0.8f) darker = true;
    CHECK(darker);
    // far corners untouched
    CHECK(sh.at(0, 0, 0) == 0.8f);
    CHECK(sh.at(31, 31, 0) == 0.8f);
    // deterministic: no hidden randomness
    CHECK(images_equal(sh, apply_shadow(back, m)));
}

TEST_CASE("background fill diffuses surroundings inward and is verbatim outside") {
    const int S = 32;
    Image gt(S, S, 3);
    for (int y = 0; y < S; y++)
        for (int x = 0; x < S; x++)
            for (int c = 0; c < 3; c++)
                gt.at(y, x, c) = static_cast<float>(y) / (S - 1);
    Image m(S, S, 1, 0.f);
    for (int y = 10; y <= 21; y++)
        for (int x = 10; x <= 21; x++) {
            m.at(y, x, 0) = 1.f;
            gt.at(y, x, 0) = 1.f;  // paint the subject region red
            gt.at(y, x, 1) = 0.05f;
            gt.at(y, x, 2) = 0.05f;
        }

    RngStream br(7, "forge.bg", 0);
    Image bg = generate_background(gt, m, br);

    // outside: bit-for-bit the input
    for (int y = 0; y < S; y++)
        for (int x = 0; x < S; x++) {
            if (m.at(y, x, 0) == 1.f) continue;
            for (int c = 0; c < 3; c++) CHECK(bg.at(y, x, c) == gt.at(y, x, c));
        }
    CHECK(mean_abs_diff_where(gt, bg, m, false) == 0.0);

    // inside: the red is gone and the fill continues the linear ramp, which
    // is harmonic, so Laplace relaxation reproduces it almost exactly
    double err = 0.0;
    int n = 0;
    for (int y = 10; y <= 21; y++)
        for (int x = 10; x <= 21; x++)
            for (int c = 0; c < 3; c++) {
                CHECK(bg.at(y, x, c) >= 0.f);
                CHECK(bg.at(y, x, c) <= 1.f);
                err += std::abs(bg.at(y, x, c) - static_cast<float>(y) / (S - 1));
                n++;
            }
    CHECK(err / n < 0.02);

    RngStream br2(7, "forge.bg", 0);
    CHECK(images_equal(bg, generate_background(gt, m, br2)));
    RngStream br3(7, "forge.bg", 1);
    CHECK(!images_equal(bg, generate_background(gt, m, br3)));

    Image none(S, S, 1, 0.f);
    RngStream br4(7, "forge.bg", 2);
    CHECK(images_equal(generate_background(gt, none, br4), gt));
    Image all(S, S, 1, 1.f);
    CHECK_THROWS_AS(generate_background(gt, all, br4), ConfigError);
}

TEST_CASE("quality gate scores real records high and degenerate ones zero") {
    ForgeConfig cfg = small_cfg();
    RngStream sr(11, "forge.scene", 0);
    SceneSample s = synthesize_scene(cfg, sr);
    Image fore0 = acquire_foreground(s.scene, s.mask);
    RngStream vr(11, "forge.view", 0);
    ViewSample v = generate_view(fore0, s.mask, vr, cfg.min_mask_frac);
    Image base = apply_shadow(s.backdrop, v.mask);
    Image gt = composite_over(v.foreground, v.mask, base);
    RngStream br(11, "forge.bg", 0);
    Image bg = generate_background(gt, v.mask, br);

    const double q = quality_score(gt, v.mask, bg, cfg);
    CHECK(q >= cfg.quality_threshold);
    CHECK(q <= 1.0);

    // background identical to the composite: no seam contrast at all
    CHECK(quality_score(gt, v.mask, gt, cfg) == 0.0);

    // mask fraction far outside the window
    Image all(32, 32, 1, 1.f);
    CHECK(quality_score(gt, all, bg, cfg) == 0.0);

    // background that disagrees outside the mask
    Image off = bg;
    for (int y = 0; y < 32; y++)
        for (int x = 0; x < 32; x++) {
            if (v.mask.at(y, x, 0) == 1.f) continue;
            for (int c = 0; c < 3; c++)
                off.at(y, x, c) = std::min(1.f, off.at(y, x, c) + 0.1f);
        }
    CHECK(quality_score(gt, v.mask, off, cfg) == 0.0);
}

TEST_CASE("dataset build: layout, split quotas, manifest echo, record invariants") {
    ForgeConfig cfg = small_cfg();
    TempDir td;
    DatasetManifest m = build_dataset(cfg, td.str());

    REQUIRE(m.records.size() == 100);
    CHECK(m.split("train").size() == 80);
    CHECK(m.split("val").size() == 10);
    CHECK(m.split("test").size() == 10);

    for (size_t i = 0; i < m.records.size(); i++) {
        const RecordInfo& r = m.records[i];
        CHECK(r.id.size() == 6);
        CHECK(r.id[0] == 'r');
        if (i > 0) CHECK(m.records[i - 1].id < r.id);
        CHECK(r.quality >= cfg.quality_threshold);
        CHECK(r.mask_frac >= cfg.min_mask_frac);
        CHECK(r.mask_frac <= 0.7);
        CHECK(r.scene == std::stoi(r.id.substr(1)) / cfg.views_per_foreground);
    }

    // acceptance rate above 90%: the last accepted candidate index bounds
    // how many were tried
    const int tried = std::stoi(m.records.back().id.substr(1)) + 1;
    CHECK(100.0 / tried > 0.9);

    // manifest on disk loads back to exactly the returned metadata
    DatasetManifest m2 = DatasetManifest::load(td.str());
    REQUIRE(m2.records.size() == m.records.size());
    CHECK(m2.forge.seed == cfg.seed);
    CHECK(m2.forge.image_size == cfg.image_size);
    CHECK(m2.forge.triplet_count == cfg.triplet_count);
    CHECK(m2.forge.shadow_enabled == cfg.shadow_enabled);
    CHECK(m2.forge.quality_threshold == cfg.quality_threshold);
    for (size_t i = 0; i < m.records.size(); i++) {
        CHECK(m2.records[i].id == m.records[i].id);
        CHECK(m2.records[i].split == m.records[i].split);
        CHECK(m2.records[i].scene == m.records[i].scene);
        CHECK(m2.records[i].quality == m.records[i].quality);
        CHECK(m2.records[i].mask_frac == m.records[i].mask_frac);
    }

    // every record on disk honors the data invariants
    int checked = 0;
    for (const RecordInfo& r : m.records) {
        Triplet t = load_triplet(td.str(), r);
        CHECK(t.foreground.width == 32);
        CHECK(t.foreground.channels == 3);
        CHECK(t.background.same_extent(t.foreground));
        CHECK(t.ground_truth.same_extent(t.foreground));
        CHECK(t.mask.channels == 1);
        CHECK(mask_is_binary(t.mask));
        // ground truth and background agree bit-for-bit outside the mask...
        CHECK(mean_abs_diff_where(t.ground_truth, t.background, t.mask, false) == 0.0);
        // ...so in particular they agree outside the dilated mask
        Image dil = dilate_mask(t.mask, 3);
        CHECK(mean_abs_diff_where(t.ground_truth, t.background, dil, false) < 2.0 / 255.0);
        checked++;
    }
    CHECK(checked == 100);
}

TEST_CASE("rebuilds are byte-identical and records depend only on seed and index") {
    ForgeConfig cfg = small_cfg();
    cfg.triplet_count = 12;
    cfg.views_per_foreground = 3;
    cfg.seed = 77;

    TempDir a, b;
    build_dataset(cfg, a.str());
    const auto ha = tree_hashes(a.path);
    CHECK(ha.size() == 12u * 4u + 1u);  // 4 images per record + manifest

    build_dataset(cfg, b.str());
    CHECK(tree_hashes(b.path) == ha);

    // overwriting in place reproduces the same bytes
    build_dataset(cfg, a.str());
    CHECK(tree_hashes(a.path) == ha);

    // a shorter run with the same seed yields the same leading records
    ForgeConfig five = cfg;
    five.triplet_count = 5;
    TempDir c5;
    DatasetManifest m5 = build_dataset(five, c5.str());
    DatasetManifest m12 = DatasetManifest::load(b.str());
    REQUIRE(m5.records.size() == 5);
    for (size_t i = 0; i < 5; i++) {
        CHECK(m5.records[i].id == m12.records[i].id);
        CHECK(m5.records[i].quality == m12.records[i].quality);
        CHECK(m5.records[i].mask_frac == m12.records[i].mask_frac);
        Triplet t5 = load_triplet(c5.str(), m5.records[i]);
        Triplet t12 = load_triplet(b.str(), m12.records[i]);
        CHECK(images_equal(t5.foreground, t12.foreground));
        CHECK(images_equal(t5.mask, t12.mask));
        CHECK(images_equal(t5.background, t12.background));
        CHECK(images_equal(t5.ground_truth, t12.ground_truth));
    }

    ForgeConfig other = cfg;
    other.seed = 78;
    TempDir d;
    build_dataset(other, d.str());
    CHECK(tree_hashes(d.path) != ha);
}

TEST_CASE("with shadows off the ground truth equals the mask composite exactly") {
    ForgeConfig cfg = small_cfg();
    cfg.triplet_count = 12;
    cfg.shadow_enabled = false;
    cfg.seed = 9;
    TempDir td;
    DatasetManifest m = build_dataset(cfg, td.str());
    REQUIRE(m.records.size() == 12);
    for (const RecordInfo& r : m.records) {
        Triplet t = load_triplet(td.str(), r);
        CHECK(images_equal(t.ground_truth, composite_over(t.foreground, t.mask, t.background)));
    }
}

TEST_CASE("manifest parsing rejects malformed input") {
    TempDir td;
    CHECK_THROWS_AS(DatasetManifest::load(td.str()), IoError);

    spit(td.path / "manifest.json", "{nope");
    CHECK_THROWS_AS(DatasetManifest::load(td.str()), ConfigError);

    DatasetManifest m;
    m.forge = small_cfg();
    m.records.push_back(RecordInfo{"r00000", "train", 0, 0.9, 0.2});
    nlohmann::json j = m.to_json();

    DatasetManifest back = DatasetManifest::from_json(j);
    CHECK(back.records.size() == 1);
    CHECK(back.records[0].id == "r00000");
    CHECK(back.records[0].split == "train");
    CHECK(back.forge.seed == m.forge.seed);

    nlohmann::json bad = j;
    bad["records"][0]["split"] = "holdout";
    CHECK_THROWS_AS(DatasetManifest::from_json(bad), ConfigError);

    bad = j;
    bad["records"][0]["extra"] = 1;
    try {
        DatasetManifest::from_json(bad);
        CHECK(false);
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("extra") != std::string::npos);
    }

    bad = j;
    bad.erase("forge");
    CHECK_THROWS_AS(DatasetManifest::from_json(bad), ConfigError);

    bad = j;
    bad["forge"]["bogus"] = 1;
    try {
        DatasetManifest::from_json(bad);
        CHECK(false);
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("bogus") != std::string::npos);
    }

    RecordInfo rr{"zzz", "train", 0, 0.0, 0.0};
    CHECK_THROWS_AS(load_triplet(td.str(), rr), IoError);
}
