#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "foodfuse/fusion.hpp"
#include "foodfuse/grad_check.hpp"

using namespace foodfuse;

namespace {

FusionEncoderConfig small_cfg() {
    FusionEncoderConfig c;
    c.image_size = 32;
    c.patch_size = 8;
    c.width = 24;
    c.blocks = 3;
    c.tap_layers = {2, 3};
    c.num_queries = 4;
    c.d_ctx = 32;
    c.low_rank = 8;
    return c;
}

FusionEncoderConfig tiny_cfg() {
    FusionEncoderConfig c;
    c.image_size = 16;
    c.patch_size = 8;
    c.width = 6;
    c.blocks = 1;
    c.tap_layers = {1};
    c.num_queries = 2;
    c.d_ctx = 6;
    c.low_rank = 2;
    return c;
}

template <typename T>
Tensor<T> test_image(int size, uint64_t seed, const char* tag) {
    RngStream r(seed, tag);
    Tensor<T> img = Tensor<T>::zeros({3, size, size});
    r.fill_uniform(img.data(), img.numel(), 0.0, 1.0);
    return img;
}

bool all_close(const std::vector<float>& a, const std::vector<float>& b, float tol) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); i++)
        if (std::abs(a[i] - b[i]) > tol) return false;
    return true;
}

}  // namespace

TEST_CASE("encoder produces one row per patch with tapped widths") {
    const FusionEncoderConfig cfg = small_cfg();
    FusionModule32 fm(cfg, 7);
    CHECK(cfg.token_count() == 16);
    CHECK(cfg.d_total() == 48);

    const Tensor32 img = test_image<float>(32, 1, "img");
    const Tensor32 h = fm.encode_image(img);
    CHECK(h.shape() == Shape({16, 48}));

    Tensor32 batch = Tensor32::zeros({2, 3, 32, 32});
    std::memcpy(batch.data(), img.data(), sizeof(float) * img.numel());
    const Tensor32 img2 = test_image<float>(32, 2, "img");
    std::memcpy(batch.data() + img.numel(), img2.data(), sizeof(float) * img2.numel());
    const Tensor32 hb = fm.encode_image(batch);
    CHECK(hb.shape() == Shape({2, 16, 48}));

    // the batched pass must agree with the single pass, sample by sample
    std::vector<float> first(hb.data(), hb.data() + h.numel());
    CHECK(all_close(first, h.vec(), 1e-6f));
    const Tensor32 h2 = fm.encode_image(img2);
    std::vector<float> second(hb.data() + h.numel(), hb.data() + 2 * h.numel());
    CHECK(all_close(second, h2.vec(), 1e-6f));
}

TEST_CASE("encoder rejects mismatched inputs") {
    FusionModule32 fm(small_cfg(), 7);
    CHECK_THROWS_AS(fm.encode_image(Tensor32::zeros({1, 32, 32})), ShapeError);
    CHECK_THROWS_AS(fm.encode_image(Tensor32::zeros({3, 16, 32})), ShapeError);
    CHECK_THROWS_AS(fm.encode_image(Tensor32::zeros({3, 64, 64})), ShapeError);
    CHECK_THROWS_AS(fm.encode_image(Tensor32::zeros({32, 32})), ShapeError);
}

TEST_CASE("fuse maps token sequences to K conditioning rows") {
    const FusionEncoderConfig cfg = small_cfg();
    FusionModule32 fm(cfg, 7);
    const Tensor32 hf = fm.encode_image(test_image<float>(32, 1, "img"));
    const Tensor32 hb = fm.encode_image(test_image<float>(32, 2, "img"));

    const Tensor32 ctx = fm.fuse(hf, hb);
    CHECK(ctx.shape() == Shape({4, 32}));

    Tensor32 bf = Tensor32::zeros({2, 16, 48});
    Tensor32 bb = Tensor32::zeros({2, 16, 48});
    for (int s = 0; s < 2; s++) {
        std::memcpy(bf.data() + s * hf.numel(), hf.data(), sizeof(float) * hf.numel());
        std::memcpy(bb.data() + s * hb.numel(), hb.data(), sizeof(float) * hb.numel());
    }
    const Tensor32 bctx = fm.fuse(bf, bb);
    CHECK(bctx.shape() == Shape({2, 4, 32}));
    std::vector<float> row0(bctx.data(), bctx.data() + ctx.numel());
    CHECK(all_close(row0, ctx.vec(), 1e-6f));
}

TEST_CASE("swapping foreground and background changes the fusion") {
    FusionModule32 fm(small_cfg(), 7);
    const Tensor32 hf = fm.encode_image(test_image<float>(32, 1, "img"));
    const Tensor32 hb = fm.encode_image(test_image<float>(32, 2, "img"));
    const Tensor32 ab = fm.fuse(hf, hb);
    const Tensor32 ba = fm.fuse(hb, hf);
    float max_diff = 0.f;
    for (int64_t i = 0; i < ab.numel(); i++)
        max_diff = std::max(max_diff, std::abs(ab.data()[i] - ba.data()[i]));
    CHECK(max_diff > 1e-4f);
}

TEST_CASE("zeroed weights leave only the broadcast output bias") {
    FusionModule32 fm(small_cfg(), 7);
    ParamRegistry32 reg;
    fm.collect_params("", reg);
    for (auto& p : reg.items_mut())
        for (auto& v : p.tensor.vec()) v = 0.f;
    Tensor32* bias = reg.find("map.out_bias");
    REQUIRE(bias != nullptr);
    for (int i = 0; i < 32; i++) bias->data()[i] = 0.25f * static_cast<float>(i) - 3.f;

    const Tensor32 hf = Tensor32::full({16, 48}, 0.3f);
    const Tensor32 hb = Tensor32::full({16, 48}, -0.7f);
    const Tensor32 ctx = fm.fuse(hf, hb);
    REQUIRE(ctx.shape() == Shape({4, 32}));
    for (int k = 0; k < 4; k++)
        for (int j = 0; j < 32; j++)
            CHECK(ctx.data()[k * 32 + j] == doctest::Approx(bias->data()[j]).epsilon(1e-7));
}

TEST_CASE("gradients reach both encoded branches and the encoder weights") {
    FusionModule32 fm(small_cfg(), 7);
    ParamRegistry32 reg;
    fm.collect_params("", reg);

    Tensor32 hf = fm.encode_image(test_image<float>(32, 1, "img")).detach().set_requires_grad();
    Tensor32 hb = fm.encode_image(test_image<float>(32, 2, "img")).detach().set_requires_grad();
    Tensor32 loss = mse(fm.fuse(hf, hb), Tensor32::zeros({4, 32}));
    loss.backward();
    REQUIRE(hf.has_grad());
    REQUIRE(hb.has_grad());
    auto norm1 = [](const std::vector<float>& g) {
        double s = 0;
        for (float v : g) s += std::abs(v);
        return s;
    };
    CHECK(norm1(hf.grad()) > 0.0);
    CHECK(norm1(hb.grad()) > 0.0);

    // through the full pipeline the patch embedding receives gradient too
    reg.zero_grads();
    Tensor32 full_loss = mse(fm.fuse(fm.encode_image(test_image<float>(32, 1, "img")),
                                     fm.encode_image(test_image<float>(32, 2, "img"))),
                             Tensor32::zeros({4, 32}));
    full_loss.backward();
    Tensor32* pw = reg.find("patch.w");
    REQUIRE(pw != nullptr);
    REQUIRE(pw->has_grad());
    CHECK(norm1(pw->grad()) > 0.0);
    Tensor32* q = reg.find("map.queries");
    REQUIRE(q->has_grad());
    CHECK(norm1(q->grad()) > 0.0);
}

TEST_CASE("multiple foregrounds stack along the token axis") {
    const FusionEncoderConfig cfg = small_cfg();
    FusionModule32 fm(cfg, 7);
    const Tensor32 h1 = fm.encode_image(test_image<float>(32, 1, "img"));
    const Tensor32 h2 = fm.encode_image(test_image<float>(32, 2, "img"));
    const Tensor32 hb = fm.encode_image(test_image<float>(32, 3, "img"));

    const Tensor32 multi = concat<float>({h1, h2}, 0);
    CHECK(multi.shape() == Shape({32, 48}));
    const Tensor32 ctx_multi = fm.fuse(multi, hb);
    CHECK(ctx_multi.shape() == Shape({4, 32}));

    const Tensor32 ctx_single = fm.fuse(h1, hb);
    float max_diff = 0.f;
    for (int64_t i = 0; i < ctx_multi.numel(); i++)
        max_diff = std::max(max_diff, std::abs(ctx_multi.data()[i] - ctx_single.data()[i]));
    CHECK(max_diff > 1e-5f);

    CHECK_THROWS_AS(fm.fuse(Tensor32::zeros({17, 48}), hb), ShapeError);
    CHECK_THROWS_AS(fm.fuse(h1, multi), ShapeError);          // background must be single
    CHECK_THROWS_AS(fm.fuse(Tensor32::zeros({16, 40}), hb), ShapeError);
    CHECK_THROWS_AS(fm.fuse(h1, Tensor32::zeros({2, 16, 48})), ShapeError);
}

TEST_CASE("construction is deterministic in the seed") {
    FusionModule32 a(small_cfg(), 21), b(small_cfg(), 21), c(small_cfg(), 22);
    const Tensor32 img1 = test_image<float>(32, 1, "img");
    const Tensor32 img2 = test_image<float>(32, 2, "img");
    const Tensor32 ra = a.fuse(a.encode_image(img1), a.encode_image(img2));
    const Tensor32 rb = b.fuse(b.encode_image(img1), b.encode_image(img2));
    const Tensor32 rc = c.fuse(c.encode_image(img1), c.encode_image(img2));
    CHECK(std::memcmp(ra.data(), rb.data(), sizeof(float) * ra.numel()) == 0);
    float max_diff = 0.f;
    for (int64_t i = 0; i < ra.numel(); i++)
        max_diff = std::max(max_diff, std::abs(ra.data()[i] - rc.data()[i]));
    CHECK(max_diff > 1e-6f);
}

TEST_CASE("null embedding is a learned tensor of the conditioning shape") {
    FusionModule32 a(small_cfg(), 21), c(small_cfg(), 22);
    CHECK(a.null_embedding().shape() == Shape({4, 32}));
    CHECK(a.null_embedding().requires_grad());
    float max_diff = 0.f;
    for (int64_t i = 0; i < a.null_embedding().numel(); i++)
        max_diff = std::max(max_diff, std::abs(a.null_embedding().data()[i] -
                                               c.null_embedding().data()[i]));
    CHECK(max_diff > 1e-6f);

    const Tensor32 tiled = a.null_context(3);
    CHECK(tiled.shape() == Shape({3, 4, 32}));
    for (int s = 0; s < 3; s++)
        CHECK(std::memcmp(tiled.data() + s * 128, a.null_embedding().data(),
                          sizeof(float) * 128) == 0);

    ParamRegistry32 reg;
    a.collect_params("fusion.", reg);
    CHECK(reg.find("fusion.null") != nullptr);
}

TEST_CASE("analytic gradients match finite differences through the module") {
    FusionModule64 fm(tiny_cfg(), 4);
    ParamRegistry64 reg;
    fm.collect_params("", reg);
    const Tensor64 img_f = test_image<double>(16, 1, "img");
    const Tensor64 img_b = test_image<double>(16, 2, "img");
    const Tensor64 target = Tensor64::zeros({2, 6});

    const auto loss = [&]() {
        return mse(fm.fuse(fm.encode_image(img_f), fm.encode_image(img_b)), target);
    };
    // a parameter from every stage of the pipeline
    for (const char* name : {"patch.w", "pos", "blk0.attn.wq.w", "blk0.mlp1.w", "blk0.ln1.g",
                             "map.src_fore", "map.pos", "map.k.w", "map.queries",
                             "map.rank_down", "map.out_bias"}) {
        Tensor64* p = reg.find(name);
        REQUIRE_MESSAGE(p != nullptr, name);
        const double err = param_grad_check(loss, *p, 24, 1e-5);
        CHECK_MESSAGE(err < 1e-4, name << " rel err " << err);
    }

    // and through the inputs of fuse itself
    const Tensor64 hf0 = fm.encode_image(img_f).detach();
    const Tensor64 hb0 = fm.encode_image(img_b).detach();
    const double err_f = grad_check(
        [&](const Tensor64& x) { return mse(fm.fuse(x, hb0), target); }, hf0, 1e-5);
    CHECK(err_f < 1e-4);
    const double err_b = grad_check(
        [&](const Tensor64& x) { return mse(fm.fuse(hf0, x), target); }, hb0, 1e-5);
    CHECK(err_b < 1e-4);
}

TEST_CASE("parameter census covers every stage") {
    FusionModule32 fm(small_cfg(), 7);
    ParamRegistry32 reg;
    fm.collect_params("f.", reg);
    // 3 patch/pos + 3 blocks x 16 + 11 mapper + 1 null
    CHECK(reg.items().size() == 3 + 3 * 16 + 11 + 1);
    for (const auto& p : reg.items()) CHECK(p.tensor.requires_grad());
}
