#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "foodfuse/codec.hpp"
#include "foodfuse/image.hpp"
#include "foodfuse/ops.hpp"
#include "foodfuse/rng.hpp"

using namespace foodfuse;

namespace {

// random image whose values sit exactly on the 8-bit grid
Tensor32 grid_image(const Shape& s, uint64_t seed) {
    Tensor32 t = Tensor32::zeros(s);
    RngStream r(seed, "grid");
    for (int64_t i = 0; i < t.numel(); i++)
        t.data()[i] = static_cast<float>(r.uniform_int(256)) / 255.f;
    return t;
}

bool bitwise_equal(const Tensor32& a, const Tensor32& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data(), b.data(), sizeof(float) * a.numel()) == 0;
}

LatentCodecConfig patch_cfg(int f) {
    LatentCodecConfig c;
    c.mode = CodecMode::patch;
    c.downsample_factor = f;
    c.latent_channels = 3 * f * f;
    return c;
}

LatentCodecConfig learned_cfg(int f, int c, int hidden) {
    LatentCodecConfig cfg;
    cfg.mode = CodecMode::learned;
    cfg.downsample_factor = f;
    cfg.latent_channels = c;
    cfg.hidden_channels = hidden;
    return cfg;
}

}  // namespace

TEST_CASE("codec config validation") {
    CHECK_NOTHROW(patch_cfg(4).validate());
    CHECK_NOTHROW(learned_cfg(4, 8, 32).validate());

    LatentCodecConfig bad = patch_cfg(4);
    bad.latent_channels = 8;  // patch mode demands 3*f*f = 48
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    LatentCodecConfig bad2 = patch_cfg(4);
    bad2.downsample_factor = 0;
    CHECK_THROWS_AS(bad2.validate(), ConfigError);

    LatentCodecConfig bad3 = learned_cfg(4, 0, 32);
    CHECK_THROWS_AS(bad3.validate(), ConfigError);
}

TEST_CASE("patch mode shapes") {
    LatentCodec32 codec(patch_cfg(4));
    const Tensor32 img = grid_image({3, 64, 64}, 1);
    const Tensor32 z = codec.encode(img);
    CHECK(z.shape() == Shape({48, 16, 16}));
    CHECK(codec.decode(z).shape() == Shape({3, 64, 64}));
    CHECK(codec.latent_shape(64, 64) == Shape({48, 16, 16}));

    const Tensor32 batch = grid_image({2, 3, 32, 64}, 2);
    const Tensor32 zb = codec.encode(batch);
    CHECK(zb.shape() == Shape({2, 48, 8, 16}));
    CHECK(codec.decode(zb).shape() == Shape({2, 3, 32, 64}));
}

TEST_CASE("constant one maps to constant latent one") {
    LatentCodec32 codec(patch_cfg(4));
    const Tensor32 ones = Tensor32::full({3, 16, 16}, 1.f);
    const Tensor32 z = codec.encode(ones);
    for (int64_t i = 0; i < z.numel(); i++) CHECK(z.data()[i] == 1.f);
    // and constant zero maps to exactly -1
    const Tensor32 zeros = Tensor32::zeros({3, 16, 16});
    const Tensor32 zz = codec.encode(zeros);
    for (int64_t i = 0; i < zz.numel(); i++) CHECK(zz.data()[i] == -1.f);
}

TEST_CASE("patch round trip is bit identical") {
    for (int f : {1, 2, 4, 8}) {
        LatentCodec32 codec(patch_cfg(f));
        const Tensor32 img = grid_image({3, 32, 32}, 100u + f);
        CHECK(bitwise_equal(codec.decode(codec.encode(img)), img));
        const Tensor32 batch = grid_image({3, 3, 32, 32}, 200u + f);
        CHECK(bitwise_equal(codec.decode(codec.encode(batch)), batch));
    }
}

TEST_CASE("every 8-bit level survives the round trip") {
    // image holding all 256 levels
    Tensor32 img = Tensor32::zeros({3, 16, 16});
    for (int64_t i = 0; i < img.numel(); i++)
        img.data()[i] = static_cast<float>(i % 256) / 255.f;
    LatentCodec32 codec(patch_cfg(4));
    CHECK(bitwise_equal(codec.decode(codec.encode(img)), img));
}

TEST_CASE("patch encode decode move pixels where expected") {
    // single distinctive pixel: channel 1, y=5, x=6 with f=2
    Tensor32 img = Tensor32::zeros({3, 8, 8});
    img.data()[1 * 64 + 5 * 8 + 6] = 1.f;
    LatentCodec32 codec(patch_cfg(2));
    const Tensor32 z = codec.encode(img);
    // patch (2,3), offset (1,0), channel 1 -> latent channel (1*2+1)*2+0 = 6
    const int lc = 6;
    CHECK(z.data()[lc * 16 + 2 * 4 + 3] == 1.f);
    // everything else encodes black (-1)
    int non_black = 0;
    for (int64_t i = 0; i < z.numel(); i++) non_black += (z.data()[i] != -1.f);
    CHECK(non_black == 1);
}

TEST_CASE("decode clamps out-of-range latents") {
    LatentCodec32 codec(patch_cfg(2));
    Tensor32 z = Tensor32::full({12, 4, 4}, 5.f);
    const Tensor32 img = codec.decode(z);
    for (int64_t i = 0; i < img.numel(); i++) CHECK(img.data()[i] == 1.f);
    Tensor32 neg = Tensor32::full({12, 4, 4}, -7.f);
    const Tensor32 img2 = codec.decode(neg);
    for (int64_t i = 0; i < img2.numel(); i++) CHECK(img2.data()[i] == 0.f);
}

TEST_CASE("codec shape errors") {
    LatentCodec32 codec(patch_cfg(4));
    CHECK_THROWS_AS(codec.encode(grid_image({3, 30, 32}, 5)), ConfigError);  // 30 % 4 != 0
    CHECK_THROWS_AS(codec.encode(grid_image({1, 32, 32}, 6)), ShapeError);   // not RGB
    CHECK_THROWS_AS(codec.encode(grid_image({32, 32}, 7)), ShapeError);      // bad rank
    CHECK_THROWS_AS(codec.decode(Tensor32::zeros({12, 8, 8})), ShapeError);  // 12 != 48
    CHECK_THROWS_AS(codec.latent_shape(30, 32), ConfigError);
}

TEST_CASE("image wrappers round trip through patch mode") {
    Image img(16, 12, 3);
    RngStream r(9, "img");
    for (float& v : img.pix) v = static_cast<float>(r.uniform_int(256)) / 255.f;
    LatentCodec32 codec(patch_cfg(4));
    const Tensor32 z = codec.encode_image(img);
    const Image back = codec.decode_to_image(z);
    REQUIRE(back.width == 16);
    REQUIRE(back.height == 12);
    CHECK(std::memcmp(back.pix.data(), img.pix.data(), sizeof(float) * img.pix.size()) == 0);
}

TEST_CASE("learned mode shapes and output range") {
    LatentCodec32 codec(learned_cfg(4, 8, 16), 42);
    const Tensor32 img = grid_image({2, 3, 64, 64}, 11);
    const Tensor32 z = codec.encode(img);
    CHECK(z.shape() == Shape({2, 8, 16, 16}));
    const Tensor32 rec = codec.decode(z);
    CHECK(rec.shape() == Shape({2, 3, 64, 64}));
    for (int64_t i = 0; i < rec.numel(); i++) {
        CHECK(rec.data()[i] >= 0.f);
        CHECK(rec.data()[i] <= 1.f);
    }
    CHECK(codec.latent_shape(64, 64) == Shape({8, 16, 16}));
}

TEST_CASE("learned mode registers twelve parameter tensors") {
    LatentCodec32 codec(learned_cfg(4, 8, 16), 1);
    ParamRegistry32 reg;
    codec.collect_params("codec.", reg);
    CHECK(reg.items().size() == 12);
    CHECK(reg.find("codec.enc.in.w") != nullptr);
    CHECK(reg.find("codec.dec.out.b") != nullptr);

    // patch mode has no parameters
    LatentCodec32 plain(patch_cfg(4));
    ParamRegistry32 none;
    plain.collect_params("codec.", none);
    CHECK(none.items().empty());
}

TEST_CASE("gradients reach every learned codec parameter") {
    LatentCodec32 codec(learned_cfg(2, 6, 8), 3);
    ParamRegistry32 reg;
    codec.collect_params("codec.", reg);
    const Tensor32 img = grid_image({2, 3, 8, 8}, 12);
    Tensor32 loss = mse(codec.decode(codec.encode(img)), img);
    loss.backward();
    for (const auto& p : reg.items()) {
        REQUIRE_MESSAGE(p.tensor.has_grad(), p.name);
        double total = 0.0;
        for (float g : p.tensor.grad()) total += std::abs(g);
        CHECK_MESSAGE(total > 0.0, p.name);
    }
}

TEST_CASE("learned codec overfits a small set to high fidelity") {
    // smooth, compressible images: blurred noise on the 8-bit grid
    const int n = 8, hw = 32;
    Tensor32 images = Tensor32::zeros({n, 3, hw, hw});
    RngStream r(77, "train-imgs");
    for (int i = 0; i < n; i++) {
        Image im(hw, hw, 3);
        for (float& v : im.pix) v = static_cast<float>(r.uniform());
        im = box_blur(im, 5);
        // snap to the 8-bit grid like any PNG-loaded frame
        for (float& v : im.pix) v = static_cast<float>(std::lround(v * 255.f)) / 255.f;
        const Tensor32 t = image_to_tensor(im);
        std::memcpy(images.data() + static_cast<int64_t>(i) * t.numel(), t.data(),
                    sizeof(float) * t.numel());
    }

    LatentCodec32 codec(learned_cfg(4, 8, 16), 5);
    train_codec_reconstruction(codec, images, 300, 4, 2e-3, 9);

    const Tensor32 rec = codec.decode(codec.encode(images));
    const double m = static_cast<double>(mse(rec, images).item());
    const double psnr = 10.0 * std::log10(1.0 / m);
    CHECK(psnr > 25.0);
}

TEST_CASE("codec training rejects misuse") {
    LatentCodec32 plain(patch_cfg(4));
    Tensor32 imgs = grid_image({2, 3, 8, 8}, 1);
    CHECK_THROWS_AS(train_codec_reconstruction(plain, imgs, 1, 1, 1e-3), ConfigError);
    LatentCodec32 learned(learned_cfg(4, 8, 16), 1);
    CHECK_THROWS_AS(train_codec_reconstruction(learned, grid_image({3, 8, 8}, 2), 1, 1, 1e-3),
                    ShapeError);
}
