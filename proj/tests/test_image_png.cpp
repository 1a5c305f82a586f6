#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <zlib.h>

#include <cstdio>
#include <random>

#include "foodfuse/image.hpp"
#include "foodfuse/png_io.hpp"

using namespace foodfuse;

namespace {

Image random_8bit_image(int w, int h, int c, uint32_t seed) {
    // pixel values drawn from the 8-bit grid so encode/decode is lossless
    Image img(w, h, c);
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> d(0, 255);
    for (float& v : img.pix) v = static_cast<float>(d(rng)) / 255.f;
    return img;
}

bool images_equal(const Image& a, const Image& b) {
    if (!a.same_extent(b)) return false;
    for (size_t i = 0; i < a.pix.size(); i++)
        if (a.pix[i] != b.pix[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("png round trip is lossless for 8-bit grid values") {
    for (int c : {1, 3}) {
        const Image img = random_8bit_image(23, 17, c, 1000u + c);
        const Image back = decode_png(encode_png(img));
        CHECK(images_equal(img, back));
    }
}

TEST_CASE("png file io round trip") {
    const Image img = random_8bit_image(16, 16, 3, 7u);
    const std::string path = "test_io_roundtrip.png";
    write_png(path, img);
    const Image back = read_png(path);
    CHECK(images_equal(img, back));
    std::remove(path.c_str());
}

TEST_CASE("png write clamps out-of-range values") {
    Image img(2, 1, 1);
    img.pix = {-0.5f, 1.5f};
    const Image back = decode_png(encode_png(img));
    CHECK(back.pix[0] == 0.f);
    CHECK(back.pix[1] == 1.f);
}

TEST_CASE("png decoder handles all filter types") {
    // a gradient image makes the encoder's filter choice irrelevant, but we
    // exercise the decoder paths by hand-building rows with each filter type.
    // Simpler: encode images whose rows differ strongly so every unfilter path
    // (none is what we emit) at least round-trips; then hand-craft Sub/Up/
    // Average/Paeth by filtering a known image ourselves.
    const int w = 8, h = 5, ch = 3;
    const Image img = random_8bit_image(w, h, ch, 42u);

    // build raw scanlines with a cycling filter choice, applying the filter
    // definition forward; decode must invert it.
    auto u8 = [&](int y, int x, int c) -> int {
        return static_cast<int>(std::lround(img.at(y, x, c) * 255.f));
    };
    const size_t stride = static_cast<size_t>(w) * ch;
    std::vector<unsigned char> raw((stride + 1) * h);
    auto flat = [&](int y, size_t i) -> int { return u8(y, static_cast<int>(i) / ch, static_cast<int>(i) % ch); };
    for (int y = 0; y < h; y++) {
        unsigned char* row = raw.data() + static_cast<size_t>(y) * (stride + 1);
        const int filter = y % 5;
        row[0] = static_cast<unsigned char>(filter);
        for (size_t i = 0; i < stride; i++) {
            const int cur = flat(y, i);
            const int left = i >= static_cast<size_t>(ch) ? flat(y, i - ch) : 0;
            const int up = y > 0 ? flat(y - 1, i) : 0;
            const int ul = (y > 0 && i >= static_cast<size_t>(ch)) ? flat(y - 1, i - ch) : 0;
            int pred = 0;
            switch (filter) {
                case 0: pred = 0; break;
                case 1: pred = left; break;
                case 2: pred = up; break;
                case 3: pred = (left + up) / 2; break;
                case 4: {
                    const int p = left + up - ul;
                    const int pa = std::abs(p - left), pb = std::abs(p - up), pc = std::abs(p - ul);
                    pred = (pa <= pb && pa <= pc) ? left : (pb <= pc ? up : ul);
                    break;
                }
            }
            row[1 + i] = static_cast<unsigned char>((cur - pred) & 0xff);
        }
    }

    // wrap raw in a real PNG container by reusing the encoder for structure,
    // then substituting our filtered payload.
    std::vector<unsigned char> bytes = encode_png(img);
    // rebuild manually: signature + IHDR copied, new IDAT, IEND.
    std::vector<unsigned char> crafted(bytes.begin(), bytes.begin() + 8 + 12 + 13);
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(bound);
    REQUIRE(compress2(comp.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 9) == Z_OK);
    comp.resize(bound);
    auto put_u32 = [&](std::vector<unsigned char>& v, uint32_t x) {
        v.push_back(static_cast<unsigned char>(x >> 24));
        v.push_back(static_cast<unsigned char>(x >> 16));
        v.push_back(static_cast<unsigned char>(x >> 8));
        v.push_back(static_cast<unsigned char>(x));
    };
    auto put_chunk = [&](const char type[4], const std::vector<unsigned char>& data) {
        put_u32(crafted, static_cast<uint32_t>(data.size()));
        const size_t start = crafted.size();
        crafted.insert(crafted.end(), type, type + 4);
        crafted.insert(crafted.end(), data.begin(), data.end());
        const uint32_t crc = static_cast<uint32_t>(
            crc32(0, crafted.data() + start, static_cast<uInt>(crafted.size() - start)));
        put_u32(crafted, crc);
    };
    put_chunk("IDAT", comp);
    put_chunk("IEND", {});

    const Image back = decode_png(crafted, "crafted");
    CHECK(images_equal(img, back));
}

TEST_CASE("png decode rejects garbage and unsupported forms") {
    CHECK_THROWS_AS(decode_png({1, 2, 3}), IoError);
    // valid signature but nothing else
    std::vector<unsigned char> sig = {137, 80, 78, 71, 13, 10, 26, 10};
    CHECK_THROWS_AS(decode_png(sig), IoError);
    CHECK_THROWS_AS(read_png("does_not_exist_anywhere.png"), IoError);
}

TEST_CASE("png alpha composites over white") {
    // craft an RGBA png via the decoder path: build it by hand
    const int w = 2, h = 1, ch = 4;
    const size_t stride = static_cast<size_t>(w) * ch;
    std::vector<unsigned char> raw(stride + 1);
    raw[0] = 0;
    // pixel 0: pure red, alpha 0 -> white; pixel 1: pure red, alpha 255 -> red
    unsigned char px[8] = {255, 0, 0, 0, 255, 0, 0, 255};
    std::copy(px, px + 8, raw.begin() + 1);

    std::vector<unsigned char> crafted = {137, 80, 78, 71, 13, 10, 26, 10};
    auto put_u32 = [&](std::vector<unsigned char>& v, uint32_t x) {
        v.push_back(static_cast<unsigned char>(x >> 24));
        v.push_back(static_cast<unsigned char>(x >> 16));
        v.push_back(static_cast<unsigned char>(x >> 8));
        v.push_back(static_cast<unsigned char>(x));
    };
    auto put_chunk = [&](const char type[4], const std::vector<unsigned char>& data) {
        put_u32(crafted, static_cast<uint32_t>(data.size()));
        const size_t start = crafted.size();
        crafted.insert(crafted.end(), type, type + 4);
        crafted.insert(crafted.end(), data.begin(), data.end());
        const uint32_t crc = static_cast<uint32_t>(
            crc32(0, crafted.data() + start, static_cast<uInt>(crafted.size() - start)));
        put_u32(crafted, crc);
    };
    std::vector<unsigned char> ihdr;
    put_u32(ihdr, w);
    put_u32(ihdr, h);
    ihdr.push_back(8);
    ihdr.push_back(6);  // RGBA
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk("IHDR", ihdr);
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(bound);
    REQUIRE(compress2(comp.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 9) == Z_OK);
    comp.resize(bound);
    put_chunk("IDAT", comp);
    put_chunk("IEND", {});

    const Image img = decode_png(crafted, "rgba");
    REQUIRE(img.channels == 3);
    CHECK(img.at(0, 0, 0) == doctest::Approx(1.f));
    CHECK(img.at(0, 0, 1) == doctest::Approx(1.f));
    CHECK(img.at(0, 0, 2) == doctest::Approx(1.f));
    CHECK(img.at(0, 1, 0) == doctest::Approx(1.f));
    CHECK(img.at(0, 1, 1) == doctest::Approx(0.f));
    CHECK(img.at(0, 1, 2) == doctest::Approx(0.f));
}

TEST_CASE("image tensor conversion round trip") {
    const Image img = random_8bit_image(6, 4, 3, 11u);
    const auto t = image_to_tensor(img);
    REQUIRE(t.shape() == Shape({3, 4, 6}));
    const Image back = tensor_to_image(t, false);
    CHECK(images_equal(img, back));
    // channel-major layout: tensor(c,y,x) == image(y,x,c)
    CHECK(t.data()[0 * 24 + 1 * 6 + 2] == img.at(1, 2, 0));
    CHECK(t.data()[2 * 24 + 3 * 6 + 5] == img.at(3, 5, 2));
}

TEST_CASE("tensor_to_image clamps when asked") {
    Tensor32 t = Tensor32::zeros({1, 1, 2});
    t.data()[0] = -0.25f;
    t.data()[1] = 1.75f;
    const Image clamped = tensor_to_image(t, true);
    CHECK(clamped.pix[0] == 0.f);
    CHECK(clamped.pix[1] == 1.f);
    const Image raw = tensor_to_image(t, false);
    CHECK(raw.pix[0] == -0.25f);
    CHECK(raw.pix[1] == 1.75f);
}

TEST_CASE("identity warp returns the input bit-for-bit") {
    const Image img = random_8bit_image(20, 14, 3, 5u);
    WarpParams p;  // all defaults = identity
    CHECK(p.is_identity());
    const Image out = warp_image(img, p);
    CHECK(images_equal(img, out));
}

TEST_CASE("warp moves image and mask together") {
    // paint a block, shift it, check the block lands where the mask lands
    Image img(32, 32, 3);
    Image mask(32, 32, 1);
    for (int y = 10; y < 18; y++)
        for (int x = 8; x < 16; x++) {
            for (int c = 0; c < 3; c++) img.at(y, x, c) = 1.f;
            mask.at(y, x, 0) = 1.f;
        }
    WarpParams p;
    p.shift_x = 0.125f;  // 4 px on a 32-wide frame
    CHECK(!p.is_identity());
    const Image wimg = warp_image(img, p);
    const Image wmask = warp_image(mask, p);
    const Image bin = threshold_mask(wmask);
    int inside = 0, agree = 0;
    for (int y = 0; y < 32; y++)
        for (int x = 0; x < 32; x++)
            if (bin.at(y, x, 0) > 0.5f) {
                inside++;
                if (wimg.at(y, x, 0) > 0.5f) agree++;
            }
    REQUIRE(inside > 0);
    CHECK(agree == inside);
    // block [8,16) shifted right 4px spans [12,20)
    CHECK(bin.at(13, 10, 0) == 0.f);
    CHECK(bin.at(13, 13, 0) == 1.f);
    CHECK(bin.at(13, 18, 0) == 1.f);
    CHECK(bin.at(13, 21, 0) == 0.f);
}

TEST_CASE("warp rotation keeps content near center") {
    Image img(33, 33, 1);
    img.at(16, 16, 0) = 1.f;
    WarpParams p;
    p.rotation_deg = 90.f;
    const Image out = warp_image(img, p);
    CHECK(out.at(16, 16, 0) == doctest::Approx(1.f));
}

TEST_CASE("threshold and dilate behave as set operations") {
    Image m(9, 9, 1);
    m.at(4, 4, 0) = 0.9f;
    m.at(0, 0, 0) = 0.2f;  // below threshold
    const Image bin = threshold_mask(m);
    CHECK(bin.at(4, 4, 0) == 1.f);
    CHECK(bin.at(0, 0, 0) == 0.f);

    const Image d = dilate_mask(bin, 2);
    int count = 0;
    for (float v : d.pix) count += (v == 1.f);
    CHECK(count == 25);  // 5x5 Chebyshev ball
    CHECK(d.at(2, 2, 0) == 1.f);
    CHECK(d.at(1, 4, 0) == 0.f);

    const Image d0 = dilate_mask(bin, 0);
    CHECK(images_equal(bin, d0));
}

TEST_CASE("resize at native scale is the identity") {
    const Image img = random_8bit_image(12, 10, 3, 3u);
    const Image out = resize_crop_bilinear(img, 0, 0, 12, 10, 12, 10);
    CHECK(images_equal(img, out));
}

TEST_CASE("resize crop pulls the requested window") {
    Image img(8, 8, 1);
    for (int y = 0; y < 8; y++)
        for (int x = 0; x < 8; x++) img.at(y, x, 0) = static_cast<float>(y * 8 + x) / 64.f;
    const Image out = resize_crop_bilinear(img, 2, 3, 4, 4, 4, 4);
    REQUIRE(out.width == 4);
    REQUIRE(out.height == 4);
    for (int y = 0; y < 4; y++)
        for (int x = 0; x < 4; x++)
            CHECK(out.at(y, x, 0) == doctest::Approx(img.at(3 + y, 2 + x, 0)));
}

TEST_CASE("box blur preserves constants and reduces contrast") {
    Image flat(10, 10, 3);
    for (float& v : flat.pix) v = 0.637f;
    const Image b = box_blur(flat, 2);
    for (float v : b.pix) CHECK(v == doctest::Approx(0.637f));

    Image edge(16, 16, 1);
    for (int y = 0; y < 16; y++)
        for (int x = 8; x < 16; x++) edge.at(y, x, 0) = 1.f;
    const Image be = box_blur(edge, 3);
    // blurred edge is monotone over the transition and strictly between 0 and 1 at the seam
    CHECK(be.at(8, 7, 0) > 0.f);
    CHECK(be.at(8, 8, 0) < 1.f);
    CHECK(be.at(8, 7, 0) <= be.at(8, 8, 0));

    const Image b0 = box_blur(edge, 0);
    CHECK(images_equal(edge, b0));
}

TEST_CASE("mean abs diff helpers") {
    Image a(4, 4, 1), b(4, 4, 1);
    for (float& v : b.pix) v = 0.5f;
    CHECK(mean_abs_diff(a, a) == doctest::Approx(0.0));
    CHECK(mean_abs_diff(a, b) == doctest::Approx(0.5));

    Image region(4, 4, 1);
    region.at(0, 0, 0) = 1.f;
    region.at(0, 1, 0) = 1.f;
    Image c = a;
    c.at(0, 0, 0) = 1.f;  // differs only inside the region
    CHECK(mean_abs_diff_where(a, c, region, true) == doctest::Approx(0.5));
    CHECK(mean_abs_diff_where(a, c, region, false) == doctest::Approx(0.0));
}
