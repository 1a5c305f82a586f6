#include "foodfuse/png_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>

namespace foodfuse {

namespace {

constexpr unsigned char kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

uint32_t get_u32(const unsigned char* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void put_chunk(std::vector<unsigned char>& out, const char type[4],
               const std::vector<unsigned char>& data) {
    put_u32(out, static_cast<uint32_t>(data.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
    put_u32(out, crc);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

std::vector<unsigned char> encode_png(const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw IoError("png write: only 1- or 3-channel images supported");
    if (img.width <= 0 || img.height <= 0) throw IoError("png write: empty image");

    const int bpp = img.channels;
    const size_t stride = static_cast<size_t>(img.width) * bpp;
    std::vector<unsigned char> raw((stride + 1) * img.height);
    for (int y = 0; y < img.height; y++) {
        unsigned char* row = raw.data() + static_cast<size_t>(y) * (stride + 1);
        row[0] = 0;  // filter: none
        for (int x = 0; x < img.width; x++)
            for (int c = 0; c < bpp; c++) {
                const float v = std::fmin(1.f, std::fmax(0.f, img.at(y, x, c)));
                row[1 + static_cast<size_t>(x) * bpp + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw IoError("png write: deflate failed");
    compressed.resize(bound);

    std::vector<unsigned char> out(kSignature, kSignature + 8);
    std::vector<unsigned char> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(img.width));
    put_u32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);                                    // bit depth
    ihdr.push_back(img.channels == 1 ? 0 : 2);            // color type
    ihdr.push_back(0);                                    // compression
    ihdr.push_back(0);                                    // filter method
    ihdr.push_back(0);                                    // no interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", compressed);
    put_chunk(out, "IEND", {});
    return out;
}

Image decode_png(const std::vector<unsigned char>& bytes, const std::string& name) {
    auto fail = [&](const std::string& why) -> IoError {
        return IoError("png read " + name + ": " + why);
    };
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        throw fail("not a PNG file");

    int width = 0, height = 0, bit_depth = 0, color_type = 0;
    std::vector<unsigned char> idat;
    size_t pos = 8;
    bool seen_iend = false;
    while (pos + 8 <= bytes.size() && !seen_iend) {
        const uint32_t len = get_u32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw fail("truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const unsigned char* data = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw fail("bad IHDR");
            width = static_cast<int>(get_u32(data));
            height = static_cast<int>(get_u32(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0) throw fail("interlaced PNG not supported");
            if (bit_depth != 8) throw fail("only 8-bit PNG supported");
            if (color_type != 0 && color_type != 2 && color_type != 4 && color_type != 6)
                throw fail("unsupported color type " + std::to_string(color_type));
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            seen_iend = true;
        }
        pos += 12 + len;
    }
    if (width <= 0 || height <= 0) throw fail("missing IHDR");
    if (idat.empty()) throw fail("missing IDAT");

    const int src_ch = (color_type == 0) ? 1 : (color_type == 2) ? 3 : (color_type == 4) ? 2 : 4;
    const size_t stride = static_cast<size_t>(width) * src_ch;
    std::vector<unsigned char> raw((stride + 1) * height);
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw fail("inflate failed");

    // undo per-row filters in place
    std::vector<unsigned char> prev(stride, 0);
    for (int y = 0; y < height; y++) {
        unsigned char* row = raw.data() + static_cast<size_t>(y) * (stride + 1);
        const int filter = row[0];
        unsigned char* cur = row + 1;
        for (size_t i = 0; i < stride; i++) {
            const int left = i >= static_cast<size_t>(src_ch) ? cur[i - src_ch] : 0;
            const int up = prev[i];
            const int ul = i >= static_cast<size_t>(src_ch) ? prev[i - src_ch] : 0;
            int v = cur[i];
            switch (filter) {
                case 0: break;
                case 1: v += left; break;
                case 2: v += up; break;
                case 3: v += (left + up) / 2; break;
                case 4: v += paeth(left, up, ul); break;
                default: throw fail("bad filter type " + std::to_string(filter));
            }
            cur[i] = static_cast<unsigned char>(v & 0xff);
        }
        std::memcpy(prev.data(), cur, stride);
    }

    const int out_ch = (src_ch <= 2) ? 1 : 3;
    Image img(width, height, out_ch);
    for (int y = 0; y < height; y++) {
        const unsigned char* cur = raw.data() + static_cast<size_t>(y) * (stride + 1) + 1;
        for (int x = 0; x < width; x++) {
            const unsigned char* px = cur + static_cast<size_t>(x) * src_ch;
            float rgb[3];
            float alpha = 1.f;
            if (src_ch == 1) {
                rgb[0] = px[0] / 255.f;
            } else if (src_ch == 2) {
                rgb[0] = px[0] / 255.f;
                alpha = px[1] / 255.f;
            } else {
                rgb[0] = px[0] / 255.f;
                rgb[1] = px[1] / 255.f;
                rgb[2] = px[2] / 255.f;
                if (src_ch == 4) alpha = px[3] / 255.f;
            }
            for (int c = 0; c < out_ch; c++) {
                const float v = rgb[out_ch == 1 ? 0 : c];
                img.at(y, x, c) = alpha * v + (1.f - alpha);  // composite over white
            }
        }
    }
    return img;
}

Image read_png(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("png read " + path + ": cannot open file");
    std::fseek(f, 0, SEEK_END);
    const long sz = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<unsigned char> bytes(static_cast<size_t>(sz > 0 ? sz : 0));
    const size_t got = bytes.empty() ? 0 : std::fread(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
    if (got != bytes.size()) throw IoError("png read " + path + ": short read");
    return decode_png(bytes, path);
}

void write_png(const std::string& path, const Image& img) {
    const std::vector<unsigned char> bytes = encode_png(img);
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("png write " + path + ": cannot open file");
    const size_t put = std::fwrite(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
    if (put != bytes.size()) throw IoError("png write " + path + ": short write");
}

}  // namespace foodfuse
