#pragma once

#include <string>

#include "foodfuse/image.hpp"

namespace foodfuse {

// Minimal PNG codec over zlib: 8-bit, non-interlaced. Reading accepts gray,
// gray+alpha, RGB, and RGBA (alpha composited over white); writing emits
// gray for 1-channel images and RGB for 3-channel ones. Failures raise
// IoError naming the path.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

// In-memory forms used by tests.
Image decode_png(const std::vector<unsigned char>& bytes, const std::string& name = "buffer");
std::vector<unsigned char> encode_png(const Image& img);

}  // namespace foodfuse
