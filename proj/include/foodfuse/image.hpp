#pragma once

#include <array>
#include <vector>

#include "foodfuse/tensor.hpp"

namespace foodfuse {

// Float raster, interleaved rows, values in [0,1]. channels is 1 (gray,
// used for masks) or 3 (RGB).
struct Image {
    int width = 0, height = 0, channels = 0;
    std::vector<float> pix;

    Image() = default;
    Image(int w, int h, int c, float fill = 0.f)
        : width(w), height(h), channels(c),
          pix(static_cast<size_t>(w) * h * c, fill) {}

    float& at(int y, int x, int c) {
        return pix[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c) const {
        return pix[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    bool same_extent(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    int64_t numel() const { return static_cast<int64_t>(pix.size()); }
};

// (C,H,W) tensor in [0,1] <-> interleaved image
Tensor32 image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor32& t, bool clamp_01 = true);

// Affine + mild perspective view transform about the image center. The
// parameters describe the forward map; sampling inverts it and reads the
// source with bilinear interpolation (out-of-frame reads return `fill`).
// All-default parameters are the exact identity (output bit-equals input).
struct WarpParams {
    double rotation_deg = 0.0;
    double scale = 1.0;
    double shear_x = 0.0, shear_y = 0.0;
    double perspective_x = 0.0, perspective_y = 0.0;
    // translation as a fraction of the frame extent (0.1 = 10% of width/height)
    double shift_x = 0.0, shift_y = 0.0;

    bool is_identity() const {
        return rotation_deg == 0.0 && scale == 1.0 && shear_x == 0.0 && shear_y == 0.0 &&
               perspective_x == 0.0 && perspective_y == 0.0 && shift_x == 0.0 && shift_y == 0.0;
    }
    // forward 3x3 homography, row-major
    std::array<double, 9> forward_matrix(int width, int height) const;
};

Image warp_image(const Image& src, const WarpParams& p, float fill = 0.f);

// Binary-threshold helper for masks: >= 0.5 becomes 1, else 0.
Image threshold_mask(const Image& m);

// Chebyshev dilation of a binary single-channel mask by `radius` pixels.
Image dilate_mask(const Image& m, int radius);

// Bilinear resample of a sub-rectangle [x0,y0,w0,h0] of src onto out_w x out_h.
Image resize_crop_bilinear(const Image& src, double x0, double y0, double w0, double h0,
                           int out_w, int out_h);

// Separable box blur with clamped borders; radius 0 returns the input.
Image box_blur(const Image& src, int radius);

// mean of |a - b| over all pixels/channels, optionally restricted to where
// region (single-channel) is zero or nonzero
double mean_abs_diff(const Image& a, const Image& b);
double mean_abs_diff_where(const Image& a, const Image& b, const Image& region, bool inside);

}  // namespace foodfuse
