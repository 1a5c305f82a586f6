#include "foodfuse/image.hpp"

#include <algorithm>
#include <cmath>

namespace foodfuse {

Tensor32 image_to_tensor(const Image& img) {
    Tensor32 t = Tensor32::zeros({img.channels, img.height, img.width});
    float* d = t.data();
    for (int c = 0; c < img.channels; c++)
        for (int y = 0; y < img.height; y++)
            for (int x = 0; x < img.width; x++)
                d[(static_cast<int64_t>(c) * img.height + y) * img.width + x] = img.at(y, x, c);
    return t;
}

Image tensor_to_image(const Tensor32& t, bool clamp_01) {
    if (t.ndim() != 3) throw ShapeError("tensor_to_image", "expected (C,H,W), got " + shape_str(t.shape()));
    const int C = t.dim(0), H = t.dim(1), W = t.dim(2);
    Image img(W, H, C);
    const float* d = t.data();
    for (int c = 0; c < C; c++)
        for (int y = 0; y < H; y++)
            for (int x = 0; x < W; x++) {
                float v = d[(static_cast<int64_t>(c) * H + y) * W + x];
                if (clamp_01) v = std::clamp(v, 0.f, 1.f);
                img.at(y, x, c) = v;
            }
    return img;
}

namespace {

std::array<double, 9> mat_mul(const std::array<double, 9>& a, const std::array<double, 9>& b) {
    std::array<double, 9> c{};
    for (int i = 0; i < 3; i++)
        for (int j = 0; j < 3; j++)
            for (int k = 0; k < 3; k++) c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
    return c;
}

std::array<double, 9> mat_inverse(const std::array<double, 9>& m) {
    const double a = m[0], b = m[1], c = m[2], d = m[3], e = m[4], f = m[5], g = m[6], h = m[7],
                 i = m[8];
    const double A = e * i - f * h, B = -(d * i - f * g), C = d * h - e * g;
    const double det = a * A + b * B + c * C;
    if (std::abs(det) < 1e-12) throw NumericError("warp: singular transform");
    const double inv = 1.0 / det;
    return {A * inv, -(b * i - c * h) * inv, (b * f - c * e) * inv,
            B * inv, (a * i - c * g) * inv,  -(a * f - c * d) * inv,
            C * inv, -(a * h - b * g) * inv, (a * e - b * d) * inv};
}

float sample_bilinear(const Image& src, double u, double v, int c, float fill) {
    const int x0 = static_cast<int>(std::floor(u));
    const int y0 = static_cast<int>(std::floor(v));
    const double fx = u - x0, fy = v - y0;
    auto tap = [&](int y, int x) -> float {
        if (x < 0 || x >= src.width || y < 0 || y >= src.height) return fill;
        return src.at(y, x, c);
    };
    const double top = (1.0 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1);
    const double bot = (1.0 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1);
    return static_cast<float>((1.0 - fy) * top + fy * bot);
}

}  // namespace

std::array<double, 9> WarpParams::forward_matrix(int width, int height) const {
    const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
    const double th = rotation_deg * 3.14159265358979323846 / 180.0;
    const std::array<double, 9> to_center = {1, 0, -cx, 0, 1, -cy, 0, 0, 1};
    const std::array<double, 9> scl = {scale, 0, 0, 0, scale, 0, 0, 0, 1};
    const std::array<double, 9> rot = {std::cos(th), -std::sin(th), 0,
                                       std::sin(th), std::cos(th),  0,
                                       0,            0,             1};
    const std::array<double, 9> shear = {1, shear_x, 0, shear_y, 1, 0, 0, 0, 1};
    const std::array<double, 9> persp = {1, 0, 0, 0, 1, 0, perspective_x, perspective_y, 1};
    const std::array<double, 9> back = {1, 0, cx + shift_x * width, 0, 1, cy + shift_y * height,
                                        0, 0, 1};
    return mat_mul(back, mat_mul(persp, mat_mul(shear, mat_mul(rot, mat_mul(scl, to_center)))));
}

Image warp_image(const Image& src, const WarpParams& p, float fill) {
    if (p.is_identity()) return src;
    const auto inv = mat_inverse(p.forward_matrix(src.width, src.height));
    Image out(src.width, src.height, src.channels);
    for (int y = 0; y < src.height; y++)
        for (int x = 0; x < src.width; x++) {
            const double w = inv[6] * x + inv[7] * y + inv[8];
            if (std::abs(w) < 1e-12) {
                for (int c = 0; c < src.channels; c++) out.at(y, x, c) = fill;
                continue;
            }
            const double u = (inv[0] * x + inv[1] * y + inv[2]) / w;
            const double v = (inv[3] * x + inv[4] * y + inv[5]) / w;
            for (int c = 0; c < src.channels; c++) out.at(y, x, c) = sample_bilinear(src, u, v, c, fill);
        }
    return out;
}

Image threshold_mask(const Image& m) {
    Image out = m;
    for (auto& v : out.pix) v = (v >= 0.5f) ? 1.f : 0.f;
    return out;
}

Image dilate_mask(const Image& m, int radius) {
    if (radius <= 0) return m;
    Image tmp(m.width, m.height, 1);
    for (int y = 0; y < m.height; y++)
        for (int x = 0; x < m.width; x++) {
            float v = 0.f;
            for (int dx = -radius; dx <= radius && v == 0.f; dx++) {
                const int xx = x + dx;
                if (xx >= 0 && xx < m.width && m.at(y, xx, 0) >= 0.5f) v = 1.f;
            }
            tmp.at(y, x, 0) = v;
        }
    Image out(m.width, m.height, 1);
    for (int y = 0; y < m.height; y++)
        for (int x = 0; x < m.width; x++) {
            float v = 0.f;
            for (int dy = -radius; dy <= radius && v == 0.f; dy++) {
                const int yy = y + dy;
                if (yy >= 0 && yy < m.height && tmp.at(yy, x, 0) >= 0.5f) v = 1.f;
            }
            out.at(y, x, 0) = v;
        }
    return out;
}

Image resize_crop_bilinear(const Image& src, double x0, double y0, double w0, double h0,
                           int out_w, int out_h) {
    Image out(out_w, out_h, src.channels);
    for (int y = 0; y < out_h; y++)
        for (int x = 0; x < out_w; x++) {
            const double u = x0 + (x + 0.5) * w0 / out_w - 0.5;
            const double v = y0 + (y + 0.5) * h0 / out_h - 0.5;
            // clamp to frame so border samples repeat the edge pixel
            const double uc = std::clamp(u, 0.0, static_cast<double>(src.width - 1));
            const double vc = std::clamp(v, 0.0, static_cast<double>(src.height - 1));
            for (int c = 0; c < src.channels; c++) out.at(y, x, c) = sample_bilinear(src, uc, vc, c, 0.f);
        }
    return out;
}

Image box_blur(const Image& src, int radius) {
    if (radius <= 0) return src;
    Image tmp(src.width, src.height, src.channels);
    const double inv = 1.0 / (2 * radius + 1);
    for (int y = 0; y < src.height; y++)
        for (int x = 0; x < src.width; x++)
            for (int c = 0; c < src.channels; c++) {
                double acc = 0.0;
                for (int dx = -radius; dx <= radius; dx++) {
                    const int xx = std::clamp(x + dx, 0, src.width - 1);
                    acc += src.at(y, xx, c);
                }
                tmp.at(y, x, c) = static_cast<float>(acc * inv);
            }
    Image out(src.width, src.height, src.channels);
    for (int y = 0; y < src.height; y++)
        for (int x = 0; x < src.width; x++)
            for (int c = 0; c < src.channels; c++) {
                double acc = 0.0;
                for (int dy = -radius; dy <= radius; dy++) {
                    const int yy = std::clamp(y + dy, 0, src.height - 1);
                    acc += tmp.at(yy, x, c);
                }
                out.at(y, x, c) = static_cast<float>(acc * inv);
            }
    return out;
}

double mean_abs_diff(const Image& a, const Image& b) {
    if (!a.same_extent(b)) throw ShapeError("mean_abs_diff", "images differ in extent");
    double acc = 0.0;
    for (size_t i = 0; i < a.pix.size(); i++) acc += std::abs(a.pix[i] - b.pix[i]);
    return a.pix.empty() ? 0.0 : acc / static_cast<double>(a.pix.size());
}

double mean_abs_diff_where(const Image& a, const Image& b, const Image& region, bool inside) {
    if (!a.same_extent(b) || region.width != a.width || region.height != a.height ||
        region.channels != 1)
        throw ShapeError("mean_abs_diff_where", "nonconforming extents");
    double acc = 0.0;
    int64_t n = 0;
    for (int y = 0; y < a.height; y++)
        for (int x = 0; x < a.width; x++) {
            const bool in = region.at(y, x, 0) >= 0.5f;
            if (in != inside) continue;
            for (int c = 0; c < a.channels; c++) acc += std::abs(a.at(y, x, c) - b.at(y, x, c));
            n += a.channels;
        }
    return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

}  // namespace foodfuse
