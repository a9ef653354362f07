#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace rsdf {

struct lab_color {
    double L = 0.0;
    double a = 0.0;
    double b = 0.0;

    friend bool operator==(const lab_color&, const lab_color&) = default;
};

inline double squared_distance(const lab_color& p, const lab_color& q) {
    const double dL = p.L - q.L;
    const double da = p.a - q.a;
    const double db = p.b - q.b;
    return dL * dL + da * da + db * db;
}

inline double distance(const lab_color& p, const lab_color& q) {
    return std::sqrt(squared_distance(p, q));
}

namespace detail {

inline double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    constexpr double delta3 = delta * delta * delta;
    return t > delta3 ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

// sRGB primaries to XYZ under D65.
inline constexpr double srgb_to_xyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};

} // namespace detail

/// sRGB -> linear RGB -> XYZ (D65) -> CIELAB for channel values in [0, 255].
/// The reference white is the XYZ image of sRGB white, so every gray maps to a = b = 0.
inline lab_color srgb_to_lab(double r, double g, double b) {
    const double lin[3] = {detail::srgb_to_linear(r / 255.0), detail::srgb_to_linear(g / 255.0),
                           detail::srgb_to_linear(b / 255.0)};
    double f[3];
    for (int row = 0; row < 3; ++row) {
        const auto& m = detail::srgb_to_xyz[row];
        const double white = m[0] + m[1] + m[2];
        f[row] = detail::lab_f((m[0] * lin[0] + m[1] * lin[1] + m[2] * lin[2]) / white);
    }
    return {116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])};
}

inline lab_color srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    return srgb_to_lab(static_cast<double>(r), static_cast<double>(g), static_cast<double>(b));
}

/// Per-pixel scalar image, row-major.
struct gray_map {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    gray_map() = default;
    gray_map(int w, int h, double fill = 0.0)
        : width(w), height(h), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

    std::size_t size() const { return values.size(); }
    double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

using rgb8 = std::array<std::uint8_t, 3>;

/// Aligned color + depth frame. `rgb` keeps the source colors so augmentation can
/// re-derive `lab`; depth is normalized to [0,1]; `gt` holds exact 0/1 values.
struct rgbd_image {
    int width = 0;
    int height = 0;
    std::vector<rgb8> rgb;
    std::vector<lab_color> lab;
    std::vector<double> depth;
    std::optional<std::vector<std::uint8_t>> gt;

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

/// Per-image min-max scaling to [0,1]; a constant map becomes all zeros.
inline std::vector<double> normalize_depth(std::span<const double> raw) {
    std::vector<double> out(raw.size(), 0.0);
    if (raw.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - lo) / range;
    return out;
}

/// 1 where the raw value reaches half the mask's maximum; an all-zero mask stays empty.
inline std::vector<std::uint8_t> binarize_mask(std::span<const double> raw) {
    std::vector<std::uint8_t> out(raw.size(), 0);
    if (raw.empty()) return out;
    const double hi = *std::max_element(raw.begin(), raw.end());
    if (!(hi > 0.0)) return out;
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = 2.0 * raw[i] >= hi ? 1 : 0;
    return out;
}

inline void recompute_lab(rgbd_image& img) {
    img.lab.resize(img.rgb.size());
    for (std::size_t i = 0; i < img.rgb.size(); ++i) {
        const auto& p = img.rgb[i];
        img.lab[i] = srgb_to_lab(p[0], p[1], p[2]);
    }
}

/// Assemble an image from raw buffers: converts color to Lab, min-max normalizes depth,
/// binarizes the mask.
inline rgbd_image make_rgbd(int width, int height, std::vector<rgb8> rgb, std::span<const double> raw_depth,
                            std::optional<std::span<const double>> raw_gt = std::nullopt) {
    if (width <= 0 || height <= 0) throw degenerate_input_error("image has no pixels");
    const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (rgb.size() != n || raw_depth.size() != n)
        throw alignment_error("color and depth buffers do not match " + std::to_string(width) + "x" +
                              std::to_string(height));
    if (raw_gt && raw_gt->size() != n) throw alignment_error("ground-truth mask does not match image size");

    rgbd_image img;
    img.width = width;
    img.height = height;
    img.rgb = std::move(rgb);
    recompute_lab(img);
    img.depth = normalize_depth(raw_depth);
    if (raw_gt) img.gt = binarize_mask(*raw_gt);
    return img;
}

/// Throws when the structural invariants of an rgbd_image are violated.
inline void validate(const rgbd_image& img) {
    const std::size_t n = img.pixel_count();
    if (img.width <= 0 || img.height <= 0) throw degenerate_input_error("image has no pixels");
    if (img.rgb.size() != n || img.lab.size() != n || img.depth.size() != n)
        throw alignment_error("image planes disagree on pixel count");
    if (img.gt && img.gt->size() != n) throw alignment_error("ground-truth plane disagrees on pixel count");
    for (double d : img.depth)
        if (!(d >= 0.0 && d <= 1.0)) throw format_error("depth outside [0,1]");
    if (img.gt)
        for (auto v : *img.gt)
            if (v > 1) throw format_error("ground truth is not binary");
}

inline gray_map gt_as_map(const rgbd_image& img) {
    if (!img.gt) throw config_error("image carries no ground truth");
    gray_map m(img.width, img.height);
    for (std::size_t i = 0; i < m.size(); ++i) m.values[i] = (*img.gt)[i];
    return m;
}

} // namespace rsdf
