#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "image.hpp"
#include "png_io.hpp"
#include "random.hpp"

namespace rsdf {

struct synth_options {
    int width = 64;
    int height = 64;
    std::uint64_t seed = 7;
    double min_object_fraction = 0.04;  // per shape
    double max_salient_fraction = 0.5;  // union, exclusive
    double min_lab_distance = 25.0;     // each object's mean color vs the background's
};

/// One synthetic RGBD frame: textured far background plane, 1-3 nearer convex shapes, exact mask.
struct synth_sample {
    int width = 0;
    int height = 0;
    std::vector<rgb8> rgb;
    std::vector<std::uint16_t> depth;  // larger is farther
    std::vector<std::uint8_t> gt;      // 0/1
    int n_objects = 0;
};

namespace detail {

struct synth_shape {
    bool ellipse = true;
    double cx = 0, cy = 0, rx = 0, ry = 0, angle = 0;

    bool contains(double x, double y) const {
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double u = (c * (x - cx) + s * (y - cy)) / rx;
        const double v = (-s * (x - cx) + c * (y - cy)) / ry;
        return ellipse ? u * u + v * v <= 1.0 : std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
    }
};

inline std::uint8_t clamp_channel(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

inline lab_color mean_lab_of(const std::vector<rgb8>& rgb, const std::vector<std::uint8_t>& mask, std::uint8_t want) {
    double L = 0, a = 0, b = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < rgb.size(); ++i) {
        if (mask[i] != want) continue;
        const auto lab = srgb_to_lab(rgb[i][0], rgb[i][1], rgb[i][2]);
        L += lab.L;
        a += lab.a;
        b += lab.b;
        ++n;
    }
    if (n == 0) return {};
    return {L / n, a / n, b / n};
}

} // namespace detail

/// Deterministic in (options.seed, index). Geometry and colors are rejection-sampled until
/// every shape covers at least min_object_fraction, the union stays below
/// max_salient_fraction, and every object's mean Lab color is min_lab_distance from the background.
inline synth_sample generate_sample(const synth_options& opt, std::size_t index) {
    auto rng = make_rng(opt.seed, {static_cast<std::uint64_t>(index), 0x5eed});
    const int w = opt.width;
    const int h = opt.height;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    const double min_pixels = opt.min_object_fraction * static_cast<double>(n);

    synth_sample s;
    s.width = w;
    s.height = h;
    s.n_objects = 1 + static_cast<int>(uniform_index(rng, 3));

    // Geometry: per-shape masks, each at least min_pixels, union below the cap.
    std::vector<std::vector<std::uint8_t>> masks;
    for (;;) {
        masks.assign(static_cast<std::size_t>(s.n_objects), std::vector<std::uint8_t>(n, 0));
        std::vector<std::uint8_t> uni(n, 0);
        bool ok = true;
        for (auto& m : masks) {
            detail::synth_shape shape;
            shape.ellipse = bernoulli(rng, 0.5);
            shape.cx = uniform(rng, 0.2, 0.8) * w;
            shape.cy = uniform(rng, 0.2, 0.8) * h;
            shape.rx = uniform(rng, 0.1, 0.25) * w;
            shape.ry = uniform(rng, 0.1, 0.25) * h;
            shape.angle = uniform(rng, 0.0, 3.14159265358979323846);
            std::size_t count = 0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    if (shape.contains(x + 0.5, y + 0.5)) {
                        m[static_cast<std::size_t>(y) * w + x] = 1;
                        ++count;
                    }
            if (static_cast<double>(count) < min_pixels) ok = false;
        }
        std::size_t covered = 0;
        for (const auto& m : masks)
            for (std::size_t i = 0; i < n; ++i) uni[i] |= m[i];
        for (auto v : uni) covered += v;
        if (ok && static_cast<double>(covered) < opt.max_salient_fraction * static_cast<double>(n)) {
            s.gt = std::move(uni);
            break;
        }
    }
    // Later shapes are drawn on top; owner[i] is the visible shape + 1.
    std::vector<int> owner(n, 0);
    for (std::size_t k = 0; k < masks.size(); ++k)
        for (std::size_t i = 0; i < n; ++i)
            if (masks[k][i]) owner[i] = static_cast<int>(k) + 1;

    // Colors: textured background and flat-ish objects, resampled until distinct in Lab.
    for (;;) {
        const std::array<double, 3> bg = {uniform(rng, 40, 215), uniform(rng, 40, 215), uniform(rng, 40, 215)};
        std::vector<std::array<double, 3>> fg(masks.size());
        for (auto& c : fg) c = {uniform(rng, 0, 255), uniform(rng, 0, 255), uniform(rng, 0, 255)};
        s.rgb.assign(n, {0, 0, 0});
        for (std::size_t i = 0; i < n; ++i) {
            const auto& base = owner[i] == 0 ? bg : fg[static_cast<std::size_t>(owner[i] - 1)];
            const double amp = owner[i] == 0 ? 12.0 : 5.0;
            for (std::size_t c = 0; c < 3; ++c) s.rgb[i][c] = detail::clamp_channel(base[c] + uniform(rng, -amp, amp));
        }
        std::vector<std::uint8_t> is_bg(n);
        for (std::size_t i = 0; i < n; ++i) is_bg[i] = owner[i] == 0 ? 1 : 0;
        const lab_color bg_lab = detail::mean_lab_of(s.rgb, is_bg, 1);
        bool distinct = true;
        for (std::size_t k = 0; k < masks.size() && distinct; ++k) {
            std::vector<std::uint8_t> mine(n);
            std::size_t visible = 0;
            for (std::size_t i = 0; i < n; ++i) {
                mine[i] = owner[i] == static_cast<int>(k) + 1 ? 1 : 0;
                visible += mine[i];
            }
            if (visible == 0) continue;
            distinct = distance(detail::mean_lab_of(s.rgb, mine, 1), bg_lab) >= opt.min_lab_distance;
        }
        if (distinct) break;
    }

    // Depth: tilted far plane with sensor noise, objects at individual nearer depths.
    const double tilt = uniform(rng, -4000.0, 4000.0);
    std::vector<double> object_depth(masks.size());
    for (auto& d : object_depth) d = uniform(rng, 12000.0, 30000.0);
    s.depth.resize(n);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            double d;
            if (owner[i] == 0)
                d = 50000.0 + tilt * (static_cast<double>(y) / h - 0.5) + uniform(rng, -1500.0, 1500.0);
            else
                d = object_depth[static_cast<std::size_t>(owner[i] - 1)] + uniform(rng, -500.0, 500.0);
            s.depth[i] = static_cast<std::uint16_t>(std::lround(std::clamp(d, 0.0, 65535.0)));
        }
    return s;
}

inline std::string sample_name(std::size_t index) {
    std::ostringstream os;
    os << std::setw(4) << std::setfill('0') << index << ".png";
    return os.str();
}

/// Writes rgb/, depth/ (16-bit) and gt/ (0/255) under `root`.
inline void write_sample(const std::filesystem::path& root, const std::string& name, const synth_sample& s) {
    std::filesystem::create_directories(root / "rgb");
    std::filesystem::create_directories(root / "depth");
    std::filesystem::create_directories(root / "gt");
    write_rgb_png(root / "rgb" / name, s.width, s.height, s.rgb);
    write_png(root / "depth" / name, s.width, s.height, 1, 16, s.depth);
    std::vector<std::uint16_t> gt(s.gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = s.gt[i] ? 255 : 0;
    write_png(root / "gt" / name, s.width, s.height, 1, 8, gt);
}

/// In-memory image equivalent to writing the sample and loading it back.
inline rgbd_image to_rgbd(const synth_sample& s) {
    std::vector<double> depth(s.depth.begin(), s.depth.end());
    std::vector<double> gt(s.gt.begin(), s.gt.end());
    return make_rgbd(s.width, s.height, s.rgb, depth, std::span<const double>(gt));
}

} // namespace rsdf
