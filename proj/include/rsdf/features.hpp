#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "image.hpp"
#include "superpixel.hpp"

namespace rsdf {

inline constexpr int patch_side = 32;
inline constexpr int patch_channels = 6;
inline constexpr std::size_t patch_plane = static_cast<std::size_t>(patch_side) * patch_side;
inline constexpr std::size_t patch_size = patch_plane * patch_channels;

struct feature_params {
    int n_slots = 1024;       // N, fixed by the 32x32 packing
    int n_background = 160;   // N_b
    double sigma_local = 0.15;
    double sigma_global = 0.45;
    double delta_c = 20.0;    // color similarity bandwidth of the compactness cue, Lab units
};

enum class cue { color, depth };
enum class spatial_scope { local, global };

namespace detail {

inline double cue_distance(const region_stats& st, std::size_t i, std::size_t j, cue c) {
    return c == cue::color ? distance(st.mean_lab[i], st.mean_lab[j]) : std::abs(st.mean_depth[i] - st.mean_depth[j]);
}

inline double spatial_weight(const region_stats& st, std::size_t i, std::size_t j, double sigma) {
    const double dx = st.centroid[i][0] - st.centroid[j][0];
    const double dy = st.centroid[i][1] - st.centroid[j][1];
    return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

inline void check_region(const region_stats& st, int i) {
    if (i < 0 || static_cast<std::size_t>(i) >= st.size())
        throw index_error("region " + std::to_string(i) + " out of range [0, " + std::to_string(st.size()) + ")");
}

inline void check_slots(const region_stats& st, const feature_params& p) {
    if (st.size() > static_cast<std::size_t>(p.n_slots))
        throw shape_error(std::to_string(st.size()) + " regions exceed the " + std::to_string(p.n_slots) +
                          " feature slots");
}

} // namespace detail

/// Spatially weighted color or depth contrast of region i against every region j:
/// t(j) * exp(-|x_i - x_j|^2 / 2 sigma^2) * dist(i, j), zero padded to n_slots.
inline std::vector<double> contrast_vector(int i, const region_stats& st, cue c, spatial_scope scope,
                                           const feature_params& p = {}) {
    detail::check_region(st, i);
    detail::check_slots(st, p);
    const double sigma = scope == spatial_scope::local ? p.sigma_local : p.sigma_global;
    std::vector<double> out(static_cast<std::size_t>(p.n_slots), 0.0);
    const auto ii = static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < st.size(); ++j) {
        if (j == ii) continue;
        out[j] = st.weight[j] * detail::spatial_weight(st, ii, j, sigma) * detail::cue_distance(st, ii, j, c);
    }
    return out;
}

/// Color compactness: spread of regions of similar color around their color-weighted mean position.
inline std::vector<double> compactness_vector(int i, const region_stats& st, const feature_params& p = {}) {
    detail::check_region(st, i);
    detail::check_slots(st, p);
    const auto ii = static_cast<std::size_t>(i);
    const double denom = 2.0 * p.delta_c * p.delta_c;
    std::vector<double> similarity(st.size());
    double total = 0.0;
    // Mean position as an offset from region i, which usually dominates it; subtracting two nearly
    // equal absolute positions would lose most of the digits of i's own spread.
    const double xi = st.centroid[ii][0];
    const double yi = st.centroid[ii][1];
    double ox = 0.0;
    double oy = 0.0;
    for (std::size_t j = 0; j < st.size(); ++j) {
        similarity[j] = std::exp(-squared_distance(st.mean_lab[ii], st.mean_lab[j]) / denom);
        total += similarity[j];
        ox += similarity[j] * (st.centroid[j][0] - xi);
        oy += similarity[j] * (st.centroid[j][1] - yi);
    }
    // similarity[i] == 1, so total >= 1.
    ox /= total;
    oy /= total;
    std::vector<double> out(static_cast<std::size_t>(p.n_slots), 0.0);
    for (std::size_t j = 0; j < st.size(); ++j)
        out[j] = similarity[j] * std::hypot((st.centroid[j][0] - xi) - ox, (st.centroid[j][1] - yi) - oy);
    return out;
}

/// Global-scope contrast against the pseudo-background list, zero padded to n_background.
inline std::vector<double> background_vector(int i, const region_stats& st, std::span<const int> background, cue c,
                                             const feature_params& p = {}) {
    detail::check_region(st, i);
    std::vector<double> out(static_cast<std::size_t>(p.n_background), 0.0);
    const auto ii = static_cast<std::size_t>(i);
    const std::size_t count = std::min(background.size(), out.size());
    for (std::size_t k = 0; k < count; ++k) {
        const auto b = static_cast<std::size_t>(background[k]);
        if (b >= st.size()) throw index_error("background region out of range");
        if (b == ii) continue;
        out[k] = st.weight[b] * detail::spatial_weight(st, ii, b, p.sigma_global) * detail::cue_distance(st, ii, b, c);
    }
    return out;
}

/// The seven hand-designed vectors of one region.
struct feature_set {
    std::vector<double> color_local;
    std::vector<double> color_global;
    std::vector<double> depth_local;
    std::vector<double> depth_global;
    std::vector<double> color_compactness;
    std::vector<double> color_background;
    std::vector<double> depth_background;
};

inline feature_set compute_feature_set(int i, const region_stats& st, std::span<const int> background,
                                       const feature_params& p = {}) {
    return {contrast_vector(i, st, cue::color, spatial_scope::local, p),
            contrast_vector(i, st, cue::color, spatial_scope::global, p),
            contrast_vector(i, st, cue::depth, spatial_scope::local, p),
            contrast_vector(i, st, cue::depth, spatial_scope::global, p),
            compactness_vector(i, st, p),
            background_vector(i, st, background, cue::color, p),
            background_vector(i, st, background, cue::depth, p)};
}

/// Unscaled 6x32x32 layout, channel-major (channel, row, column).
using raw_patch = std::vector<double>;

/// Channels 0-4 hold the five N-length vectors reshaped row-major; channel 5 holds the two
/// background vectors, each zero padded to N/2 and concatenated. Requires N = 1024.
inline raw_patch pack_raw(const feature_set& fs, int n_background = 160) {
    const std::array<const std::vector<double>*, 5> full = {&fs.color_local, &fs.color_global, &fs.depth_local,
                                                            &fs.depth_global, &fs.color_compactness};
    for (const auto* v : full)
        if (v->size() != patch_plane)
            throw shape_error("feature vector has length " + std::to_string(v->size()) + ", expected " +
                              std::to_string(patch_plane));
    const std::size_t half = patch_plane / 2;
    if (n_background < 0 || static_cast<std::size_t>(n_background) > half ||
        fs.color_background.size() != static_cast<std::size_t>(n_background) ||
        fs.depth_background.size() != static_cast<std::size_t>(n_background))
        throw shape_error("background vectors must both have length " + std::to_string(n_background) + " <= " +
                          std::to_string(half));

    raw_patch out(patch_size, 0.0);
    for (std::size_t c = 0; c < full.size(); ++c) std::copy(full[c]->begin(), full[c]->end(), out.begin() + c * patch_plane);
    const auto bg = out.begin() + 5 * patch_plane;
    std::copy(fs.color_background.begin(), fs.color_background.end(), bg);
    std::copy(fs.depth_background.begin(), fs.depth_background.end(), bg + half);
    return out;
}

/// Inverse of pack_raw on the populated slots.
inline feature_set unpack(const raw_patch& raw, int n_background = 160) {
    if (raw.size() != patch_size) throw shape_error("raw patch must hold 6144 values");
    feature_set fs;
    std::array<std::vector<double>*, 5> full = {&fs.color_local, &fs.color_global, &fs.depth_local, &fs.depth_global,
                                                &fs.color_compactness};
    for (std::size_t c = 0; c < full.size(); ++c)
        full[c]->assign(raw.begin() + c * patch_plane, raw.begin() + (c + 1) * patch_plane);
    const auto bg = raw.begin() + 5 * patch_plane;
    fs.color_background.assign(bg, bg + n_background);
    fs.depth_background.assign(bg + patch_plane / 2, bg + patch_plane / 2 + n_background);
    return fs;
}

/// Network input for one superpixel: every channel min-max scaled to [0,1].
struct feature_patch {
    std::array<float, patch_size> data{};  // channel-major
    int region = -1;
    std::optional<int> label;  // 1 salient, 0 non-salient

    float at(int channel, int row, int col) const {
        return data[static_cast<std::size_t>(channel) * patch_plane + static_cast<std::size_t>(row) * patch_side + col];
    }
};

/// Per-channel min-max scaling; a constant channel becomes all zeros.
inline feature_patch scale_patch(const raw_patch& raw) {
    if (raw.size() != patch_size) throw shape_error("raw patch must hold 6144 values");
    feature_patch out;
    for (std::size_t c = 0; c < patch_channels; ++c) {
        const auto first = raw.begin() + static_cast<std::ptrdiff_t>(c * patch_plane);
        const auto last = first + static_cast<std::ptrdiff_t>(patch_plane);
        const auto [lo, hi] = std::minmax_element(first, last);
        const double range = *hi - *lo;
        for (std::size_t k = 0; k < patch_plane; ++k) {
            const double v = range > 0.0 ? (raw[c * patch_plane + k] - *lo) / range : 0.0;
            out.data[c * patch_plane + k] = static_cast<float>(v);
        }
    }
    return out;
}

inline feature_patch pack_patch(const feature_set& fs, int n_background = 160) {
    return scale_patch(pack_raw(fs, n_background));
}

/// Majority rule: salient when more than half of the region's pixels are ground-truth salient.
inline std::vector<int> region_labels(const segmentation& seg, const std::vector<std::uint8_t>& gt) {
    if (gt.size() != seg.labels.size()) throw alignment_error("ground truth does not match segmentation");
    std::vector<std::size_t> salient(static_cast<std::size_t>(seg.n_actual), 0);
    std::vector<std::size_t> total(static_cast<std::size_t>(seg.n_actual), 0);
    for (std::size_t p = 0; p < gt.size(); ++p) {
        const auto r = static_cast<std::size_t>(seg.labels[p]);
        salient[r] += gt[p];
        ++total[r];
    }
    std::vector<int> out(salient.size());
    for (std::size_t r = 0; r < out.size(); ++r) out[r] = 2 * salient[r] > total[r] ? 1 : 0;
    return out;
}

/// Patches for the listed regions (all regions when `regions` is empty), labeled when the
/// image carries ground truth.
inline std::vector<feature_patch> extract_patches(const rgbd_image& img, const segmentation& seg,
                                                  const region_stats& st, const feature_params& p = {},
                                                  std::span<const int> regions = {}) {
    if (p.n_slots != static_cast<int>(patch_plane))
        throw config_error("patch packing requires exactly " + std::to_string(patch_plane) + " feature slots");
    detail::check_slots(st, p);
    const auto bg = boundary_regions(seg, p.n_background);
    std::optional<std::vector<int>> labels;
    if (img.gt) labels = region_labels(seg, *img.gt);

    std::vector<int> all;
    if (regions.empty()) {
        all.resize(st.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
        regions = all;
    }
    std::vector<feature_patch> out;
    out.reserve(regions.size());
    for (int r : regions) {
        auto patch = pack_patch(compute_feature_set(r, st, bg.regions, p), p.n_background);
        patch.region = r;
        if (labels) patch.label = (*labels)[static_cast<std::size_t>(r)];
        out.push_back(patch);
    }
    return out;
}

inline std::vector<feature_patch> extract_all(const rgbd_image& img, const segmentation& seg, const region_stats& st,
                                              const feature_params& p = {}) {
    return extract_patches(img, seg, st, p);
}

/// One binary record: region id (u32 LE), 6144 f32 LE values in 32x32x6 row-major
/// (row, column, channel) order, then a label byte (0, 1, or 255 for unlabeled).
inline std::vector<std::uint8_t> encode_feature_record(const feature_patch& patch) {
    std::vector<std::uint8_t> out;
    out.reserve(4 + 4 * patch_size + 1);
    const auto put32 = [&](std::uint32_t v) {
        for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
    };
    put32(static_cast<std::uint32_t>(patch.region));
    for (int row = 0; row < patch_side; ++row)
        for (int col = 0; col < patch_side; ++col)
            for (int c = 0; c < patch_channels; ++c) put32(std::bit_cast<std::uint32_t>(patch.at(c, row, col)));
    out.push_back(patch.label ? static_cast<std::uint8_t>(*patch.label) : std::uint8_t{255});
    return out;
}

} // namespace rsdf
