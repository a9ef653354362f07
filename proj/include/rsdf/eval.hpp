#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "image.hpp"

namespace rsdf {

inline constexpr double default_beta2 = 0.3;
inline constexpr int pr_thresholds = 256;

/// F_beta = (1 + b2) P R / (b2 P + R); 0 when the denominator vanishes.
inline double f_beta(double precision, double recall, double beta2 = default_beta2) {
    const double den = beta2 * precision + recall;
    return den > 0.0 ? (1.0 + beta2) * precision * recall / den : 0.0;
}

struct confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    /// An empty prediction is perfectly precise only when the mask is empty too.
    double precision() const {
        if (tp + fp == 0) return fn == 0 ? 1.0 : 0.0;
        return static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    /// An empty mask has nothing to miss.
    double recall() const {
        if (tp + fn == 0) return 1.0;
        return static_cast<double>(tp) / static_cast<double>(tp + fn);
    }
};

namespace detail {

inline void check_pair(const gray_map& map, const gray_map& gt) {
    if (map.width != gt.width || map.height != gt.height || map.size() != gt.size())
        throw alignment_error("saliency map " + std::to_string(map.width) + "x" + std::to_string(map.height) +
                              " does not match mask " + std::to_string(gt.width) + "x" + std::to_string(gt.height));
}

inline void check_lists(std::span<const gray_map> maps, std::span<const gray_map> gts) {
    if (maps.size() != gts.size())
        throw alignment_error(std::to_string(maps.size()) + " maps but " + std::to_string(gts.size()) + " masks");
    for (std::size_t i = 0; i < maps.size(); ++i) check_pair(maps[i], gts[i]);
}

} // namespace detail

/// Pixels with value >= threshold count as predicted salient; mask pixels >= 0.5 as salient.
inline confusion confusion_at(const gray_map& map, const gray_map& gt, double threshold) {
    detail::check_pair(map, gt);
    confusion c;
    for (std::size_t i = 0; i < map.size(); ++i) {
        const bool pred = map.values[i] >= threshold;
        const bool truth = gt.values[i] >= 0.5;
        c.tp += pred && truth;
        c.fp += pred && !truth;
        c.fn += !pred && truth;
    }
    return c;
}

struct pr_point {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

using pr_curve_t = std::array<pr_point, pr_thresholds>;

/// Per-image precision and recall at thresholds k/255, averaged over images.
inline pr_curve_t pr_curve(std::span<const gray_map> maps, std::span<const gray_map> gts) {
    detail::check_lists(maps, gts);
    pr_curve_t curve{};
    for (int k = 0; k < pr_thresholds; ++k) curve[static_cast<std::size_t>(k)].threshold = k / 255.0;
    if (maps.empty()) return curve;

    for (std::size_t img = 0; img < maps.size(); ++img) {
        // Histogram each image once: predicted-positive counts at threshold k are suffix sums.
        std::array<std::size_t, pr_thresholds + 1> pos{};
        std::array<std::size_t, pr_thresholds + 1> neg{};
        std::size_t gt_pos = 0;
        for (std::size_t i = 0; i < maps[img].size(); ++i) {
            const double v = maps[img].values[i];
            // Largest k with v >= k/255, or -1 for negative values; the loops undo rounding in floor.
            int k = static_cast<int>(std::floor(v * 255.0));
            k = std::clamp(k, -1, pr_thresholds - 1);
            while (k + 1 < pr_thresholds && v >= (k + 1) / 255.0) ++k;
            while (k >= 0 && v < k / 255.0) --k;
            const bool truth = gts[img].values[i] >= 0.5;
            gt_pos += truth;
            if (k < 0) continue;
            (truth ? pos : neg)[static_cast<std::size_t>(k)] += 1;
        }
        std::size_t tp = 0;
        std::size_t fp = 0;
        for (int k = pr_thresholds - 1; k >= 0; --k) {
            tp += pos[static_cast<std::size_t>(k)];
            fp += neg[static_cast<std::size_t>(k)];
            const confusion c{tp, fp, gt_pos - tp};
            curve[static_cast<std::size_t>(k)].precision += c.precision();
            curve[static_cast<std::size_t>(k)].recall += c.recall();
        }
    }
    for (auto& p : curve) {
        p.precision /= static_cast<double>(maps.size());
        p.recall /= static_cast<double>(maps.size());
    }
    return curve;
}

struct f_measure_result {
    double f_measure = 0.0;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    std::size_t n_images = 0;
};

/// Adaptive threshold min(2 mean(map), 1).
inline double adaptive_threshold(const gray_map& map) {
    double sum = 0.0;
    for (double v : map.values) sum += v;
    const double mean = map.size() > 0 ? sum / static_cast<double>(map.size()) : 0.0;
    return std::min(2.0 * mean, 1.0);
}

/// Mean over images of F_beta at each image's adaptive threshold.
inline f_measure_result f_measure(std::span<const gray_map> maps, std::span<const gray_map> gts,
                                  double beta2 = default_beta2) {
    detail::check_lists(maps, gts);
    f_measure_result r;
    r.n_images = maps.size();
    if (maps.empty()) return r;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const confusion c = confusion_at(maps[i], gts[i], adaptive_threshold(maps[i]));
        const double p = c.precision();
        const double rc = c.recall();
        r.mean_precision += p;
        r.mean_recall += rc;
        r.f_measure += f_beta(p, rc, beta2);
    }
    const auto n = static_cast<double>(maps.size());
    r.f_measure /= n;
    r.mean_precision /= n;
    r.mean_recall /= n;
    return r;
}

inline void write_curve_csv(std::ostream& os, const pr_curve_t& curve) {
    os << "threshold,precision,recall\n" << std::setprecision(10);
    for (const auto& p : curve) os << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
}

inline void write_summary_csv(std::ostream& os, const std::string& dataset, const f_measure_result& r) {
    os << "dataset,n_images,f_measure,mean_precision,mean_recall\n" << std::setprecision(10);
    os << dataset << ',' << r.n_images << ',' << r.f_measure << ',' << r.mean_precision << ',' << r.mean_recall << '\n';
}

} // namespace rsdf
