#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <string>
#include <vector>

#include "error.hpp"
#include "image.hpp"

namespace rsdf {

/// Per-pixel region labels in [0, n_actual).
struct segmentation {
    int width = 0;
    int height = 0;
    std::vector<int> labels;
    int n_actual = 0;

    std::size_t pixel_count() const { return labels.size(); }
    int at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

struct slic_params {
    int n_target = 1024;
    double compactness = 10.0;
    int iterations = 10;
};

namespace detail {

struct slic_center {
    lab_color color;
    double x = 0.0;
    double y = 0.0;
};

struct seed_grid {
    int nx = 1;
    int ny = 1;
};

// nx * ny <= n_target, cells as square as the aspect ratio permits.
inline seed_grid make_seed_grid(int width, int height, int n_target) {
    seed_grid g;
    const double ideal = std::sqrt(static_cast<double>(n_target) * width / height);
    g.nx = std::clamp(static_cast<int>(std::lround(ideal)), 1, std::min(width, n_target));
    g.ny = std::clamp(n_target / g.nx, 1, height);
    return g;
}

// Union-find over connected components with size tracking.
class component_forest {
public:
    explicit component_forest(const std::vector<std::size_t>& sizes) : parent_(sizes.size()), size_(sizes) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }

    std::size_t find(std::size_t c) {
        while (parent_[c] != c) {
            parent_[c] = parent_[parent_[c]];
            c = parent_[c];
        }
        return c;
    }

    std::size_t size(std::size_t root) const { return size_[root]; }

    void merge_into(std::size_t from_root, std::size_t to_root) {
        parent_[from_root] = to_root;
        size_[to_root] += size_[from_root];
    }

private:
    std::vector<std::size_t> parent_;
    std::vector<std::size_t> size_;
};

// 4-connected components of equal labels; returns per-pixel component id and the pixel lists.
inline std::vector<std::vector<std::size_t>> label_components(int width, int height, const std::vector<int>& labels,
                                                              std::vector<std::size_t>& component_of) {
    const std::size_t n = labels.size();
    constexpr std::size_t unset = std::numeric_limits<std::size_t>::max();
    component_of.assign(n, unset);
    std::vector<std::vector<std::size_t>> components;
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < n; ++start) {
        if (component_of[start] != unset) continue;
        const std::size_t id = components.size();
        components.emplace_back();
        auto& pixels = components.back();
        component_of[start] = id;
        stack.assign(1, start);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            pixels.push_back(p);
            const int x = static_cast<int>(p % width);
            const int y = static_cast<int>(p / width);
            const auto visit = [&](int qx, int qy) {
                if (qx < 0 || qy < 0 || qx >= width || qy >= height) return;
                const std::size_t q = static_cast<std::size_t>(qy) * width + qx;
                if (component_of[q] == unset && labels[q] == labels[p]) {
                    component_of[q] = id;
                    stack.push_back(q);
                }
            };
            visit(x - 1, y);
            visit(x + 1, y);
            visit(x, y - 1);
            visit(x, y + 1);
        }
    }
    return components;
}

// Keeps the largest fragment of every cluster and folds every other fragment (and every
// fragment below `min_size`) into its largest adjacent region. Labels are then compacted in
// raster order of first appearance.
inline segmentation enforce_connectivity(int width, int height, const std::vector<int>& raw_labels, int n_clusters,
                                         std::size_t min_size) {
    std::vector<std::size_t> component_of;
    const auto components = label_components(width, height, raw_labels, component_of);
    const std::size_t n_comp = components.size();

    std::vector<std::size_t> sizes(n_comp);
    for (std::size_t c = 0; c < n_comp; ++c) sizes[c] = components[c].size();

    std::vector<std::size_t> largest(static_cast<std::size_t>(n_clusters), std::numeric_limits<std::size_t>::max());
    for (std::size_t c = 0; c < n_comp; ++c) {
        const auto label = static_cast<std::size_t>(raw_labels[components[c][0]]);
        if (largest[label] == std::numeric_limits<std::size_t>::max() || sizes[c] > sizes[largest[label]])
            largest[label] = c;
    }

    std::vector<std::size_t> orphans;
    for (std::size_t c = 0; c < n_comp; ++c) {
        const auto label = static_cast<std::size_t>(raw_labels[components[c][0]]);
        if (largest[label] != c || sizes[c] < min_size) orphans.push_back(c);
    }
    std::stable_sort(orphans.begin(), orphans.end(),
                     [&](std::size_t a, std::size_t b) { return sizes[a] < sizes[b]; });

    component_forest forest(sizes);
    for (std::size_t orphan : orphans) {
        const std::size_t own = forest.find(orphan);
        std::size_t best = own;
        for (std::size_t p : components[orphan]) {
            const int x = static_cast<int>(p % width);
            const int y = static_cast<int>(p / width);
            const int nbr[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
            for (const auto& q : nbr) {
                if (q[0] < 0 || q[1] < 0 || q[0] >= width || q[1] >= height) continue;
                const std::size_t root = forest.find(component_of[static_cast<std::size_t>(q[1]) * width + q[0]]);
                if (root == own) continue;
                if (best == own || forest.size(root) > forest.size(best) ||
                    (forest.size(root) == forest.size(best) && root < best))
                    best = root;
            }
        }
        if (best != own) forest.merge_into(own, best);
    }

    segmentation seg;
    seg.width = width;
    seg.height = height;
    seg.labels.assign(raw_labels.size(), -1);
    std::vector<int> compact(n_comp, -1);
    int next = 0;
    for (std::size_t p = 0; p < raw_labels.size(); ++p) {
        const std::size_t root = forest.find(component_of[p]);
        if (compact[root] < 0) compact[root] = next++;
        seg.labels[p] = compact[root];
    }
    seg.n_actual = next;
    return seg;
}

} // namespace detail

/// SLIC clustering in (L, a, b, x, y) with seeds on a regular grid, followed by a
/// connectivity pass. The result has at most n_target regions.
inline segmentation slic_segment(const rgbd_image& img, int n_target, double compactness = 10.0, int iterations = 10) {
    if (n_target < 1) throw config_error("superpixel count must be positive");
    if (!(compactness > 0.0)) throw config_error("SLIC compactness must be positive");
    const int width = img.width;
    const int height = img.height;
    const std::size_t n_pixels = img.pixel_count();
    if (n_pixels == 0) throw degenerate_input_error("cannot segment an empty image");
    if (img.lab.size() != n_pixels) throw alignment_error("Lab plane does not match image size");

    const int n_clamped = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(n_target), n_pixels));
    const double step = std::sqrt(static_cast<double>(n_pixels) / n_clamped);
    if (step > std::min(width, height) + 1e-9)
        throw degenerate_input_error("image " + std::to_string(width) + "x" + std::to_string(height) +
                                     " is smaller than the superpixel grid step " + std::to_string(step));

    const auto grid = detail::make_seed_grid(width, height, n_clamped);
    const double cell_w = static_cast<double>(width) / grid.nx;
    const double cell_h = static_cast<double>(height) / grid.ny;
    const double s = std::sqrt(cell_w * cell_h);
    const int window = static_cast<int>(std::ceil(std::max(cell_w, cell_h)));
    const double spatial_scale = (compactness * compactness) / (s * s);

    std::vector<detail::slic_center> centers;
    centers.reserve(static_cast<std::size_t>(grid.nx) * grid.ny);
    for (int iy = 0; iy < grid.ny; ++iy) {
        for (int ix = 0; ix < grid.nx; ++ix) {
            const double cx = (ix + 0.5) * cell_w - 0.5;
            const double cy = (iy + 0.5) * cell_h - 0.5;
            const int px = std::clamp(static_cast<int>(std::lround(cx)), 0, width - 1);
            const int py = std::clamp(static_cast<int>(std::lround(cy)), 0, height - 1);
            centers.push_back({img.lab[img.index(px, py)], cx, cy});
        }
    }
    const int k = static_cast<int>(centers.size());

    std::vector<int> labels(n_pixels, -1);
    std::vector<double> best(n_pixels);
    const auto dist = [&](const detail::slic_center& c, std::size_t p, int x, int y) {
        const double dx = x - c.x;
        const double dy = y - c.y;
        return squared_distance(img.lab[p], c.color) + (dx * dx + dy * dy) * spatial_scale;
    };

    for (int iter = 0; iter < iterations; ++iter) {
        std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
        std::fill(labels.begin(), labels.end(), -1);
        for (int c = 0; c < k; ++c) {
            const auto& center = centers[static_cast<std::size_t>(c)];
            const int x0 = std::max(0, static_cast<int>(std::floor(center.x)) - window);
            const int x1 = std::min(width - 1, static_cast<int>(std::ceil(center.x)) + window);
            const int y0 = std::max(0, static_cast<int>(std::floor(center.y)) - window);
            const int y1 = std::min(height - 1, static_cast<int>(std::ceil(center.y)) + window);
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    const std::size_t p = img.index(x, y);
                    const double d = dist(center, p, x, y);
                    if (d < best[p]) {
                        best[p] = d;
                        labels[p] = c;
                    }
                }
            }
        }
        // Centers drift; any pixel outside every window goes to its globally nearest center.
        for (std::size_t p = 0; p < n_pixels; ++p) {
            if (labels[p] >= 0) continue;
            const int x = static_cast<int>(p % width);
            const int y = static_cast<int>(p / width);
            for (int c = 0; c < k; ++c) {
                const double d = dist(centers[static_cast<std::size_t>(c)], p, x, y);
                if (d < best[p]) {
                    best[p] = d;
                    labels[p] = c;
                }
            }
        }

        std::vector<std::array<double, 5>> sums(static_cast<std::size_t>(k), {0, 0, 0, 0, 0});
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t p = 0; p < n_pixels; ++p) {
            auto& acc = sums[static_cast<std::size_t>(labels[p])];
            acc[0] += img.lab[p].L;
            acc[1] += img.lab[p].a;
            acc[2] += img.lab[p].b;
            acc[3] += static_cast<double>(p % width);
            acc[4] += static_cast<double>(p / width);
            ++counts[static_cast<std::size_t>(labels[p])];
        }
        for (int c = 0; c < k; ++c) {
            const auto cnt = counts[static_cast<std::size_t>(c)];
            if (cnt == 0) continue;
            const auto& acc = sums[static_cast<std::size_t>(c)];
            const double inv = 1.0 / static_cast<double>(cnt);
            centers[static_cast<std::size_t>(c)] = {{acc[0] * inv, acc[1] * inv, acc[2] * inv}, acc[3] * inv, acc[4] * inv};
        }
    }
    if (iterations <= 0) {
        for (std::size_t p = 0; p < n_pixels; ++p) {
            const int ix = std::min(grid.nx - 1, static_cast<int>((p % width) / cell_w));
            const int iy = std::min(grid.ny - 1, static_cast<int>((p / width) / cell_h));
            labels[p] = iy * grid.nx + ix;
        }
    }

    const auto min_size = static_cast<std::size_t>(std::max(1.0, std::floor(s * s / 4.0)));
    return detail::enforce_connectivity(width, height, labels, k, min_size);
}

/// Checks the partition contract: labels in range, every label used, every region 4-connected.
inline bool is_valid_partition(const segmentation& seg) {
    if (seg.labels.size() != static_cast<std::size_t>(seg.width) * seg.height || seg.n_actual <= 0) return false;
    std::vector<std::size_t> used(static_cast<std::size_t>(seg.n_actual), 0);
    for (int l : seg.labels) {
        if (l < 0 || l >= seg.n_actual) return false;
        ++used[static_cast<std::size_t>(l)];
    }
    if (std::find(used.begin(), used.end(), std::size_t{0}) != used.end()) return false;
    std::vector<std::size_t> component_of;
    const auto components = detail::label_components(seg.width, seg.height, seg.labels, component_of);
    return components.size() == static_cast<std::size_t>(seg.n_actual);
}

/// Per-region means. Centroids use pixel centers normalized by width/height; weights are
/// pixel counts over the image total.
struct region_stats {
    std::vector<lab_color> mean_lab;
    std::vector<double> mean_depth;
    std::vector<std::array<double, 2>> centroid;
    std::vector<double> weight;
    std::vector<std::size_t> pixel_count;

    std::size_t size() const { return weight.size(); }
};

inline region_stats compute_region_stats(const segmentation& seg, const rgbd_image& img) {
    if (seg.width != img.width || seg.height != img.height || seg.labels.size() != img.pixel_count())
        throw alignment_error("segmentation and image dimensions differ");
    const auto n = static_cast<std::size_t>(seg.n_actual);
    std::vector<std::array<double, 6>> sums(n, {0, 0, 0, 0, 0, 0});
    region_stats st;
    st.pixel_count.assign(n, 0);
    for (std::size_t p = 0; p < seg.labels.size(); ++p) {
        const auto r = static_cast<std::size_t>(seg.labels[p]);
        auto& acc = sums[r];
        acc[0] += img.lab[p].L;
        acc[1] += img.lab[p].a;
        acc[2] += img.lab[p].b;
        acc[3] += img.depth[p];
        acc[4] += static_cast<double>(p % seg.width) + 0.5;
        acc[5] += static_cast<double>(p / seg.width) + 0.5;
        ++st.pixel_count[r];
    }
    const auto total = static_cast<double>(seg.labels.size());
    st.mean_lab.resize(n);
    st.mean_depth.resize(n);
    st.centroid.resize(n);
    st.weight.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        const auto cnt = static_cast<double>(st.pixel_count[r]);
        const auto& acc = sums[r];
        st.mean_lab[r] = {acc[0] / cnt, acc[1] / cnt, acc[2] / cnt};
        st.mean_depth[r] = acc[3] / cnt;
        st.centroid[r] = {acc[4] / cnt / seg.width, acc[5] / cnt / seg.height};
        st.weight[r] = cnt / total;
    }
    return st;
}

using neighbor_sets = std::vector<std::vector<int>>;

/// Regions sharing a 4-neighbor pixel pair. Sorted, symmetric, no self loops.
inline neighbor_sets adjacency(const segmentation& seg) {
    neighbor_sets adj(static_cast<std::size_t>(seg.n_actual));
    const auto link = [&](int a, int b) {
        if (a == b) return;
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
    };
    for (int y = 0; y < seg.height; ++y) {
        for (int x = 0; x < seg.width; ++x) {
            if (x + 1 < seg.width) link(seg.at(x, y), seg.at(x + 1, y));
            if (y + 1 < seg.height) link(seg.at(x, y), seg.at(x, y + 1));
        }
    }
    for (auto& list : adj) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    return adj;
}

struct boundary_selection {
    std::vector<int> regions;  // clockwise from the top-left corner, by first border contact
    std::size_t touching = 0;  // regions touching the border before truncation
};

namespace detail {

// Border pixels walked clockwise from (0,0), each visited once.
inline std::vector<std::size_t> clockwise_border(int width, int height) {
    std::vector<std::size_t> out;
    const auto push = [&](int x, int y) { out.push_back(static_cast<std::size_t>(y) * width + x); };
    for (int x = 0; x < width; ++x) push(x, 0);
    for (int y = 1; y < height; ++y) push(width - 1, y);
    if (height > 1)
        for (int x = width - 2; x >= 0; --x) push(x, height - 1);
    if (width > 1)
        for (int y = height - 2; y >= 1; --y) push(0, y);
    return out;
}

} // namespace detail

/// Pseudo-background candidates. When more than n_b regions touch the border, the n_b with
/// the longest border contact are kept (ties by clockwise order).
inline boundary_selection boundary_regions(const segmentation& seg, int n_b) {
    if (n_b < 1) throw config_error("background region count must be positive");
    std::vector<std::size_t> contact(static_cast<std::size_t>(seg.n_actual), 0);
    std::vector<int> order;
    for (std::size_t p : detail::clockwise_border(seg.width, seg.height)) {
        const int r = seg.labels[p];
        if (contact[static_cast<std::size_t>(r)]++ == 0) order.push_back(r);
    }
    boundary_selection sel;
    sel.touching = order.size();
    if (order.size() <= static_cast<std::size_t>(n_b)) {
        sel.regions = std::move(order);
        return sel;
    }
    std::vector<std::size_t> rank(order.size());
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
        return contact[static_cast<std::size_t>(order[a])] > contact[static_cast<std::size_t>(order[b])];
    });
    rank.resize(static_cast<std::size_t>(n_b));
    std::sort(rank.begin(), rank.end());
    for (std::size_t r : rank) sel.regions.push_back(order[r]);
    return sel;
}

} // namespace rsdf
