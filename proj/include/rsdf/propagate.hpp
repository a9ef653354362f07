#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "image.hpp"
#include "log.hpp"
#include "superpixel.hpp"

namespace rsdf {

/// Compressed sparse rows, columns sorted within each row.
struct sparse_matrix {
    int n = 0;
    std::vector<std::size_t> row_ptr{0};
    std::vector<int> col;
    std::vector<double> val;

    std::size_t nonzeros() const { return val.size(); }

    double at(int i, int j) const {
        const auto first = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[static_cast<std::size_t>(i)]);
        const auto last = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[static_cast<std::size_t>(i) + 1]);
        const auto it = std::lower_bound(first, last, j);
        return it != last && *it == j ? val[static_cast<std::size_t>(it - col.begin())] : 0.0;
    }

    void multiply(std::span<const double> x, std::span<double> y) const {
        for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
            double s = 0.0;
            for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k] * x[static_cast<std::size_t>(col[k])];
            y[i] = s;
        }
    }
};

/// Regions at adjacency-graph distance 1 or 2. Sorted, symmetric, no self loops.
inline neighbor_sets two_hop_neighbors(const neighbor_sets& adj) {
    neighbor_sets out(adj.size());
    for (std::size_t i = 0; i < adj.size(); ++i) {
        auto& list = out[i];
        for (int j : adj[i]) {
            list.push_back(j);
            for (int k : adj[static_cast<std::size_t>(j)]) list.push_back(k);
        }
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
        list.erase(std::remove(list.begin(), list.end(), static_cast<int>(i)), list.end());
    }
    return out;
}

struct affinity_graph {
    sparse_matrix a;
    std::vector<double> degree;  // row sums of a
    std::vector<std::array<int, 2>> patched_edges;  // links added for regions with no neighbor
};

/// a_ij = exp(-|c_i - c_j|^2 / 2 delta1^2) exp(-|d_i - d_j|^2 / 2 delta2^2) on the two-hop support.
inline affinity_graph build_affinity(const region_stats& st, const neighbor_sets& adj, double delta1, double delta2) {
    if (!(delta1 > 0.0) || !(delta2 > 0.0)) throw config_error("affinity bandwidths must be positive");
    if (adj.size() != st.size()) throw alignment_error("adjacency and region statistics disagree on region count");
    const std::size_t n = st.size();

    neighbor_sets linked = adj;
    affinity_graph g;
    if (n > 1) {
        for (std::size_t i = 0; i < n; ++i) {
            if (!linked[i].empty()) continue;
            std::size_t nearest = i == 0 ? 1 : 0;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double d = std::hypot(st.centroid[i][0] - st.centroid[j][0], st.centroid[i][1] - st.centroid[j][1]);
                if (d < best) {
                    best = d;
                    nearest = j;
                }
            }
            linked[i].push_back(static_cast<int>(nearest));
            auto& back = linked[nearest];
            back.insert(std::lower_bound(back.begin(), back.end(), static_cast<int>(i)), static_cast<int>(i));
            g.patched_edges.push_back({static_cast<int>(i), static_cast<int>(nearest)});
            log_info("region " + std::to_string(i) + " has no neighbor; linked to nearest region " +
                     std::to_string(nearest));
        }
    }

    const auto support = two_hop_neighbors(linked);
    const double c1 = 2.0 * delta1 * delta1;
    const double c2 = 2.0 * delta2 * delta2;
    g.a.n = static_cast<int>(n);
    g.a.row_ptr.assign(1, 0);
    g.degree.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (int j : support[i]) {
            const auto jj = static_cast<std::size_t>(j);
            const double dd = st.mean_depth[i] - st.mean_depth[jj];
            const double w = std::exp(-squared_distance(st.mean_lab[i], st.mean_lab[jj]) / c1) * std::exp(-dd * dd / c2);
            g.a.col.push_back(j);
            g.a.val.push_back(w);
            g.degree[i] += w;
        }
        g.a.row_ptr.push_back(g.a.col.size());
    }
    return g;
}

/// S = M^{-1/2} A M^{-1/2}; rows of zero degree stay zero.
inline sparse_matrix normalized_affinity(const affinity_graph& g) {
    sparse_matrix s = g.a;
    std::vector<double> inv_sqrt(g.degree.size());
    for (std::size_t i = 0; i < inv_sqrt.size(); ++i) inv_sqrt[i] = g.degree[i] > 0.0 ? 1.0 / std::sqrt(g.degree[i]) : 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(s.n); ++i)
        for (std::size_t k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k)
            s.val[k] *= inv_sqrt[i] * inv_sqrt[static_cast<std::size_t>(s.col[k])];
    return s;
}

struct otsu_result {
    double threshold = 0.0;
    int edge = 0;  // threshold == edge / 256 unless degenerate
    bool degenerate = false;
};

namespace detail {

inline int otsu_bin(double v) {
    return std::clamp(static_cast<int>(std::floor(v * 256.0)), 0, 255);
}

} // namespace detail

/// Otsu's threshold over a 256-bin histogram of values in [0,1]. Candidate thresholds are the
/// inner bin edges k/256; the smallest edge of maximal between-class variance wins. Input
/// that no edge can split (all values in one bin) is degenerate and yields its maximum.
inline otsu_result otsu_threshold(std::span<const double> values) {
    if (values.size() < 2) throw degenerate_input_error("Otsu thresholding needs at least two values");
    std::array<std::uint64_t, 256> hist{};
    for (double v : values) ++hist[static_cast<std::size_t>(detail::otsu_bin(v))];
    const std::uint64_t n = values.size();
    std::uint64_t sum = 0;
    for (std::size_t b = 0; b < 256; ++b) sum += b * hist[b];

    // Between-class variance is proportional to (n1 s0 - n0 s1)^2 / (n0 n1); candidates are
    // compared by exact cross-multiplication while that fits in 128 bits.
    const bool exact = n <= 500000;
    using u128 = unsigned __int128;
    u128 best_num = 0;
    u128 best_den = 1;
    long double best_ratio = -1.0L;
    int best_edge = -1;
    std::uint64_t n0 = 0;
    std::uint64_t s0 = 0;
    for (int k = 1; k < 256; ++k) {
        n0 += hist[static_cast<std::size_t>(k - 1)];
        s0 += static_cast<std::uint64_t>(k - 1) * hist[static_cast<std::size_t>(k - 1)];
        const std::uint64_t n1 = n - n0;
        if (n0 == 0 || n1 == 0) continue;
        const std::uint64_t s1 = sum - s0;
        const u128 a = static_cast<u128>(n1) * s0;
        const u128 b = static_cast<u128>(n0) * s1;
        const u128 diff = a > b ? a - b : b - a;
        const u128 num = diff * diff;
        const u128 den = static_cast<u128>(n0) * n1;
        bool better;
        if (exact) {
            better = best_edge < 0 || num * best_den > best_num * den;
        } else {
            const long double ratio = static_cast<long double>(num) / static_cast<long double>(den);
            better = ratio > best_ratio;
            if (better) best_ratio = ratio;
        }
        if (better) {
            best_num = num;
            best_den = den;
            best_edge = k;
        }
    }
    otsu_result r;
    if (best_edge < 0) {
        r.degenerate = true;
        r.threshold = *std::max_element(values.begin(), values.end());
        return r;
    }
    r.edge = best_edge;
    r.threshold = best_edge / 256.0;
    return r;
}

/// Seed classes follow the label set {1 = salient, 2 = non-salient}; 0 means unlabeled.
struct seeding {
    std::vector<int> seed_class;
    std::vector<std::array<double, 2>> y;  // indicator rows (salient, non-salient)
    double tau_salient = 0.0;
    double tau_non_salient = 0.0;
    bool degenerate = false;

    std::size_t count(int cls) const { return static_cast<std::size_t>(std::count(seed_class.begin(), seed_class.end(), cls)); }
};

/// Regions above the Otsu threshold of their class become seeds; a region above both takes
/// the class with the larger margin (salient on ties).
inline seeding seed_labels(std::span<const double> p_salient, std::span<const double> p_non_salient) {
    if (p_salient.size() != p_non_salient.size()) throw alignment_error("probability vectors differ in length");
    seeding s;
    const std::size_t n = p_salient.size();
    s.seed_class.assign(n, 0);
    s.y.assign(n, {0.0, 0.0});
    if (n < 2) {
        s.degenerate = true;
        log_warn("fewer than two regions; no propagation seeds");
        return s;
    }
    const auto t1 = otsu_threshold(p_salient);
    const auto t2 = otsu_threshold(p_non_salient);
    s.tau_salient = t1.threshold;
    s.tau_non_salient = t2.threshold;
    s.degenerate = t1.degenerate || t2.degenerate;
    if (t1.degenerate) log_warn("salient probabilities are constant; no salient seeds");
    if (t2.degenerate) log_warn("non-salient probabilities are constant; no non-salient seeds");
    for (std::size_t i = 0; i < n; ++i) {
        const double m1 = p_salient[i] - s.tau_salient;
        const double m2 = p_non_salient[i] - s.tau_non_salient;
        const bool sal = !t1.degenerate && m1 > 0.0;
        const bool non = !t2.degenerate && m2 > 0.0;
        if (sal && (!non || m1 >= m2)) {
            s.seed_class[i] = 1;
            s.y[i] = {1.0, 0.0};
        } else if (non) {
            s.seed_class[i] = 2;
            s.y[i] = {0.0, 1.0};
        }
    }
    return s;
}

struct cg_result {
    std::vector<double> x;
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

/// Preconditioned conjugate gradient for a symmetric positive definite operator.
/// `apply(x, y)` computes y = A x; `inv_diag` is the Jacobi preconditioner.
inline cg_result preconditioned_cg(const std::function<void(std::span<const double>, std::span<double>)>& apply,
                                   std::span<const double> b, std::span<const double> inv_diag, double tol,
                                   int max_iter) {
    const std::size_t n = b.size();
    const auto dot = [n](const std::vector<double>& u, const std::vector<double>& v) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += u[i] * v[i];
        return s;
    };
    cg_result res;
    res.x.assign(n, 0.0);
    std::vector<double> r(b.begin(), b.end());
    const double b_norm = std::sqrt(dot(r, r));
    if (b_norm == 0.0) {
        res.converged = true;
        return res;
    }
    std::vector<double> z(n), p(n), q(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    p = z;
    double rz = dot(r, z);
    res.relative_residual = 1.0;
    while (res.iterations < max_iter) {
        apply(p, q);
        const double alpha = rz / dot(p, q);
        for (std::size_t i = 0; i < n; ++i) {
            res.x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        ++res.iterations;
        res.relative_residual = std::sqrt(dot(r, r)) / b_norm;
        if (res.relative_residual <= tol) {
            res.converged = true;
            break;
        }
        for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
        const double rz_next = dot(r, z);
        const double beta = rz_next / rz;
        rz = rz_next;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    return res;
}

struct propagation_params {
    double alpha = 0.99;
    double delta1 = 20.0;  // color bandwidth, Lab units
    double delta2 = 0.2;   // depth bandwidth, normalized depth units
    double cg_tol = 1e-8;
    int cg_max_iter = 1000;

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("alpha must lie in (0, 1)");
        if (!(delta1 > 0.0) || !(delta2 > 0.0)) throw config_error("affinity bandwidths must be positive");
        if (!(cg_tol > 0.0) || cg_max_iter < 1) throw config_error("solver tolerance and iteration cap must be positive");
    }
};

struct propagation_problem {
    affinity_graph graph;
    std::vector<std::array<double, 2>> y;
    double alpha = 0.99;
};

struct propagation_solution {
    std::vector<std::array<double, 2>> f;
    std::array<int, 2> iterations{};
    std::array<double, 2> residual{};
};

/// Solves (I - alpha S) F = Y column by column.
inline propagation_solution solve_propagation(const propagation_problem& prob, double tol = 1e-8, int max_iter = 1000) {
    if (!(prob.alpha > 0.0 && prob.alpha < 1.0)) throw config_error("alpha must lie in (0, 1)");
    const auto n = static_cast<std::size_t>(prob.graph.a.n);
    if (prob.y.size() != n) throw alignment_error("seed matrix does not match the affinity size");

    const sparse_matrix s = normalized_affinity(prob.graph);
    std::vector<double> inv_diag(n);
    for (std::size_t i = 0; i < n; ++i) inv_diag[i] = 1.0 / (1.0 - prob.alpha * s.at(static_cast<int>(i), static_cast<int>(i)));
    const auto apply = [&](std::span<const double> x, std::span<double> out) {
        s.multiply(x, out);
        for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - prob.alpha * out[i];
    };

    propagation_solution sol;
    sol.f.assign(n, {0.0, 0.0});
    for (std::size_t c = 0; c < 2; ++c) {
        std::vector<double> b(n);
        for (std::size_t i = 0; i < n; ++i) b[i] = prob.y[i][c];
        const auto r = preconditioned_cg(apply, b, inv_diag, tol, max_iter);
        if (!r.converged)
            throw numerical_error("conjugate gradient did not converge in " + std::to_string(max_iter) +
                                      " iterations (relative residual " + std::to_string(r.relative_residual) + ")",
                                  r.relative_residual);
        for (std::size_t i = 0; i < n; ++i) sol.f[i][c] = r.x[i];
        sol.iterations[c] = r.iterations;
        sol.residual[c] = r.relative_residual;
    }
    return sol;
}

/// Paints per-region values onto the pixel grid.
inline gray_map render_regions(std::span<const double> region_values, const segmentation& seg) {
    if (region_values.size() != static_cast<std::size_t>(seg.n_actual))
        throw alignment_error("region values do not match the segmentation");
    gray_map m(seg.width, seg.height);
    for (std::size_t p = 0; p < seg.labels.size(); ++p) m.values[p] = region_values[static_cast<std::size_t>(seg.labels[p])];
    return m;
}

struct saliency_map {
    std::vector<double> region_scores;
    gray_map pixels;
    bool degenerate = false;
};

/// Score f_salient - f_non_salient per region, min-max normalized to [0,1].
inline saliency_map finalize_saliency(const std::vector<std::array<double, 2>>& f, const segmentation& seg) {
    saliency_map out;
    out.region_scores.resize(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!std::isfinite(f[i][0]) || !std::isfinite(f[i][1])) throw numerical_error("non-finite propagation result", 0.0);
        out.region_scores[i] = f[i][0] - f[i][1];
    }
    if (!out.region_scores.empty()) {
        const auto [lo, hi] = std::minmax_element(out.region_scores.begin(), out.region_scores.end());
        const double low = *lo;
        const double range = *hi - low;
        if (range > 0.0) {
            for (auto& v : out.region_scores) v = (v - low) / range;
        } else {
            out.degenerate = true;
            std::fill(out.region_scores.begin(), out.region_scores.end(), 0.0);
            log_warn("propagated scores are constant; saliency map is all zeros");
        }
    }
    out.pixels = render_regions(out.region_scores, seg);
    return out;
}

/// Mean of a per-pixel map over each region.
inline std::vector<double> region_means(const gray_map& map, const segmentation& seg) {
    if (map.width != seg.width || map.height != seg.height) throw alignment_error("map and segmentation differ in size");
    std::vector<double> sum(static_cast<std::size_t>(seg.n_actual), 0.0);
    std::vector<std::size_t> cnt(sum.size(), 0);
    for (std::size_t p = 0; p < seg.labels.size(); ++p) {
        sum[static_cast<std::size_t>(seg.labels[p])] += map.values[p];
        ++cnt[static_cast<std::size_t>(seg.labels[p])];
    }
    for (std::size_t r = 0; r < sum.size(); ++r) sum[r] /= static_cast<double>(cnt[r]);
    return sum;
}

struct propagation_outcome {
    seeding seeds;
    propagation_solution solution;
    saliency_map map;
};

/// Seeds from the two probability vectors, propagates over the two-hop graph and normalizes.
inline propagation_outcome propagate_probabilities(std::span<const double> p_salient, std::span<const double> p_non_salient,
                                                   const segmentation& seg, const region_stats& st,
                                                   const propagation_params& params) {
    params.validate();
    propagation_outcome out;
    out.seeds = seed_labels(p_salient, p_non_salient);
    propagation_problem prob;
    prob.graph = build_affinity(st, adjacency(seg), params.delta1, params.delta2);
    prob.y = out.seeds.y;
    prob.alpha = params.alpha;
    out.solution = solve_propagation(prob, params.cg_tol, params.cg_max_iter);
    out.map = finalize_saliency(out.solution.f, seg);
    return out;
}

struct refine_result {
    segmentation seg;
    std::vector<double> p_salient;
    propagation_outcome outcome;
};

/// Propagation applied to any external saliency map: region means act as the salient
/// probability and their complement as the non-salient one.
inline refine_result refine_external(const gray_map& map, const rgbd_image& img, const slic_params& slic,
                                     const propagation_params& params) {
    if (map.width != img.width || map.height != img.height)
        throw alignment_error("external map is " + std::to_string(map.width) + "x" + std::to_string(map.height) +
                              ", image is " + std::to_string(img.width) + "x" + std::to_string(img.height));
    refine_result r;
    r.seg = slic_segment(img, slic.n_target, slic.compactness, slic.iterations);
    const auto st = compute_region_stats(r.seg, img);
    r.p_salient = region_means(map, r.seg);
    std::vector<double> p_non(r.p_salient.size());
    for (std::size_t i = 0; i < p_non.size(); ++i) p_non[i] = 1.0 - r.p_salient[i];
    r.outcome = propagate_probabilities(r.p_salient, p_non, r.seg, st, params);
    return r;
}

/// Matrix Market coordinate dump (1-based indices, general storage).
inline void write_matrix_market(std::ostream& os, const sparse_matrix& m) {
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << m.n << ' ' << m.n << ' ' << m.nonzeros() << '\n';
    os << std::setprecision(17);
    for (std::size_t i = 0; i < static_cast<std::size_t>(m.n); ++i)
        for (std::size_t k = m.row_ptr[i]; k < m.row_ptr[i + 1]; ++k) os << i + 1 << ' ' << m.col[k] + 1 << ' ' << m.val[k] << '\n';
}

/// region,p_sal,p_nonsal,seed_class,score
inline void write_seed_csv(std::ostream& os, std::span<const double> p_salient, std::span<const double> p_non_salient,
                           const seeding& seeds, std::span<const double> scores) {
    os << "region,p_sal,p_nonsal,seed_class,score\n" << std::setprecision(9);
    for (std::size_t i = 0; i < p_salient.size(); ++i)
        os << i << ',' << p_salient[i] << ',' << p_non_salient[i] << ',' << seeds.seed_class[i] << ',' << scores[i] << '\n';
}

} // namespace rsdf
