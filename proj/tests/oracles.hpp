#pragma once
// Independent reference implementations used by the unit and acceptance tests.
// Each one is written the slow, obvious way and shares no code with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

namespace oracle {

using matrix = std::vector<std::vector<double>>;

struct region_mean {
    double L = 0, a = 0, b = 0, depth = 0, cx = 0, cy = 0, weight = 0;
};

// Per-region means by direct per-pixel accumulation, one region at a time.
inline std::vector<region_mean> region_means(int w, int h, const std::vector<int>& labels, int n_regions,
                                             const std::vector<std::array<double, 3>>& lab,
                                             const std::vector<double>& depth) {
    std::vector<region_mean> out(static_cast<std::size_t>(n_regions));
    for (int r = 0; r < n_regions; ++r) {
        region_mean m;
        long count = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t p = static_cast<std::size_t>(y * w + x);
                if (labels[p] != r) continue;
                m.L += lab[p][0];
                m.a += lab[p][1];
                m.b += lab[p][2];
                m.depth += depth[p];
                m.cx += (x + 0.5) / w;
                m.cy += (y + 0.5) / h;
                ++count;
            }
        m.L /= count;
        m.a /= count;
        m.b /= count;
        m.depth /= count;
        m.cx /= count;
        m.cy /= count;
        m.weight = static_cast<double>(count) / (w * h);
        out[static_cast<std::size_t>(r)] = m;
    }
    return out;
}

// Neighbor sets from an exhaustive scan over all pixel pairs at Manhattan distance one.
inline std::vector<std::set<int>> neighbors(int w, int h, const std::vector<int>& labels, int n_regions) {
    std::vector<std::set<int>> out(static_cast<std::size_t>(n_regions));
    for (int p = 0; p < w * h; ++p)
        for (int q = 0; q < w * h; ++q) {
            const int dx = std::abs(p % w - q % w);
            const int dy = std::abs(p / w - q / w);
            if (dx + dy != 1) continue;
            const int a = labels[static_cast<std::size_t>(p)];
            const int b = labels[static_cast<std::size_t>(q)];
            if (a != b) out[static_cast<std::size_t>(a)].insert(b);
        }
    return out;
}

struct toy_region {
    std::array<double, 3> lab;
    double depth;
    double x, y;
    double t;
};

inline double color_dist(const toy_region& p, const toy_region& q) {
    return std::sqrt((p.lab[0] - q.lab[0]) * (p.lab[0] - q.lab[0]) + (p.lab[1] - q.lab[1]) * (p.lab[1] - q.lab[1]) +
                     (p.lab[2] - q.lab[2]) * (p.lab[2] - q.lab[2]));
}

inline double gauss2(double dx, double dy, double sigma) {
    return std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
}

// Contrast entry for every j (0 on the diagonal); `depth` switches the cue.
inline std::vector<double> contrast(const std::vector<toy_region>& r, std::size_t i, bool depth, double sigma) {
    std::vector<double> out(r.size());
    for (std::size_t j = 0; j < r.size(); ++j) {
        if (j == i) {
            out[j] = 0;
            continue;
        }
        const double d = depth ? std::fabs(r[i].depth - r[j].depth) : color_dist(r[i], r[j]);
        out[j] = r[j].t * gauss2(r[i].x - r[j].x, r[i].y - r[j].y, sigma) * d;
    }
    return out;
}

inline std::vector<double> compactness(const std::vector<toy_region>& r, std::size_t i, double delta_c) {
    // The mean position sits very close to region i itself, so the spread is accumulated in 50 digits.
    using big = boost::multiprecision::cpp_bin_float_50;
    std::vector<double> phi(r.size());
    for (std::size_t j = 0; j < r.size(); ++j) {
        const double d = color_dist(r[i], r[j]);
        phi[j] = std::exp(-d * d / (2 * delta_c * delta_c));
    }
    big norm = 0, ux = 0, uy = 0;
    for (std::size_t j = 0; j < r.size(); ++j) norm += phi[j];
    for (std::size_t j = 0; j < r.size(); ++j) {
        ux += big(phi[j]) / norm * r[j].x;
        uy += big(phi[j]) / norm * r[j].y;
    }
    std::vector<double> out(r.size());
    for (std::size_t j = 0; j < r.size(); ++j) {
        const big dx = big(r[j].x) - ux;
        const big dy = big(r[j].y) - uy;
        out[j] = static_cast<double>(phi[j] * sqrt(dx * dx + dy * dy));
    }
    return out;
}

inline std::vector<double> background(const std::vector<toy_region>& r, std::size_t i, const std::vector<int>& bg,
                                      bool depth, double sigma) {
    std::vector<double> out(bg.size());
    for (std::size_t k = 0; k < bg.size(); ++k) {
        const auto j = static_cast<std::size_t>(bg[k]);
        if (j == i) continue;
        const double d = depth ? std::fabs(r[i].depth - r[j].depth) : color_dist(r[i], r[j]);
        out[k] = r[j].t * gauss2(r[i].x - r[j].x, r[i].y - r[j].y, sigma) * d;
    }
    return out;
}

// Reference forward pass, double precision, plain nested loops over a (c, y, x) tensor.
struct forward_result {
    std::array<double, 2> logits;
    std::array<double, 2> probs;
};

inline double sig(double z) { return 1 / (1 + std::exp(-z)); }

inline std::vector<double> conv(const std::vector<double>& in, int cin, int side, const std::vector<double>& w,
                                const std::vector<double>& b, int cout, int k) {
    const int os = side - k + 1;
    std::vector<double> out(static_cast<std::size_t>(cout * os * os));
    for (int o = 0; o < cout; ++o)
        for (int y = 0; y < os; ++y)
            for (int x = 0; x < os; ++x) {
                double s = b[static_cast<std::size_t>(o)];
                for (int c = 0; c < cin; ++c)
                    for (int u = 0; u < k; ++u)
                        for (int v = 0; v < k; ++v)
                            s += w[static_cast<std::size_t>(((o * cin + c) * k + u) * k + v)] *
                                 in[static_cast<std::size_t>((c * side + y + u) * side + x + v)];
                out[static_cast<std::size_t>((o * os + y) * os + x)] = sig(s);
            }
    return out;
}

inline std::vector<double> pool(const std::vector<double>& in, int c, int side) {
    const int os = side / 2;
    std::vector<double> out(static_cast<std::size_t>(c * os * os));
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < os; ++y)
            for (int x = 0; x < os; ++x) {
                double s = 0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) s += in[static_cast<std::size_t>((ch * side + 2 * y + dy) * side + 2 * x + dx)];
                out[static_cast<std::size_t>((ch * os + y) * os + x)] = s / 4;
            }
    return out;
}

// params in the order conv1 w,b, conv2 w,b, conv3 w,b, fc4 w,b, fc5 w,b.
inline forward_result forward(const std::array<std::vector<double>, 10>& p, const std::vector<double>& input,
                              const std::optional<std::vector<double>>& mask = std::nullopt) {
    auto a = pool(conv(input, 6, 32, p[0], p[1], 6, 5), 6, 28);
    a = pool(conv(a, 6, 14, p[2], p[3], 12, 5), 12, 10);
    a = conv(a, 12, 5, p[4], p[5], 24, 3);
    std::vector<double> h(200);
    for (int u = 0; u < 200; ++u) {
        double s = p[7][static_cast<std::size_t>(u)];
        for (int v = 0; v < 216; ++v) s += p[6][static_cast<std::size_t>(u * 216 + v)] * a[static_cast<std::size_t>(v)];
        h[static_cast<std::size_t>(u)] = std::max(0.0, s) * (mask ? (*mask)[static_cast<std::size_t>(u)] : 1.0);
    }
    forward_result r;
    for (int k = 0; k < 2; ++k) {
        double s = p[9][static_cast<std::size_t>(k)];
        for (int u = 0; u < 200; ++u) s += p[8][static_cast<std::size_t>(k * 200 + u)] * h[static_cast<std::size_t>(u)];
        r.logits[static_cast<std::size_t>(k)] = s;
    }
    const double e0 = std::exp(r.logits[0]), e1 = std::exp(r.logits[1]);
    r.probs = {e0 / (e0 + e1), e1 / (e0 + e1)};
    return r;
}

// Gaussian elimination with partial pivoting; returns x with A x = b.
inline std::vector<double> solve_dense(matrix a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
        std::swap(a[c], a[piv]);
        std::swap(b[c], b[piv]);
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a[r][c] / a[c][c];
            for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
            b[r] -= f * b[c];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
        x[i] = s / a[i][i];
    }
    return x;
}

// True when the Cholesky factorization of a symmetric matrix succeeds with positive pivots.
inline bool cholesky_ok(const matrix& a) {
    const std::size_t n = a.size();
    matrix l(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a[i][j];
            for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
            if (i == j) {
                if (!(s > 0)) return false;
                l[i][i] = std::sqrt(s);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    return true;
}

// Exhaustive Otsu over the 255 inner edges k/256, class means taken over bin indices,
// compared as exact rationals. Returns the smallest maximizing edge, or nullopt when no
// edge splits the sample.
inline std::optional<double> otsu(const std::vector<double>& values) {
    using boost::multiprecision::cpp_rational;
    std::optional<double> best_edge;
    cpp_rational best = -1;
    const long n = static_cast<long>(values.size());
    for (int k = 1; k < 256; ++k) {
        const double edge = k / 256.0;
        long n0 = 0, n1 = 0, s0 = 0, s1 = 0;
        for (double v : values) {
            const long bin = std::min(255L, std::max(0L, static_cast<long>(std::floor(v * 256))));
            if (v < edge) {
                ++n0;
                s0 += bin;
            } else {
                ++n1;
                s1 += bin;
            }
        }
        if (n0 == 0 || n1 == 0) continue;
        const cpp_rational w0(n0, n), w1(n1, n);
        const cpp_rational mu0(s0, n0), mu1(s1, n1);
        const cpp_rational var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best) {
            best = var;
            best_edge = edge;
        }
    }
    return best_edge;
}

struct counts {
    long tp = 0, fp = 0, fn = 0;
};

// Per-pixel counting at a single threshold.
inline counts count_at(const std::vector<double>& map, const std::vector<double>& gt, double thr) {
    counts c;
    for (std::size_t i = 0; i < map.size(); ++i) {
        const bool p = map[i] >= thr, t = gt[i] >= 0.5;
        if (p && t) ++c.tp;
        if (p && !t) ++c.fp;
        if (!p && t) ++c.fn;
    }
    return c;
}

} // namespace oracle
