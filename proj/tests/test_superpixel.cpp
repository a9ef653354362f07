#include <gtest/gtest.h>

#include <numeric>

#include "oracles.hpp"
#include "rsdf/random.hpp"
#include "rsdf/superpixel.hpp"
#include "rsdf/synth.hpp"

using namespace rsdf;

namespace {

rgbd_image uniform_image(int w, int h, std::uint8_t gray) {
    std::vector<rgb8> rgb(static_cast<std::size_t>(w * h), rgb8{gray, gray, gray});
    return make_rgbd(w, h, rgb, std::vector<double>(rgb.size(), 0.5));
}

rgbd_image random_image(int w, int h, rng_engine& rng) {
    std::vector<rgb8> rgb(static_cast<std::size_t>(w * h));
    for (auto& p : rgb)
        for (auto& c : p) c = static_cast<std::uint8_t>(uniform_index(rng, 256));
    std::vector<double> depth(rgb.size());
    for (auto& d : depth) d = uniform01(rng);
    return make_rgbd(w, h, rgb, depth);
}

segmentation random_labeling(int w, int h, int n, rng_engine& rng) {
    segmentation seg{w, h, std::vector<int>(static_cast<std::size_t>(w * h)), n};
    for (int r = 0; r < n; ++r) seg.labels[static_cast<std::size_t>(r)] = r;  // every label used
    for (std::size_t p = static_cast<std::size_t>(n); p < seg.labels.size(); ++p)
        seg.labels[p] = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n)));
    return seg;
}

segmentation grid_labeling(int w, int h, int cells_x, int cells_y) {
    segmentation seg{w, h, std::vector<int>(static_cast<std::size_t>(w * h)), cells_x * cells_y};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            seg.labels[static_cast<std::size_t>(y * w + x)] = (y * cells_y / h) * cells_x + x * cells_x / w;
    return seg;
}

std::vector<std::size_t> region_sizes(const segmentation& seg) {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(seg.n_actual), 0);
    for (int l : seg.labels) ++sizes[static_cast<std::size_t>(l)];
    return sizes;
}

} // namespace

TEST(Slic, UniformImageGivesRegularGrid) {
    const auto seg = slic_segment(uniform_image(64, 64, 128), 16);
    ASSERT_TRUE(is_valid_partition(seg));
    EXPECT_EQ(seg.n_actual, 16);
    for (auto s : region_sizes(seg)) EXPECT_EQ(s, 256u);
}

TEST(Slic, TwoColorHalvesSplitAtTheEdge) {
    const int w = 64, h = 32;
    std::vector<rgb8> rgb(static_cast<std::size_t>(w * h));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            rgb[static_cast<std::size_t>(y * w + x)] = x < w / 2 ? rgb8{200, 30, 30} : rgb8{30, 30, 200};
    const auto img = make_rgbd(w, h, rgb, std::vector<double>(rgb.size(), 0.0));
    const auto seg = slic_segment(img, 2);
    ASSERT_EQ(seg.n_actual, 2);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (std::abs(x - w / 2) <= 2) continue;
            EXPECT_EQ(seg.at(x, y), seg.at(x < w / 2 ? 0 : w - 1, 0)) << x << "," << y;
        }
    EXPECT_NE(seg.at(0, 0), seg.at(w - 1, 0));
}

TEST(Slic, SaturatesAtOnePixelPerRegion) {
    auto rng = make_rng(4);
    const auto seg = slic_segment(random_image(32, 32, rng), 1024);
    ASSERT_TRUE(is_valid_partition(seg));
    EXPECT_EQ(seg.n_actual, 1024);
    for (auto s : region_sizes(seg)) EXPECT_EQ(s, 1u);
}

TEST(Slic, OutputIsAValidPartitionNearTheTarget) {
    for (std::size_t i = 0; i < 6; ++i) {
        const auto img = to_rgbd(generate_sample(synth_options{}, i));
        for (int n : {64, 300, 1024}) {
            const auto seg = slic_segment(img, n);
            EXPECT_TRUE(is_valid_partition(seg));
            EXPECT_LE(seg.n_actual, n);
            EXPECT_GE(seg.n_actual, static_cast<int>(0.8 * n)) << "target " << n;
        }
    }
}

TEST(Slic, Deterministic) {
    const auto img = to_rgbd(generate_sample(synth_options{}, 3));
    EXPECT_EQ(slic_segment(img, 500).labels, slic_segment(img, 500).labels);
}

TEST(Slic, RejectsImagesSmallerThanTheGridStep) {
    EXPECT_THROW(slic_segment(uniform_image(40, 2, 100), 4), degenerate_input_error);
    EXPECT_THROW(slic_segment(uniform_image(8, 8, 100), 0), config_error);
}

TEST(RegionStats, SingleRegion) {
    const auto img = uniform_image(5, 7, 90);
    const segmentation seg{5, 7, std::vector<int>(35, 0), 1};
    const auto st = compute_region_stats(seg, img);
    ASSERT_EQ(st.size(), 1u);
    EXPECT_DOUBLE_EQ(st.weight[0], 1.0);
    EXPECT_NEAR(st.centroid[0][0], 0.5, 1e-12);
    EXPECT_NEAR(st.centroid[0][1], 0.5, 1e-12);
}

TEST(RegionStats, ExactHalves) {
    rgbd_image img = uniform_image(8, 4, 0);
    segmentation seg{8, 4, std::vector<int>(32), 2};
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 8; ++x) {
            const std::size_t p = static_cast<std::size_t>(y * 8 + x);
            seg.labels[p] = x < 4 ? 0 : 1;
            img.lab[p] = x < 4 ? lab_color{10, 0, 0} : lab_color{50, 0, 0};
        }
    const auto st = compute_region_stats(seg, img);
    EXPECT_EQ(st.mean_lab[0].L, 10.0);
    EXPECT_EQ(st.mean_lab[1].L, 50.0);
    EXPECT_EQ(st.mean_lab[0].a, 0.0);
    EXPECT_EQ(st.weight[0], 0.5);
    EXPECT_EQ(st.weight[1], 0.5);
}

TEST(RegionStats, MatchesPerPixelOracle) {
    auto rng = make_rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const auto img = random_image(8, 8, rng);
        const auto seg = random_labeling(8, 8, 4, rng);
        const auto st = compute_region_stats(seg, img);
        std::vector<std::array<double, 3>> lab(img.lab.size());
        for (std::size_t i = 0; i < lab.size(); ++i) lab[i] = {img.lab[i].L, img.lab[i].a, img.lab[i].b};
        const auto ref = oracle::region_means(8, 8, seg.labels, 4, lab, img.depth);
        double weight_sum = 0;
        for (std::size_t r = 0; r < 4; ++r) {
            const double tol = 1e-12;
            EXPECT_NEAR(st.mean_lab[r].L, ref[r].L, tol * std::max(1.0, std::abs(ref[r].L)));
            EXPECT_NEAR(st.mean_lab[r].a, ref[r].a, tol * std::max(1.0, std::abs(ref[r].a)));
            EXPECT_NEAR(st.mean_lab[r].b, ref[r].b, tol * std::max(1.0, std::abs(ref[r].b)));
            EXPECT_NEAR(st.mean_depth[r], ref[r].depth, tol);
            EXPECT_NEAR(st.centroid[r][0], ref[r].cx, tol);
            EXPECT_NEAR(st.centroid[r][1], ref[r].cy, tol);
            EXPECT_NEAR(st.weight[r], ref[r].weight, tol);
            weight_sum += st.weight[r];
        }
        EXPECT_NEAR(weight_sum, 1.0, 1e-12);
    }
}

TEST(RegionStats, RelabelingPermutesStats) {
    auto rng = make_rng(22);
    const auto img = random_image(12, 9, rng);
    const auto seg = random_labeling(12, 9, 6, rng);
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm.begin(), perm.end(), rng);
    segmentation relabeled = seg;
    for (auto& l : relabeled.labels) l = perm[static_cast<std::size_t>(l)];
    const auto a = compute_region_stats(seg, img);
    const auto b = compute_region_stats(relabeled, img);
    for (std::size_t r = 0; r < 6; ++r) {
        const auto q = static_cast<std::size_t>(perm[r]);
        EXPECT_EQ(a.mean_lab[r].L, b.mean_lab[q].L);
        EXPECT_EQ(a.mean_depth[r], b.mean_depth[q]);
        EXPECT_EQ(a.centroid[r], b.centroid[q]);
        EXPECT_EQ(a.weight[r], b.weight[q]);
    }
}

TEST(Adjacency, SmallExamples) {
    const auto split = grid_labeling(6, 4, 2, 1);
    const auto a = adjacency(split);
    EXPECT_EQ(a[0], std::vector<int>{1});
    EXPECT_EQ(a[1], std::vector<int>{0});

    const auto strip = grid_labeling(9, 1, 3, 1);
    const auto b = adjacency(strip);
    EXPECT_EQ(b[0].size(), 1u);
    EXPECT_EQ(b[1].size(), 2u);
    EXPECT_EQ(b[2].size(), 1u);
}

TEST(Adjacency, MatchesPixelPairScanAndIsSymmetric) {
    auto rng = make_rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const auto seg = random_labeling(9, 7, 5 + trial % 4, rng);
        const auto adj = adjacency(seg);
        const auto ref = oracle::neighbors(9, 7, seg.labels, seg.n_actual);
        for (std::size_t r = 0; r < adj.size(); ++r) {
            EXPECT_EQ(std::set<int>(adj[r].begin(), adj[r].end()), ref[r]);
            for (int q : adj[r]) {
                EXPECT_NE(q, static_cast<int>(r));
                const auto& back = adj[static_cast<std::size_t>(q)];
                EXPECT_NE(std::find(back.begin(), back.end(), static_cast<int>(r)), back.end());
            }
        }
    }
}

TEST(Boundary, GridOfSixteenHasTwelveBorderRegions) {
    const auto sel = boundary_regions(grid_labeling(16, 16, 4, 4), 160);
    EXPECT_EQ(sel.regions.size(), 12u);
    EXPECT_EQ(sel.touching, 12u);
    // Clockwise from the top-left corner.
    EXPECT_EQ(sel.regions, (std::vector<int>{0, 1, 2, 3, 7, 11, 15, 14, 13, 12, 8, 4}));
}

TEST(Boundary, SingleRegion) {
    const segmentation seg{5, 5, std::vector<int>(25, 0), 1};
    EXPECT_EQ(boundary_regions(seg, 160).regions, std::vector<int>{0});
}

TEST(Boundary, TruncatesToBorderTouchingRegionsWithLongestContact) {
    const auto img = to_rgbd(generate_sample(synth_options{}, 5));
    const auto seg = slic_segment(img, 1024);
    const auto sel = boundary_regions(seg, 160);
    ASSERT_LE(sel.regions.size(), 160u);
    std::vector<std::size_t> contact(static_cast<std::size_t>(seg.n_actual), 0);
    for (int y = 0; y < seg.height; ++y)
        for (int x = 0; x < seg.width; ++x)
            if (x == 0 || y == 0 || x == seg.width - 1 || y == seg.height - 1)
                ++contact[static_cast<std::size_t>(seg.at(x, y))];
    std::size_t touching = 0;
    for (auto c : contact) touching += c > 0;
    EXPECT_EQ(sel.touching, touching);
    std::size_t weakest_kept = SIZE_MAX;
    for (int r : sel.regions) {
        EXPECT_GT(contact[static_cast<std::size_t>(r)], 0u);
        weakest_kept = std::min(weakest_kept, contact[static_cast<std::size_t>(r)]);
    }
    if (touching > 160) {
        for (std::size_t r = 0; r < contact.size(); ++r) {
            if (std::find(sel.regions.begin(), sel.regions.end(), static_cast<int>(r)) == sel.regions.end()) {
                EXPECT_LE(contact[r], weakest_kept);
            }
        }
    }
}
