#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"
#include "features.hpp"
#include "image.hpp"
#include "log.hpp"
#include "nn/network.hpp"
#include "nn/train.hpp"
#include "parallel.hpp"
#include "png_io.hpp"
#include "propagate.hpp"
#include "random.hpp"
#include "superpixel.hpp"

namespace rsdf {

/// Every tunable of the pipeline in one serializable block.
struct pipeline_config {
    int n_superpixels = 1024;
    int n_background = 160;
    double sigma_lr = 0.15;
    double sigma_gr = 0.45;
    double delta_c = 20.0;
    double delta1 = 20.0;
    double delta2 = 0.2;
    double alpha = 0.99;
    double cg_tol = 1e-8;
    int cg_max_iter = 1000;
    double slic_compactness = 10.0;
    int slic_iterations = 10;
    std::uint64_t seed = 1;
    nn::train_config train;

    slic_params slic() const { return {n_superpixels, slic_compactness, slic_iterations}; }
    feature_params features() const { return {n_superpixels, n_background, sigma_lr, sigma_gr, delta_c}; }
    propagation_params propagation() const { return {alpha, delta1, delta2, cg_tol, cg_max_iter}; }

    /// `cnn_path` enforces the fixed 1024-slot packing.
    void validate(bool cnn_path) const {
        if (n_superpixels < 1) throw config_error("n_superpixels must be positive");
        if (cnn_path && n_superpixels != static_cast<int>(patch_plane))
            throw config_error("n_superpixels must be 1024 for the CNN (the 32x32 input packing is fixed); got " +
                               std::to_string(n_superpixels));
        if (n_background < 1 || n_background > static_cast<int>(patch_plane / 2))
            throw config_error("n_background must lie in [1, 512]");
        if (!(sigma_lr > 0.0) || !(sigma_gr > 0.0) || !(delta_c > 0.0) || !(delta1 > 0.0) || !(delta2 > 0.0))
            throw config_error("all bandwidths must be positive");
        if (!(slic_compactness > 0.0)) throw config_error("slic_compactness must be positive");
        propagation().validate();
        train.validate();
    }
};

namespace nn {

inline void to_json(nlohmann::json& j, const augment_options& a) {
    j = {{"flip", a.flip}, {"crop", a.crop}, {"jitter", a.jitter}, {"flip_probability", a.flip_probability},
         {"min_crop_fraction", a.min_crop_fraction}, {"jitter_low", a.jitter_low}, {"jitter_high", a.jitter_high}};
}

inline void from_json(const nlohmann::json& j, augment_options& a) {
    a.flip = j.value("flip", a.flip);
    a.crop = j.value("crop", a.crop);
    a.jitter = j.value("jitter", a.jitter);
    a.flip_probability = j.value("flip_probability", a.flip_probability);
    a.min_crop_fraction = j.value("min_crop_fraction", a.min_crop_fraction);
    a.jitter_low = j.value("jitter_low", a.jitter_low);
    a.jitter_high = j.value("jitter_high", a.jitter_high);
}

inline void to_json(nlohmann::json& j, const train_config& t) {
    j = {{"momentum", t.momentum}, {"weight_decay", t.weight_decay}, {"lr_start", t.lr_start},
         {"lr_end", t.lr_end}, {"epochs", t.epochs}, {"batch_size", t.batch_size},
         {"dropout_keep", t.dropout_keep}, {"seed", t.seed}, {"augmentation", t.augmentation},
         {"patches_per_image", t.patches_per_image}, {"balance_classes", t.balance_classes}};
}

inline void from_json(const nlohmann::json& j, train_config& t) {
    t.momentum = j.value("momentum", t.momentum);
    t.weight_decay = j.value("weight_decay", t.weight_decay);
    t.lr_start = j.value("lr_start", t.lr_start);
    t.lr_end = j.value("lr_end", t.lr_end);
    t.epochs = j.value("epochs", t.epochs);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.dropout_keep = j.value("dropout_keep", t.dropout_keep);
    t.seed = j.value("seed", t.seed);
    if (j.contains("augmentation")) j.at("augmentation").get_to(t.augmentation);
    t.patches_per_image = j.value("patches_per_image", t.patches_per_image);
    t.balance_classes = j.value("balance_classes", t.balance_classes);
}

} // namespace nn

inline void to_json(nlohmann::json& j, const pipeline_config& c) {
    j = {{"n_superpixels", c.n_superpixels}, {"n_background", c.n_background}, {"sigma_lr", c.sigma_lr},
         {"sigma_gr", c.sigma_gr}, {"delta_c", c.delta_c}, {"delta1", c.delta1}, {"delta2", c.delta2},
         {"alpha", c.alpha}, {"cg_tol", c.cg_tol}, {"cg_max_iter", c.cg_max_iter},
         {"slic_compactness", c.slic_compactness}, {"slic_iterations", c.slic_iterations}, {"seed", c.seed},
         {"train", c.train}};
}

/// Missing keys keep their defaults; unknown keys are rejected to catch typos.
inline void from_json(const nlohmann::json& j, pipeline_config& c) {
    static const char* known[] = {"n_superpixels", "n_background", "sigma_lr", "sigma_gr", "delta_c",
                                  "delta1", "delta2", "alpha", "cg_tol", "cg_max_iter",
                                  "slic_compactness", "slic_iterations", "seed", "train"};
    for (const auto& item : j.items())
        if (std::find(std::begin(known), std::end(known), item.key()) == std::end(known))
            throw config_error("unknown config key '" + item.key() + "'");
    c.n_superpixels = j.value("n_superpixels", c.n_superpixels);
    c.n_background = j.value("n_background", c.n_background);
    c.sigma_lr = j.value("sigma_lr", c.sigma_lr);
    c.sigma_gr = j.value("sigma_gr", c.sigma_gr);
    c.delta_c = j.value("delta_c", c.delta_c);
    c.delta1 = j.value("delta1", c.delta1);
    c.delta2 = j.value("delta2", c.delta2);
    c.alpha = j.value("alpha", c.alpha);
    c.cg_tol = j.value("cg_tol", c.cg_tol);
    c.cg_max_iter = j.value("cg_max_iter", c.cg_max_iter);
    c.slic_compactness = j.value("slic_compactness", c.slic_compactness);
    c.slic_iterations = j.value("slic_iterations", c.slic_iterations);
    c.seed = j.value("seed", c.seed);
    if (j.contains("train")) j.at("train").get_to(c.train);
}

/// Everything one image yields on the inference path.
struct prediction {
    segmentation seg;
    region_stats stats;
    std::vector<double> p_salient;
    std::vector<double> p_non_salient;
    gray_map initial;  // raw CNN salient probability per pixel
    std::optional<propagation_outcome> propagated;

    const gray_map& final_map() const { return propagated ? propagated->map.pixels : initial; }
};

/// segment -> features -> CNN -> (optionally) Laplacian propagation.
inline prediction predict_image(const rgbd_image& img, const nn::network<float>& net, const pipeline_config& cfg,
                                bool propagate = true) {
    prediction out;
    out.seg = slic_segment(img, cfg.n_superpixels, cfg.slic_compactness, cfg.slic_iterations);
    out.stats = compute_region_stats(out.seg, img);
    const auto patches = extract_all(img, out.seg, out.stats, cfg.features());
    out.p_salient.resize(patches.size());
    out.p_non_salient.resize(patches.size());
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const auto p = nn::predict(net, patches[i]);
        out.p_salient[i] = p[0];
        out.p_non_salient[i] = p[1];
    }
    out.initial = render_regions(out.p_salient, out.seg);
    if (propagate)
        out.propagated = propagate_probabilities(out.p_salient, out.p_non_salient, out.seg, out.stats, cfg.propagation());
    return out;
}

/// Regions used for training from one image: all of them, or a seeded subsample,
/// optionally half salient and half non-salient when both classes allow it.
inline std::vector<int> sample_training_regions(const std::vector<int>& labels, const nn::train_config& t,
                                                rng_engine& rng) {
    std::vector<int> all(labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    const auto want = static_cast<std::size_t>(t.patches_per_image);
    if (want == 0 || want >= all.size()) return all;
    if (!t.balance_classes) {
        shuffle(all.begin(), all.end(), rng);
        all.resize(want);
        std::sort(all.begin(), all.end());
        return all;
    }
    std::vector<int> pos, neg;
    for (int r : all) (labels[static_cast<std::size_t>(r)] ? pos : neg).push_back(r);
    shuffle(pos.begin(), pos.end(), rng);
    shuffle(neg.begin(), neg.end(), rng);
    std::size_t take_pos = std::min(pos.size(), want / 2);
    const std::size_t take_neg = std::min(neg.size(), want - take_pos);
    take_pos = std::min(pos.size(), want - take_neg);
    std::vector<int> out(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(take_pos));
    out.insert(out.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(take_neg));
    std::sort(out.begin(), out.end());
    return out;
}

/// Labeled patches of one augmented image for one epoch; randomness depends only on
/// (seed, epoch, image index), so extraction order and thread count do not matter.
inline std::vector<feature_patch> training_patches(const rgbd_image& img, const pipeline_config& cfg, int epoch,
                                                   std::size_t image_index) {
    auto rng = make_rng(cfg.train.seed, {static_cast<std::uint64_t>(epoch), image_index, 3});
    const rgbd_image aug = nn::augment(img, rng, cfg.train.augmentation);
    const auto seg = slic_segment(aug, cfg.n_superpixels, cfg.slic_compactness, cfg.slic_iterations);
    const auto st = compute_region_stats(seg, aug);
    const auto regions = sample_training_regions(region_labels(seg, *aug.gt), cfg.train, rng);
    return extract_patches(aug, seg, st, cfg.features(), regions);
}

/// Per epoch: augment, segment and extract every image, shuffle, one pass of minibatch SGD.
inline nn::train_result train_images(const std::vector<rgbd_image>& images, const pipeline_config& cfg,
                                     nn::network<float> initial, const nn::epoch_callback& on_epoch = {},
                                     int jobs = 1) {
    cfg.validate(true);
    if (images.empty()) throw config_error("training dataset is empty");
    for (const auto& img : images)
        if (!img.gt) throw config_error("every training image needs ground truth");

    nn::train_result result{std::move(initial), {}};
    nn::network<double> velocity;
    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        std::vector<std::vector<feature_patch>> per_image(images.size());
        parallel_for(images.size(), jobs,
                     [&](std::size_t i) { per_image[i] = training_patches(images[i], cfg, epoch, i); });
        std::vector<feature_patch> patches;
        for (auto& v : per_image) {
            patches.insert(patches.end(), v.begin(), v.end());
            v.clear();
            v.shrink_to_fit();
        }
        std::vector<const feature_patch*> order;
        order.reserve(patches.size());
        for (const auto& p : patches) order.push_back(&p);
        auto shuffle_rng = make_rng(cfg.train.seed, {static_cast<std::uint64_t>(epoch), 1});
        shuffle(order.begin(), order.end(), shuffle_rng);
        auto dropout_rng = make_rng(cfg.train.seed, {static_cast<std::uint64_t>(epoch), 2});
        result.log.push_back(nn::run_epoch(result.net, velocity, order, cfg.train, epoch, dropout_rng));
        if (on_epoch) on_epoch(result.log.back());
    }
    return result;
}

struct dataset_entry {
    std::string name;
    std::filesystem::path rgb;
    std::filesystem::path depth;
    std::optional<std::filesystem::path> gt;
};

struct dataset_listing {
    std::vector<dataset_entry> entries;
    std::vector<std::string> problems;  // one line per missing or unmatched file
};

/// Pairs root/rgb/NAME with root/depth/NAME (and root/gt/NAME) by identical filename.
inline dataset_listing list_dataset(const std::filesystem::path& root, bool require_gt) {
    namespace fs = std::filesystem;
    dataset_listing out;
    const fs::path rgb_dir = root / "rgb";
    if (!fs::is_directory(rgb_dir)) {
        out.problems.push_back(rgb_dir.string() + ": missing directory");
        return out;
    }
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(rgb_dir))
        if (e.is_regular_file() && e.path().extension() == ".png") names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    for (const auto& name : names) {
        dataset_entry entry{name, rgb_dir / name, root / "depth" / name, std::nullopt};
        bool ok = true;
        if (!fs::is_regular_file(entry.depth)) {
            out.problems.push_back(entry.depth.string() + ": missing depth for " + name);
            ok = false;
        }
        const fs::path gt = root / "gt" / name;
        if (fs::is_regular_file(gt)) {
            entry.gt = gt;
        } else if (require_gt) {
            out.problems.push_back(gt.string() + ": missing ground truth for " + name);
            ok = false;
        }
        if (ok) out.entries.push_back(std::move(entry));
    }
    for (const char* sub : {"depth", "gt"}) {
        const fs::path dir = root / sub;
        if (!fs::is_directory(dir)) continue;
        for (const auto& e : fs::directory_iterator(dir)) {
            const auto name = e.path().filename().string();
            if (e.path().extension() == ".png" && !std::binary_search(names.begin(), names.end(), name))
                out.problems.push_back(e.path().string() + ": no matching rgb/" + name);
        }
    }
    std::sort(out.problems.begin(), out.problems.end());
    if (out.entries.empty() && out.problems.empty()) out.problems.push_back(root.string() + ": dataset is empty");
    return out;
}

} // namespace rsdf
