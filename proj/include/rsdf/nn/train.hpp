#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "../error.hpp"
#include "../features.hpp"
#include "../image.hpp"
#include "../random.hpp"
#include "network.hpp"

namespace rsdf::nn {

struct augment_options {
    bool flip = true;
    bool crop = true;
    bool jitter = true;
    double flip_probability = 0.5;
    double min_crop_fraction = 0.9;  // of each dimension
    double jitter_low = 0.9;
    double jitter_high = 1.1;
};

struct train_config {
    double momentum = 0.9;
    double weight_decay = 0.0005;
    double lr_start = 1.0;
    double lr_end = 0.001;
    int epochs = 100;
    int batch_size = 64;
    double dropout_keep = 0.5;
    std::uint64_t seed = 1;
    augment_options augmentation;
    int patches_per_image = 0;  // 0 keeps every superpixel of every image
    bool balance_classes = false;

    void validate() const {
        if (!(lr_start > 0.0) || !(lr_end > 0.0) || lr_end > lr_start)
            throw config_error("learning rates must satisfy 0 < lr_end <= lr_start");
        if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) throw config_error("dropout keep must lie in (0, 1]");
        if (epochs < 1) throw config_error("epochs must be positive");
        if (batch_size < 1) throw config_error("batch size must be positive");
        if (momentum < 0.0 || momentum >= 1.0) throw config_error("momentum must lie in [0, 1)");
        if (weight_decay < 0.0) throw config_error("weight decay must be non-negative");
        if (patches_per_image < 0) throw config_error("patches per image must be non-negative");
    }
};

/// Geometric interpolation from lr_start (first epoch) to lr_end (last epoch).
inline double learning_rate(const train_config& cfg, int epoch) {
    if (cfg.epochs <= 1) return cfg.lr_start;
    const double t = std::clamp(static_cast<double>(epoch) / (cfg.epochs - 1), 0.0, 1.0);
    if (epoch >= cfg.epochs - 1) return cfg.lr_end;
    return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, t);
}

/// v <- momentum v - lr (g + decay p);  p <- p + v.
template <typename T>
void sgd_step(network<T>& net, const network<double>& grads, network<double>& velocity, const train_config& cfg,
              int epoch) {
    const double lr = learning_rate(cfg, epoch);
    for (std::size_t t = 0; t < param_count; ++t) {
        auto& p = net.params[t];
        auto& v = velocity.params[t];
        const auto& g = grads.params[t];
        for (std::size_t i = 0; i < p.size(); ++i) {
            v[i] = cfg.momentum * v[i] - lr * (g[i] + cfg.weight_decay * static_cast<double>(p[i]));
            p[i] = static_cast<T>(static_cast<double>(p[i]) + v[i]);
        }
    }
}

inline rgbd_image flip_horizontal(const rgbd_image& img) {
    rgbd_image out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const std::size_t src = img.index(img.width - 1 - x, y);
            const std::size_t dst = img.index(x, y);
            out.rgb[dst] = img.rgb[src];
            out.lab[dst] = img.lab[src];
            out.depth[dst] = img.depth[src];
            if (img.gt) (*out.gt)[dst] = (*img.gt)[src];
        }
    return out;
}

inline rgbd_image crop(const rgbd_image& img, int x0, int y0, int w, int h) {
    if (x0 < 0 || y0 < 0 || w < 1 || h < 1 || x0 + w > img.width || y0 + h > img.height)
        throw index_error("crop window outside the image");
    rgbd_image out;
    out.width = w;
    out.height = h;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    out.rgb.resize(n);
    out.lab.resize(n);
    out.depth.resize(n);
    if (img.gt) out.gt.emplace(n);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t src = img.index(x0 + x, y0 + y);
            const std::size_t dst = out.index(x, y);
            out.rgb[dst] = img.rgb[src];
            out.lab[dst] = img.lab[src];
            out.depth[dst] = img.depth[src];
            if (img.gt) (*out.gt)[dst] = (*img.gt)[src];
        }
    return out;
}

/// Multiplies each RGB channel, clamps to [0,255], rounds, and re-derives Lab.
inline rgbd_image jitter_colors(const rgbd_image& img, const std::array<double, 3>& factors) {
    if (factors == std::array<double, 3>{1.0, 1.0, 1.0}) return img;
    rgbd_image out = img;
    for (auto& p : out.rgb)
        for (std::size_t c = 0; c < 3; ++c)
            p[c] = static_cast<std::uint8_t>(std::lround(std::clamp(p[c] * factors[c], 0.0, 255.0)));
    recompute_lab(out);
    return out;
}

/// Random flip, crop (translation surrogate) and per-channel color gain. Every random draw is
/// made whether or not its option is enabled, so toggling an option does not shift the stream.
inline rgbd_image augment(const rgbd_image& img, rng_engine& rng, const augment_options& opt = {}) {
    const bool do_flip = bernoulli(rng, opt.flip_probability);
    const double fw = uniform(rng, opt.min_crop_fraction, 1.0);
    const double fh = uniform(rng, opt.min_crop_fraction, 1.0);
    const double ox = uniform01(rng);
    const double oy = uniform01(rng);
    std::array<double, 3> gain;
    for (auto& g : gain) g = uniform(rng, opt.jitter_low, opt.jitter_high);

    rgbd_image out = opt.jitter ? jitter_colors(img, gain) : img;
    if (opt.flip && do_flip) out = flip_horizontal(out);
    if (opt.crop) {
        const int w = std::clamp(static_cast<int>(std::ceil(fw * img.width)), 1, img.width);
        const int h = std::clamp(static_cast<int>(std::ceil(fh * img.height)), 1, img.height);
        const int x0 = std::min(img.width - w, static_cast<int>(ox * (img.width - w + 1)));
        const int y0 = std::min(img.height - h, static_cast<int>(oy * (img.height - h + 1)));
        if (w != img.width || h != img.height) out = crop(out, x0, y0, w, h);
    }
    return out;
}

struct epoch_stats {
    int epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
    double accuracy = 0.0;
};

using epoch_callback = std::function<void(const epoch_stats&)>;

/// One pass of minibatch SGD over `batch_order`. Gradients are averaged over each batch in
/// 64-bit; dropout masks come from `rng`.
inline epoch_stats run_epoch(network<float>& net, network<double>& velocity,
                             const std::vector<const feature_patch*>& batch_order, const train_config& cfg, int epoch,
                             rng_engine& rng) {
    epoch_stats st;
    st.epoch = epoch;
    st.lr = learning_rate(cfg, epoch);
    if (batch_order.empty()) return st;

    network<double> grads;
    activations<float> act;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < batch_order.size(); start += batch) {
        const std::size_t stop = std::min(batch_order.size(), start + batch);
        grads.fill(0.0);
        const double scale = 1.0 / static_cast<double>(stop - start);
        for (std::size_t k = start; k < stop; ++k) {
            const feature_patch& patch = *batch_order[k];
            const int label = patch.label.value();
            const auto mask = sample_dropout_mask<float>(rng, cfg.dropout_keep);
            forward(net, patch.data, act, &mask);
            loss_sum += loss(act.probs, label);
            const int predicted = act.probs[1] > act.probs[0] ? 1 : 0;
            if (predicted == label) ++correct;
            backward(net, act, label, grads, scale);
        }
        sgd_step(net, grads, velocity, cfg, epoch);
    }
    st.mean_loss = loss_sum / static_cast<double>(batch_order.size());
    st.accuracy = static_cast<double>(correct) / static_cast<double>(batch_order.size());
    return st;
}

/// Patch order independent of how the caller listed the patches: by label, then by content.
inline std::vector<const feature_patch*> canonical_order(const std::vector<feature_patch>& patches) {
    std::vector<const feature_patch*> order;
    order.reserve(patches.size());
    for (const auto& p : patches) order.push_back(&p);
    std::stable_sort(order.begin(), order.end(), [](const feature_patch* a, const feature_patch* b) {
        if (a->label != b->label) return a->label < b->label;
        return std::lexicographical_compare(a->data.begin(), a->data.end(), b->data.begin(), b->data.end());
    });
    return order;
}

struct train_result {
    network<float> net;
    std::vector<epoch_stats> log;
};

/// Trains on a fixed, labeled patch set. Shuffling starts from canonical_order, so the result
/// does not depend on the order of `patches`.
inline train_result train_patches(const std::vector<feature_patch>& patches, const train_config& cfg,
                                  network<float> initial, const epoch_callback& on_epoch = {}) {
    cfg.validate();
    if (patches.empty()) throw config_error("training set is empty");
    for (const auto& p : patches)
        if (!p.label) throw config_error("training patch without label");

    train_result result{std::move(initial), {}};
    network<double> velocity;
    const auto canonical = canonical_order(patches);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto order = canonical;
        auto shuffle_rng = make_rng(cfg.seed, {static_cast<std::uint64_t>(epoch), 1});
        shuffle(order.begin(), order.end(), shuffle_rng);
        auto dropout_rng = make_rng(cfg.seed, {static_cast<std::uint64_t>(epoch), 2});
        result.log.push_back(run_epoch(result.net, velocity, order, cfg, epoch, dropout_rng));
        if (on_epoch) on_epoch(result.log.back());
    }
    return result;
}

inline train_result train_patches(const std::vector<feature_patch>& patches, const train_config& cfg) {
    return train_patches(patches, cfg, init_weights(cfg.seed));
}

} // namespace rsdf::nn
