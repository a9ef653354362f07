#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "rsdf/nn/model_io.hpp"
#include "rsdf/nn/train.hpp"
#include "rsdf/synth.hpp"

using namespace rsdf;
using namespace rsdf::nn;

namespace {

// Label is 1 when the first channel's mean exceeds 0.5; the other channels are noise.
std::vector<feature_patch> toy_patches(std::size_t n, std::uint64_t seed) {
    auto rng = make_rng(seed, {5});
    std::vector<feature_patch> out(n);
    for (auto& p : out) {
        const double level = uniform01(rng);
        double sum = 0;
        for (std::size_t k = 0; k < patch_plane; ++k) {
            const double v = std::clamp(level + uniform(rng, -0.1, 0.1), 0.0, 1.0);
            p.data[k] = static_cast<float>(v);
            sum += p.data[k];
        }
        for (std::size_t k = patch_plane; k < patch_size; ++k) p.data[k] = static_cast<float>(uniform01(rng));
        p.label = sum / patch_plane > 0.5 ? 1 : 0;
    }
    return out;
}

double accuracy(const network<float>& net, const std::vector<feature_patch>& patches) {
    std::size_t ok = 0;
    for (const auto& p : patches) {
        const auto pr = predict(net, p);
        ok += (pr[0] > pr[1] ? 1 : 0) == *p.label;
    }
    return static_cast<double>(ok) / static_cast<double>(patches.size());
}

} // namespace

TEST(Sgd, SingleStepWithoutMomentum) {
    train_config cfg;
    cfg.momentum = 0;
    cfg.weight_decay = 0;
    cfg.lr_start = cfg.lr_end = 0.1;
    cfg.epochs = 1;
    network<float> net;
    network<double> grads, velocity;
    grads.fill(2.0);
    sgd_step(net, grads, velocity, cfg, 0);
    EXPECT_NEAR(net[fc5_b][0], -0.2, 1e-7);
}

TEST(Sgd, TwoMomentumSteps) {
    train_config cfg;
    cfg.weight_decay = 0;
    cfg.lr_start = cfg.lr_end = 0.1;
    cfg.epochs = 1;
    network<float> net;
    network<double> grads, velocity;
    const double g = 0.5;
    grads.fill(g);
    sgd_step(net, grads, velocity, cfg, 0);
    sgd_step(net, grads, velocity, cfg, 0);
    EXPECT_NEAR(net[conv2_w][3], -0.1 * g - 0.19 * g, 1e-7);
}

TEST(Sgd, WeightDecayPullsTowardZero) {
    train_config cfg;
    cfg.momentum = 0;
    cfg.weight_decay = 0.5;
    cfg.lr_start = cfg.lr_end = 0.1;
    cfg.epochs = 1;
    network<float> net;
    net.fill(2.0f);
    network<double> grads, velocity;
    sgd_step(net, grads, velocity, cfg, 0);
    EXPECT_NEAR(net[fc4_w][0], 2.0 - 0.1 * 0.5 * 2.0, 1e-6);
}

TEST(Schedule, GeometricFromStartToEnd) {
    train_config cfg;
    cfg.epochs = 100;
    EXPECT_DOUBLE_EQ(learning_rate(cfg, 0), 1.0);
    EXPECT_DOUBLE_EQ(learning_rate(cfg, 99), 0.001);
    cfg.epochs = 3;
    EXPECT_NEAR(learning_rate(cfg, 1), std::sqrt(0.001), 1e-12);
}

TEST(Augment, FlipTwiceIsIdentity) {
    const auto img = to_rgbd(generate_sample(synth_options{}, 0));
    const auto twice = flip_horizontal(flip_horizontal(img));
    EXPECT_EQ(twice.rgb, img.rgb);
    EXPECT_EQ(twice.depth, img.depth);
    EXPECT_EQ(*twice.gt, *img.gt);
}

TEST(Augment, FlippedMaskMirrorsPixelwise) {
    const auto img = to_rgbd(generate_sample(synth_options{}, 1));
    const auto f = flip_horizontal(img);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            EXPECT_EQ((*f.gt)[f.index(x, y)], (*img.gt)[img.index(img.width - 1 - x, y)]);
            EXPECT_EQ(f.depth[f.index(x, y)], img.depth[img.index(img.width - 1 - x, y)]);
        }
}

TEST(Augment, NeutralOptionsAreIdentity) {
    const auto img = to_rgbd(generate_sample(synth_options{}, 2));
    augment_options opt;
    opt.flip = false;
    opt.crop = false;
    opt.jitter_low = opt.jitter_high = 1.0;
    auto rng = make_rng(1);
    const auto out = augment(img, rng, opt);
    EXPECT_EQ(out.rgb, img.rgb);
    EXPECT_EQ(out.depth, img.depth);
    EXPECT_EQ(*out.gt, *img.gt);
}

TEST(Augment, CropKeepsMostOfEachDimension) {
    const auto img = to_rgbd(generate_sample(synth_options{}, 3));
    for (std::uint64_t s = 0; s < 20; ++s) {
        auto rng = make_rng(s);
        const auto out = augment(img, rng);
        EXPECT_GE(out.width, static_cast<int>(0.9 * img.width));
        EXPECT_GE(out.height, static_cast<int>(0.9 * img.height));
        EXPECT_TRUE(out.gt.has_value());
        EXPECT_EQ(out.gt->size(), out.pixel_count());
    }
}

TEST(Train, SeparableToyReachesHighAccuracy) {
    const auto patches = toy_patches(500, 1);
    // The default step size (1.0) kills the fc4 ReLUs on this problem; use settings that train.
    train_config cfg;
    cfg.epochs = 50;
    cfg.batch_size = 16;
    cfg.lr_start = 0.003;
    cfg.lr_end = 0.0003;
    cfg.dropout_keep = 0.9;
    const auto result = train_patches(patches, cfg);
    EXPECT_GE(accuracy(result.net, patches), 0.95);
    double first = 0, last = 0;
    for (int e = 0; e < 5; ++e) {
        first += result.log[static_cast<std::size_t>(e)].mean_loss;
        last += result.log[result.log.size() - 1 - static_cast<std::size_t>(e)].mean_loss;
    }
    EXPECT_LE(last, first);
}

TEST(Train, RepeatedPatchIsMemorized) {
    auto one = toy_patches(1, 2);
    std::vector<feature_patch> patches(64, one[0]);
    train_config cfg;
    cfg.epochs = 10;
    cfg.lr_start = 0.1;
    const auto result = train_patches(patches, cfg);
    EXPECT_LT(result.log.back().mean_loss, 0.01);
    for (std::size_t e = 3; e < result.log.size(); ++e) EXPECT_LE(result.log[e].mean_loss, result.log[e - 1].mean_loss + 1e-12);
}

TEST(Train, DeterministicGivenSeed) {
    const auto patches = toy_patches(128, 3);
    train_config cfg;
    cfg.epochs = 3;
    const auto a = train_patches(patches, cfg);
    const auto b = train_patches(patches, cfg);
    EXPECT_EQ(a.net, b.net);
    for (std::size_t e = 0; e < a.log.size(); ++e) EXPECT_EQ(a.log[e].mean_loss, b.log[e].mean_loss);
}

TEST(Train, PatchOrderDoesNotMatter) {
    auto patches = toy_patches(96, 4);
    train_config cfg;
    cfg.epochs = 3;
    cfg.weight_decay = 0;
    const auto a = train_patches(patches, cfg);
    auto rng = make_rng(77);
    shuffle(patches.begin(), patches.end(), rng);
    const auto b = train_patches(patches, cfg);
    EXPECT_EQ(a.log.back().mean_loss, b.log.back().mean_loss);
    EXPECT_EQ(a.net, b.net);
}

TEST(Train, RejectsEmptyOrUnlabeledData) {
    EXPECT_THROW(train_patches({}, train_config{}), config_error);
    std::vector<feature_patch> unlabeled(2);
    EXPECT_THROW(train_patches(unlabeled, train_config{}), config_error);
}

TEST(ModelIo, RoundTripIsBitExact) {
    const auto net = init_weights(12);
    const auto bytes = encode_model(net);
    const auto back = decode_model(bytes);
    EXPECT_EQ(encode_model(back), bytes);
    EXPECT_TRUE(back == net);

    const auto path = std::filesystem::temp_directory_path() / "rsdf_model_round_trip.rsdf";
    save_model(net, path);
    EXPECT_TRUE(load_model(path) == net);
}

TEST(ModelIo, RejectsCorruptFiles) {
    const auto bytes = encode_model(init_weights(13));

    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    EXPECT_THROW(decode_model(truncated), format_error);

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(decode_model(bad_magic), format_error);

    auto bad_version = bytes;
    bad_version[4] = 2;
    EXPECT_THROW(decode_model(bad_version), format_error);

    // First dimension of conv1.weight lives right after magic, version, count, name length,
    // the 12-byte name and the rank byte.
    auto bad_dim = bytes;
    bad_dim[4 + 4 + 4 + 2 + 12 + 1] = 7;
    try {
        decode_model(bad_dim);
        FAIL() << "expected a format error";
    } catch (const format_error& e) {
        EXPECT_NE(std::string(e.what()).find("conv1.weight"), std::string::npos) << e.what();
    }

    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(decode_model(trailing), format_error);
}
