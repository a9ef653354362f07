// rsdf command-line tool: synth, segment, train, infer, refine, eval.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rsdf/rsdf.hpp"

namespace fs = std::filesystem;

namespace {

enum exit_code : int { exit_ok = 0, exit_input = 2, exit_model = 3, exit_numerical = 4 };

/// Thrown for failures while loading or validating a model file.
class model_error : public rsdf::error {
public:
    using rsdf::error::error;
};

struct common_options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
};

struct train_options {
    std::vector<std::string> data;
    std::string out = "run";
    bool resume = false;
    std::optional<int> epochs;
    std::optional<int> batch_size;
    std::optional<int> patches_per_image;
    bool balance = false;
    std::optional<double> lr_start;
    std::optional<double> lr_end;
    std::optional<double> dropout_keep;
    bool no_augment = false;
};

struct infer_options {
    std::string model;
    std::string data;
    std::string rgb;
    std::string depth;
    std::string out = "pred";
    bool no_propagation = false;
    bool save_init = false;
};

struct refine_options {
    std::string map;
    std::string rgb;
    std::string depth;
    std::string out;
    std::string seeds_csv;
    std::string affinity_mtx;
};

struct eval_options {
    std::string pred;
    std::string gt;
    std::string out = "metrics";
    std::string name = "dataset";
};

struct synth_cli_options {
    int n = 10;
    std::string out = "synth";
    std::uint64_t seed = 7;
    int width = 64;
    int height = 64;
};

struct segment_options {
    std::string rgb;
    std::string depth;
    std::string out = "segment";
    std::optional<int> n;
    bool features = false;
};

rsdf::pipeline_config load_config(const common_options& common) {
    rsdf::pipeline_config cfg;
    if (!common.config_path.empty()) {
        std::ifstream in(common.config_path);
        if (!in) throw rsdf::config_error("cannot open config " + common.config_path);
        try {
            nlohmann::json::parse(in).get_to(cfg);
        } catch (const nlohmann::json::exception& e) {
            throw rsdf::config_error(common.config_path + ": " + e.what());
        }
    }
    if (common.seed) {
        cfg.seed = *common.seed;
        cfg.train.seed = *common.seed;
    }
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw rsdf::format_error("cannot write " + path.string());
    out << text;
}

void echo_config(const fs::path& path, const rsdf::pipeline_config& cfg) {
    write_text(path, nlohmann::json(cfg).dump(2) + "\n");
}

rsdf::nn::network<float> load_model_checked(const fs::path& path) {
    try {
        return rsdf::nn::load_model(path);
    } catch (const rsdf::format_error& e) {
        throw model_error(e.what());
    }
}

int report_problems(const std::vector<std::string>& problems) {
    for (const auto& p : problems) std::cerr << "rsdf: " << p << '\n';
    return exit_input;
}

std::string loss_row(const rsdf::nn::epoch_stats& s, int epoch_offset) {
    std::ostringstream os;
    os << std::setprecision(9) << s.epoch + epoch_offset << ',' << s.lr << ',' << s.mean_loss << ',' << s.accuracy
       << '\n';
    return os.str();
}

int cmd_train(const common_options& common, const train_options& opt) {
    auto cfg = load_config(common);
    if (opt.epochs) cfg.train.epochs = *opt.epochs;
    if (opt.batch_size) cfg.train.batch_size = *opt.batch_size;
    if (opt.patches_per_image) cfg.train.patches_per_image = *opt.patches_per_image;
    if (opt.balance) cfg.train.balance_classes = true;
    if (opt.lr_start) cfg.train.lr_start = *opt.lr_start;
    if (opt.lr_end) cfg.train.lr_end = *opt.lr_end;
    if (opt.dropout_keep) cfg.train.dropout_keep = *opt.dropout_keep;
    if (opt.no_augment) {
        cfg.train.augmentation.flip = false;
        cfg.train.augmentation.crop = false;
        cfg.train.augmentation.jitter = false;
    }
    cfg.validate(true);

    std::vector<std::string> problems;
    std::vector<rsdf::dataset_entry> entries;
    if (opt.data.empty()) problems.push_back("no --data directory given");
    for (const auto& root : opt.data) {
        auto listing = rsdf::list_dataset(root, true);
        problems.insert(problems.end(), listing.problems.begin(), listing.problems.end());
        entries.insert(entries.end(), listing.entries.begin(), listing.entries.end());
    }
    if (!problems.empty()) return report_problems(problems);

    std::vector<rsdf::rgbd_image> images(entries.size());
    rsdf::parallel_for(entries.size(), common.jobs, [&](std::size_t i) {
        images[i] = rsdf::load_rgbd(entries[i].rgb, entries[i].depth, entries[i].gt);
    });

    const fs::path out_dir = opt.out;
    fs::create_directories(out_dir);
    const fs::path model_path = out_dir / "model.rsdf";
    const fs::path log_path = out_dir / "loss.csv";

    rsdf::nn::network<float> initial;
    int epoch_offset = 0;
    if (opt.resume && fs::exists(model_path)) {
        initial = load_model_checked(model_path);
        std::ifstream prev(log_path);
        std::string line;
        int rows = -1;  // header
        while (std::getline(prev, line))
            if (!line.empty()) ++rows;
        epoch_offset = std::max(rows, 0);
        rsdf::log_info("resuming from " + model_path.string() + " after " + std::to_string(epoch_offset) + " epochs");
    } else {
        initial = rsdf::nn::init_weights(cfg.train.seed);
        write_text(log_path, "epoch,lr,mean_loss,train_accuracy\n");
    }
    echo_config(out_dir / "config.json", cfg);

    std::ofstream log_file(log_path, std::ios::app | std::ios::binary);
    const auto result = rsdf::train_images(
        images, cfg, std::move(initial),
        [&](const rsdf::nn::epoch_stats& s) {
            log_file << loss_row(s, epoch_offset) << std::flush;
            std::ostringstream msg;
            msg << "epoch " << s.epoch + epoch_offset << " lr " << s.lr << " loss " << s.mean_loss << " acc "
                << s.accuracy;
            rsdf::log_info(msg.str());
        },
        common.jobs);
    rsdf::nn::save_model(result.net, model_path);
    return exit_ok;
}

int cmd_infer(const common_options& common, const infer_options& opt) {
    auto cfg = load_config(common);
    cfg.validate(true);
    const auto net = load_model_checked(opt.model);

    std::vector<rsdf::dataset_entry> entries;
    if (!opt.data.empty()) {
        auto listing = rsdf::list_dataset(opt.data, false);
        if (!listing.problems.empty()) return report_problems(listing.problems);
        entries = std::move(listing.entries);
    } else if (!opt.rgb.empty() && !opt.depth.empty()) {
        entries.push_back({fs::path(opt.rgb).filename().string(), opt.rgb, opt.depth, std::nullopt});
    } else {
        return report_problems({"infer needs --data DIR or both --rgb and --depth"});
    }

    const fs::path out_dir = opt.out;
    fs::create_directories(out_dir);
    if (opt.save_init) fs::create_directories(out_dir / "init");
    echo_config(out_dir / "config.json", cfg);

    rsdf::parallel_for(entries.size(), common.jobs, [&](std::size_t i) {
        const auto img = rsdf::load_rgbd(entries[i].rgb, entries[i].depth);
        const auto pred = rsdf::predict_image(img, net, cfg, !opt.no_propagation);
        rsdf::write_saliency_png(out_dir / entries[i].name, pred.final_map());
        if (opt.save_init) rsdf::write_saliency_png(out_dir / "init" / entries[i].name, pred.initial);
    });
    return exit_ok;
}

int cmd_refine(const common_options& common, const refine_options& opt) {
    auto cfg = load_config(common);
    cfg.validate(false);
    const auto img = rsdf::load_rgbd(opt.rgb, opt.depth);
    const auto external = rsdf::read_gray_png(opt.map);
    const auto r = rsdf::refine_external(external, img, cfg.slic(), cfg.propagation());
    if (r.outcome.seeds.degenerate || r.outcome.map.degenerate)
        std::cerr << "rsdf warning: degenerate input map; refined output is " << (r.outcome.map.degenerate ? "all zeros" : "seeded on one class only") << '\n';

    const fs::path out = opt.out;
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    rsdf::write_saliency_png(out, r.outcome.map.pixels);
    echo_config(fs::path(out).replace_extension(".config.json"), cfg);

    if (!opt.seeds_csv.empty()) {
        std::ofstream csv(opt.seeds_csv, std::ios::binary);
        std::vector<double> p_non(r.p_salient.size());
        for (std::size_t i = 0; i < p_non.size(); ++i) p_non[i] = 1.0 - r.p_salient[i];
        rsdf::write_seed_csv(csv, r.p_salient, p_non, r.outcome.seeds, r.outcome.map.region_scores);
    }
    if (!opt.affinity_mtx.empty()) {
        std::ofstream mtx(opt.affinity_mtx, std::ios::binary);
        const auto st = rsdf::compute_region_stats(r.seg, img);
        rsdf::write_matrix_market(mtx, rsdf::build_affinity(st, rsdf::adjacency(r.seg), cfg.delta1, cfg.delta2).a);
    }
    return exit_ok;
}

std::set<std::string> png_names(const fs::path& dir) {
    std::set<std::string> names;
    if (!fs::is_directory(dir)) throw rsdf::format_error(dir.string() + ": not a directory");
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") names.insert(e.path().filename().string());
    return names;
}

int cmd_eval(const common_options& common, const eval_options& opt) {
    const auto preds = png_names(opt.pred);
    const auto gts = png_names(opt.gt);
    std::vector<std::string> problems;
    for (const auto& n : preds)
        if (!gts.count(n)) problems.push_back(opt.pred + "/" + n + ": no ground truth with this name");
    for (const auto& n : gts)
        if (!preds.count(n)) problems.push_back(opt.gt + "/" + n + ": no prediction with this name");
    if (preds.empty()) problems.push_back(opt.pred + ": no predictions");
    if (!problems.empty()) return report_problems(problems);

    const std::vector<std::string> names(preds.begin(), preds.end());
    std::vector<rsdf::gray_map> maps(names.size()), masks(names.size());
    rsdf::parallel_for(names.size(), common.jobs, [&](std::size_t i) {
        maps[i] = rsdf::read_gray_png(fs::path(opt.pred) / names[i]);
        auto raw = rsdf::read_gray_png(fs::path(opt.gt) / names[i]);
        const auto bin = rsdf::binarize_mask(raw.values);
        masks[i] = rsdf::gray_map(raw.width, raw.height);
        for (std::size_t p = 0; p < bin.size(); ++p) masks[i].values[p] = bin[p];
    });

    const auto curve = rsdf::pr_curve(maps, masks);
    const auto summary = rsdf::f_measure(maps, masks);
    fs::create_directories(opt.out);
    std::ofstream c(fs::path(opt.out) / "curve.csv", std::ios::binary);
    rsdf::write_curve_csv(c, curve);
    std::ofstream s(fs::path(opt.out) / "summary.csv", std::ios::binary);
    rsdf::write_summary_csv(s, opt.name, summary);
    std::cout << std::setprecision(6) << "f_measure " << summary.f_measure << " precision " << summary.mean_precision
              << " recall " << summary.mean_recall << " images " << summary.n_images << '\n';
    return exit_ok;
}

int cmd_synth(const common_options& common, const synth_cli_options& opt) {
    if (opt.n < 1) return report_problems({"--n must be at least 1"});
    rsdf::synth_options so;
    so.width = opt.width;
    so.height = opt.height;
    so.seed = common.seed.value_or(opt.seed);
    rsdf::parallel_for(static_cast<std::size_t>(opt.n), common.jobs, [&](std::size_t i) {
        rsdf::write_sample(opt.out, rsdf::sample_name(i), rsdf::generate_sample(so, i));
    });
    return exit_ok;
}

int cmd_segment(const common_options& common, const segment_options& opt) {
    auto cfg = load_config(common);
    if (opt.n) cfg.n_superpixels = *opt.n;
    cfg.validate(false);
    const auto img = rsdf::load_rgbd(opt.rgb, opt.depth);
    const auto seg = rsdf::slic_segment(img, cfg.n_superpixels, cfg.slic_compactness, cfg.slic_iterations);
    const auto st = rsdf::compute_region_stats(seg, img);

    const fs::path out_dir = opt.out;
    fs::create_directories(out_dir);
    std::vector<std::uint16_t> labels(seg.labels.begin(), seg.labels.end());
    rsdf::write_png(out_dir / "labels.png", seg.width, seg.height, 1, 16, labels);
    std::ofstream csv(out_dir / "stats.csv", std::ios::binary);
    csv << "index,L,a,b,depth,cx,cy,weight\n" << std::setprecision(12);
    for (std::size_t r = 0; r < st.size(); ++r)
        csv << r << ',' << st.mean_lab[r].L << ',' << st.mean_lab[r].a << ',' << st.mean_lab[r].b << ','
            << st.mean_depth[r] << ',' << st.centroid[r][0] << ',' << st.centroid[r][1] << ',' << st.weight[r] << '\n';
    echo_config(out_dir / "config.json", cfg);

    if (opt.features) {
        cfg.validate(true);
        std::ofstream bin(out_dir / "features.bin", std::ios::binary);
        for (const auto& patch : rsdf::extract_all(img, seg, st, cfg.features())) {
            const auto rec = rsdf::encode_feature_record(patch);
            bin.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
        }
    }
    std::cout << "regions " << seg.n_actual << '\n';
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"RGBD salient object detection: hyper-features, CNN fusion, Laplacian propagation"};
    app.require_subcommand(1);
    app.fallthrough();
    common_options common;
    app.add_option("--config", common.config_path, "JSON pipeline config (flags override it)");
    app.add_option("--seed", common.seed, "Seed for every random stream");
    app.add_option("--jobs", common.jobs, "Image-level worker threads (outputs are identical at --jobs 1)")
        ->check(CLI::PositiveNumber);

    train_options t;
    auto* train = app.add_subcommand("train", "Train the fusion network on root/{rgb,depth,gt}");
    train->add_option("--data", t.data, "Dataset root (repeatable)")->required();
    train->add_option("--out", t.out, "Output directory for model.rsdf, loss.csv, config.json");
    train->add_flag("--resume", t.resume, "Continue from OUT/model.rsdf and append to loss.csv");
    train->add_option("--epochs", t.epochs);
    train->add_option("--batch-size", t.batch_size);
    train->add_option("--patches-per-image", t.patches_per_image, "Superpixels sampled per image per epoch (0 = all)");
    train->add_flag("--balance", t.balance, "Sample salient and non-salient superpixels equally");
    train->add_option("--lr-start", t.lr_start);
    train->add_option("--lr-end", t.lr_end);
    train->add_option("--dropout-keep", t.dropout_keep, "Keep probability of the fc4 dropout");
    train->add_flag("--no-augment", t.no_augment);

    infer_options i;
    auto* infer = app.add_subcommand("infer", "Predict saliency maps");
    infer->add_option("--model", i.model)->required();
    infer->add_option("--data", i.data, "Dataset root with rgb/ and depth/");
    infer->add_option("--rgb", i.rgb);
    infer->add_option("--depth", i.depth);
    infer->add_option("--out", i.out, "Output directory");
    infer->add_flag("--no-propagation", i.no_propagation, "Write the raw CNN probability map");
    infer->add_flag("--save-init", i.save_init, "Also write the pre-propagation map to OUT/init/");

    refine_options r;
    auto* refine = app.add_subcommand("refine", "Refine an external saliency map by Laplacian propagation");
    refine->add_option("--map", r.map)->required();
    refine->add_option("--rgb", r.rgb)->required();
    refine->add_option("--depth", r.depth)->required();
    refine->add_option("--out", r.out)->required();
    refine->add_option("--seeds-csv", r.seeds_csv, "Dump region,p_sal,p_nonsal,seed_class,score");
    refine->add_option("--affinity", r.affinity_mtx, "Dump the affinity matrix (Matrix Market)");

    eval_options e;
    auto* eval = app.add_subcommand("eval", "Precision-recall curve and F-measure");
    eval->add_option("--pred", e.pred)->required();
    eval->add_option("--gt", e.gt)->required();
    eval->add_option("--out", e.out);
    eval->add_option("--name", e.name, "Dataset name for summary.csv");

    synth_cli_options s;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic RGBD dataset");
    synth->add_option("--n", s.n);
    synth->add_option("--out", s.out);
    synth->add_option("--width", s.width)->check(CLI::PositiveNumber);
    synth->add_option("--height", s.height)->check(CLI::PositiveNumber);

    segment_options g;
    auto* segment = app.add_subcommand("segment", "SLIC superpixels, label map and region statistics");
    segment->add_option("--rgb", g.rgb)->required();
    segment->add_option("--depth", g.depth)->required();
    segment->add_option("--out", g.out);
    segment->add_option("--n", g.n, "Superpixel count (any value)");
    segment->add_flag("--features", g.features, "Also dump feature records (requires --n 1024)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& ex) {
        // --help and --version come through here with a zero exit code.
        const int code = app.exit(ex);
        return code == 0 ? exit_ok : exit_input;
    }

    try {
        if (*train) return cmd_train(common, t);
        if (*infer) return cmd_infer(common, i);
        if (*refine) return cmd_refine(common, r);
        if (*eval) return cmd_eval(common, e);
        if (*synth) return cmd_synth(common, s);
        if (*segment) return cmd_segment(common, g);
    } catch (const model_error& ex) {
        std::cerr << "rsdf: model error: " << ex.what() << '\n';
        return exit_model;
    } catch (const rsdf::numerical_error& ex) {
        std::cerr << "rsdf: numerical error: " << ex.what() << '\n';
        return exit_numerical;
    } catch (const rsdf::error& ex) {
        std::cerr << "rsdf: " << ex.what() << '\n';
        return exit_input;
    } catch (const std::exception& ex) {
        std::cerr << "rsdf: " << ex.what() << '\n';
        return exit_input;
    }
    return exit_input;
}
