#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(RSDF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root = fs::temp_directory_path() / "rsdf_test_cli";
        fs::remove_all(root);
        fs::create_directories(root);
        ASSERT_EQ(run("synth --n 3 --seed 5 --out " + (root / "data").string()), 0);
    }
    static fs::path data(const std::string& kind, const std::string& name = "0000.png") { return root / "data" / kind / name; }
    static inline fs::path root;
};

} // namespace

TEST_F(Cli, UsageErrorsExitWithTwo) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("nonsense"), 2);
    EXPECT_EQ(run("refine --map x.png"), 2);
    EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, SynthWritesThreeFolders) {
    for (const char* kind : {"rgb", "depth", "gt"})
        for (const char* name : {"0000.png", "0001.png", "0002.png"}) EXPECT_TRUE(fs::exists(data(kind, name))) << kind << "/" << name;
}

TEST_F(Cli, SegmentIsByteDeterministic) {
    const auto a = root / "seg_a", b = root / "seg_b";
    const std::string in = "segment --rgb " + data("rgb").string() + " --depth " + data("depth").string() + " --n 200";
    ASSERT_EQ(run(in + " --out " + a.string()), 0);
    ASSERT_EQ(run(in + " --out " + b.string()), 0);
    for (const char* f : {"labels.png", "stats.csv", "config.json"}) {
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
}

TEST_F(Cli, MissingInputExitsWithTwo) {
    EXPECT_EQ(run("segment --rgb " + (root / "nope.png").string() + " --depth " + data("depth").string() + " --out " +
                  (root / "seg_missing").string()),
              2);
}

TEST_F(Cli, CorruptModelExitsWithThree) {
    const auto model = root / "bad.rsdf";
    { std::ofstream(model) << "RSDFgarbage"; }
    EXPECT_EQ(run("infer --model " + model.string() + " --data " + (root / "data").string() + " --out " +
                  (root / "infer_bad").string()),
              3);
}

TEST_F(Cli, RefineWithGroundTruthThenEval) {
    const auto out = root / "refined";
    fs::create_directories(out);
    ASSERT_EQ(run("refine --map " + data("gt").string() + " --rgb " + data("rgb").string() + " --depth " +
                  data("depth").string() + " --out " + (out / "0000.png").string()),
              0);
    EXPECT_TRUE(fs::exists(out / "0000.config.json"));
    const auto gt_dir = root / "gt_one";
    fs::create_directories(gt_dir);
    fs::copy_file(data("gt"), gt_dir / "0000.png", fs::copy_options::overwrite_existing);
    const auto ev = root / "eval_refined";
    ASSERT_EQ(run("eval --pred " + out.string() + " --gt " + gt_dir.string() + " --out " + ev.string()), 0);
    std::istringstream summary(slurp(ev / "summary.csv"));
    std::string header, row;
    std::getline(summary, header);
    std::getline(summary, row);
    std::vector<std::string> fields;
    std::stringstream ss(row);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    ASSERT_EQ(fields.size(), 5u);
    EXPECT_GE(std::stod(fields[2]), 0.98);
}

TEST_F(Cli, SolverFailureExitsWithFour) {
    const auto cfg = root / "tight.json";
    { std::ofstream(cfg) << R"({"cg_tol": 1e-300, "cg_max_iter": 1})"; }
    EXPECT_EQ(run("refine --config " + cfg.string() + " --map " + data("gt").string() + " --rgb " + data("rgb").string() +
                  " --depth " + data("depth").string() + " --out " + (root / "tight.png").string()),
              4);
}

TEST_F(Cli, UnknownConfigKeyIsRejected) {
    const auto cfg = root / "typo.json";
    { std::ofstream(cfg) << R"({"alpah": 0.5})"; }
    EXPECT_EQ(run("refine --config " + cfg.string() + " --map " + data("gt").string() + " --rgb " + data("rgb").string() +
                  " --depth " + data("depth").string() + " --out " + (root / "typo.png").string()),
              2);
}

TEST_F(Cli, EvalNameMismatchExitsWithTwo) {
    const auto pred = root / "pred_mismatch";
    fs::create_directories(pred);
    fs::copy_file(data("gt"), pred / "0000.png", fs::copy_options::overwrite_existing);
    fs::copy_file(data("gt", "0001.png"), pred / "other.png", fs::copy_options::overwrite_existing);
    EXPECT_EQ(run("eval --pred " + pred.string() + " --gt " + (root / "data" / "gt").string() + " --out " +
                  (root / "eval_mismatch").string()),
              2);
}

TEST_F(Cli, TrainAndInferAreDeterministic) {
    const std::string train = "train --data " + (root / "data").string() + " --epochs 2 --patches-per-image 16 --seed 3 --out ";
    ASSERT_EQ(run(train + (root / "model_a").string()), 0);
    ASSERT_EQ(run(train + (root / "model_b").string()), 0);
    for (const char* f : {"model.rsdf", "loss.csv", "config.json"}) EXPECT_EQ(slurp(root / "model_a" / f), slurp(root / "model_b" / f)) << f;

    std::istringstream loss(slurp(root / "model_a" / "loss.csv"));
    std::string line;
    std::getline(loss, line);
    EXPECT_EQ(line, "epoch,lr,mean_loss,train_accuracy");
    int rows = 0;
    while (std::getline(loss, line)) ++rows;
    EXPECT_EQ(rows, 2);

    const std::string infer = "infer --model " + (root / "model_a" / "model.rsdf").string() + " --data " +
                              (root / "data").string() + " --jobs 1 --save-init --out ";
    ASSERT_EQ(run(infer + (root / "infer_a").string()), 0);
    ASSERT_EQ(run(infer + (root / "infer_b").string()), 0);
    for (const char* f : {"0000.png", "0002.png", "init/0001.png"}) EXPECT_EQ(slurp(root / "infer_a" / f), slurp(root / "infer_b" / f)) << f;
}
