#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "sr/image_io.hpp"
#include "sr/model.hpp"
#include "sr/pipeline.hpp"
#include "sr/rng.hpp"

namespace {

namespace fs = std::filesystem;

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Runs the tool with stdout/stderr captured to files.
RunResult run_tool(const std::string& args) {
    static int counter = 0;
    const fs::path base = fs::temp_directory_path() / ("sr_cli_" + std::to_string(counter++));
    const fs::path out = base.string() + ".out", err = base.string() + ".err";
    const std::string cmd =
        std::string(SRTOOL_BIN) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    fs::remove(out);
    fs::remove(err);
    return r;
}

class CliTest : public testing::Test {
  protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / "sr_cli_work";
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    std::string path(const char* name) const { return (dir_ / name).string(); }
    fs::path dir_;
};

sr::Tensor random_image(int h, int w, std::uint64_t seed) {
    sr::Tensor t({3, h, w});
    sr::Rng rng(seed);
    for (double& v : t.data) v = rng.next_unit();
    return t;
}

sr::ModelConfig small_config() {
    sr::ModelConfig cfg;
    cfg.feature_width = 4;
    cfg.expansion_width = 6;
    cfg.n_residual_blocks = 1;
    cfg.kernel_size = 3;
    cfg.tile_size = 12;
    cfg.seed = 5;
    return cfg;
}

// The identity network reduces the whole pipeline to bicubic interpolation,
// so `upscale` and `baseline` must produce byte-identical images.
TEST_F(CliTest, IdentityModelUpscaleEqualsBaseline) {
    const sr::ModelConfig cfg = small_config();
    sr::save_weights(sr::make_identity_model(cfg), path("id.srw"));
    sr::write_png(random_image(25, 31, 3), path("in.png"));

    RunResult up = run_tool("upscale --model " + path("id.srw") + " --in " + path("in.png") +
                            " --out " + path("sr.png") + " --scale 3 --tile 12");
    ASSERT_EQ(up.exit_code, 0) << up.err;
    RunResult base = run_tool("baseline --in " + path("in.png") + " --out " + path("bi.png") +
                              " --scale 3");
    ASSERT_EQ(base.exit_code, 0) << base.err;
    EXPECT_EQ(slurp(path("sr.png")), slurp(path("bi.png")));

    const sr::Tensor result = sr::read_png(path("sr.png"));
    EXPECT_EQ(result.height(), 75);
    EXPECT_EQ(result.width(), 93);
}

TEST_F(CliTest, TrainIsDeterministicForFixedSeed) {
    fs::create_directories(path("data"));
    sr::write_png(random_image(30, 30, 7), path("data/x.png"));
    const std::string common = "train --data " + path("data") +
                               " --scale 3 --tile 9 --feature-width 4 --expansion-width 6"
                               " --blocks 1 --kernel 3 --max-epochs 2 --batch-size 4";

    ASSERT_EQ(run_tool(common + " --seed 7 --out " + path("a.srw")).exit_code, 0);
    ASSERT_EQ(run_tool(common + " --seed 7 --out " + path("b.srw")).exit_code, 0);
    ASSERT_EQ(run_tool(common + " --seed 8 --out " + path("c.srw")).exit_code, 0);
    EXPECT_EQ(slurp(path("a.srw")), slurp(path("b.srw")));
    EXPECT_NE(slurp(path("a.srw")), slurp(path("c.srw")));
}

TEST_F(CliTest, PaddingModeChangesTrainedWeights) {
    fs::create_directories(path("data"));
    sr::write_png(random_image(30, 30, 9), path("data/x.png"));
    const std::string common = "train --data " + path("data") +
                               " --scale 3 --tile 9 --feature-width 4 --expansion-width 6"
                               " --blocks 1 --kernel 3 --max-epochs 2 --batch-size 4 --seed 7";

    ASSERT_EQ(run_tool(common + " --padding mirror --out " + path("m.srw")).exit_code, 0);
    ASSERT_EQ(run_tool(common + " --padding zero --out " + path("z.srw")).exit_code, 0);
    EXPECT_NE(slurp(path("m.srw")), slurp(path("z.srw")));
}

TEST_F(CliTest, UnknownConfigKeyIsRejectedByName) {
    {
        std::ofstream cfg(path("cfg.json"));
        cfg << R"({"feature_width": 4, "learning_rte": 0.1})";
    }
    fs::create_directories(path("data"));
    RunResult r = run_tool("train --data " + path("data") + " --out " + path("m.srw") +
                           " --config " + path("cfg.json"));
    EXPECT_NE(r.exit_code, 0);
    EXPECT_NE(r.err.find("learning_rte"), std::string::npos);
}

TEST_F(CliTest, ConfigFileValuesAreOverriddenByFlags) {
    {
        std::ofstream cfg(path("cfg.json"));
        cfg << R"({"feature_width": 4, "expansion_width": 6, "n_residual_blocks": 1,)"
            << R"( "kernel_size": 3, "tile_size": 9, "scale": 3, "batch_size": 4,)"
            << R"( "max_epochs": 1, "seed": 7})";
    }
    fs::create_directories(path("data"));
    sr::write_png(random_image(30, 30, 11), path("data/x.png"));

    // Same config file, different --seed flag: the flag must win.
    const std::string common =
        "train --data " + path("data") + " --config " + path("cfg.json") + " --out ";
    ASSERT_EQ(run_tool(common + path("a.srw")).exit_code, 0);
    ASSERT_EQ(run_tool(common + path("b.srw") + " --seed 8").exit_code, 0);
    EXPECT_NE(slurp(path("a.srw")), slurp(path("b.srw")));
}

TEST_F(CliTest, MissingSubcommandFails) {
    RunResult r = run_tool("");
    EXPECT_NE(r.exit_code, 0);
}

TEST_F(CliTest, ZeroTileIsAUsageError) {
    sr::write_png(random_image(20, 20, 13), path("in.png"));
    RunResult r = run_tool("seam --in " + path("in.png") + " --tile 0");
    EXPECT_NE(r.exit_code, 0);
    EXPECT_NE(r.err.find("tile"), std::string::npos);
}

TEST_F(CliTest, SeamOfConstantImageIsZero) {
    sr::Tensor img({3, 24, 24});
    for (double& v : img.data) v = 0.5;
    sr::write_png(img, path("const.png"));
    RunResult r = run_tool("seam --in " + path("const.png") + " --tile 8");
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_NE(r.out.find("seam_index=0"), std::string::npos);
}

TEST_F(CliTest, EvaluateSerializesInfiniteRows) {
    fs::create_directories(path("data"));
    sr::Tensor img({3, 24, 24});
    for (double& v : img.data) v = 128.0 / 255.0;
    sr::write_png(img, path("data/const.png"));

    RunResult r = run_tool("evaluate --data " + path("data") + " --scale 3 --model none --out " +
                           path("report.csv"));
    ASSERT_EQ(r.exit_code, 0) << r.err;
    const std::string csv = slurp(path("report.csv"));
    EXPECT_NE(csv.find("const.png,inf,"), std::string::npos);
}

TEST_F(CliTest, EvaluateEmptyDirectoryFails) {
    fs::create_directories(path("data"));
    RunResult r = run_tool("evaluate --data " + path("data") + " --scale 3 --model none");
    EXPECT_NE(r.exit_code, 0);
    EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST_F(CliTest, ExperimentRandomIsReproducible) {
    fs::create_directories(path("data"));
    sr::write_png(random_image(40, 40, 15), path("data/x.png"));
    const std::string common = "experiment-random --data " + path("data") +
                               " --scale 3 --tile 9 --feature-width 4 --expansion-width 6"
                               " --blocks 1 --kernel 3 --max-steps 6 --batch-size 4 --seed 7"
                               " --out ";
    RunResult a = run_tool(common + path("a.json"));
    ASSERT_EQ(a.exit_code, 0) << a.err;
    RunResult b = run_tool(common + path("b.json"));
    ASSERT_EQ(b.exit_code, 0) << b.err;
    // Reports are identical up to wall-clock fields; compare the loss series.
    auto strip_seconds = [](std::string s) {
        std::string out;
        std::istringstream lines(s);
        for (std::string line; std::getline(lines, line);)
            if (line.find("seconds") == std::string::npos) out += line + "\n";
        return out;
    };
    EXPECT_EQ(strip_seconds(slurp(path("a.json"))), strip_seconds(slurp(path("b.json"))));
}

}  // namespace
