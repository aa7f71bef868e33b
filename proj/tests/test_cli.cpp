#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gazectl/checkpoint.hpp"
#include "gazectl/io.hpp"

namespace fs = std::filesystem;
using namespace gazectl;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result gazectl_run(const std::string& args) {
    const std::string cmd = std::string(GAZECTL_BIN) + " " + args + " 2>/dev/null";
    Result r;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

class Cli : public ::testing::Test {
   protected:
    static void SetUpTestSuite() {
        dir_ = fs::temp_directory_path() / "gazectl_cli_test";
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        const auto r = gazectl_run("synth --variant 3d --m 4 --personas 2 --temperature 0 --seed 5 --out " + path("corpus.jsonl"));
        ASSERT_EQ(r.code, 0);
    }
    static void TearDownTestSuite() { fs::remove_all(dir_); }

    static std::string path(const std::string& name) { return (dir_ / name).string(); }

    static inline fs::path dir_;
};

}  // namespace

TEST_F(Cli, ScenarioCounts) {
    EXPECT_EQ(gazectl_run("scenarios --variant 2d --count-only").out, "128\n");
    EXPECT_EQ(gazectl_run("scenarios --variant 3d --count-only").out, "120\n");
}

TEST_F(Cli, ScenariosWriteSpecsAndTimeline) {
    const auto r = gazectl_run("scenarios --variant 2d --specs-out " + path("specs.json") + " --timeline-out " + path("tl2d.jsonl"));
    ASSERT_EQ(r.code, 0);
    const auto summary = json::parse(r.out);
    EXPECT_EQ(summary["frames"], 15360);
    EXPECT_EQ(load_json(path("specs.json")).size(), 128u);
    EXPECT_EQ(load_timeline(path("tl2d.jsonl")).frames.size(), 15360u);
    EXPECT_EQ(gazectl_run("validate " + path("tl2d.jsonl")).code, 0);
}

TEST_F(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(gazectl_run("").code, 1);
    EXPECT_EQ(gazectl_run("dance").code, 1);
    EXPECT_EQ(gazectl_run("synth --out " + path("x.jsonl")).code, 1) << "--seed is required";
    EXPECT_EQ(gazectl_run("fit-baseline --data " + path("corpus.jsonl") + " --out " + path("w.json")).code, 1);
    EXPECT_EQ(gazectl_run("run --variant 2d").code, 1) << "a predictor source is required";
    EXPECT_EQ(gazectl_run("scenarios --variant 4d --count-only").code, 1);
    EXPECT_EQ(gazectl_run("--help").code, 0);
}

TEST_F(Cli, SynthIsReproducibleFromSeed) {
    ASSERT_EQ(gazectl_run("synth --variant 3d --m 4 --personas 2 --temperature 0 --seed 5 --out " + path("again.jsonl")).code, 0);
    EXPECT_EQ(slurp(path("corpus.jsonl")), slurp(path("again.jsonl")));
    ASSERT_EQ(gazectl_run("synth --variant 3d --m 4 --personas 2 --temperature 0 --seed 6 --out " + path("other.jsonl")).code, 0);
    EXPECT_NE(slurp(path("corpus.jsonl")), slurp(path("other.jsonl")));
}

TEST_F(Cli, ValidateReportsBadWidthWithLineNumber) {
    const auto good = path("corpus.jsonl");
    const auto r = gazectl_run("validate " + good);
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(json::parse(r.out)["kind"], "dataset");

    std::ifstream in(good);
    std::ofstream out(path("bad.jsonl"));
    std::string line;
    for (int i = 1; std::getline(in, line); ++i) {
        if (i == 4) {
            const auto at = line.find("[[");
            line.insert(at + 2, "0.5,");
        }
        out << line << '\n';
    }
    out.close();
    const std::string cmd = std::string(GAZECTL_BIN) + " validate " + path("bad.jsonl") + " 2>&1";
    FILE* p = ::popen(cmd.c_str(), "r");
    char buf[1024] = {};
    const auto n = std::fread(buf, 1, sizeof buf - 1, p);
    const int status = ::pclose(p);
    const std::string msg(buf, n);
    EXPECT_EQ(WEXITSTATUS(status), 2);
    EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("ShapeMismatch"), std::string::npos) << msg;
    EXPECT_EQ(gazectl_run("validate " + path("missing.jsonl")).code, 1);
}

TEST_F(Cli, TrainEvalRunWithCheckpoint) {
    const auto ckpt = path("model.gzf");
    auto r = gazectl_run("train --data " + path("corpus.jsonl") + " --units 8 --layers 1 --max-epochs 2 --seed 1 --out " + ckpt +
                         " --history " + path("hist.csv"));
    ASSERT_EQ(r.code, 0);
    EXPECT_TRUE(json::parse(r.out).contains("eval_topn"));
    EXPECT_EQ(line_count(path("hist.csv")), 3u);
    EXPECT_EQ(checkpoint_header(read_file_bytes(ckpt))["extra"]["variant"], "3d");

    r = gazectl_run("validate " + ckpt);
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(json::parse(r.out)["kind"], "checkpoint");

    r = gazectl_run("eval --checkpoint " + ckpt + " --data " + path("corpus.jsonl"));
    ASSERT_EQ(r.code, 0);
    const auto scored = json::parse(r.out);
    EXPECT_EQ(scored["topn"].size(), 3u);
    EXPECT_EQ(scored["confusion"].size(), 3u);

    r = gazectl_run("run --checkpoint " + ckpt + " --log " + path("cmds.jsonl"));
    ASSERT_EQ(r.code, 0);
    const auto summary = json::parse(r.out);
    EXPECT_EQ(line_count(path("cmds.jsonl")), summary["ticks"].get<std::size_t>());
    EXPECT_EQ(summary["predictor"], "lstm m=4");

    auto bytes = read_file_bytes(ckpt);
    bytes[bytes.size() / 2] ^= 0x10;
    std::ofstream(path("broken.gzf"), std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    EXPECT_EQ(gazectl_run("validate " + path("broken.gzf")).code, 2);
    EXPECT_EQ(gazectl_run("run --variant 2d --checkpoint " + ckpt).code, 2) << "variant mismatch is a data error";
}

TEST_F(Cli, KFoldBaselineReportsRegenerate) {
    const auto out_dir = path("kfold");
    auto r = gazectl_run("kfold --data " + path("corpus.jsonl") + " --arch ga-sum --k 3 --population 6 --generations 3 --seed 2 --out-dir " +
                         out_dir);
    ASSERT_EQ(r.code, 0);
    const auto csv = slurp(fs::path(out_dir) / "report.csv");
    EXPECT_EQ(r.out, csv);
    EXPECT_EQ(line_count(fs::path(out_dir) / "report.csv"), 1u + 2 * 3);
    const auto folds = (fs::path(out_dir) / "ga-sum-3d-m4.json").string();
    ASSERT_TRUE(fs::exists(folds));
    EXPECT_EQ(load_json(folds)["folds"].size(), 3u);

    r = gazectl_run("eval " + folds + " --out-dir " + path("regen"));
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(slurp(fs::path(path("regen")) / "report.csv"), csv);
    EXPECT_EQ(slurp(fs::path(path("regen")) / "plot.json"), slurp(fs::path(out_dir) / "plot.json"));
}

TEST_F(Cli, BaselineFitThenRun) {
    auto r = gazectl_run("fit-baseline --data " + path("corpus.jsonl") + " --form sum --population 6 --generations 3 --seed 3 --out " +
                         path("weights.json"));
    ASSERT_EQ(r.code, 0);
    EXPECT_GT(json::parse(r.out)["train_accuracy"].get<double>(), 0.0);
    r = gazectl_run("eval --baseline " + path("weights.json") + " --data " + path("corpus.jsonl"));
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(json::parse(r.out)["baseline_topn"].size(), 3u);
    r = gazectl_run("run --variant 3d --baseline " + path("weights.json") + " --min-dwell 0.4 --switch-margin 0.2");
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(json::parse(r.out)["predictor"], "baseline sum");
    EXPECT_EQ(gazectl_run("run --variant 3d --baseline " + path("weights.json") + " --switch-margin 3").code, 1);
}

TEST_F(Cli, ConfigFileSuppliesDefaults) {
    std::ofstream(path("defaults.toml")) << "[scenarios]\nvariant = \"3d\"\ncount-only = true\n";
    EXPECT_EQ(gazectl_run("--config " + path("defaults.toml") + " scenarios").out, "120\n");
    EXPECT_EQ(gazectl_run("--config " + path("defaults.toml") + " scenarios --variant 2d").out, "128\n");
}
