#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "dmbn/cli/app.hpp"

namespace fs = std::filesystem;
using dmbn::cli::json;

namespace {

struct Result {
    int code = 0;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "dmbn");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = dmbn::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::size_t line_count(const fs::path& p) {
    const std::string s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

const fs::path& workdir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / ("dmbn_cli_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

// Small dataset (4 train, 1 test) and checkpoints shared by the tests.
const std::string& dataset() {
    static const std::string p = [] {
        const auto r = run({"gen", "--push", "3", "--grasp", "2", "--seed", "4", "--out", path("data.mmds")});
        EXPECT_EQ(r.code, 0) << r.err;
        return path("data.mmds");
    }();
    return p;
}

const std::string& dmbn_ckpt() {
    static const std::string p = [] {
        const auto r = run({"train", "--data", dataset(), "--iters", "20", "--out", path("m.ckpt")});
        EXPECT_EQ(r.code, 0) << r.err;
        return path("m.ckpt");
    }();
    return p;
}

const std::string& mvae_ckpt() {
    static const std::string p = [] {
        const auto r = run({"train", "--model", "mvae", "--data", dataset(), "--epochs", "1", "--out", path("v.ckpt")});
        EXPECT_EQ(r.code, 0) << r.err;
        return path("v.ckpt");
    }();
    return p;
}

}  // namespace

TEST(CliGen, WritesDatasetSnapshotAndIsRepeatable) {
    const auto& p = dataset();
    const auto ds = dmbn::sim::load_dataset(fs::path(p));
    EXPECT_EQ(ds.interactions.size(), 5u);
    EXPECT_EQ(ds.split, 4u);
    EXPECT_TRUE(fs::exists(p + ".config.ini"));
    ASSERT_EQ(run({"gen", "--push", "3", "--grasp", "2", "--seed", "4", "--out", path("again.mmds")}).code, 0);
    EXPECT_EQ(slurp(p), slurp(path("again.mmds")));
}

TEST(CliGen, MissingOutputIsUsageError) {
    const auto r = run({"gen", "--push", "1"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--out"), std::string::npos);
}

TEST(CliGen, SnapshotReproducesTheRun) {
    const auto& p = dataset();
    std::string snap = slurp(p + ".config.ini");
    const auto at = snap.find("out=");
    ASSERT_NE(at, std::string::npos);
    snap.replace(at, snap.find('\n', at) - at, "out=\"" + path("from_snapshot.mmds") + "\"");
    std::ofstream(path("snap.ini")) << snap;
    ASSERT_EQ(run({"--config", path("snap.ini"), "gen"}).code, 0);
    EXPECT_EQ(slurp(p), slurp(path("from_snapshot.mmds")));
}

TEST(CliConfig, FileValuesAndFlagOverrides) {
    std::ofstream(path("gen.ini")) << "[gen]\npush = 2\ngrasp = 2\nseed = 9\n";
    ASSERT_EQ(run({"--config", path("gen.ini"), "gen", "--grasp", "1", "--out", path("cfg.mmds")}).code, 0);
    const auto ds = dmbn::sim::load_dataset(fs::path(path("cfg.mmds")));
    EXPECT_EQ(ds.interactions.size(), 3u);
    EXPECT_EQ(ds, dmbn::sim::generate_dataset(2, 1, 9));
}

TEST(CliConfig, UnknownKeyIsUsageError) {
    std::ofstream(path("typo.ini")) << "[gen]\npussh = 2\n";
    EXPECT_EQ(run({"--config", path("typo.ini"), "gen", "--out", path("typo.mmds")}).code, 1);
    std::ofstream(path("typo2.ini")) << "[eval.mirror]\ncheckpont = x\n";
    EXPECT_EQ(run({"--config", path("typo2.ini"), "gen", "--out", path("typo.mmds")}).code, 1);
}

TEST(CliUsage, UnknownCommandsAndOptions) {
    EXPECT_EQ(run({"bogus"}).code, 1);
    EXPECT_EQ(run({"eval", "bogus"}).code, 1);
    EXPECT_EQ(run({"eval"}).code, 1);
    EXPECT_EQ(run({"gen", "--frobnicate"}).code, 1);
    EXPECT_EQ(run({"train", "--data", dataset(), "--model", "gpt", "--iters", "1"}).code, 1);
    EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(CliTrain, DmbnLossDecreases) {
    const auto r = run({"train", "--data", dataset(), "--iters", "1000", "--seed", "7", "--out", path("d7.ckpt")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(path("d7.ckpt")));
    EXPECT_TRUE(fs::exists(path("d7.ckpt.config.ini")));
    std::ifstream is(path("d7.ckpt.loss.csv"));
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "iteration,mean_loss");
    std::vector<double> loss;
    while (std::getline(is, line)) loss.push_back(std::stod(line.substr(line.find(',') + 1)));
    ASSERT_EQ(loss.size(), 10u);
    EXPECT_LT(loss.back(), loss.front());
}

TEST(CliTrain, MvaeOneEpoch) {
    const auto& p = mvae_ckpt();
    EXPECT_EQ(dmbn::cli::checkpoint_kind(p), "MVAE");
    EXPECT_EQ(line_count(p + ".loss.csv"), 2u);
}

TEST(CliTrain, CorruptDatasetNamesExpectedMagic) {
    std::string bytes = slurp(dataset());
    bytes[0] = 'X';
    std::ofstream(path("bad.mmds"), std::ios::binary) << bytes;
    const auto r = run({"train", "--data", path("bad.mmds"), "--iters", "1", "--out", path("bad.ckpt")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("MMDS"), std::string::npos) << r.err;
}

TEST(CliTrain, DivergenceExitsWithNumericalCode) {
    const auto r = run({"train", "--data", dataset(), "--iters", "50", "--lr", "1e30", "--out", path("nan.ckpt")});
    EXPECT_EQ(r.code, 3) << r.err;
}

TEST(CliTrain, DefaultOutputRootFromEnvironment) {
    const fs::path root = workdir() / "root";
    ::setenv(dmbn::cli::kOutRootEnv, root.c_str(), 1);
    const auto r = run({"train", "--data", dataset(), "--iters", "2"});
    ::unsetenv(dmbn::cli::kOutRootEnv);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(root / "dmbn.ckpt"));
}

TEST(CliPredict, ImageOnlyEmitsBothModalities) {
    const std::string dir = path("pred");
    ASSERT_EQ(run({"predict", "--checkpoint", dmbn_ckpt(), "--data", dataset(), "--availability", "image=1,joint=0",
                   "--out-dir", dir})
                  .code,
              0);
    for (const char* f : {"image_mean.csv", "image_std.csv", "joint_mean.csv", "joint_std.csv"}) {
        EXPECT_EQ(line_count(fs::path(dir) / f), 51u) << f;
    }
    EXPECT_TRUE(fs::exists(fs::path(dir) / "config.ini"));
    const std::string first = slurp(fs::path(dir) / "joint_mean.csv");
    ASSERT_EQ(run({"predict", "--checkpoint", dmbn_ckpt(), "--data", dataset(), "--out-dir", dir}).code, 0);
    EXPECT_EQ(first, slurp(fs::path(dir) / "joint_mean.csv"));
}

TEST(CliPredict, Errors) {
    EXPECT_EQ(run({"predict", "--checkpoint", dmbn_ckpt(), "--data", dataset(), "--availability", "image=0,joint=0",
                   "--out-dir", path("p0")})
                  .code,
              1);
    EXPECT_EQ(run({"predict", "--checkpoint", dmbn_ckpt(), "--data", dataset(), "--availability", "force=1",
                   "--out-dir", path("p0")})
                  .code,
              1);
    EXPECT_EQ(run({"predict", "--checkpoint", dataset(), "--data", dataset(), "--out-dir", path("p0")}).code, 2);
}

TEST(CliPredict, MvaeAndScenarioSources) {
    const std::string dir = path("predv");
    ASSERT_EQ(run({"predict", "--checkpoint", mvae_ckpt(), "--data", dataset(), "--out-dir", dir}).code, 0);
    EXPECT_EQ(line_count(fs::path(dir) / "joint_mean.csv"), 51u);
    EXPECT_FALSE(fs::exists(fs::path(dir) / "joint_std.csv"));
    ASSERT_EQ(run({"predict", "--checkpoint", dmbn_ckpt(), "--scenario", "left/hide-arm/pull", "--out-dir", path("preds")})
                  .code,
              0);
    EXPECT_EQ(run({"predict", "--checkpoint", dmbn_ckpt(), "--scenario", "above/none/pull"}).code, 1);
}

TEST(CliEval, HorizonOneRowPerModelAndStep) {
    const std::string dir = path("horizon");
    const auto r = run({"eval", "horizon", "--dmbn", dmbn_ckpt(), "--mvae", mvae_ckpt(), "--data", dataset(), "--out-dir", dir});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(line_count(fs::path(dir) / "horizon.csv"), 1u + 2u * 25u * 3u);
    const json j = json::parse(slurp(fs::path(dir) / "horizon.json"));
    EXPECT_TRUE(j.contains("dmbn_spearman"));
    const std::string snap = slurp(fs::path(dir) / "config.ini");
    EXPECT_EQ(snap.rfind("[eval.horizon]\n", 0), 0u);
}

TEST(CliEval, MissingWithCheckpoints) {
    const std::string dir = path("missing");
    ASSERT_EQ(run({"eval", "missing", "--dmbn", dmbn_ckpt(), "--mvae", mvae_ckpt(), "--data", dataset(), "--out-dir", dir})
                  .code,
              0);
    EXPECT_EQ(line_count(fs::path(dir) / "missing.csv"), 13u);
    EXPECT_EQ(run({"eval", "missing", "--dmbn", dmbn_ckpt(), "--data", dataset(), "--out-dir", dir}).code, 1);
}

TEST(CliEval, NeedsCheckpointOrInlineTraining) {
    EXPECT_EQ(run({"eval", "mirror", "--data", dataset(), "--out-dir", path("m0")}).code, 1);
}

TEST(CliEval, AblateHasFourCountCellsPerModel) {
    const std::string dir = path("ablate");
    const auto r = run({"eval", "ablate", "--runs", "1", "--iters", "2", "--data", dataset(), "--out-dir", dir});
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(slurp(fs::path(dir) / "ablation.json"));
    for (const char* m : {"blended", "image-only"}) {
        int cells = 0, total = 0;
        for (const auto& [scenario, c] : j["cells"][m].items()) {
            cells += 2;
            total += c["success"].get<int>() + c["failure"].get<int>();
        }
        EXPECT_EQ(cells, 4);
        EXPECT_EQ(total, 2);
    }
    EXPECT_EQ(j["records"].size(), 4u);
}

TEST(CliEval, CheckpointExperimentsWriteArtifacts) {
    const std::string base = path("evals");
    for (const auto& [name, file] : std::vector<std::pair<std::string, std::string>>{{"latents", "latents.json"},
                                                                                      {"mirror", "mirror.json"},
                                                                                      {"retrieve", "retrieval.json"},
                                                                                      {"generalize", "generalize.csv"}}) {
        const std::string dir = base + "/" + name;
        const auto r = run({"eval", name, "--checkpoint", dmbn_ckpt(), "--data", dataset(), "--out-dir", dir});
        ASSERT_EQ(r.code, 0) << name << ": " << r.err;
        EXPECT_TRUE(fs::exists(fs::path(dir) / file)) << name;
        EXPECT_TRUE(fs::exists(fs::path(dir) / "config.ini")) << name;
    }
    EXPECT_EQ(run({"eval", "generalize", "--checkpoint", dmbn_ckpt(), "--data", dataset(), "--variants", "green",
                   "--out-dir", base + "/g2"})
                  .code,
              1);
}

TEST(CliEval, RepeatedRunsAreIdentical) {
    const std::string a = path("lat_a"), b = path("lat_b");
    ASSERT_EQ(run({"eval", "latents", "--checkpoint", dmbn_ckpt(), "--data", dataset(), "--out-dir", a}).code, 0);
    ASSERT_EQ(run({"eval", "latents", "--checkpoint", dmbn_ckpt(), "--data", dataset(), "--out-dir", b}).code, 0);
    EXPECT_EQ(slurp(fs::path(a) / "latents.csv"), slurp(fs::path(b) / "latents.csv"));
    EXPECT_EQ(slurp(fs::path(a) / "pca.csv"), slurp(fs::path(b) / "pca.csv"));
}
