#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include "commands.hpp"

namespace fs = std::filesystem;
using namespace qfl;

namespace {

struct Outcome {
    int code;
    std::string err;
};

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / ("qfl_cli_" + std::string(info->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    Outcome run(const std::string& args) const {
        const auto err = dir_ / "stderr.txt";
        const std::string cmd = std::string(QFL_BINARY) + " " + args + " > " + (dir_ / "stdout.txt").string() +
                                " 2> " + err.string();
        const int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read(err)};
    }

    static std::string read(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream s;
        s << in.rdbuf();
        return s.str();
    }

    fs::path write(const std::string& name, const std::string& text) const {
        const auto p = dir_ / name;
        std::ofstream(p, std::ios::binary) << text;
        return p;
    }

    // Small enough to run in well under a second.
    fs::path small_config(const std::string& extra = "") const {
        return write("run.ini",
                     "[data]\nsamples = 60\nfeatures = 4\nseed = 2\n"
                     "[model]\nreps = 1\n"
                     "[optimizer]\nmax_evals = 20\n"
                     "[federation]\nclients = 2\nepochs = 3\nscheme = weighted\n" + extra);
    }

    fs::path dir_;
};

std::size_t line_count(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

std::string last_global_accuracy(const std::string& metrics) {
    std::istringstream in(metrics);
    std::string line, last;
    while (std::getline(in, line))
        if (line.find(",global,") != std::string::npos) last = line;
    return last.substr(last.rfind(',') + 1);
}

}  // namespace

TEST_F(Cli, SynthWritesHeaderPlusRows) {
    const auto out = dir_ / "a.csv";
    ASSERT_EQ(run("synth --samples 200 --features 200 --seed 7 --out " + out.string()).code, 0);
    const auto text = read(out);
    EXPECT_EQ(line_count(text), 201u);
    EXPECT_TRUE(text.starts_with("f0,f1,"));

    const auto again = dir_ / "b.csv";
    ASSERT_EQ(run("synth --samples 200 --features 200 --seed 7 --out " + again.string()).code, 0);
    EXPECT_EQ(read(again), text);
}

TEST_F(Cli, SynthRejectsZeroFeatures) {
    EXPECT_EQ(run("synth --features 0 --out " + (dir_ / "x.csv").string()).code, 1);
}

TEST_F(Cli, RunWritesArtifacts) {
    const auto out = dir_ / "out";
    const auto r = run("run --config " + small_config().string() + " --out " + out.string());
    ASSERT_EQ(r.code, 0) << r.err;
    const auto metrics = read(out / "metrics.csv");
    // (K participating + 1) rows per epoch, plus the header
    EXPECT_EQ(line_count(metrics), (2 + 1) * 3 + 1u);
    EXPECT_TRUE(metrics.starts_with("epoch,entity,train_loss,train_acc,test_acc\n"));
    EXPECT_NE(metrics.find("\n3,global,,,"), std::string::npos);
    EXPECT_NE(metrics.find("\n1,client_1,"), std::string::npos);
    EXPECT_TRUE(fs::exists(out / "global_params.txt"));
    EXPECT_TRUE(fs::exists(out / "global_test.csv"));
    const auto manifest = nlohmann::json::parse(read(out / "manifest.json"));
    EXPECT_EQ(manifest["derived"]["qubits"], 2);
    EXPECT_EQ(manifest["config"]["federation"]["scheme"], "weighted");
}

TEST_F(Cli, RejectsBadAlpha) {
    const auto r = run("run --config " + small_config("alpha0 = 1.5\n").string() + " --out " + (dir_ / "o").string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("alpha0"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir_ / "o" / "metrics.csv"));
}

TEST_F(Cli, MissingConfigIsIoError) {
    EXPECT_EQ(run("run --config " + (dir_ / "nope.ini").string() + " --out " + (dir_ / "o").string()).code, 3);
}

TEST_F(Cli, UsageErrors) {
    EXPECT_EQ(run("run --out x").code, 1);
    EXPECT_EQ(run("frobnicate").code, 1);
    EXPECT_EQ(run("run --config a --out b --scheme median").code, 1);
}

TEST_F(Cli, RerunsAreByteIdentical) {
    const auto cfg = small_config().string();
    ASSERT_EQ(run("run --config " + cfg + " --out " + (dir_ / "a").string()).code, 0);
    ASSERT_EQ(run("run --config " + cfg + " --out " + (dir_ / "b").string()).code, 0);
    EXPECT_EQ(read(dir_ / "a" / "metrics.csv"), read(dir_ / "b" / "metrics.csv"));
    EXPECT_EQ(read(dir_ / "a" / "global_params.txt"), read(dir_ / "b" / "global_params.txt"));
}

TEST_F(Cli, SeedAndSchemeOverrides) {
    const auto cfg = small_config().string();
    ASSERT_EQ(run("run --config " + cfg + " --out " + (dir_ / "a").string()).code, 0);
    ASSERT_EQ(run("run --config " + cfg + " --out " + (dir_ / "b").string() + " --seed 99 --scheme best_pick").code, 0);
    const auto manifest = nlohmann::json::parse(read(dir_ / "b" / "manifest.json"));
    EXPECT_EQ(manifest["config"]["federation"]["seed"], "99");
    EXPECT_EQ(manifest["config"]["federation"]["scheme"], "best_pick");
    EXPECT_NE(read(dir_ / "a" / "metrics.csv"), read(dir_ / "b" / "metrics.csv"));
}

TEST_F(Cli, ManifestReproducesRun) {
    ASSERT_EQ(run("run --config " + small_config().string() + " --out " + (dir_ / "a").string()).code, 0);
    ASSERT_EQ(run("run --config " + (dir_ / "a" / "manifest.json").string() + " --out " + (dir_ / "b").string()).code, 0);
    EXPECT_EQ(read(dir_ / "a" / "metrics.csv"), read(dir_ / "b" / "metrics.csv"));
}

TEST_F(Cli, EvalMatchesLastGlobalRow) {
    const auto out = dir_ / "out";
    const auto cfg = small_config().string();
    ASSERT_EQ(run("run --config " + cfg + " --out " + out.string()).code, 0);
    ASSERT_EQ(run("eval --params " + (out / "global_params.txt").string() + " --data " +
                  (out / "global_test.csv").string() + " --config " + cfg).code, 0);
    std::istringstream printed(read(dir_ / "stdout.txt"));
    std::string word;
    double loss = 0, accuracy = -1;
    printed >> word >> loss >> word >> accuracy;
    EXPECT_EQ(word, "accuracy");
    EXPECT_NEAR(accuracy, std::stod(last_global_accuracy(read(out / "metrics.csv"))), 1e-9);
}

TEST_F(Cli, EvalRejectsTruncatedParams) {
    const auto out = dir_ / "out";
    const auto cfg = small_config().string();
    ASSERT_EQ(run("run --config " + cfg + " --out " + out.string()).code, 0);
    auto params = read(out / "global_params.txt");
    params.erase(params.rfind('\n', params.size() - 2) + 1);  // drop the last value
    const auto cut = write("cut.txt", params);
    EXPECT_EQ(run("eval --params " + cut.string() + " --data " + (out / "global_test.csv").string() +
                  " --config " + cfg).code, 1);
    const auto junk = write("junk.txt", "0.1\nabc\n");
    EXPECT_EQ(run("eval --params " + junk.string() + " --data " + (out / "global_test.csv").string() +
                  " --config " + cfg).code, 1);
}

TEST_F(Cli, ShippedConfigsResolve) {
    for (const auto* name : {"desk.ini", "genomic200.ini"}) {
        auto cfg = cli::resolve(cli::read_config_file(std::string(QFL_CONFIG_DIR) + "/" + name));
        EXPECT_NO_THROW(cli::bind_model(cfg, cfg.data.features)) << name;
    }
}

// Untrained parameters carry no information about the labels, so over many
// draws the accuracy on a separable set hovers around chance.
TEST_F(Cli, RandomParamsScoreNearChance) {
    const auto data = dir_ / "data.csv";
    ASSERT_EQ(cli::cmd_synth({200, 16, 2, 4.0, 5, data.string()}), 0);
    const auto cfg = write("eval.ini", "[model]\nreps = 3\n");
    double total = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-3.14159, 3.14159);
        std::string params;
        for (int i = 0; i < 16; ++i) params += std::to_string(u(rng)) + "\n";
        const auto p = write("p.txt", params);
        std::ostringstream out, err;
        ASSERT_EQ(cli::cmd_eval({p.string(), data.string(), cfg.string()}, out, err), 0) << err.str();
        std::istringstream printed(out.str());
        std::string word;
        double loss = 0, accuracy = 0;
        printed >> word >> loss >> word >> accuracy;
        total += accuracy;
    }
    EXPECT_NEAR(total / 10, 0.5, 0.15);
}
