#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int status = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(VIBESENSE_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.output.append(buf, n);
  const int st = ::pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("vs_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
           std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string out(const std::string& sub) const { return (dir / sub).string(); }

  fs::path dir;
};

}  // namespace

TEST_F(CliTest, SimulateIsByteIdentical) {
  ASSERT_EQ(run("--seed 7 --out " + out("a") + " simulate --count 60").status, 0);
  ASSERT_EQ(run("--seed 7 --out " + out("b") + " simulate --count 60").status, 0);
  const auto a = slurp(dir / "a" / "corpus.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir / "b" / "corpus.csv"));
  ASSERT_EQ(run("--seed 8 --out " + out("c") + " simulate --count 60").status, 0);
  EXPECT_NE(a, slurp(dir / "c" / "corpus.csv"));
}

TEST_F(CliTest, SelectOnTableGivesFiveFeatures) {
  {
    std::ofstream os(dir / "table.csv");
    os << oracle::kCorrelationCsv;
  }
  const auto r = run("--out " + out("sel") + " select --correlation " + out("table.csv"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(slurp(dir / "sel" / "mask.txt"), "mean\nstd_dev\nmax\nrms\navg_peak_value\n");
}

TEST_F(CliTest, FullPipelineWritesArtifacts) {
  const std::string o = " --seed 3 --out " + out("run") + " ";
  auto step = [&](const std::string& args) {
    const auto r = run(o + args);
    EXPECT_EQ(r.status, 0) << args << "\n" << r.output;
    return r.status == 0;
  };
  ASSERT_TRUE(step("simulate"));
  ASSERT_TRUE(step("extract --in " + out("run/corpus.csv")));
  ASSERT_TRUE(step("select --in " + out("run/features.csv")));
  ASSERT_TRUE(step("train-knn --in " + out("run/features.csv") + " --mask " + out("run/mask.txt")));
  ASSERT_TRUE(step("train-cnn --in " + out("run/features.csv") + " --reduced-grid --epochs 20 --grid-epochs 3 --folds 2"));
  for (const char* f : {"corpus.csv", "features.csv", "correlation.csv", "mask.txt", "k_curve.csv", "k_curve.svg",
                        "knn_metrics.csv", "knn_confusion.svg", "gnb_metrics.csv", "grid.csv",
                        "density_batch_size.csv", "density_activation.csv", "cnn_checkpoint.json",
                        "cnn_history.csv", "cnn_metrics.csv", "cnn_confusion.svg"}) {
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
  }
  // 1159 rows plus header
  std::ifstream is(dir / "run" / "features.csv");
  std::size_t lines = 0;
  for (std::string l; std::getline(is, l);) ++lines;
  EXPECT_EQ(lines, 1160u);
}

TEST_F(CliTest, SpectralAndHeightStages) {
  ASSERT_EQ(run("--out " + out("s") + " simulate --count 20").status, 0);
  const auto r = run("--out " + out("s") + " spectral-check --in " + out("s/corpus.csv"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir / "s" / "spectral.csv"));
  const auto h = run("--out " + out("h") + " fit-height");
  ASSERT_EQ(h.status, 0) << h.output;
  const auto text = slurp(dir / "h" / "height_fits.txt");
  EXPECT_NE(text.find("5_storey_vertical: mean_amplitude = "), std::string::npos) << text;
  EXPECT_TRUE(fs::exists(dir / "h" / "height_5_storey_horizontal.svg"));
}

TEST_F(CliTest, EmulateDryRunThenReport) {
  const auto e = run("--out " + out("t") + " emulate-node --dry-run " + out("t.jsonl") +
                     " --count 4 --interval 0 --node-id n9 --class railline");
  ASSERT_EQ(e.status, 0) << e.output;
  const auto r = run("--out " + out("t") + " report --store " + out("t.jsonl"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(slurp(dir / "t" / "report_nodes.csv").find("n9,4,3,"), std::string::npos);
  EXPECT_NE(slurp(dir / "t" / "report_classes.csv").find("railline,4"), std::string::npos);
}

TEST_F(CliTest, ErrorsExitNonzeroWithStageName) {
  EXPECT_NE(run("simulate --bogus").status, 0);
  EXPECT_NE(run("").status, 0);
  const auto r = run("--out " + out("x") + " extract --in " + out("missing.csv"));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("[extract]"), std::string::npos) << r.output;
  const auto s = run("--out " + out("x") + " select");
  EXPECT_NE(s.status, 0);
  EXPECT_NE(s.output.find("[select]"), std::string::npos) << s.output;
}
