#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "json.hpp"

namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(FOLIATE_CLI) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string last_line(const std::string& s) {
  auto end = s.find_last_not_of('\n');
  if (end == std::string::npos) return {};
  auto start = s.rfind('\n', end);
  return s.substr(start == std::string::npos ? 0 : start + 1, end - (start == std::string::npos ? 0 : start + 1) + 1);
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("foliate-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string out(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

class HelpGoldenTest : public ::testing::TestWithParam<std::string> {};

TEST_P(HelpGoldenTest, MatchesGoldenFile) {
  const std::string sub = GetParam();
  const auto r = run(sub.empty() ? "--help" : sub + " --help");
  EXPECT_EQ(r.code, 0);
  const auto golden = fs::path(FOLIATE_GOLDEN_DIR) / ((sub.empty() ? "foliate" : sub) + ".help.txt");
  ASSERT_TRUE(fs::exists(golden)) << golden;
  EXPECT_EQ(r.out, slurp(golden));
}

INSTANTIATE_TEST_SUITE_P(AllSubcommands, HelpGoldenTest,
                         ::testing::Values("", "orbit", "relate", "check-foliation", "check-invariance",
                                           "check-equivariance", "transfer", "pendulum-sim", "report"),
                         [](const auto& info) {
                           std::string name = info.param.empty() ? "top" : info.param;
                           for (char& c : name)
                             if (c == '-') c = '_';
                           return name;
                         });

TEST_F(CliTest, RelateTranslationDefault) {
  const auto r = run("relate --family translation --out " + out("rel"));
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(last_line(r.out), "related: a=2.0");
  const auto j = nlohmann::json::parse(slurp(dir_ / "rel/report.json"));
  EXPECT_TRUE(j.at("related").get<bool>());
  EXPECT_NEAR(j.at("element").at("params")[0].get<double>(), 2.0, 1e-12);
  EXPECT_TRUE(fs::exists(dir_ / "rel/report.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "rel/resolved-config.txt"));
}

TEST_F(CliTest, RelateAffine) {
  const auto r = run("relate --family affine --target 3,1,0,2 --out " + out("rel"));
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(last_line(r.out), "related: a=2.0, b=3.0");
}

TEST_F(CliTest, UnrelatedTasksExitOne) {
  const auto r = run("relate --family translation --target 1,2,0,0 --out " + out("rel"));
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(last_line(r.out).rfind("not related", 0), 0u);
  EXPECT_FALSE(nlohmann::json::parse(slurp(dir_ / "rel/report.json")).at("related").get<bool>());
}

TEST_F(CliTest, PrintsResolvedConfigAndSeed) {
  const auto r = run("relate --seed 42 --out " + out("rel"));
  EXPECT_NE(r.out.find("resolved config:\n"), std::string::npos);
  EXPECT_NE(r.out.find("  family = translation\n"), std::string::npos);
  EXPECT_NE(r.out.find("seed: 42\n"), std::string::npos);
  EXPECT_NE(slurp(dir_ / "rel/resolved-config.txt").find("seed = 42\n"), std::string::npos);
}

TEST_F(CliTest, CheckFoliationPolarPasses) {
  const auto r = run("check-foliation --atlas polar --out " + out("fol"));
  EXPECT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(slurp(dir_ / "fol/report.json"));
  EXPECT_TRUE(j.at("pass").get<bool>());
  EXPECT_EQ(j.at("checks").size(), 2u);
}

TEST_F(CliTest, CheckFoliationDefectFails) {
  const auto r = run("check-foliation --atlas polar-defect --out " + out("fol"));
  EXPECT_EQ(r.code, 1);
  const auto j = nlohmann::json::parse(slurp(dir_ / "fol/report.json"));
  EXPECT_FALSE(j.at("pass").get<bool>());
  EXPECT_NEAR(j.at("max_violation").get<double>(), 0.1, 0.01);
}

TEST_F(CliTest, CheckInvarianceExitCodes) {
  EXPECT_EQ(run("check-invariance --out " + out("a")).code, 0);
  EXPECT_EQ(run("check-invariance --quantity first-coordinate --out " + out("b")).code, 1);
  EXPECT_EQ(run("check-invariance --quantity sinusoid-shape --family affine --out " + out("c")).code, 0);
  EXPECT_EQ(run("check-invariance --quantity sinusoid-shape --family rotation2d --out " + out("d")).code, 2);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run("relate --no-such-flag --out " + out("x")).code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("relate --set colour=blue --out " + out("x")).code, 2);
  EXPECT_EQ(run("relate --set novalue --out " + out("x")).code, 2);
  EXPECT_EQ(run("relate --family rotation2d --out " + out("x")).code, 2);
  EXPECT_EQ(run("relate --source 1,2 --out " + out("x")).code, 2);
  EXPECT_EQ(run("transfer --trials 0 --out " + out("x")).code, 2);
  EXPECT_EQ(run("transfer --config " + out("missing.txt") + " --out " + out("x")).code, 2);
  std::ofstream(dir_ / "bad.txt") << "trials = 2\nwidth = 3\n";
  EXPECT_EQ(run("transfer --config " + out("bad.txt") + " --out " + out("x")).code, 2);
}

TEST_F(CliTest, FlagsWinOverSetAndConfigFile) {
  std::ofstream(dir_ / "cfg.txt") << "# relate config\ntarget = 1,1,0,5\nfamily = translation\n";
  auto r = run("relate --config " + out("cfg.txt") + " --out " + out("a"));
  EXPECT_EQ(last_line(r.out), "related: a=5.0");
  r = run("relate --config " + out("cfg.txt") + " --set target=1,1,0,7 --out " + out("b"));
  EXPECT_EQ(last_line(r.out), "related: a=7.0");
  r = run("relate --config " + out("cfg.txt") + " --set target=1,1,0,7 --target 1,1,0,-1 --out " + out("c"));
  EXPECT_EQ(last_line(r.out), "related: a=-1.0");
}

TEST_F(CliTest, TransferWritesAllFilesIndependentOfJobs) {
  const std::string args = "transfer --trials 4 --budget-iters 200 --seed 3";
  ASSERT_EQ(run(args + " --jobs 1 --out " + out("a")).code, 0);
  ASSERT_EQ(run(args + " --jobs 3 --out " + out("b")).code, 0);
  for (const char* f : {"report.json", "report.csv", "plot.svg", "resolved-config.txt"}) {
    ASSERT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  const auto csv = slurp(dir_ / "a/report.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 4);
}

TEST_F(CliTest, ReportRegeneratesIdenticalFiles) {
  ASSERT_EQ(run("transfer --trials 3 --budget-iters 100 --out " + out("t")).code, 0);
  const auto r = run("report --input " + out("t/report.json") + " --out " + out("r"));
  EXPECT_EQ(r.code, 0);
  for (const char* f : {"report.json", "report.csv", "plot.svg"}) EXPECT_EQ(slurp(dir_ / "t" / f), slurp(dir_ / "r" / f)) << f;
  ASSERT_EQ(run("relate --out " + out("rel")).code, 0);
  EXPECT_EQ(run("report --input " + out("rel/report.json") + " --out " + out("r2")).code, 2);
  EXPECT_EQ(run("report --out " + out("r3")).code, 2);
}

class DeterminismTest : public CliTest, public ::testing::WithParamInterface<std::string> {};

TEST_P(DeterminismTest, SameSeedSameBytes) {
  const std::string args = GetParam() + " --seed 7";
  const auto a = run(args + " --out " + out("a"));
  const auto b = run(args + " --out " + out("b"));
  EXPECT_EQ(a.code, b.code);
  for (const char* f : {"report.json", "report.csv"}) {
    ASSERT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
}

INSTANTIATE_TEST_SUITE_P(Subcommands, DeterminismTest,
                         ::testing::Values("orbit", "relate", "check-foliation", "check-invariance",
                                           "check-equivariance --cases 20", "transfer --trials 3 --budget-iters 100",
                                           "pendulum-sim --steps 500"),
                         [](const auto& info) {
                           std::string name = info.param.substr(0, info.param.find(' '));
                           for (char& c : name)
                             if (c == '-') c = '_';
                           return name;
                         });

TEST_F(CliTest, OrbitPointsAreRelated) {
  const auto r = run("orbit --family affine --count 4 --out " + out("o"));
  EXPECT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(slurp(dir_ / "o/report.json"));
  EXPECT_EQ(j.at("points").size(), 5u);
  EXPECT_TRUE(j.at("all_related").get<bool>());
}

TEST_F(CliTest, PendulumSimWritesTrajectory) {
  const auto r = run("pendulum-sim --steps 100 --out " + out("p"));
  EXPECT_EQ(r.code, 0);
  const auto csv = slurp(dir_ / "p/report.csv");
  EXPECT_EQ(csv.rfind("t,theta,omega\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 102);
}

}  // namespace
