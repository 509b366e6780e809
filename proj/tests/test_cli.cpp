#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "msplice/io.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("msplice_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Outcome run(const std::string& args) {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string(MSPLICE_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  fs::path write_config(const std::string& name, const msplice::json& j) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  static msplice::json zero_kill() {
    return msplice::json::parse(R"({
      "schema_version": "1", "kind": "kill-semigroup", "name": "zero-kill", "seed": 3,
      "model": {"type": "ctmc", "rates": [[-1, 0.6, 0.4], [0.5, -1.2, 0.7], [0.3, 0.9, -1.2]],
                "kill_rates": [0, 0, 0]},
      "run": {"n": 20000, "times": [0.5, 2.0]}
    })");
  }

  fs::path dir_;
};

std::string demo(const std::string& file) { return (fs::path(MSPLICE_DEMO_DIR) / file).string(); }

}  // namespace

TEST_F(Cli, ListDemos) {
  const auto r = run("list-demos");
  EXPECT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    EXPECT_EQ(line.find("invalid"), std::string::npos) << line;
    ++n;
  }
  EXPECT_GE(n, 8);
}

TEST_F(Cli, ZeroKillSemigroupPasses) {
  const auto cfg = write_config("zero.json", zero_kill());
  const auto r = run("run --config " + cfg.string() + " --out " + (dir_ / "out").string());
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  const auto report = msplice::json::parse(slurp(dir_ / "out" / "report.json"));
  EXPECT_TRUE(report.at("pass").get<bool>());
  for (const auto& t : report.at("tables")) EXPECT_TRUE(fs::exists(dir_ / "out" / t.get<std::string>()));
  EXPECT_TRUE(fs::exists(dir_ / "out" / "manifest.csv"));
  const std::string csv = slurp(dir_ / "out" / "manifest.csv");
  EXPECT_EQ(csv.rfind("check,pass,detail\r\n", 0), 0u);
}

TEST_F(Cli, RestoreInvariantDemo) {
  const auto r = run("run --config " + demo("10b_restore_invariant_3state.json") + " --out " + (dir_ / "out").string());
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  const auto report = msplice::json::parse(slurp(dir_ / "out" / "report.json"));
  for (const auto& m : report.at("results").at("models")) EXPECT_LT(m.at("tv").get<double>(), 0.01);
}

TEST_F(Cli, MissingSeedIsSchemaError) {
  auto j = zero_kill();
  j.erase("seed");
  const auto r = run("run --config " + write_config("noseed.json", j).string() + " --out " + (dir_ / "out").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("$.seed"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir_ / "out" / "report.json"));
}

TEST_F(Cli, UnknownKeyAndBadJsonAreSchemaErrors) {
  auto j = zero_kill();
  j["run"]["bogus"] = 1;
  auto r = run("run --config " + write_config("bogus.json", j).string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("$.run.bogus"), std::string::npos) << r.err;

  std::ofstream(dir_ / "broken.json") << "{ not json";
  r = run("run --config " + (dir_ / "broken.json").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(run("run").code, 2);
}

TEST_F(Cli, IoErrors) {
  EXPECT_EQ(run("run --config " + (dir_ / "absent.json").string()).code, 3);
  const auto cfg = write_config("zero.json", zero_kill());
  std::ofstream(dir_ / "blocker") << "x";
  EXPECT_EQ(run("run --config " + cfg.string() + " --out " + (dir_ / "blocker" / "sub").string()).code, 3);
}

TEST_F(Cli, FailingCheckExitsOne) {
  auto j = msplice::json::parse(slurp(demo("04_killed_generator.json")));
  j["thresholds"] = {{"slope_band", {1.5, 2.0}}};
  j["model"]["count"] = 2;
  const auto r = run("run --config " + write_config("fail.json", j).string() + " --out " + (dir_ / "out").string());
  EXPECT_EQ(r.code, 1) << r.out << r.err;
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
}

TEST_F(Cli, DeterministicAcrossRerunsAndJobs) {
  const std::string cfg = demo("06_revival.json");
  ASSERT_EQ(run("run --config " + cfg + " --out " + (dir_ / "a").string() + " --jobs 1").code, 0);
  ASSERT_EQ(run("run --config " + cfg + " --out " + (dir_ / "b").string() + " --jobs 1").code, 0);
  ASSERT_EQ(run("run --config " + cfg + " --out " + (dir_ / "c").string() + " --jobs 3").code, 0);
  const std::string a = slurp(dir_ / "a" / "report.json");
  EXPECT_EQ(a, slurp(dir_ / "b" / "report.json"));
  EXPECT_EQ(a, slurp(dir_ / "c" / "report.json"));
  for (const auto& e : fs::directory_iterator(dir_ / "a"))
    EXPECT_EQ(slurp(e.path()), slurp(dir_ / "c" / e.path().filename()));
}

TEST_F(Cli, SeedOverrideAndJobsEnvironment) {
  const auto cfg = write_config("zero.json", zero_kill());
  ASSERT_EQ(run("run --config " + cfg.string() + " --out " + (dir_ / "a").string() + " --seed-override 99").code, 0);
  EXPECT_EQ(msplice::json::parse(slurp(dir_ / "a" / "report.json")).at("seed").get<std::uint64_t>(), 99u);
  const auto r = run("run --config " + cfg.string() + " --out " + (dir_ / "b").string());
  ASSERT_EQ(r.code, 0);
  setenv("MSPLICE_JOBS", "2", 1);
  const auto r2 = run("run --config " + cfg.string() + " --out " + (dir_ / "c").string());
  unsetenv("MSPLICE_JOBS");
  ASSERT_EQ(r2.code, 0);
  EXPECT_EQ(slurp(dir_ / "b" / "report.json"), slurp(dir_ / "c" / "report.json"));
  EXPECT_NE(slurp(dir_ / "a" / "report.json"), slurp(dir_ / "b" / "report.json"));
}
