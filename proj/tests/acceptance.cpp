// Runs the bundled demos behind each acceptance criterion and prints one
// PASS/FAIL line per criterion. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "msplice/experiments.hpp"

namespace fs = std::filesystem;
using namespace msplice;

namespace {

struct Criterion {
  int id;
  std::string title;
  std::vector<std::string> demos;
  double budget_s;
};

unsigned jobs() {
  if (const char* env = std::getenv("MSPLICE_JOBS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool run_demo(const std::string& file, unsigned j, double& seconds, std::string& detail) {
  const auto cfg = parse_config(json::parse(slurp(fs::path(MSPLICE_DEMO_DIR) / file)));
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentResult res = run_experiment(cfg, {j});
  seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::size_t passed = 0;
  for (const auto& c : res.checks) {
    passed += c.pass;
    if (!c.pass) detail += " [" + cfg.name + " " + c.name + ": " + c.detail + "]";
  }
  detail += " " + cfg.name + " " + std::to_string(passed) + "/" + std::to_string(res.checks.size());
  return res.pass();
}

bool determinism(std::string& detail) {
  const fs::path base = fs::temp_directory_path() / "msplice_acceptance_determinism";
  fs::remove_all(base);
  bool ok = true;
  for (const std::string file : {"06_revival.json", "11b_markov_concat.json"}) {
    std::string first;
    for (const char* run : {"a", "b"}) {
      const fs::path out = base / (file + run);
      const std::string cmd = std::string(MSPLICE_CLI) + " run --config " +
                              (fs::path(MSPLICE_DEMO_DIR) / file).string() + " --out " + out.string() + " > /dev/null";
      if (std::system(cmd.c_str()) != 0) {
        detail += " " + file + " run failed";
        ok = false;
      }
      const std::string bytes = slurp(out / "report.json");
      if (first.empty()) {
        first = bytes;
      } else if (bytes != first || bytes.empty()) {
        detail += " " + file + " differs";
        ok = false;
      }
    }
    if (ok) detail += " " + file + " identical (" + std::to_string(first.size()) + " bytes)";
  }
  fs::remove_all(base);
  return ok;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "extension exactness", {"01_extension_exactness.json"}, 1},
      {2, "lifetime law", {"02_lifetime_law.json"}, 30},
      {3, "killed semigroup", {"03_killed_semigroup.json"}, 120},
      {4, "killed generator slope", {"04_killed_generator.json"}, 5},
      {5, "lifetime/exit joint law", {"05_exit_joint.json"}, 60},
      {6, "revival distribution", {"06_revival.json"}, 60},
      {7, "restarts formula", {"07a_restarts_chain.json", "07b_restarts_ou.json"}, 180},
      {8, "gamma renewal law", {"08_renewal_gamma.json"}, 60},
      {9, "concatenated generator slope", {"09_concat_generator.json"}, 10},
      {10, "restore invariance", {"10a_restore_invariant.json"}, 120},
      {11, "Markov stratification", {"11a_markov_killed.json", "11b_markov_concat.json"}, 120},
  };
  const unsigned j = jobs();
  int failures = 0;
  for (const auto& c : criteria) {
    double seconds = 0.0;
    std::string detail;
    bool ok = true;
    try {
      for (const auto& d : c.demos) ok = run_demo(d, j, seconds, detail) && ok;
    } catch (const std::exception& e) {
      ok = false;
      detail += std::string(" error: ") + e.what();
    }
    const bool in_time = seconds < c.budget_s;
    const bool pass = ok && in_time;
    failures += !pass;
    std::printf("criterion %2d %-30s %s  %.2f s (budget %.0f s)%s%s\n", c.id, c.title.c_str(), pass ? "PASS" : "FAIL",
                seconds, c.budget_s, in_time ? "" : " over budget;", detail.c_str());
  }
  std::string detail;
  const bool det = determinism(detail);
  failures += !det;
  std::printf("criterion 12 %-30s %s %s\n", "determinism", det ? "PASS" : "FAIL", detail.c_str());
  std::printf("%d of 12 criteria failed (jobs = %u)\n", failures, j);
  return failures == 0 ? 0 : 1;
}
