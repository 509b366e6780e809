// msplice: run killed/concatenated-process experiments from JSON configs.
//
//   msplice run --config path [--out dir] [--jobs N] [--seed-override S]
//   msplice list-demos
//
// Exit codes: 0 all checks pass, 1 a check failed, 2 schema error, 3 I/O error.

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "msplice/experiments.hpp"
#include "msplice/io.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kPass = 0, kCheckFailed = 1, kSchema = 2, kIo = 3;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error while reading " + p.string());
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  out.close();
  if (!out) throw IoError("error while writing " + p.string());
}

fs::path demo_dir() {
  if (const char* env = std::getenv("MSPLICE_DEMO_DIR")) return env;
  return MSPLICE_DEMO_DIR;
}

unsigned default_jobs() {
  if (const char* env = std::getenv("MSPLICE_JOBS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    std::cerr << "msplice: ignoring invalid MSPLICE_JOBS='" << env << "'\n";
  }
  return 1;
}

int run(const std::string& config_path, const std::string& out_dir, unsigned jobs, std::optional<std::uint64_t> seed) {
  using namespace msplice;
  try {
    const std::string text = read_file(config_path);
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw SchemaError("$", std::string("invalid JSON: ") + e.what());
    }
    ExperimentConfig cfg = parse_config(doc);
    if (seed) cfg.seed = *seed;
    const fs::path out = !out_dir.empty() ? fs::path(out_dir)
                         : cfg.output       ? fs::path(*cfg.output)
                                            : fs::path("msplice-out") / cfg.name;

    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentResult res = run_experiment(cfg, {jobs});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
    write_file(out / "report.json", res.report.dump(2) + "\n");
    for (const auto& t : res.tables) write_file(out / (t.name + ".csv"), to_csv(t));
    write_file(out / "manifest.csv", to_csv(manifest_table(res)));

    const auto passed = std::count_if(res.checks.begin(), res.checks.end(), [](const Check& c) { return c.pass; });
    for (const auto& c : res.checks)
      if (!c.pass) std::cout << "  FAIL " << c.name << ": " << c.detail << "\n";
    std::cout << cfg.name << ": " << (res.pass() ? "PASS" : "FAIL") << " (" << passed << "/" << res.checks.size()
              << " checks) in " << secs << " s -> " << out.string() << "\n";
    return res.pass() ? kPass : kCheckFailed;
  } catch (const SchemaError& e) {
    std::cerr << "msplice: schema error at " << e.path() << ": " << e.what() << "\n";
    return kSchema;
  } catch (const IoError& e) {
    std::cerr << "msplice: I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "msplice: I/O error: " << e.what() << "\n";
    return kIo;
  }
}

int list_demos() {
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(demo_dir(), ec))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  if (ec) {
    std::cerr << "msplice: I/O error: cannot list " << demo_dir().string() << ": " << ec.message() << "\n";
    return kIo;
  }
  std::sort(files.begin(), files.end());
  int status = kPass;
  for (const auto& f : files) {
    try {
      const auto cfg = msplice::parse_config(msplice::json::parse(read_file(f)));
      std::cout << cfg.name << "\t" << cfg.kind << "\t" << f.string() << "\n";
    } catch (const std::exception& e) {
      std::cout << f.filename().string() << "\tinvalid\t" << e.what() << "\n";
      status = kSchema;
    }
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Killed and concatenated Markov process experiments"};
  app.require_subcommand(1);

  std::string config, out;
  unsigned jobs = default_jobs();
  std::optional<std::uint64_t> seed;
  auto* run_cmd = app.add_subcommand("run", "Run one experiment configuration");
  run_cmd->add_option("--config", config, "Experiment configuration (JSON)")->required();
  run_cmd->add_option("--out", out, "Output directory");
  run_cmd->add_option("--jobs", jobs, "Worker threads (default: MSPLICE_JOBS or 1)")->check(CLI::PositiveNumber);
  run_cmd->add_option("--seed-override", seed, "Replace the configured master seed");
  auto* list_cmd = app.add_subcommand("list-demos", "List bundled demo configurations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kSchema;
  }
  if (*run_cmd) return run(config, out, jobs, seed);
  if (*list_cmd) return list_demos();
  return kSchema;
}
