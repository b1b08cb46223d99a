#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "../support.hpp"
#include "vinslab/cli.hpp"

using namespace vinslab;
using namespace vinslab::testing;

namespace {

namespace fs = std::filesystem;

struct Run {
  int status = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "vinslab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int status = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {status, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> small_grid(const fs::path& out) {
  return {"--set", "out=" + out.string(), "--set", "vins.iterations=40", "--set", "bc.iterations=40",
          "--set", "eval.trials=5", "--set", "eval.seeds=2", "--set", "eval.rollouts=5",
          "--set", "audit.probes=50", "--set", "seed=3"};
}

std::string command_dir(const std::string& command) {
  if (command == "gen-demos") return "demos";
  if (command.rfind("train-", 0) == 0) return command.substr(6);
  return command;
}

std::vector<std::string> with(std::vector<std::string> base, const std::string& command) {
  base.insert(base.begin(), command);
  return base;
}

}  // namespace

TEST_CASE("a misspelt key is a config error") {
  TempDir dir("cli-key");
  const auto r = run({"gen-demos", "--set", "lamda=3", "--set", "out=" + dir.path().string()});
  CHECK(r.status == exit_config);
  CHECK(r.err.find("unknown key: lamda") != std::string::npos);
  std::ofstream(dir.path() / "run.cfg") << "lamda = 3\n";
  const auto f = run({"gen-demos", "--config", (dir.path() / "run.cfg").string()});
  CHECK(f.status == exit_config);
  CHECK(f.err.find("lamda") != std::string::npos);
}

TEST_CASE("missing artifacts are dependency errors naming the path") {
  TempDir dir("cli-dep");
  const auto r = run(with(small_grid(dir.path()), "eval"));
  CHECK(r.status == exit_dependency);
  CHECK(r.err.find((dir.path() / "vins").string()) != std::string::npos);
  const auto t = run(with(small_grid(dir.path()), "train-vins"));
  CHECK(t.status == exit_dependency);
  CHECK(t.err.find("demos.txt") != std::string::npos);
}

TEST_CASE("command-line misuse exits non-zero") {
  CHECK(run({}).status != 0);
  CHECK(run({"fly"}).status != 0);
}

TEST_CASE("the pipeline runs end to end and writes resolved configs") {
  TempDir dir("cli-pipeline");
  const auto args = small_grid(dir.path());
  for (const char* command : {"gen-demos", "train-bc", "train-vins", "eval", "heatmap", "audit"}) {
    const auto r = run(with(args, command));
    INFO(command << ": " << r.err);
    REQUIRE(r.status == exit_ok);
    CHECK(fs::exists(dir.path() / command_dir(command) / "config.txt"));
  }
  CHECK(fs::exists(dir.path() / "demos" / "demos.txt"));
  CHECK(fs::exists(dir.path() / "vins" / "value.net"));
  CHECK(fs::exists(dir.path() / "eval" / "success.csv"));
  CHECK(fs::exists(dir.path() / "heatmap" / "value.pgm"));
  CHECK(fs::exists(dir.path() / "audit" / "audit.csv"));
  CHECK(slurp(dir.path() / "vins" / "config.txt").find("vins.lambda = auto") == std::string::npos);

  auto rl = args;
  for (const char* kv : {"rl.stages=1", "rl.samples_per_stage=20", "rl.inner_iterations=3", "rl.eval_trials=4",
                         "rl.eval_groups=2"}) {
    rl.push_back("--set");
    rl.push_back(kv);
  }
  const auto r = run(with(rl, "train-vins-rl"));
  INFO(r.err);
  CHECK(r.status == exit_ok);
  CHECK(slurp(dir.path() / "vins-rl" / "curve.csv").rfind("env_steps,success_rate,stddev\n", 0) == 0);
}

TEST_CASE("same seed gives byte-identical artifacts, and so does the saved config") {
  TempDir a("cli-a"), b("cli-b"), c("cli-c");
  for (const auto* dir : {&a, &b}) {
    REQUIRE(run(with(small_grid(dir->path()), "gen-demos")).status == exit_ok);
    REQUIRE(run(with(small_grid(dir->path()), "train-vins")).status == exit_ok);
  }
  for (const char* file : {"value.net", "target.net", "model.net", "manifest.txt", "loss.csv"}) {
    CHECK(slurp(a.path() / "vins" / file) == slurp(b.path() / "vins" / file));
  }
  CHECK(slurp(a.path() / "demos" / "demos.txt") == slurp(b.path() / "demos" / "demos.txt"));

  setenv("VINSLAB_OUT", c.path().c_str(), 1);
  const auto saved = (a.path() / "vins" / "config.txt").string();
  const auto g = run({"gen-demos", "--config", saved});
  const auto t = run({"train-vins", "--config", saved});
  unsetenv("VINSLAB_OUT");
  REQUIRE(g.status == exit_ok);
  REQUIRE(t.status == exit_ok);
  CHECK(slurp(a.path() / "vins" / "value.net") == slurp(c.path() / "vins" / "value.net"));
  CHECK(slurp(a.path() / "vins" / "config.txt") == slurp(c.path() / "vins" / "config.txt"));
}
