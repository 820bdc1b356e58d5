#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "sflow/errors.hpp"
#include "sflow/experiments.hpp"

using namespace sflow;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(SFLOW_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sflow_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("config parsing") {
  const Config c = Config::parse_string("kind = oracle  # trailing\nseed=3\n[model]\nrate = 0.5\nlist = 1, 2,3\n");
  CHECK(c.get("kind", "") == "oracle");
  CHECK(c.get_u64("seed", 0) == 3);
  CHECK(c.get_double("model.rate", 0.0) == 0.5);
  CHECK(c.get_list("model.list", {}) == std::vector<double>{1, 2, 3});
  CHECK(c.get_bool("missing", true));
  CHECK_NOTHROW(c.check_consumed());
  CHECK_THROWS_AS(Config::parse_string("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse_string("no equals sign\n"), ConfigError);
  const Config d = Config::parse_string("a = x\nb = 1\n");
  CHECK_THROWS_AS(d.get_double("a", 0.0), ConfigError);
  CHECK_THROWS_AS(d.check_consumed(), ConfigError);
  CHECK_THROWS_AS(d.require("c"), ConfigError);
}

TEST_CASE("experiment catalog and unknown keys") {
  CHECK(experiment_catalog().size() >= 6);
  Config c = Config::parse_string("kind = noise\nseed = 1\nmystery = 4\n");
  try {
    run_experiment(c);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("mystery") != std::string::npos);
  }
  CHECK_THROWS_AS(run_experiment(Config::parse_string("kind = noise\n")), ConfigError);
}

TEST_CASE("exit codes") {
  const fs::path dir = scratch("codes");
  CHECK(run("--config " SFLOW_CONFIGS "/frobnicate.cfg --out " + (dir / "a").string()) == 2);
  std::ofstream(dir / "unknown.cfg") << "kind = noise\nseed = 2\nbogus.key = 1\n";
  CHECK(run("--config " + (dir / "unknown.cfg").string() + " --out " + (dir / "b").string()) == 2);
  CHECK(run("--config " + (dir / "nope.cfg").string()) == 2);
  CHECK(run("--list-experiments") == 0);
  CHECK(run("--config " SFLOW_CONFIGS "/oracle.cfg --out " + (dir / "c").string()) == 0);
  CHECK(fs::exists(dir / "c" / "summary.json"));
  CHECK(run("--config " SFLOW_CONFIGS "/pullback_shift.cfg --out " + (dir / "d").string()) == 0);
}

TEST_CASE("runs are reproducible byte for byte") {
  const fs::path dir = scratch("repro");
  REQUIRE(run("--config " SFLOW_CONFIGS "/pullback.cfg --out " + (dir / "a").string()) == 0);
  REQUIRE(run("--config " SFLOW_CONFIGS "/pullback.cfg --jobs 2 --out " + (dir / "b").string()) == 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    INFO(e.path().filename().string());
    CHECK(slurp(e.path()) == slurp(dir / "b" / e.path().filename()));
    ++files;
  }
  CHECK(files >= 2);
  REQUIRE(run("--config " SFLOW_CONFIGS "/pullback.cfg --seed 99 --out " + (dir / "c").string()) == 0);
  CHECK(slurp(dir / "a" / "pullback.csv") != slurp(dir / "c" / "pullback.csv"));
}
