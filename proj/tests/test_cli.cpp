#include "ivcate/cli.hpp"
#include "ivcate/config.hpp"

#include "test_util.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace ivcate;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "ivcate");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("ivcate_cli_" + std::to_string(std::rand()) + "_" +
                                        std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string simulate(const TempDir& dir, const std::string& family, const std::string& n, const std::string& seed) {
  const std::string out = dir.file(family + "_" + seed + ".csv");
  const Run r = run({"simulate", "--family", family, "--n", n, "--seed", seed, "--out", out});
  REQUIRE(r.code == 0);
  return out;
}

nlohmann::json error_json(const Run& r) {
  const auto j = nlohmann::json::parse(r.err);
  REQUIRE(j.contains("error"));
  return j["error"];
}

}  // namespace

TEST_CASE("simulate is reproducible and writes the truth file") {
  TempDir dir;
  const std::string a = dir.file("a.csv"), b = dir.file("b.csv");
  REQUIRE(run({"simulate", "--family", "tripadvisor", "--n", "2000", "--seed", "3", "--out", a}).code == 0);
  REQUIRE(run({"simulate", "--family", "tripadvisor", "--n", "2000", "--seed", "3", "--out", b}).code == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a).rfind("y,t,z,", 0) == 0);
  const auto truth = nlohmann::json::parse(slurp(a + ".truth.json"));
  CHECK(std::abs(truth["truth"]["true_ate"].get<double>() - 0.249) <= 0.002);

  const std::string c = dir.file("c.csv");
  REQUIRE(run({"simulate", "--family", "tripadvisor", "--n", "2000", "--seed", "4", "--out", c}).code == 0);
  CHECK(slurp(a) != slurp(c));
}

TEST_CASE("fit reports an estimate") {
  TempDir dir;
  const std::string data = simulate(dir, "coverage", "3000", "1");
  const Run r = run({"fit", "--data", data, "--variant", "driv", "--space", "linear", "--seed", "1"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["command"] == "fit");
  CHECK(j["n"] == 3000);
  CHECK(j["result"]["ate"]["point"].is_number());
  CHECK(j["config"]["variant"] == "driv");
  CHECK(j["config"]["seed"] == "1");
  CHECK(j["config"]["derive_from_h"] == "false");

  const Run derived = run({"fit", "--data", data, "--variant", "driv", "--derive-from-h", "--seed", "1"});
  REQUIRE(derived.code == 0);
  CHECK(nlohmann::json::parse(derived.out)["config"]["derive_from_h"] == "true");
}

TEST_CASE("missing instrument column is a schema error") {
  TempDir dir;
  const std::string data = simulate(dir, "coverage", "500", "1");
  const Run r = run({"fit", "--data", data, "--instrument", "nearc4"});
  CHECK(r.code == 2);
  const auto e = error_json(r);
  CHECK(e["kind"] == "schema");
  CHECK(e["message"].get<std::string>().find("nearc4") != std::string::npos);
}

TEST_CASE("argument errors") {
  const Run bad_family = run({"simulate", "--family", "lalonde", "--out", "-"});
  CHECK(bad_family.code == 2);
  CHECK(error_json(bad_family)["kind"] == "argument");

  const Run bad_matrix = run({"verify", "--matrix", "everything"});
  CHECK(bad_matrix.code == 2);
  CHECK(error_json(bad_matrix)["kind"] == "argument");

  const Run unknown_flag = run({"fit", "--bogus"});
  CHECK(unknown_flag.code == 2);
  CHECK(error_json(unknown_flag)["kind"] == "argument");

  const Run no_command = run({});
  CHECK(no_command.code == 2);
}

TEST_CASE("rerun from an embedded config is byte-identical") {
  TempDir dir;
  const std::string data = simulate(dir, "coverage", "5000", "2");
  const Run first = run({"fit", "--data", data, "--variant", "dmliv", "--space", "linear", "--seed", "7"});
  REQUIRE(first.code == 0);
  const std::string report = dir.file("report.json");
  std::ofstream(report) << first.out;
  const Run second = run({"fit", "--config", report});
  REQUIRE(second.code == 0);
  CHECK(second.out == first.out);
}

TEST_CASE("seed falls back to the environment, then zero") {
  TempDir dir;
  const std::string data = simulate(dir, "coverage", "5000", "2");
  const Run unset = run({"fit", "--data", data});
  REQUIRE(unset.code == 0);
  CHECK(nlohmann::json::parse(unset.out)["seed"] == 0);
  ::setenv("IVCATE_SEED", "123", 1);
  const Run from_env = run({"fit", "--data", data});
  const Run flag_wins = run({"fit", "--data", data, "--seed", "5"});
  ::unsetenv("IVCATE_SEED");
  REQUIRE(from_env.code == 0);
  CHECK(nlohmann::json::parse(from_env.out)["seed"] == 123);
  CHECK(nlohmann::json::parse(flag_wins.out)["seed"] == 5);
}

TEST_CASE("flat config files") {
  TempDir dir;
  const std::string data = simulate(dir, "coverage", "5000", "2");
  const std::string cfg = dir.file("run.cfg");
  std::ofstream(cfg) << "# comment\n"
                     << "data = " << data << "\n"
                     << "variant = dmlateiv\n"
                     << "seed = 9\n";
  const Run r = run({"fit", "--config", cfg, "--seed", "10"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["config"]["variant"] == "dmlateiv");
  CHECK(j["seed"] == 10);

  std::istringstream in("a = 1\nb=x;y\n\n# skip\nc =  2.5 \n");
  const RunConfig c = RunConfig::parse(in);
  CHECK(c.get_int("a") == 1);
  CHECK(c.get_list("b", ';') == std::vector<std::string>{"x", "y"});
  CHECK(c.get_double("c") == 2.5);
  CHECK(testutil::error_kind([&] { c.get("missing"); }) == ErrorKind::argument);
  std::istringstream bad("no equals sign\n");
  CHECK(testutil::error_kind([&] { RunConfig::parse(bad); }).has_value());
}

TEST_CASE("coverage subcommand thresholds") {
  TempDir dir;
  const std::string csv = dir.file("reps.csv");
  const Run r = run({"coverage", "--family", "coverage", "--n", "5000", "--replicates", "10", "--estimators",
                     "dmlateiv;driv", "--seed", "1", "--threads", "2", "--csv", csv, "--min-coverage", "1.01"});
  INFO(r.err);
  CHECK(r.code == 1);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["estimators"].size() == 2);
  CHECK_FALSE(j["config"].contains("threads"));
  CHECK(slurp(csv).find("dmlateiv") != std::string::npos);
}
