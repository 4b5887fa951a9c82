#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "cso/cli.hpp"
#include "cso/error.hpp"

namespace fs = std::filesystem;
using namespace cso;

namespace {

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("cso_cli_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p.string();
}

struct Run {
  int code;
  std::string out, err;
};

Run cso_run(std::vector<std::string> args) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  return {code, o.str(), e.str()};
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = cli::parse_config(R"({"name": "x", "problem": "P2", "mesh": {"a": 1.1, "level": 2},
                                       "optimize": {"max_iter": 7}})");
  CHECK(c.name == "x");
  CHECK(c.problem == "P2");
  CHECK(c.ellipsoid.a == 1.1);
  CHECK(c.ellipsoid.b == 1.0);
  CHECK(c.ellipsoid.level == 2);
  CHECK(c.max_iter == 7);
  CHECK(c.eps_stop == 1e-4);

  CHECK_THROWS_WITH_AS(cli::parse_config(R"({"elasticity": {"nu": 0.6}})"),
                       doctest::Contains("nu out of range [0, 0.5)"), ConfigError);
  CHECK_THROWS_WITH_AS(cli::parse_config(R"({"mesh": {"levle": 2}})"), doctest::Contains("mesh.levle"), ConfigError);
  CHECK_THROWS_WITH_AS(cli::parse_config(R"({"mesh": {"level": "two"}})"), doctest::Contains("mesh.level"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(cli::parse_config(R"({"problem": "P3"})"), doctest::Contains("problem"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("{not json"), ConfigError);
}

TEST_CASE("optimize with a bad config exits nonzero naming the field") {
  const auto d = scratch("badnu");
  const auto cfg = write(d / "c.json", R"({"elasticity": {"nu": 0.6}})");
  const auto r = cso_run({"optimize", "--config", cfg, "--out", (d / "o").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("nu out of range [0, 0.5)") != std::string::npos);
  CHECK(cso_run({"optimize"}).code != 0);
  CHECK(cso_run({"frobnicate"}).code != 0);
}

TEST_CASE("mesh then check-convexity") {
  const auto d = scratch("mesh");
  const auto cfg = write(d / "c.json", R"({"mesh": {"level": 2}})");
  auto r = cso_run({"mesh", "--config", cfg, "--out", (d / "m").string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(d / "m" / "mesh.node"));
  CHECK(fs::exists(d / "m" / "mesh.vtk"));
  const auto cfg2 = write(d / "c2.json", R"({"mesh": {"file": ")" + (d / "m" / "mesh").string() + R"("}})");
  r = cso_run({"check-convexity", "--config", cfg2, "--out", (d / "c").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("global=true") != std::string::npos);
  std::ifstream csv(d / "c" / "convexity.csv");
  std::string line;
  std::getline(csv, line);
  int rows = 0, certified = 0;
  while (std::getline(csv, line)) {
    ++rows;
    certified += line.find(",certified,") != std::string::npos;
  }
  CHECK(rows > 0);
  CHECK(certified == rows);
}

TEST_CASE("report") {
  const auto d = scratch("report");
  CHECK_THROWS_WITH_AS(cli::report(d.string()), doctest::Contains("summary.json"), Error);
  CHECK(cso_run({"report", d.string()}).code == 3);

  // Two short runs, written out of name order.
  for (std::string name : {"zeta", "alpha"}) {
    const auto cfg = write(d / (name + ".json"), R"({"name": ")" + name + R"(", "mesh": {"level": 1},
                                                   "optimize": {"max_iter": 2}})");
    const auto r = cso_run({"optimize", "--config", cfg, "--out", (d / name).string()});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(d / name / "iterations.csv"));
    CHECK(fs::exists(d / name / "final.vtk"));
  }
  const auto table = cli::report(d.string());
  std::istringstream is(table);
  std::string header, first, second, extra;
  std::getline(is, header);
  std::getline(is, first);
  std::getline(is, second);
  CHECK(header.find("J(O0)") != std::string::npos);
  CHECK(first.rfind("alpha", 0) == 0);
  CHECK(second.rfind("zeta", 0) == 0);
  CHECK(!std::getline(is, extra));
  CHECK(cli::report(d.string()) == table);
}

TEST_CASE("identical configs reproduce identical outputs") {
  const auto d = scratch("repro");
  const auto cfg = write(d / "c.json", R"({"mesh": {"level": 1}, "optimize": {"max_iter": 2}})");
  REQUIRE(cso_run({"optimize", "--config", cfg, "--out", (d / "a").string()}).code == 0);
  REQUIRE(cso_run({"optimize", "--config", cfg, "--out", (d / "b").string()}).code == 0);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  CHECK(slurp(d / "a" / "iterations.csv") == slurp(d / "b" / "iterations.csv"));
  CHECK(slurp(d / "a" / "final.node") == slurp(d / "b" / "final.node"));
}
