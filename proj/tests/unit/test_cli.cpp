#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "hlab/cli.hpp"
#include "hlab/grid.hpp"
#include "json.hpp"

using namespace hlab;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream o, e;
  const int code = run(args, o, e);
  return {code, o.str(), e.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "hlab_cli_test" / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

std::string config(const std::string& name) { return std::string(HLAB_SOURCE_DIR) + "/configs/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "manifest.json")); }

// Column `col` of a CSV body (header skipped).
std::vector<double> column(const std::string& csv, int col) {
  std::vector<double> out;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string cell;
    for (int k = 0; k <= col; ++k) std::getline(ls, cell, ',');
    out.push_back(std::stod(cell));
  }
  return out;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("fnv1a64 reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
  }

  TEST_CASE("solve writes the field, stats and manifest") {
    const auto dir = scratch("solve");
    const auto r = cli({"solve", "--config", config("free3d.cfg"), "--points", "33", "--half-width", "4", "--out",
                        dir.string()});
    INFO(r.err);
    REQUIRE(r.code == 0);
    for (const char* f : {"u.bin", "solve_stats.csv", "u_slice.dat", "apriori.csv", "manifest.json"})
      CHECK(fs::exists(dir / f));
    const WaveField u = read_wavefield((dir / "u.bin").string());
    CHECK(u.grid.points() == 33);
    CHECK(u.grid.half_width() == 4.0);
    const auto m = manifest(dir);
    CHECK(m["subcommand"] == "solve");
    CHECK(m["status"] == "ok");
    CHECK(m["exit_code"] == 0);
    CHECK(m["config_hash"].get<std::string>().rfind("fnv1a64:", 0) == 0);
    CHECK(m["artifacts"].size() >= 4);
    const auto res = column(slurp(dir / "solve_stats.csv"), 2);
    REQUIRE(res.size() == 1);
    CHECK(res[0] <= 1e-8);
  }

  TEST_CASE("eikonal on the Saito preset") {
    const auto dir = scratch("eikonal");
    const auto r = cli({"eikonal", "--preset", "saito", "--lambda", "2", "--out", dir.string()});
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto res = column(slurp(dir / "eikonal_residual.csv"), 2);
    REQUIRE_FALSE(res.empty());
    double m = 0.0;
    for (double v : res) m = std::max(m, v);
    CHECK(m <= 1e-10);
    CHECK(fs::exists(dir / "eikonal.csv"));
    CHECK(fs::exists(dir / "eikonal_summary.csv"));
  }

  TEST_CASE("invalid configuration exits 2 and still leaves a manifest") {
    const auto dir = scratch("bad");
    const auto r = cli({"sweep", "--config", config("bad.cfg"), "--out", dir.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("epsilon") != std::string::npos);
    const auto m = manifest(dir);
    CHECK(m["status"] == "failed");
    CHECK(m["exit_code"] == 2);
  }

  TEST_CASE("usage errors") {
    CHECK(cli({}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({"solve", "--out", scratch("none").string()}).code == 2);
    CHECK(cli({"solve", "--preset", "nosuch", "--out", scratch("np").string()}).code == 2);
    CHECK(cli({"solve", "--preset", "free", "--bogus-flag"}).code == 2);
    CHECK(cli({"solve", "--preset", "free", "--dim", "5"}).code == 2);
    CHECK(cli({"solve", "--config", "/nonexistent.cfg", "--out", scratch("nf").string()}).code == 2);
    CHECK(cli({"solve", "--preset", "free", "--epsilon", "-1", "--out", scratch("neg").string()}).code == 2);
    CHECK(cli({"--version"}).code == 0);
  }

  TEST_CASE("dry run and config hashing") {
    const auto a = cli({"solve", "--preset", "free", "--dry-run", "--out", scratch("d1").string()});
    const auto b = cli({"solve", "--preset", "free", "--dry-run", "--out", scratch("d2").string()});
    const auto c = cli({"solve", "--preset", "free", "--dry-run", "--lambda", "1.5", "--out", scratch("d3").string()});
    REQUIRE(a.code == 0);
    CHECK(a.out.find("config ok") != std::string::npos);
    CHECK(a.out == b.out);
    CHECK(a.out != c.out);
    CHECK_FALSE(fs::exists(scratch("d1") / "u.bin"));
  }

  TEST_CASE("overrides are recorded") {
    const auto dir = scratch("ovr");
    const auto r = cli({"solve", "--preset", "free", "--dim", "2", "--points", "33", "--epsilon", "0.5", "--out",
                        dir.string()});
    REQUIRE(r.code == 0);
    const auto m = manifest(dir);
    bool seen = false;
    for (const auto& kv : m["parameters"].items())
      if (kv.value().dump().find("epsilon") != std::string::npos || kv.key() == "epsilon") seen = true;
    CHECK(seen);
    CHECK(m["config_text"].get<std::string>().find("# overrides") != std::string::npos);
  }

  TEST_CASE("remaining subcommands run on small grids") {
    struct Case {
      std::vector<std::string> args;
      const char* artifact;
    };
    const std::vector<Case> cases{
        {{"sweep", "--preset", "free", "--dim", "2", "--points", "33", "--eps-count", "3"}, "sweep.csv"},
        {{"norms", "--preset", "azimuthal-b", "--dim", "2", "--points", "33"}, "functionals.csv"},
        {{"radiation", "--preset", "free", "--dim", "2", "--points", "65", "--phase", "explicit_ninf"},
         "functionals.csv"},
        {{"radiation", "--preset", "free", "--dim", "2", "--points", "65", "--phase", "eikonal", "--init", "one"},
         "functionals.csv"},
        {{"concentration", "--preset", "angular-index", "--dim", "2", "--points", "65"}, "angular_profile.dat"},
        {{"verify-identities", "--preset", "azimuthal-b", "--dim", "2", "--levels", "33", "--levels", "65"},
         "identity_orders.csv"},
        {{"check-hypotheses", "--preset", "saito", "--dim", "3", "--points", "33"}, "hypotheses.csv"},
    };
    int k = 0;
    for (const auto& c : cases) {
      const auto dir = scratch("sub" + std::to_string(k++));
      auto args = c.args;
      args.push_back("--out");
      args.push_back(dir.string());
      const auto r = cli(args);
      CAPTURE(args[0]);
      INFO(r.err);
      CHECK(r.code == 0);
      CHECK(fs::exists(dir / c.artifact));
      CHECK(fs::exists(dir / "manifest.json"));
    }
  }

  TEST_CASE("a stored field can be post-processed") {
    const auto dir = scratch("field");
    REQUIRE(cli({"solve", "--preset", "free", "--dim", "2", "--points", "65", "--out", dir.string()}).code == 0);
    const auto dir2 = scratch("field2");
    const auto r = cli({"radiation", "--preset", "free", "--dim", "2", "--points", "65", "--field",
                        (dir / "u.bin").string(), "--out", dir2.string()});
    INFO(r.err);
    CHECK(r.code == 0);
    const auto bad = cli({"radiation", "--preset", "free", "--dim", "2", "--points", "33", "--field",
                          (dir / "u.bin").string(), "--out", scratch("field3").string()});
    CHECK(bad.code != 0);
  }

  TEST_CASE("strict mode maps hypothesis violations to exit 4") {
    // a strong magnetic field pushes beta above 1
    const auto dir = scratch("strict");
    {
      std::ofstream f(dir.string() + ".cfg");
      f << "[scenario]\ndimension = 2\nlambda = 1\nhalf_width = 8\npoints = 33\n[fields]\nn = \"1\"\n"
           "b = \"-3*x2/(1 + r^2)\", \"3*x1/(1 + r^2)\"\n";
    }
    const auto loose = cli({"norms", "--config", dir.string() + ".cfg", "--out", dir.string()});
    const auto strict = cli({"norms", "--config", dir.string() + ".cfg", "--strict", "--out", dir.string()});
    CHECK(loose.code == 0);
    CHECK(strict.code == 4);
  }
}
