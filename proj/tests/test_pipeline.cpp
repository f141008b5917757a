#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <catch_amalgamated.hpp>

#include "bcsgap/bcsgap.hpp"

using namespace bcsgap;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bcsgap-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

json base_config() {
  return json::parse(slurp(fs::path(BCSGAP_CONFIG_DIR) / "default.json"));
}

/// Coarser quadrature keeps the CLI round trips quick.
json quick_config() {
  json j = base_config();
  j["quadrature"]["panels"] = 16;
  return j;
}

int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + BCSGAP_CLI + "\" " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

json without_metadata(json j) {
  j.erase("metadata");
  return j;
}

}  // namespace

TEST_CASE("config: defaults round-trip through JSON") {
  const RunConfig c = parse_config(base_config());
  const RunConfig d = parse_config(to_json(c));
  CHECK(to_json(c) == to_json(d));
  CHECK(c.kernel.kind == KernelKind::blend);
  CHECK(c.temps.count == 17);
}

TEST_CASE("config: unknown keys and bad values are rejected") {
  json j = base_config();
  j["model"]["epsilon_typo"] = 0.1;
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  j = base_config();
  j["extra"] = 1;
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  j = base_config();
  j["kernel"]["kind"] = "gaussian";
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  j = base_config();
  j["model"]["u1"] = "small";
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  j = base_config();
  j["window"] = {{"mode", "explicit"}};
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  j = base_config();
  j["tolerances"]["h2"] = 0.01;
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  j = base_config();
  j["tolerances"]["n_fit"] = 20;
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  j = base_config();
  j["kernel"] = {{"kind", "tabulated"}, {"grid", {0.01, 1.0}}, {"values", {{0.25, 0.25}, {0.25}}}};
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/bcsgap.json"), ConfigError);
}

TEST_CASE("numbers carry seventeen significant digits") {
  CHECK(format_number(0.1) == "0.10000000000000001");
  CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(format_number(std::nan("")) == "nan");
  const std::string s = dump_json(json{{"x", 2.0 / 3.0}, {"v", {1.0, 0.5}}});
  CHECK(s.find("0.66666666666666663") != std::string::npos);
}

TEST_CASE("temperature grid holds every required offset") {
  const RunConfig c = parse_config(base_config());
  const double t_c = 0.0165, tau = 0.8 * t_c;
  const auto g = temperature_grid(tau, t_c, c);
  CHECK(std::is_sorted(g.begin(), g.end()));
  CHECK(std::adjacent_find(g.begin(), g.end()) == g.end());
  CHECK(g.back() == t_c);
  for (double s : required_offsets(c.tolerances)) {
    const double t = offset_temperature(t_c, s);
    CHECK(std::find(g.begin(), g.end(), t) != g.end());
  }
  RunConfig coarse = c;
  coarse.temps.count = 6;
  CHECK_THROWS_AS(temperature_grid(tau, t_c, coarse), GridTooCoarse);
}

TEST_CASE("exit codes map failures to their classes") {
  RunOptions quiet;
  quiet.log = nullptr;
  auto code = [&](auto ex) {
    return exit_code_for(std::make_exception_ptr(ex), quiet);
  };
  CHECK(code(ConfigError("x")) == ExitCode::config_error);
  CHECK(code(NotConverged(0.01, 5, 1e-3, false)) == ExitCode::resolution_error);
  CHECK(code(GridTooCoarse(3, 7)) == ExitCode::resolution_error);
  CHECK(code(MissingTemperatures({0.01})) == ExitCode::resolution_error);
  CHECK(code(FitIllConditioned(1e12)) == ExitCode::resolution_error);
  CHECK(code(NoCertifiedWindow(3.0, 0.01, 0.95)) == ExitCode::certification_error);
}

TEST_CASE("verify report rejects duplicate ids and tracks failures") {
  VerifyReport r;
  r.expect_le("a", "small", 1.0, 2.0);
  r.info("b", "noted", 3.0);
  CHECK(r.passed());
  CHECK_THROWS_AS(r.expect_le("a", "again", 1.0, 2.0), std::logic_error);
  r.expect_ge("c", "large", 1.0, 2.0);
  CHECK_FALSE(r.passed());
  CHECK(r.to_json()["failed"] == 1);
}

TEST_CASE("CLI: configuration problems exit with 2") {
  const auto dir = scratch("cfg");
  CHECK(cli("solve --config /nonexistent.json --quiet") == 2);
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK(cli("solve --config " + (dir / "bad.json").string() + " --quiet") == 2);
  CHECK(cli("--bogus-flag") == 2);
  json j = quick_config();
  j["window"] = {{"mode", "explicit"}, {"tau", 10.0}};
  CHECK(cli("solve --quiet --uncertified --config " + write_config(dir, j).string() +
            " --out " + dir.string()) == 2);
  j = quick_config();
  j["model"]["u1"] = 0.3;  // u1 > u2
  CHECK(cli("simple --quiet --config " + write_config(dir, j).string() + " --out " +
            dir.string()) == 2);
}

TEST_CASE("CLI: simple writes both envelope curves") {
  const auto dir = scratch("simple");
  REQUIRE(cli("simple --quiet --config " + write_config(dir, quick_config()).string() +
              " --out " + dir.string()) == 0);
  const json s = json::parse(slurp(dir / "simple.json"));
  CHECK(s["tau_ordered"] == true);
  CHECK(slurp(dir / "simple_delta1.csv").rfind("T,delta\n", 0) == 0);
  CHECK(fs::exists(dir / "simple_delta2.csv"));
}

TEST_CASE("CLI: solve without a certified window exits with 3") {
  const auto dir = scratch("cert");
  CHECK(cli("solve --quiet --config " + write_config(dir, quick_config()).string() + " --out " +
            dir.string()) == 3);
  CHECK_FALSE(fs::exists(dir / "surface.csv"));
}

TEST_CASE("CLI: uncertified solve writes flagged outputs") {
  const auto dir = scratch("uncert");
  REQUIRE(cli("solve --quiet --uncertified --config " + write_config(dir, quick_config()).string() +
              " --out " + dir.string()) == 0);
  const std::string csv = slurp(dir / "surface.csv");
  CHECK(csv.rfind("T,x,u,iterations,residual,certified\n", 0) == 0);
  CHECK(csv.find(",1\n") == std::string::npos);
  const json crit = json::parse(slurp(dir / "critical.json"));
  CHECK(crit["critical"]["window"]["certified"] == false);
  CHECK(crit["critical"]["window"]["source"] == "fallback");
}

TEST_CASE("CLI: thermo resolution failures exit with 4") {
  const auto dir = scratch("res");
  json j = quick_config();
  j["temps"]["count"] = 3;
  CHECK(cli("thermo --quiet --uncertified --config " + write_config(dir, j).string() + " --out " +
            dir.string()) == 4);
}

TEST_CASE("CLI: verify fails on a kernel outside the coupling band") {
  const auto dir = scratch("verify-band");
  json j = quick_config();
  j["kernel"] = {{"kind", "constant"}, {"value", 0.3}};
  CHECK(cli("verify --quiet --config " + write_config(dir, j).string() + " --out " + dir.string()) ==
        1);
  const json v = json::parse(slurp(dir / "verify.json"));
  CHECK(v["overall"] == "fail");
  bool model_failed = false;
  for (const auto& c : v["checks"])
    if (c["id"] == "model.valid") model_failed = c["status"] == "fail";
  CHECK(model_failed);
}

TEST_CASE("CLI: verify reports a too-coarse temperature grid") {
  const auto dir = scratch("verify-coarse");
  json j = quick_config();
  j["temps"]["count"] = 3;
  CHECK(cli("verify --quiet --config " + write_config(dir, j).string() + " --out " + dir.string()) ==
        1);
  const json v = json::parse(slurp(dir / "verify.json"));
  bool grid_failed = false;
  for (const auto& c : v["checks"])
    if (c["id"] == "grid.resolution") grid_failed = c["status"] == "fail";
  CHECK(grid_failed);
}

TEST_CASE("CLI: repeated runs are byte-identical apart from the timestamp") {
  const auto a = scratch("det-a"), b = scratch("det-b");
  const auto cfg = write_config(a, quick_config());
  REQUIRE(cli("thermo --quiet --uncertified --config " + cfg.string() + " --out " + a.string()) == 0);
  REQUIRE(cli("thermo --quiet --uncertified --config " + cfg.string() + " --out " + b.string()) == 0);
  for (const char* f : {"surface.csv", "thermo.csv"}) CHECK(slurp(a / f) == slurp(b / f));
  for (const char* f : {"surface.json", "critical.json", "heat_jump.json"}) {
    const json ja = json::parse(slurp(a / f)), jb = json::parse(slurp(b / f));
    CHECK(dump_json(without_metadata(ja)) == dump_json(without_metadata(jb)));
    CHECK(ja["metadata"].contains("generated_at"));
  }
  // every number in the CSV is written at full precision
  const std::string thermo = slurp(a / "thermo.csv");
  const std::regex short_number(R"((^|,)-?0\.\d{1,5}(,|\n))");
  CHECK_FALSE(std::regex_search(thermo, short_number));
}
