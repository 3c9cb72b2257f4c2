#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "doctest.h"
#include "kiteopt/errors.hpp"
#include "kiteopt/guessgen.hpp"
#include "kiteopt/kitecli.hpp"

using namespace kiteopt;
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Scratch directory removed on scope exit.
struct ScratchDir {
  fs::path path;
  ScratchDir() : path(fs::temp_directory_path() / ("kitecli_test_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

int count(const std::string& text, const std::string& needle) {
  int n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

CycleResult guess_result(double w) {
  PilotOptions opts;
  opts.intervals = 60;
  const CollocationNlp nlp = make_nlp(SystemParams{}, w, opts);
  return nlp.extract(synth_guess(nlp));
}

}  // namespace

TEST_CASE("configuration round trip") {
  const cli::ToolConfig defaults;
  const std::string text = cli::canonical_text(defaults);
  const cli::ToolConfig back = cli::parse_config(ordered_json::parse(text));
  CHECK(cli::canonical_text(back) == text);
  CHECK(cli::config_hash(back) == cli::config_hash(defaults));
  CHECK(cli::config_hash(defaults).size() == 16u);

  auto doc = ordered_json::parse(text);
  doc["system"]["area_m2"] = 150.0;
  doc["_note"] = "comments are ignored";
  const cli::ToolConfig changed = cli::parse_config(doc);
  CHECK(changed.params.area == 150.0);
  CHECK(cli::config_hash(changed) != cli::config_hash(defaults));

  const cli::ToolConfig partial = cli::parse_config(ordered_json::parse(R"({"mesh": {"intervals": 40}})"));
  CHECK(partial.plan.options.intervals == 40);
  CHECK(partial.params.area == defaults.params.area);
}

TEST_CASE("configuration errors") {
  CHECK_THROWS_AS(cli::parse_config(ordered_json::parse(R"({"system": {"wingspan": 3}})")), ConfigError);
  CHECK_THROWS_AS(cli::parse_config(ordered_json::parse(R"({"engine": {}})")), ConfigError);
  CHECK_THROWS_AS(cli::parse_config(ordered_json::parse(R"({"system": {"area_m2": "big"}})")), ConfigError);
  CHECK_THROWS_AS(cli::parse_config(ordered_json::parse(R"({"mesh": {"intervals": 5}})")), ConfigError);
  CHECK_THROWS_AS(cli::parse_config(ordered_json::parse(R"({"system": {"height_min_m": 700}})")), ConfigError);
  try {
    cli::load_config("/nonexistent/kite.json");
    FAIL("loaded a missing file");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/kite.json") != std::string::npos);
  }
}

TEST_CASE("trajectory table round trip") {
  const CycleResult r = guess_result(8.0);
  std::stringstream s;
  cli::write_trajectory(s, r);
  const auto rows = cli::read_trajectory(s);
  REQUIRE(rows.size() == r.t.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].t == r.t[i]);
    CHECK(rows[i].x == r.states[i].as_array());
    CHECK(rows[i].elec_power == r.flow[i].elec_power);
    CHECK(rows[i].reel_out == static_cast<bool>(r.reel_out[i]));
  }
  const CycleEnergy e = cli::table_energy(rows);
  CHECK(e.w_out == doctest::Approx(r.energy.w_out).epsilon(1e-9));
  CHECK(e.w_in == doctest::Approx(r.energy.w_in).epsilon(1e-9));
  CHECK(e.p_mean == doctest::Approx(r.energy.p_mean).epsilon(1e-9));
  CHECK(cli::table_lobes(rows) == count_lobes(r));
}

TEST_CASE("malformed trajectory tables") {
  auto read = [](const std::string& text) {
    std::istringstream in(text);
    return cli::read_trajectory(in);
  };
  const std::string header = std::string(cli::kTrajectoryHeader) + "\n";
  const std::string row = "0,300,0.5,0,0,1,0,2,0,1000,1800,out\n";
  CHECK_THROWS_AS(read(""), InputError);
  CHECK_THROWS_AS(read(header), InputError);
  CHECK_THROWS_AS(read("t,r\n" + row), InputError);
  CHECK_THROWS_AS(read(header + "0,300,0.5\n"), InputError);
  CHECK_THROWS_AS(read(header + "0,300,x,0,0,1,0,2,0,1000,1800,out\n"), InputError);
  CHECK_THROWS_AS(read(header + row + row), InputError);
  CHECK_THROWS_AS(read(header + "0,300,0.5,0,0,1,0,2,0,1000,1800,up\n"), InputError);
  CHECK(read(header + row).size() == 1u);
}

TEST_CASE("plot marks reel-out samples green") {
  std::stringstream s;
  const CycleResult r = guess_result(8.0);
  cli::write_trajectory(s, r);
  const auto rows = cli::read_trajectory(s);
  std::ostringstream svg;
  const cli::PlotInfo info = cli::write_svg(svg, rows, "test");
  int out = 0;
  for (const auto& row : rows) out += row.reel_out ? 1 : 0;
  CHECK(info.green_points == out);
  CHECK(info.total_points == static_cast<int>(rows.size()));
  CHECK(count(svg.str(), "fill=\"green\"") == out);
  CHECK(count(svg.str(), "fill=\"red\"") == info.total_points - out);
  CHECK(svg.str().find("<metadata>") != std::string::npos);
  CHECK(info.lobes == cli::table_lobes(rows));
  std::ostringstream empty;
  CHECK_THROWS_AS(cli::write_svg(empty, {}, "none"), InputError);
}

TEST_CASE("wind grid text") {
  const auto g = cli::parse_grid("5:18:1");
  CHECK(g.size() == 14u);
  CHECK(g.front() == 5.0);
  CHECK(cli::parse_grid("8:8:1").size() == 1u);
  for (const char* bad : {"5:18", "a:b:c", "0:5:1", "5:18:0", "5:18:1:2", "9:5:1"}) {
    CHECK_THROWS_AS(cli::parse_grid(bad), InputError);
  }
}

TEST_CASE("command exit codes and files") {
  ScratchDir scratch;
  std::ostringstream err;

  cli::CommandArgs missing;
  missing.config = scratch.path / "absent.json";
  std::ostringstream out;
  CHECK(cli::cmd_config(missing, out, err) == 1);

  cli::CommandArgs echo;
  std::ostringstream a, b;
  CHECK(cli::cmd_config(echo, a, err) == 0);
  {
    std::ofstream f(scratch.path / "echo.json");
    f << a.str();
  }
  echo.config = scratch.path / "echo.json";
  CHECK(cli::cmd_config(echo, b, err) == 0);
  CHECK(a.str() == b.str());

  cli::CommandArgs calm;
  calm.wind = 0.3;
  calm.starts = 1;
  calm.out = scratch.path / "calm";
  CHECK(cli::cmd_optimize(calm, err) == 2);
  CHECK_FALSE(fs::exists(calm.out / "trajectory.csv"));
  CHECK(fs::exists(calm.out / "summary.json"));

  cli::CommandArgs opt;
  opt.wind = 8.0;
  opt.starts = 1;
  opt.out = scratch.path / "w8";
  REQUIRE(cli::cmd_optimize(opt, err) == 0);
  for (const char* f : {"trajectory.csv", "summary.json", "diagnostics.json", "iterations.log"}) {
    CHECK(fs::exists(opt.out / f));
  }
  const auto summary = ordered_json::parse(slurp(opt.out / "summary.json"));
  CHECK(summary["feasible"].get<bool>());
  CHECK(summary["P_mean_W"].get<double>() > 0.0);

  cli::CommandArgs plot;
  plot.result = opt.out;
  plot.out = scratch.path / "plot.svg";
  CHECK(cli::cmd_plot(plot, err) == 0);
  CHECK(fs::exists(plot.out));
  cli::CommandArgs noplot;
  noplot.result = scratch.path / "nowhere";
  CHECK(cli::cmd_plot(noplot, err) == 1);

  cli::CommandArgs val;
  val.result = opt.out;
  const int code = cli::cmd_validate(val, err);
  CHECK((code == 0 || code == 2));
  CHECK(fs::exists(opt.out / "validation.csv"));

  cli::CommandArgs sw;
  sw.grid = "8:8:1";
  sw.starts = 1;
  sw.out = scratch.path / "sweep";
  REQUIRE(cli::cmd_sweep(sw, err) == 0);
  const std::string curve = slurp(sw.out / "power_curve.csv");
  CHECK(curve.rfind(std::string(cli::kPowerCurveHeader) + "\n", 0) == 0);
  CHECK(count(curve, "\n") == 2);
  CHECK(fs::exists(sw.out / "w_008.00" / "trajectory.csv"));

  cli::CommandArgs badgrid = sw;
  badgrid.grid = "8:5";
  CHECK(cli::cmd_sweep(badgrid, err) == 1);

  cli::CommandArgs sens;
  sens.params = {"wingspan"};
  sens.out = scratch.path / "sens";
  CHECK(cli::cmd_sensitivity(sens, err) == 1);

  cli::CommandArgs guess;
  guess.wind = 10.0;
  guess.out = scratch.path / "guess";
  CHECK(cli::cmd_guess(guess, err) == 0);
  CHECK(cli::read_trajectory(guess.out / "trajectory.csv").size() == 121u);

  cli::CommandArgs few;
  few.intervals = 5;
  few.out = scratch.path / "few";
  CHECK(cli::cmd_guess(few, err) == 1);
}

TEST_CASE("shipped default configuration matches the built-in defaults") {
  const cli::ToolConfig shipped = cli::load_config(fs::path(KITEOPT_CONFIG_DIR) / "default.json");
  CHECK(cli::canonical_text(shipped) == cli::canonical_text(cli::ToolConfig{}));
}
