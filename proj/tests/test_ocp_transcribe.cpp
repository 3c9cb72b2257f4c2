#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "kiteopt/errors.hpp"
#include "kiteopt/guessgen.hpp"
#include "kiteopt/transcribe.hpp"

using namespace kiteopt;

namespace {

SystemParams at_wind(double w) {
  SystemParams p;
  p.wind.w_ref = w;
  return p;
}

CollocationNlp nlp_of(const OcpProblem& problem, int intervals) {
  return transcribe(scale(problem), Mesh::uniform(intervals));
}

std::string config_error_text(const SystemParams& p) {
  try {
    build_ocp(p);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("problem structure") {
  const OcpProblem ocp = build_ocp(at_wind(8.0));
  CHECK(ocp.path.size() == 5u);
  CHECK(ocp.path.size() + ocp.boxes.size() >= 9u);
  for (const char* name : {"height", "force_hi", "force_lo", "power_cap", "effective_wind"}) {
    CHECK(ocp.find_path(name) != nullptr);
  }
  CHECK(ocp.num_relaxed() == 0);
  CHECK(ocp.time_bounds == Interval{40.0, 400.0});
  CHECK(ocp.state_bounds[kTether] == Interval{200.0, 600.0});
  CHECK(ocp.control_bounds[kReelSpeed] == Interval{-6.0, 8.0});
}

TEST_CASE("inconsistent settings are rejected") {
  SystemParams p;
  p.height_min = 700.0;
  CHECK(config_error_text(p).find("height floor unreachable") != std::string::npos);

  OcpOptions o;
  o.cycle_time = {50.0, 20.0};
  CHECK_THROWS_AS(build_ocp(SystemParams{}, o), ConfigError);
  OcpOptions unknown;
  unknown.disabled = {"no_such_constraint"};
  CHECK_THROWS_AS(build_ocp(SystemParams{}, unknown), ConfigError);
}

TEST_CASE("relaxation adds slacks only where allowed") {
  const OcpProblem base = build_ocp(at_wind(8.0));
  const OcpProblem relaxed = relax(base, "force_lo", 10.0);
  CHECK(relaxed.num_relaxed() == 1);
  CHECK(relaxed.find_path("force_lo")->relaxed);
  CHECK(nlp_of(relaxed, 10).num_variables() == nlp_of(base, 10).num_variables() + 11);
  try {
    relax(base, "height", 10.0);
    FAIL("height relaxed");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("not relaxable") != std::string::npos);
  }
  CHECK_THROWS_AS(relax(base, "force_lo", 0.0), ConfigError);
  CHECK_THROWS_AS(relax(base, "bogus", 1.0), ConfigError);
}

TEST_CASE("scaling round trip") {
  const ScaledOcp s = scale(build_ocp(at_wind(8.0)));
  const std::array<double, kNumStates> x{432.1, 0.5, -0.3, 2.0, 0.7};
  const auto back = s.map.state_to_physical(s.map.state_to_scaled(x));
  for (int k = 0; k < kNumStates; ++k) CHECK(back[k] == doctest::Approx(x[k]).epsilon(1e-15));
  const std::array<double, kNumControls> u{0.2, -4.0, 0.05};
  const auto ub = s.map.control_to_physical(s.map.control_to_scaled(u));
  for (int k = 0; k < kNumControls; ++k) CHECK(ub[k] == doctest::Approx(u[k]).epsilon(1e-15));
  CHECK(s.map.time_to_physical(s.map.time_to_scaled(123.0)) == doctest::Approx(123.0));
  CHECK(s.map.scaling.state[kTether] == 600.0);
  CHECK(s.map.scaling.force == 6.0e4);
  Scaling bad;
  bad.time = 0.0;
  CHECK_THROWS_AS(scale(build_ocp(SystemParams{}), bad), ConfigError);
}

TEST_CASE("transcription dimensions at ten intervals") {
  const CollocationNlp nlp = nlp_of(build_ocp(at_wind(8.0)), 10);
  CHECK(nlp.num_variables() == 89);
  CHECK(nlp.num_equalities() == 5 * 10 + 5);
  CHECK(nlp.num_inequalities() == 5 * 11);
  CHECK(nlp.row_name(0) == "defect[0].0");
  CHECK(nlp.row_name(50) == "periodicity.0");
  CHECK(nlp.row_name(55) == "height[0]");
  const auto& layout = nlp.layout();
  CHECK(layout.locate(layout.time()).kind == DecisionLayout::Kind::time);
  CHECK(layout.locate(layout.control(3, 1)).node == 3);
  CHECK_THROWS_AS(layout.locate(89), ip::LayoutError);
  CHECK_THROWS_AS(Mesh(std::vector<double>{0.0, 0.5, 0.5, 1.0}), InputError);
}

TEST_CASE("trapezoid rule on exponential decay") {
  const int n = 1000;
  const double h = 1.0 / n;
  double x = 1.0;
  for (int i = 0; i < n; ++i) {
    const double next = x * (1.0 - 0.5 * h) / (1.0 + 0.5 * h);
    CHECK(std::fabs(trapezoid_defect(x, next, -x, -next, 1.0, h)) < 1e-15);
    x = next;
  }
  CHECK(x == doctest::Approx(std::exp(-1.0)).epsilon(1e-3));
  CHECK(std::fabs(x - std::exp(-1.0)) < 1e-6);
}

TEST_CASE("constant trajectory under frozen kinematics has zero defects") {
  const RestrictedSetup setup = loyd_restricted_setup(SystemParams{}, 10.0);
  const CollocationNlp nlp = nlp_of(build_ocp(setup.params, setup.options), 8);
  std::vector<std::array<double, kNumStates>> x(9, {300.0, 1e-6, 0.0, 0.0, 1.0});
  std::vector<std::array<double, kNumControls>> u(9, {0.0, 0.0, 0.0});
  const auto z = nlp.pack(x, u, 100.0);
  const Evaluation e = nlp.evaluate(z);
  for (int r = 0; r < nlp.num_equalities(); ++r) CHECK(e.constraints[r] == 0.0);
}

TEST_CASE("objective without regularization is the negative mean power") {
  OcpOptions o;
  o.eps_reg = 0.0;
  const CollocationNlp nlp = nlp_of(build_ocp(at_wind(9.0), o), 30);
  const auto z = synth_guess(nlp);
  const CycleResult r = nlp.extract(z);
  double mean = 0.0;
  for (int i = 0; i < nlp.mesh().nodes(); ++i) mean += nlp.mesh().weight(i) * r.flow[i].elec_power;
  CHECK(nlp.objective(z) == doctest::Approx(-mean / 2.0e5).epsilon(1e-12));
}

TEST_CASE("guess and extraction") {
  const CollocationNlp nlp = nlp_of(build_ocp(at_wind(8.0)), 40);
  const auto z = synth_guess(nlp);
  const CycleResult r = nlp.extract(z);
  REQUIRE(r.states.size() == 41u);
  const auto first = r.states.front().as_array();
  const auto last = r.states.back().as_array();
  for (int k = 0; k < kNumStates; ++k) CHECK(std::fabs(first[k] - last[k]) < 1e-12);
  CHECK(r.periodicity_residual < 1e-12);
  for (int i = 0; i < 41; ++i) {
    CHECK(r.t[i] == doctest::Approx(r.cycle_time * nlp.mesh().tau(i)));
    CHECK(static_cast<bool>(r.reel_out[i]) == is_reel_out(r.controls[i].reel_speed));
  }
  double worst = 0.0;
  for (const auto& c : r.residuals) {
    CHECK(c.max_violation >= 0.0);
    worst = std::max(worst, c.max_violation);
  }
  CHECK(r.max_violation == worst);

  const Evaluation a = nlp.evaluate(z);
  const Evaluation b = nlp.evaluate(z);
  CHECK(a.objective == b.objective);
  CHECK(a.constraints == b.constraints);
}

TEST_CASE("a control change touches only neighbouring rows") {
  const CollocationNlp nlp = nlp_of(build_ocp(at_wind(8.0)), 20);
  const auto z = synth_guess(nlp);
  auto moved = z;
  const int node = 7;
  moved[nlp.layout().control(node, kReelSpeed)] += 0.01;
  const Evaluation a = nlp.evaluate(z);
  const Evaluation b = nlp.evaluate(moved);
  const int n_def = kNumStates * 20;
  const int n_eq = nlp.num_equalities();
  for (std::size_t r = 0; r < a.constraints.size(); ++r) {
    const int row = static_cast<int>(r);
    bool near = false;
    if (row < n_def) near = row / kNumStates == node - 1 || row / kNumStates == node;
    else if (row >= n_eq) near = (row - n_eq) / nlp.num_path() == node;
    if (!near) CHECK(a.constraints[r] == b.constraints[r]);
  }
  CHECK(a.objective != b.objective);
}

TEST_CASE("non-finite evaluation names the node") {
  const CollocationNlp nlp = nlp_of(build_ocp(at_wind(8.0)), 10);
  auto z = synth_guess(nlp);
  z[nlp.layout().state(4, kElevation)] = std::nan("");
  try {
    nlp.evaluate(z);
    FAIL("no error");
  } catch (const EvaluationError& e) {
    CHECK(e.node() == 3);
  }
}
