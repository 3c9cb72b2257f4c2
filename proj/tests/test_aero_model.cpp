#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "kiteopt/errors.hpp"
#include "kiteopt/kite_model.hpp"

using namespace kiteopt;

namespace {

SystemParams uniform_wind(double w) {
  SystemParams p;
  p.wind.w_ref = w;
  p.wind.shear_exp = 0.0;
  return p;
}

}  // namespace

TEST_CASE("wind profile") {
  WindProfile prof;
  CHECK(wind_speed(prof, 100.0) == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(wind_speed(prof, 200.0) == doctest::Approx(10.0 * std::pow(2.0, 0.14)).epsilon(1e-14));
  CHECK(wind_speed(prof, 200.0) == doctest::Approx(11.02).epsilon(1e-3));
  WindProfile flat;
  flat.shear_exp = 0.0;
  CHECK(wind_speed(flat, 37.0) == 10.0);

  double prev = 0.0;
  for (double h = 0.0; h <= 1000.0; h += 7.5) {
    const double w = wind_speed(prof, h);
    CHECK(w >= prev);
    prev = w;
  }
  WindProfile bad;
  bad.h_ref = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("trim map coefficients") {
  const AeroTrimMap map;
  const auto full = aero_coeffs(map, 1.0);
  CHECK(full.lift == doctest::Approx(1.0));
  CHECK(full.drag == doctest::Approx(0.10));
  CHECK(full.glide == doctest::Approx(10.0));
  CHECK(full.resultant == doctest::Approx(1.005).epsilon(1e-3));
  const auto none = aero_coeffs(map, 0.0);
  CHECK(none.lift == doctest::Approx(0.3));
  CHECK(none.drag == doctest::Approx(0.0454).epsilon(1e-4));
  CHECK(none.glide == doctest::Approx(6.61).epsilon(1e-3));

  AeroTrimMap plain;
  plain.k_ind = 0.0;
  plain.c_D0 = 0.1;
  CHECK(aero_coeffs(plain, 1.0).glide == 10.0);

  double lift = -1.0, resultant = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const auto c = aero_coeffs(map, i / 100.0);
    CHECK(c.lift > lift);
    CHECK(c.resultant > resultant);
    lift = c.lift;
    resultant = c.resultant;
  }
  CHECK(force_modulation_range(map) > 3.0);
}

TEST_CASE("flow state at the zenith carries no wind along the tether") {
  SystemParams p = uniform_wind(10.0);
  const KiteState<double> x{300.0, std::numbers::pi / 2, 0.4, 0.0, 0.5};
  const KiteControl<double> u{0.0, 0.0, 0.0};
  const auto f = flow_state(p, x, u);
  CHECK(std::fabs(f.cos_theta) < 1e-15);
  CHECK(std::fabs(f.eff_wind) < 1e-14);
  CHECK(std::fabs(f.tether_force) < 1e-12);
  CHECK(std::fabs(f.mech_power) < 1e-12);
}

TEST_CASE("tether force at a forced effective wind of 2 m/s and zero trim") {
  SystemParams p = uniform_wind(2.0);
  const auto f = flow_state(p, KiteState<double>{300.0, 0.0, 0.0, 0.0, 0.0}, KiteControl<double>{0.0, 0.0, 0.0});
  CHECK(f.eff_wind == doctest::Approx(2.0));
  const auto c = aero_coeffs(p.aero, 0.0);
  const double expected = 0.5 * 1.225 * 120.0 * c.resultant * (1.0 + c.glide * c.glide) * 4.0;
  CHECK(f.tether_force == doctest::Approx(expected).epsilon(1e-13));
  CHECK(f.tether_force == doctest::Approx(3.99e3).epsilon(3e-3));
}

TEST_CASE("downwind kite at the Loyd reel speed") {
  SystemParams p = uniform_wind(10.0);
  const auto f = flow_state(p, KiteState<double>{300.0, 0.0, 0.0, 0.0, 1.0},
                            KiteControl<double>{0.0, 10.0 / 3.0, 0.0});
  CHECK(f.eff_wind == doctest::Approx(20.0 / 3.0));
  CHECK(f.tether_force == doctest::Approx(332e3).epsilon(2e-3));
  CHECK(f.mech_power == doctest::Approx(1.11e6).epsilon(5e-3));
  CHECK(f.elec_power == doctest::Approx(0.9 * f.mech_power).epsilon(1e-4));
}

TEST_CASE("crosswind power law peaks at a third of the wind speed") {
  SystemParams p = uniform_wind(10.0);
  p.gen_efficiency = 1.0;
  const KiteState<double> x{300.0, 0.0, 0.0, 0.0, 1.0};
  const auto c = aero_coeffs(p.aero, 1.0);
  const double scale = 0.5 * p.air_density * p.area * c.resultant * (1.0 + c.glide * c.glide) * 1000.0;
  double best_f = 0.0, best_p = 0.0;
  for (int i = 1; i < 3000; ++i) {
    const double f = i / 3000.0;
    const double pm = flow_state(p, x, KiteControl<double>{0.0, 10.0 * f, 0.0}).mech_power;
    CHECK(pm == doctest::Approx(scale * f * (1.0 - f) * (1.0 - f)).epsilon(1e-12));
    if (pm > best_p) {
      best_p = pm;
      best_f = f;
    }
  }
  CHECK(best_f == doctest::Approx(1.0 / 3.0).epsilon(1e-3));
  CHECK(best_p / scale == doctest::Approx(4.0 / 27.0).epsilon(1e-6));
}

TEST_CASE("force is non-negative and power follows the reel direction") {
  SystemParams p;
  for (double v : {-6.0, -1.0, 0.5, 3.0}) {
    const auto f = flow_state(p, KiteState<double>{400.0, 0.5, 0.3, 1.0, 0.4}, KiteControl<double>{0.1, v, 0.0});
    REQUIRE(f.eff_wind > 0.0);
    CHECK(f.tether_force >= 0.0);
    CHECK(std::signbit(f.mech_power) == std::signbit(v));
  }
}

TEST_CASE("kinematic rates") {
  SystemParams p = uniform_wind(10.0);
  SUBCASE("straight climb") {
    const auto d = dynamics_rhs(p, KiteState<double>{300.0, 0.4, 0.0, 0.0, 1.0}, KiteControl<double>{0.0, 0.0, 0.0});
    CHECK(d[kAzimuth] == 0.0);
    CHECK(d[kElevation] > 0.0);
    CHECK(d[kHeading] == 0.0);
    const auto f = flow_state(p, KiteState<double>{300.0, 0.4, 0.0, 0.0, 1.0}, KiteControl<double>{0.0, 0.0, 0.0});
    CHECK(d[kElevation] == doctest::Approx(f.kite_speed / 300.0));
  }
  SUBCASE("no effective wind, no motion") {
    SystemParams calm = uniform_wind(3.0);
    const auto d = dynamics_rhs(calm, KiteState<double>{300.0, 0.0, 0.0, 0.3, 1.0},
                                KiteControl<double>{0.5, 3.0, 0.0});
    CHECK(std::fabs(d[kElevation]) < 1e-15);
    CHECK(std::fabs(d[kAzimuth]) < 1e-15);
    CHECK(std::fabs(d[kHeading]) < 1e-15);
    CHECK(d[kTether] == 3.0);
  }
  SUBCASE("sideways flight at 20 m/s") {
    const double beta = std::numbers::pi / 6;
    SystemParams side = uniform_wind(2.0 / std::cos(beta));
    const KiteState<double> x{300.0, beta, 0.0, std::numbers::pi / 2, 1.0};
    const auto f = flow_state(side, x, KiteControl<double>{0.0, 0.0, 0.0});
    REQUIRE(f.kite_speed == doctest::Approx(20.0));
    const auto d = dynamics_rhs(side, x, KiteControl<double>{0.0, 0.0, 0.0});
    CHECK(std::fabs(d[kElevation]) < 1e-15);
    CHECK(d[kAzimuth] == doctest::Approx(20.0 / (300.0 * std::cos(beta))));
    CHECK(d[kAzimuth] == doctest::Approx(0.0770).epsilon(1e-3));
  }
}

TEST_CASE("electrical power split by sign") {
  SystemParams p;
  p.power_blend = 0.0;
  CHECK(electrical_power(p, 1000.0) == doctest::Approx(900.0));
  CHECK(electrical_power(p, -900.0) == doctest::Approx(-1000.0));
  SystemParams smooth;
  CHECK(electrical_power(smooth, 1e5) == doctest::Approx(0.9e5).epsilon(1e-3));
  CHECK(electrical_power(smooth, -1e5) == doctest::Approx(-1e5 / 0.9).epsilon(1e-3));
}

TEST_CASE("cycle energy bookkeeping") {
  SUBCASE("constant generation") {
    const std::vector<PowerSample> s{{0.0, 1e4, 1.0, 1e4}, {100.0, 1e4, 1.0, 1e4}};
    const auto e = cycle_energy(s);
    CHECK(e.w_out == doctest::Approx(1e6));
    CHECK(e.w_in == 0.0);
    CHECK(e.p_mean == doctest::Approx(1e4));
    CHECK(e.t_cycle == 100.0);
  }
  SUBCASE("generation then motoring") {
    const double eps = 1e-9;
    const std::vector<PowerSample> s{
        {0.0, 3e4, 1.0, 1.5e4}, {80.0, 3e4, 1.0, 1.5e4}, {80.0 + eps, 1e4, -1.0, -1e4}, {100.0, 1e4, -1.0, -1e4}};
    const auto e = cycle_energy(s);
    CHECK(e.w_out == doctest::Approx(1.2e6).epsilon(1e-9));
    CHECK(e.w_in == doctest::Approx(0.2e6).epsilon(1e-9));
    CHECK(e.p_mean == doctest::Approx(1e4).epsilon(1e-9));
    CHECK(e.reel_out_fraction == doctest::Approx(0.8).epsilon(1e-9));
  }
  SUBCASE("no winch motion") {
    const std::vector<PowerSample> s{{0.0, 5e3, 0.0, 0.0}, {10.0, 5e3, 0.0, 0.0}, {30.0, 4e3, 0.0, 0.0}};
    const auto e = cycle_energy(s);
    CHECK(e.w_out == 0.0);
    CHECK(e.w_in == 0.0);
    CHECK(e.p_mean == 0.0);
  }
  SUBCASE("bad grids") {
    CHECK_THROWS_AS(cycle_energy(std::vector<PowerSample>{{0.0, 0.0, 0.0, 0.0}}), InputError);
    CHECK_THROWS_AS(cycle_energy(std::vector<PowerSample>{{1.0, 0.0, 0.0, 0.0}, {1.0, 0.0, 0.0, 0.0}}), InputError);
  }
}

TEST_CASE("parameter validation and named access") {
  SystemParams p;
  CHECK_NOTHROW(p.validate());
  SystemParams bad = p;
  bad.force_max = bad.force_min;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  SystemParams q;
  double* area = find_system_param(q, "A");
  REQUIRE(area != nullptr);
  *area = 150.0;
  CHECK(q.area == 150.0);
  CHECK(find_system_param(q, "c_L_max") == &q.aero.c_L_max);
  CHECK(find_system_param(q, "nope") == nullptr);
}
