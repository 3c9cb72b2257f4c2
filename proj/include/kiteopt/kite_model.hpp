#pragma once

// Quasi-steady crosswind point-mass kite on the tether sphere.
//
// The kite is massless and always flies at the crosswind equilibrium speed
// v_k = E * w_e, where w_e is the wind component along the tether minus the
// reel speed. Position is (r, beta, phi) in spherical coordinates about the
// ground station with phi measured from the downwind axis; psi is the heading
// on the tangent plane (psi = 0 climbs, psi = pi/2 moves towards +phi).

#include <array>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kiteopt/aero.hpp"

namespace kiteopt {

struct SystemParams {
  double area = 120.0;            // A [m^2]
  double air_density = 1.225;     // rho [kg/m^3]
  double steer_gain = 0.1;        // [rad/m]
  AeroTrimMap aero;
  WindProfile wind;
  double gen_efficiency = 0.9;    // reel-out, mechanical -> electrical
  double motor_efficiency = 0.9;  // reel-in, electrical -> mechanical
  double force_min = 1.0e3;       // [N]
  double force_max = 6.0e4;       // [N]
  double rated_power = 2.0e5;     // [W]
  double tether_min = 200.0;      // [m]
  double tether_max = 600.0;      // [m]
  double height_min = 80.0;       // [m]
  double reel_speed_min = -6.0;   // [m/s]
  double reel_speed_max = 8.0;    // [m/s]
  double trim_rate_max = 0.2;     // [1/s]
  double eff_wind_min = 0.5;      // [m/s]
  double power_blend = 100.0;     // width of the efficiency sign blend [W]

  // Throws ConfigError naming the first violated invariant.
  void validate() const;
};

// Named scalar access for configuration and sensitivity studies.
std::map<std::string, double SystemParams::*> system_param_fields();
double* find_system_param(SystemParams& params, const std::string& name);

inline constexpr int kNumStates = 5;
inline constexpr int kNumControls = 3;

enum StateIndex : int { kTether = 0, kElevation = 1, kAzimuth = 2, kHeading = 3, kTrim = 4 };
enum ControlIndex : int { kSteer = 0, kReelSpeed = 1, kTrimRate = 2 };

template <class S>
struct KiteState {
  S r;      // tether length [m]
  S beta;   // elevation [rad]
  S phi;    // azimuth from downwind [rad]
  S psi;    // heading [rad]
  S trim;   // [-]

  static KiteState from(std::span<const S> v) { return {v[0], v[1], v[2], v[3], v[4]}; }
  std::array<S, kNumStates> as_array() const { return {r, beta, phi, psi, trim}; }
};

template <class S>
struct KiteControl {
  S steer;       // [-]
  S reel_speed;  // [m/s], positive pays out tether
  S trim_rate;   // [1/s]

  static KiteControl from(std::span<const S> v) { return {v[0], v[1], v[2]}; }
  std::array<S, kNumControls> as_array() const { return {steer, reel_speed, trim_rate}; }
};

template <class S>
struct FlowState {
  S height;
  S cos_theta;
  S eff_wind;
  S kite_speed;
  S tether_force;
  S mech_power;
  S elec_power;
};

// Electrical power with the generator/motor efficiency split blended over
// |P| < blend. blend = 0 selects the exact piecewise law.
template <class S>
S electrical_power(const SystemParams& p, const S& mech_power) {
  using std::sqrt;
  const double a = 0.5 * (p.gen_efficiency + 1.0 / p.motor_efficiency);
  const double b = 0.5 * (p.gen_efficiency - 1.0 / p.motor_efficiency);
  const double d = p.power_blend;
  if (d <= 0.0) {
    return mech_power >= 0.0 ? p.gen_efficiency * mech_power : mech_power / p.motor_efficiency;
  }
  return a * mech_power + b * (sqrt(mech_power * mech_power + d * d) - d);
}

template <class S>
FlowState<S> flow_state(const SystemParams& p, const KiteState<S>& x, const KiteControl<S>& u) {
  using std::cos;
  using std::sin;
  FlowState<S> f;
  f.height = x.r * sin(x.beta);
  f.cos_theta = cos(x.beta) * cos(x.phi);
  f.eff_wind = wind_speed(p.wind, f.height) * f.cos_theta - u.reel_speed;
  const auto c = aero_coeffs(p.aero, x.trim);
  f.kite_speed = c.glide * f.eff_wind;
  f.tether_force = 0.5 * p.air_density * p.area * c.resultant * (1.0 + c.glide * c.glide) * f.eff_wind *
                   f.eff_wind;
  f.mech_power = f.tether_force * u.reel_speed;
  f.elec_power = electrical_power(p, f.mech_power);
  return f;
}

template <class S>
std::array<S, kNumStates> dynamics_rhs(const SystemParams& p, const KiteState<S>& x, const KiteControl<S>& u) {
  using std::cos;
  using std::sin;
  const FlowState<S> f = flow_state(p, x, u);
  const S omega = f.kite_speed / x.r;
  const S beta_dot = omega * cos(x.psi);
  const S phi_dot = omega * sin(x.psi) / cos(x.beta);
  const S psi_dot = p.steer_gain * f.kite_speed * u.steer + phi_dot * sin(x.beta);
  return {u.reel_speed, beta_dot, phi_dot, psi_dot, u.trim_rate};
}

// Cycle energy bookkeeping from a sampled trajectory.
struct CycleEnergy {
  double w_out = 0.0;        // integral of positive electrical power [J]
  double w_in = 0.0;         // integral of negative electrical power, as a positive number [J]
  double t_cycle = 0.0;      // [s]
  double p_mean = 0.0;       // (w_out - w_in) / t_cycle [W]
  double reel_out_fraction = 0.0;  // time share with v_reel > 0
  double reel_in_fraction = 0.0;   // time share with v_reel <= 0
};

struct PowerSample {
  double t;
  double tether_force;
  double reel_speed;
  double elec_power;
};

// Trapezoidal quadrature of the clipped electrical power. Node time shares are
// the trapezoid weights of the grid. Throws InputError for fewer than two
// samples or a non-increasing time grid.
CycleEnergy cycle_energy(std::span<const PowerSample> samples);

inline bool is_reel_out(double reel_speed) { return reel_speed > 0.0; }

}  // namespace kiteopt
