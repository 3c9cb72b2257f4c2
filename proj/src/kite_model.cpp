#include "kiteopt/kite_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kiteopt/errors.hpp"

namespace kiteopt {

void SystemParams::validate() const {
  aero.validate();
  wind.validate();
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("params: " + what);
  };
  require(area > 0.0, "area must be positive");
  require(air_density > 0.0, "air_density must be positive");
  require(steer_gain > 0.0, "steer_gain must be positive");
  require(gen_efficiency > 0.0 && gen_efficiency <= 1.0, "gen_efficiency must lie in (0, 1]");
  require(motor_efficiency > 0.0 && motor_efficiency <= 1.0, "motor_efficiency must lie in (0, 1]");
  require(force_min > 0.0 && force_min < force_max, "need 0 < force_min < force_max");
  require(rated_power > 0.0, "rated_power must be positive");
  require(tether_min > 0.0 && tether_min < tether_max, "need 0 < tether_min < tether_max");
  require(height_min > 0.0, "height_min must be positive");
  require(height_min < tether_max, "height floor unreachable (height_min >= tether_max)");
  require(reel_speed_min < 0.0 && reel_speed_max > 0.0, "need reel_speed_min < 0 < reel_speed_max");
  require(trim_rate_max > 0.0, "trim_rate_max must be positive");
  require(eff_wind_min > 0.0, "eff_wind_min must be positive");
  require(power_blend >= 0.0, "power_blend must be non-negative");
}

std::map<std::string, double SystemParams::*> system_param_fields() {
  return {
      {"A", &SystemParams::area},
      {"rho", &SystemParams::air_density},
      {"g_steer", &SystemParams::steer_gain},
      {"eta_gen", &SystemParams::gen_efficiency},
      {"eta_mot", &SystemParams::motor_efficiency},
      {"F_min", &SystemParams::force_min},
      {"F_max", &SystemParams::force_max},
      {"P_rated", &SystemParams::rated_power},
      {"r_min", &SystemParams::tether_min},
      {"r_max", &SystemParams::tether_max},
      {"h_min", &SystemParams::height_min},
      {"v_reel_min", &SystemParams::reel_speed_min},
      {"v_reel_max", &SystemParams::reel_speed_max},
      {"u_trim_max", &SystemParams::trim_rate_max},
      {"w_e_min", &SystemParams::eff_wind_min},
      {"power_blend", &SystemParams::power_blend},
  };
}

double* find_system_param(SystemParams& params, const std::string& name) {
  const auto fields = system_param_fields();
  if (auto it = fields.find(name); it != fields.end()) return &(params.*(it->second));
  if (name == "c_L_min") return &params.aero.c_L_min;
  if (name == "c_L_max") return &params.aero.c_L_max;
  if (name == "c_D0") return &params.aero.c_D0;
  if (name == "k_ind") return &params.aero.k_ind;
  if (name == "w_ref") return &params.wind.w_ref;
  if (name == "h_ref") return &params.wind.h_ref;
  if (name == "shear_exp") return &params.wind.shear_exp;
  if (name == "h_floor") return &params.wind.h_floor;
  return nullptr;
}

CycleEnergy cycle_energy(std::span<const PowerSample> samples) {
  if (samples.size() < 2) throw InputError("cycle_energy: need at least two samples");
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].t > samples[i - 1].t)) {
      throw InputError("cycle_energy: time grid not strictly increasing at sample " + std::to_string(i));
    }
  }
  CycleEnergy e;
  double out_time = 0.0;
  double in_time = 0.0;
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    const PowerSample& a = samples[i];
    const PowerSample& b = samples[i + 1];
    const double dt = b.t - a.t;
    e.w_out += 0.5 * dt * (std::max(a.elec_power, 0.0) + std::max(b.elec_power, 0.0));
    e.w_in += 0.5 * dt * (std::max(-a.elec_power, 0.0) + std::max(-b.elec_power, 0.0));
    // Each node owns half of each adjacent interval.
    for (const PowerSample* s : {&a, &b}) {
      (is_reel_out(s->reel_speed) ? out_time : in_time) += 0.5 * dt;
    }
  }
  e.t_cycle = samples.back().t - samples.front().t;
  e.p_mean = (e.w_out - e.w_in) / e.t_cycle;
  e.reel_out_fraction = out_time / e.t_cycle;
  e.reel_in_fraction = in_time / e.t_cycle;
  return e;
}

}  // namespace kiteopt
