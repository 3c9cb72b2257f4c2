#include "kiteopt/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kiteopt/errors.hpp"

namespace kiteopt {

namespace {

struct PathSpec {
  const char* name;
  PathKind kind;
  bool relaxable;
};

constexpr PathSpec kPathTable[] = {
    {"height", PathKind::height, false},
    {"force_hi", PathKind::force_hi, false},
    {"force_lo", PathKind::force_lo, true},
    {"power_cap", PathKind::power_cap, false},
    {"effective_wind", PathKind::effective_wind, true},
};

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

void require_interval(const Interval& iv, const std::string& name) {
  if (!(iv.lo <= iv.hi)) {
    throw ConfigError(name + ": lower bound " + fmt(iv.lo) + " exceeds upper bound " + fmt(iv.hi));
  }
}

}  // namespace

void Scaling::validate() const {
  auto check = [](double v, const std::string& what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("scaling: " + what + " must be positive and finite");
  };
  for (int k = 0; k < kNumStates; ++k) check(state[k], "state[" + std::to_string(k) + "]");
  for (int k = 0; k < kNumControls; ++k) check(control[k], "control[" + std::to_string(k) + "]");
  check(time, "time");
  check(length, "length");
  check(force, "force");
  check(power, "power");
  check(speed, "speed");
}

Scaling default_scaling(const SystemParams& params) {
  Scaling s;
  s.state = {params.tether_max, 1.0, 1.0, 1.0, 1.0};
  s.control = {1.0, params.reel_speed_max, params.trim_rate_max};
  s.time = 100.0;
  s.length = params.tether_max;
  s.force = params.force_max;
  s.power = params.rated_power;
  s.speed = 10.0;
  return s;
}

int OcpProblem::num_relaxed() const {
  return static_cast<int>(std::count_if(path.begin(), path.end(), [](const PathConstraint& c) { return c.relaxed; }));
}

const PathConstraint* OcpProblem::find_path(std::string_view name) const {
  for (const auto& c : path) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

double OcpProblem::path_scale(const PathConstraint& c) const {
  switch (c.kind) {
    case PathKind::height: return scaling.length;
    case PathKind::force_hi:
    case PathKind::force_lo: return scaling.force;
    case PathKind::power_cap: return scaling.power;
    case PathKind::effective_wind: return scaling.speed;
  }
  return 1.0;
}

OcpProblem build_ocp(const SystemParams& params, const OcpOptions& options) {
  params.validate();
  const OcpOptions& o = options;
  if (!(o.eps_reg >= 0.0)) throw ConfigError("eps_reg must be non-negative");
  if (!(o.cycle_time.lo > 0.0 && o.cycle_time.lo < o.cycle_time.hi)) {
    throw ConfigError("cycle_time: need 0 < T_lo < T_hi, got [" + fmt(o.cycle_time.lo) + ", " +
                      fmt(o.cycle_time.hi) + "]");
  }
  require_interval(o.elevation, "elevation");
  require_interval(o.heading, "heading");
  require_interval(o.trim, "trim");
  require_interval(o.steer, "steer");
  if (!(o.azimuth_max >= 0.0)) throw ConfigError("azimuth_max must be non-negative");
  if (!(o.elevation.lo >= 0.0 && o.elevation.hi < std::numbers::pi / 2)) {
    throw ConfigError("elevation box must lie in [0, pi/2)");
  }
  if (params.height_min > params.tether_max) {
    throw ConfigError("height floor unreachable: h_min " + fmt(params.height_min) + " > r_max " +
                      fmt(params.tether_max));
  }
  const bool height_enabled =
      std::find(o.disabled.begin(), o.disabled.end(), "height") == o.disabled.end();
  if (height_enabled && params.tether_max * std::sin(o.elevation.hi) < params.height_min) {
    throw ConfigError("height floor unreachable: r_max * sin(beta_max) " +
                      fmt(params.tether_max * std::sin(o.elevation.hi)) + " < h_min " + fmt(params.height_min));
  }
  for (const auto& name : o.disabled) {
    bool known = false;
    for (const auto& spec : kPathTable) known = known || name == spec.name;
    if (!known) throw ConfigError("unknown path constraint '" + name + "'");
  }

  OcpProblem p;
  p.params = params;
  p.options = options;
  p.state_bounds = {Interval{params.tether_min, params.tether_max}, o.elevation,
                    Interval{-o.azimuth_max, o.azimuth_max}, o.heading, o.trim};
  p.control_bounds = {o.steer, Interval{params.reel_speed_min, params.reel_speed_max},
                      Interval{-params.trim_rate_max, params.trim_rate_max}};
  p.time_bounds = o.cycle_time;
  for (const auto& spec : kPathTable) {
    if (std::find(o.disabled.begin(), o.disabled.end(), spec.name) != o.disabled.end()) continue;
    p.path.push_back(PathConstraint{spec.name, spec.kind, spec.relaxable, false, 0.0});
  }
  using T = BoxConstraint::Target;
  p.boxes = {
      {"tether_box", T::state, kTether, p.state_bounds[kTether]},
      {"elevation_box", T::state, kElevation, p.state_bounds[kElevation]},
      {"azimuth_box", T::state, kAzimuth, p.state_bounds[kAzimuth]},
      {"trim_box", T::state, kTrim, p.state_bounds[kTrim]},
      {"steer_box", T::control, kSteer, p.control_bounds[kSteer]},
      {"reel_box", T::control, kReelSpeed, p.control_bounds[kReelSpeed]},
      {"trim_rate_box", T::control, kTrimRate, p.control_bounds[kTrimRate]},
      {"cycle_time_box", T::time, 0, p.time_bounds},
  };
  return p;
}

OcpProblem relax(OcpProblem problem, std::string_view name, double weight) {
  for (auto& c : problem.path) {
    if (c.name != name) continue;
    if (!c.relaxable) throw ConfigError("constraint '" + std::string(name) + "' is not relaxable");
    if (!(weight > 0.0) || !std::isfinite(weight)) throw ConfigError("relaxation weight must be positive");
    c.relaxed = true;
    c.relax_weight = weight;
    return problem;
  }
  throw ConfigError("unknown path constraint '" + std::string(name) + "'");
}

std::array<double, kNumStates> ScaleMap::state_to_scaled(const std::array<double, kNumStates>& x) const {
  std::array<double, kNumStates> out{};
  for (int k = 0; k < kNumStates; ++k) out[k] = x[k] / scaling.state[k];
  return out;
}
std::array<double, kNumStates> ScaleMap::state_to_physical(const std::array<double, kNumStates>& x) const {
  std::array<double, kNumStates> out{};
  for (int k = 0; k < kNumStates; ++k) out[k] = x[k] * scaling.state[k];
  return out;
}
std::array<double, kNumControls> ScaleMap::control_to_scaled(const std::array<double, kNumControls>& u) const {
  std::array<double, kNumControls> out{};
  for (int k = 0; k < kNumControls; ++k) out[k] = u[k] / scaling.control[k];
  return out;
}
std::array<double, kNumControls> ScaleMap::control_to_physical(const std::array<double, kNumControls>& u) const {
  std::array<double, kNumControls> out{};
  for (int k = 0; k < kNumControls; ++k) out[k] = u[k] * scaling.control[k];
  return out;
}

ScaledOcp scale(const OcpProblem& problem, const Scaling& magnitudes) {
  magnitudes.validate();
  ScaledOcp out{problem, ScaleMap{magnitudes}};
  out.problem.scaling = magnitudes;
  return out;
}

ScaledOcp scale(const OcpProblem& problem) { return scale(problem, default_scaling(problem.params)); }

RestrictedSetup loyd_restricted_setup(const SystemParams& base, double wind) {
  RestrictedSetup s;
  s.params = base;
  s.params.wind.w_ref = wind;
  s.params.wind.shear_exp = 0.0;
  s.params.gen_efficiency = 1.0;
  s.params.motor_efficiency = 1.0;
  // Speeds up to the wind speed so the reel factor is not bound-limited.
  s.params.reel_speed_max = std::max(base.reel_speed_max, wind);
  s.options.eps_reg = 0.0;
  // Elevation pinned just above zero: cos(theta) = 1 - 5e-13.
  s.options.elevation = Interval{1e-6, 1e-6};
  s.options.azimuth_max = 0.0;
  s.options.heading = Interval{0.0, 0.0};
  s.options.trim = Interval{1.0, 1.0};
  s.options.steer = Interval{0.0, 0.0};
  s.options.periodic = {false, true, true, true, true};
  s.options.freeze_kinematics = true;
  s.options.disabled = {"height", "force_hi", "power_cap"};
  return s;
}

}  // namespace kiteopt
