#pragma once

// Continuous-time periodic economic optimal control problem of the pumping cycle.
//
// Decision functions on t in [0, T] with T free:
//   states   x = (r, beta, phi, psi, trim)
//   controls u = (steer, reel_speed, trim_rate)
// Objective (minimized):
//   J = -(1/T) int P_elec dt / P_scale
//       + eps_reg int [ steer'^2 + (reel_speed' / v_reel_max)^2 ] dtau
//       + eps_reg (1/T) int (trim_rate / trim_rate_max)^2 dt
// with ' the rate per normalized time tau = t / T, plus
//       + sum over relaxed constraints of weight (1/T) int slack dt
// subject to the kinematics, periodicity x(0) = x(T), the path constraints
// below at every instant, and box bounds on states, controls and T.

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "kiteopt/kite_model.hpp"

namespace kiteopt {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
  bool operator==(const Interval&) const = default;
};

enum class PathKind { height, force_hi, force_lo, power_cap, effective_wind };

// Smooth inequality c(x, u) >= 0, stored in physical units.
struct PathConstraint {
  std::string name;
  PathKind kind;
  bool relaxable = false;
  bool relaxed = false;
  double relax_weight = 0.0;
};

// Simple bound on one state or control component (or on T).
struct BoxConstraint {
  std::string name;
  enum class Target { state, control, time } target;
  int index = 0;
  Interval bounds;
};

// Characteristic magnitudes; scaled = physical / magnitude.
struct Scaling {
  std::array<double, kNumStates> state{1.0, 1.0, 1.0, 1.0, 1.0};
  std::array<double, kNumControls> control{1.0, 1.0, 1.0};
  double time = 1.0;
  double length = 1.0;  // heights
  double force = 1.0;
  double power = 1.0;
  double speed = 1.0;   // effective wind

  // Throws ConfigError on a non-positive entry.
  void validate() const;
  bool operator==(const Scaling&) const = default;
};

// r by r_max, angles by 1 rad, forces by F_max, power by P_rated, time by 100 s.
Scaling default_scaling(const SystemParams& params);

struct OcpOptions {
  double eps_reg = 1e-4;
  Interval cycle_time{40.0, 400.0};
  Interval elevation{10.0 * std::numbers::pi / 180.0, 80.0 * std::numbers::pi / 180.0};
  double azimuth_max = 60.0 * std::numbers::pi / 180.0;
  Interval heading{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  Interval trim{0.0, 1.0};
  Interval steer{-1.0, 1.0};
  std::array<bool, kNumStates> periodic{true, true, true, true, true};
  // Zeroes the elevation, azimuth and heading rates (kite pinned in place).
  bool freeze_kinematics = false;
  // Path constraint names to leave out entirely.
  std::vector<std::string> disabled;
};

struct OcpProblem {
  SystemParams params;
  OcpOptions options;
  std::array<Interval, kNumStates> state_bounds;
  std::array<Interval, kNumControls> control_bounds;
  Interval time_bounds;
  std::vector<PathConstraint> path;
  std::vector<BoxConstraint> boxes;
  Scaling scaling;  // identity until scale()

  int num_relaxed() const;
  const PathConstraint* find_path(std::string_view name) const;

  template <class S>
  std::array<S, kNumStates> rhs(const KiteState<S>& x, const KiteControl<S>& u) const {
    auto d = dynamics_rhs(params, x, u);
    if (options.freeze_kinematics) {
      d[kElevation] = S(0.0);
      d[kAzimuth] = S(0.0);
      d[kHeading] = S(0.0);
    }
    return d;
  }

  // c(x, u) in physical units; feasible when >= 0.
  template <class S>
  S path_value(const PathConstraint& c, const KiteState<S>& x, const FlowState<S>& f) const {
    (void)x;
    switch (c.kind) {
      case PathKind::height: return f.height - params.height_min;
      case PathKind::force_hi: return params.force_max - f.tether_force;
      case PathKind::force_lo: return f.tether_force - params.force_min;
      case PathKind::power_cap: return params.rated_power - f.elec_power;
      case PathKind::effective_wind: return f.eff_wind - params.eff_wind_min;
    }
    return S(0.0);
  }

  double path_scale(const PathConstraint& c) const;
};

// Throws ConfigError naming the offending pair when bounds are inconsistent.
OcpProblem build_ocp(const SystemParams& params, const OcpOptions& options = {});

// Replaces c >= 0 by c + s >= 0, s >= 0, adding weight (1/T) int s dt to the
// objective. Only force_lo and effective_wind are relaxable.
OcpProblem relax(OcpProblem problem, std::string_view name, double weight);

// Per-quantity map between physical and scaled values.
struct ScaleMap {
  Scaling scaling;

  std::array<double, kNumStates> state_to_scaled(const std::array<double, kNumStates>& x) const;
  std::array<double, kNumStates> state_to_physical(const std::array<double, kNumStates>& x) const;
  std::array<double, kNumControls> control_to_scaled(const std::array<double, kNumControls>& u) const;
  std::array<double, kNumControls> control_to_physical(const std::array<double, kNumControls>& u) const;
  double time_to_scaled(double t) const { return t / scaling.time; }
  double time_to_physical(double t) const { return t * scaling.time; }
};

struct ScaledOcp {
  OcpProblem problem;
  ScaleMap map;
};

ScaledOcp scale(const OcpProblem& problem);
ScaledOcp scale(const OcpProblem& problem, const Scaling& magnitudes);

// Loyd-limit test configuration: uniform wind, kite pinned downwind at fixed
// full trim without steering, force/power/height limits lifted, tether length
// left non-periodic so a constant reel-out speed is admissible.
struct RestrictedSetup {
  SystemParams params;
  OcpOptions options;
};
RestrictedSetup loyd_restricted_setup(const SystemParams& base, double wind);

}  // namespace kiteopt
