#include "kiteopt/guessgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "kiteopt/errors.hpp"
#include "kiteopt/flightsim.hpp"

namespace kiteopt {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double deg(double rad) { return rad * 180.0 / std::numbers::pi; }

struct PathPoint {
  double beta;
  double phi;
  double dbeta;  // per second
  double dphi;
};

}  // namespace

int GuessRecipe::eights_for(double w_ref) const {
  if (n_eights > 0) return n_eights;
  return std::max(2, static_cast<int>(std::lround(8.0 * (8.0 / w_ref))));
}

double GuessRecipe::cycle_time_for(double w_ref) const { return cycle_time_at_8 + cycle_time_slope * (w_ref - 8.0); }

void GuessRecipe::validate() const {
  if (n_eights < 0) throw ConfigError("guess: n_eights must be >= 1 (or 0 for automatic)");
  if (!(reel_out_fraction > 0.0 && reel_out_fraction < 1.0)) {
    throw ConfigError("guess: reel_out_fraction must lie in (0, 1)");
  }
  if (!(phi_amp > 0.0) || !(beta_amp > 0.0) || !(retract_phi_amp >= 0.0) || !(retract_climb >= 0.0)) {
    throw ConfigError("guess: amplitudes must be positive");
  }
  if (!(cycle_time_at_8 > 0.0)) throw ConfigError("guess: cycle_time_at_8 must be positive");
}

GuessTrajectory synth_trajectory(const CollocationNlp& nlp, const GuessRecipe& recipe) {
  recipe.validate();
  const OcpProblem& p = nlp.problem();
  const SystemParams& sp = p.params;
  const Mesh& mesh = nlp.mesh();
  const int n_nodes = mesh.nodes();
  const double w = sp.wind.w_ref;
  const Interval& elev = p.state_bounds[kElevation];
  const double az_max = p.state_bounds[kAzimuth].hi;

  if (recipe.beta_center - recipe.beta_amp < elev.lo || recipe.beta_center + recipe.beta_amp > elev.hi ||
      recipe.beta_center + recipe.retract_climb > elev.hi) {
    throw ConfigError("guess: elevation range [" + std::to_string(deg(recipe.beta_center - recipe.beta_amp)) + ", " +
                      std::to_string(deg(recipe.beta_center + std::max(recipe.beta_amp, recipe.retract_climb))) +
                      "] deg leaves the elevation box");
  }
  if (recipe.phi_amp > az_max || recipe.retract_phi_amp > az_max) {
    throw ConfigError("guess: azimuth amplitude " + std::to_string(deg(recipe.phi_amp)) +
                      " deg exceeds the azimuth box");
  }

  GuessTrajectory g;
  g.duration = std::clamp(recipe.cycle_time_for(w), p.time_bounds.lo, p.time_bounds.hi);
  const double T = g.duration;
  const double frac = recipe.reel_out_fraction;
  const int eights = recipe.eights_for(w);

  // Figure geometry and rates.
  std::vector<PathPoint> path(n_nodes);
  std::vector<char> out(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    const double tau = mesh.tau(i);
    PathPoint& q = path[i];
    if (tau <= frac) {
      out[i] = 1;
      const double dtheta = kTwoPi * eights / (frac * T);
      const double theta = kTwoPi * eights * tau / frac;
      q.phi = recipe.phi_amp * std::sin(2.0 * theta);
      q.beta = recipe.beta_center + recipe.beta_amp * std::sin(theta);
      q.dphi = 2.0 * recipe.phi_amp * std::cos(2.0 * theta) * dtheta;
      q.dbeta = recipe.beta_amp * std::cos(theta) * dtheta;
    } else {
      out[i] = 0;
      const double ds = 1.0 / ((1.0 - frac) * T);
      const double s = (tau - frac) / (1.0 - frac);
      const double b = recipe.retract_climb;
      q.phi = recipe.retract_phi_amp * std::sin(2.0 * kTwoPi * s);
      q.beta = recipe.beta_center + 0.5 * b * (1.0 - std::cos(kTwoPi * s));
      q.dphi = 2.0 * kTwoPi * recipe.retract_phi_amp * std::cos(2.0 * kTwoPi * s) * ds;
      q.dbeta = 0.5 * b * kTwoPi * std::sin(kTwoPi * s) * ds;
    }
  }

  // Start low enough to have room, high enough for the height floor.
  const double span = sp.tether_max - sp.tether_min;
  const double beta_low = recipe.beta_center - recipe.beta_amp;
  double r_start = sp.tether_min + 0.02 * span;
  if (std::sin(beta_low) > 0.0) r_start = std::max(r_start, 1.02 * sp.height_min / std::sin(beta_low));
  if (r_start >= sp.tether_max - 0.05 * span) {
    throw ConfigError("guess: height floor forces the tether start above the tether box");
  }

  // Reel speeds: a third of the along-tether wind in reel-out, constant during reel-in.
  std::vector<double> t(n_nodes), r(n_nodes, r_start), v(n_nodes, 0.0);
  for (int i = 0; i < n_nodes; ++i) t[i] = T * mesh.tau(i);
  const double v_out_cap = 0.95 * sp.reel_speed_max;
  double v_in = 0.0;
  for (int pass = 0; pass < 3; ++pass) {
    for (int i = 0; i < n_nodes; ++i) {
      if (!out[i]) continue;
      const double h = r[i] * std::sin(path[i].beta);
      const double cos_theta = std::cos(path[i].beta) * std::cos(path[i].phi);
      v[i] = std::min(v_out_cap, wind_speed(sp.wind, h) * cos_theta / 3.0);
    }
    // Closure: sum of 0.5 dt (v_i + v_i+1) = 0 is linear in the reel-in speed.
    double known = 0.0;
    double per_unit = 0.0;
    for (int i = 0; i + 1 < n_nodes; ++i) {
      const double dt = t[i + 1] - t[i];
      for (int j : {i, i + 1}) {
        if (out[j]) known += 0.5 * dt * v[j];
        else per_unit += 0.5 * dt;
      }
    }
    v_in = per_unit > 0.0 ? -known / per_unit : 0.0;
    // Keep the reel-in speed and the tether excursion inside the boxes.
    double shrink = 1.0;
    const double v_in_cap = 0.9 * std::fabs(sp.reel_speed_min);
    if (-v_in > v_in_cap) shrink = std::min(shrink, v_in_cap / -v_in);
    double r_peak = r_start;
    double acc = r_start;
    for (int i = 0; i + 1 < n_nodes; ++i) {
      const double vi = out[i] ? v[i] : v_in;
      const double vj = out[i + 1] ? v[i + 1] : v_in;
      acc += 0.5 * (t[i + 1] - t[i]) * (vi + vj);
      r_peak = std::max(r_peak, acc);
    }
    const double room = 0.95 * (sp.tether_max - r_start);
    if (r_peak - r_start > room) shrink = std::min(shrink, room / (r_peak - r_start));
    if (shrink < 1.0) {
      for (int i = 0; i < n_nodes; ++i) {
        if (out[i]) v[i] *= shrink;
      }
      v_in *= shrink;
    }
    for (int i = 0; i < n_nodes; ++i) {
      if (!out[i]) v[i] = v_in;
    }
    r[0] = r_start;
    for (int i = 0; i + 1 < n_nodes; ++i) r[i + 1] = r[i] + 0.5 * (t[i + 1] - t[i]) * (v[i] + v[i + 1]);
    r[n_nodes - 1] = r_start;
  }

  // Trim schedule: full in reel-out, ramps down and back up during reel-in.
  const double ramp = 1.0 / (0.8 * sp.trim_rate_max);
  std::vector<double> trim(n_nodes, 1.0);
  for (int i = 0; i < n_nodes; ++i) {
    if (out[i]) continue;
    const double since = t[i] - frac * T;
    const double until = T - t[i];
    trim[i] = std::clamp(std::max(1.0 - since / ramp, 1.0 - until / ramp), 0.0, 1.0);
  }
  trim[n_nodes - 1] = trim[0];

  // Heading along the path tangent, unwrapped, closed onto the first node.
  std::vector<double> psi(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    const double raw = std::atan2(std::cos(path[i].beta) * path[i].dphi, path[i].dbeta);
    if (i == 0) {
      psi[i] = raw;
    } else {
      double d = raw - psi[i - 1];
      d -= kTwoPi * std::round(d / kTwoPi);
      psi[i] = psi[i - 1] + d;
    }
  }
  psi[n_nodes - 1] = psi[0];

  auto clip = [](double x, const Interval& b) {
    if (!std::isfinite(b.lo) && !std::isfinite(b.hi)) return x;
    const double margin = std::isfinite(b.hi - b.lo) ? 1e-9 * (b.hi - b.lo) : 0.0;
    return std::clamp(x, b.lo + margin, b.hi - margin);
  };
  auto central = [&](const std::vector<double>& y, int i) {
    const int last = n_nodes - 1;
    if (i == 0 || i == last) {
      // Periodic neighbours: node last coincides with node 0.
      const double dt = (t[1] - t[0]) + (t[last] - t[last - 1]);
      return (y[1] - y[last - 1]) / dt;
    }
    return (y[i + 1] - y[i - 1]) / (t[i + 1] - t[i - 1]);
  };

  g.states.resize(n_nodes);
  g.controls.resize(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    g.states[i] = {clip(r[i], p.state_bounds[kTether]), clip(path[i].beta, p.state_bounds[kElevation]),
                   clip(path[i].phi, p.state_bounds[kAzimuth]), clip(psi[i], p.state_bounds[kHeading]),
                   clip(trim[i], p.state_bounds[kTrim])};
  }
  g.states[n_nodes - 1] = g.states[0];
  for (int i = 0; i < n_nodes; ++i) {
    const auto x = KiteState<double>::from(g.states[i]);
    const KiteControl<double> u0{0.0, v[i], 0.0};
    const FlowState<double> f = flow_state(sp, x, u0);
    const double psi_rate = central(psi, i);
    const double turn = psi_rate - path[i].dphi * std::sin(path[i].beta);
    const double denom = sp.steer_gain * f.kite_speed;
    const double steer = std::fabs(denom) > 1e-9 ? turn / denom : 0.0;
    const double trim_rate = central(trim, i);
    g.controls[i] = {clip(steer, p.control_bounds[kSteer]), clip(v[i], p.control_bounds[kReelSpeed]),
                     clip(trim_rate, p.control_bounds[kTrimRate])};
  }
  return g;
}

std::vector<double> synth_guess(const CollocationNlp& nlp, const GuessRecipe& recipe) {
  const GuessTrajectory g = synth_trajectory(nlp, recipe);
  return nlp.pack(g.states, g.controls, g.duration);
}

std::vector<double> perturb(const CollocationNlp& nlp, std::span<const double> z0, std::uint64_t seed,
                            double magnitude) {
  if (!(magnitude >= 0.0 && magnitude <= 0.2)) throw InputError("perturb: magnitude must lie in [0, 0.2]");
  if (static_cast<int>(z0.size()) != nlp.num_variables()) throw ip::LayoutError("perturb: wrong layout");
  std::vector<double> z(z0.begin(), z0.end());
  if (magnitude == 0.0) return z;

  const DecisionLayout& lay = nlp.layout();
  const Mesh& mesh = nlp.mesh();
  const OcpProblem& p = nlp.problem();
  const ScaleMap& map = nlp.map();
  const int n_nodes = mesh.nodes();
  std::vector<double> lo(z.size()), hi(z.size());
  nlp.bounds(lo, hi);

  std::mt19937_64 rng(seed);
  // Platform-independent uniform on [-1, 1) from the raw 64-bit stream.
  auto uniform = [&rng] { return 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0; };
  constexpr int kHarmonics = 3;
  std::array<std::array<double, 2 * kHarmonics>, kNumControls> coef{};
  for (auto& row : coef) {
    for (double& c : row) c = uniform();
  }
  const double time_factor = 1.0 + magnitude * uniform();

  auto clamp_to = [&](int idx, double value) {
    const double l = lo[idx];
    const double h = hi[idx];
    if (l == h) return l;
    const double margin = std::isfinite(h - l) ? 1e-6 * (h - l) : 0.0;
    return std::clamp(value, std::isfinite(l) ? l + margin : value, std::isfinite(h) ? h - margin : value);
  };

  const int t_idx = lay.time();
  z[t_idx] = clamp_to(t_idx, z0[t_idx] * time_factor);
  for (int i = 0; i < n_nodes; ++i) {
    const double tau = mesh.tau(i);
    for (int k = 0; k < kNumControls; ++k) {
      double d = 0.0;
      for (int m = 1; m <= kHarmonics; ++m) {
        d += coef[k][2 * (m - 1)] * std::sin(kTwoPi * m * tau) + coef[k][2 * m - 1] * std::cos(kTwoPi * m * tau);
      }
      const int idx = lay.control(i, k);
      z[idx] = clamp_to(idx, z0[idx] + 0.5 * magnitude * d);
    }
  }

  // States follow the control change through the dynamics.
  const double duration = map.time_to_physical(z[t_idx]);
  std::vector<double> times(n_nodes);
  for (int i = 0; i < n_nodes; ++i) times[i] = duration * mesh.tau(i);
  auto controls_of = [&](std::span<const double> zz) {
    std::vector<std::array<double, kNumControls>> u(n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
      std::array<double, kNumControls> us{};
      for (int k = 0; k < kNumControls; ++k) us[k] = zz[lay.control(i, k)];
      u[i] = map.control_to_physical(us);
    }
    return u;
  };
  std::vector<std::array<double, kNumStates>> x(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    std::array<double, kNumStates> xs{};
    for (int k = 0; k < kNumStates; ++k) xs[k] = z0[lay.state(i, k)];
    x[i] = map.state_to_physical(xs);
  }
  // States follow the control change interval by interval from the unperturbed
  // nodes, so the open-loop growth of the kinematics does not compound.
  const auto u_base = controls_of(z0);
  const auto u_moved = controls_of(z);
  const auto x_base = x;
  constexpr int kSubsteps = 8;
  for (int i = 0; i + 1 < n_nodes; ++i) {
    const double t0 = times[i];
    const double t1 = times[i + 1];
    auto advance = [&](const std::vector<std::array<double, kNumControls>>& u) {
      const sim::ControlSchedule sched({0.0, t1 - t0}, {u[i], u[i + 1]});
      auto rhs = [&](double t, const std::array<double, kNumStates>& xa) {
        return p.rhs(KiteState<double>::from(xa), sched.at(t));
      };
      std::vector<double> local(kSubsteps + 1);
      for (int k = 0; k <= kSubsteps; ++k) local[k] = (t1 - t0) * k / kSubsteps;
      return sim::rk4(rhs, x_base[i], std::span<const double>(local), [](double, const auto&) {});
    };
    try {
      const auto xb = advance(u_base);
      const auto xm = advance(u_moved);
      for (int k = 0; k < kNumStates; ++k) x[i + 1][k] = x_base[i + 1][k] + (xm[k] - xb[k]);
    } catch (const sim::IntegrationError&) {
      // Keep the unperturbed node.
    }
  }
  // Remove the periodicity drift linearly in tau.
  std::array<double, kNumStates> drift{};
  for (int k = 0; k < kNumStates; ++k) {
    if (p.options.periodic[k]) drift[k] = x[n_nodes - 1][k] - x[0][k];
  }
  for (int i = 0; i < n_nodes; ++i) {
    for (int k = 0; k < kNumStates; ++k) x[i][k] -= mesh.tau(i) * drift[k];
  }
  for (int i = 0; i < n_nodes; ++i) {
    const auto xs = map.state_to_scaled(x[i]);
    for (int k = 0; k < kNumStates; ++k) {
      const int idx = lay.state(i, k);
      z[idx] = clamp_to(idx, xs[k]);
    }
  }
  for (int k = 0; k < kNumStates; ++k) {
    if (p.options.periodic[k]) z[lay.state(n_nodes - 1, k)] = z[lay.state(0, k)];
  }
  return z;
}

}  // namespace kiteopt
