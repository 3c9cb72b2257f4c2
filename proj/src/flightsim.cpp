#include "kiteopt/flightsim.hpp"

#include <algorithm>

#include "kiteopt/errors.hpp"

namespace kiteopt::sim {

ControlSchedule::ControlSchedule(std::vector<double> t, std::vector<std::array<double, kNumControls>> values)
    : t_(std::move(t)), u_(std::move(values)) {
  if (t_.size() < 2 || t_.size() != u_.size()) throw InputError("schedule: need matching times and values, >= 2");
  if (t_.front() != 0.0) throw InputError("schedule: grid must start at t = 0");
  for (std::size_t i = 1; i < t_.size(); ++i) {
    if (!(t_[i] > t_[i - 1])) throw InputError("schedule: times not strictly increasing at " + std::to_string(i));
  }
}

KiteControl<double> ControlSchedule::at(double t) const {
  if (t <= t_.front()) return KiteControl<double>::from(u_.front());
  if (t >= t_.back()) return KiteControl<double>::from(u_.back());
  const auto it = std::upper_bound(t_.begin(), t_.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - t_.begin()) - 1;
  const double s = (t - t_[i]) / (t_[i + 1] - t_[i]);
  std::array<double, kNumControls> u{};
  for (int k = 0; k < kNumControls; ++k) u[k] = (1.0 - s) * u_[i][k] + s * u_[i + 1][k];
  return KiteControl<double>::from(u);
}

ControlSchedule schedule_of(const CycleResult& result) {
  std::vector<std::array<double, kNumControls>> u;
  u.reserve(result.controls.size());
  for (const auto& c : result.controls) u.push_back(c.as_array());
  return ControlSchedule(result.t, std::move(u));
}

std::vector<double> step_grid(double t0, double t1, double h, std::span<const double> stops) {
  if (!(h > 0.0)) throw InputError("integration step must be positive");
  if (!(t1 > t0)) throw InputError("integration interval is empty");
  std::vector<std::pair<double, bool>> pts;  // (time, is_stop)
  const long n = static_cast<long>(std::floor((t1 - t0) / h));
  for (long k = 0; k <= n; ++k) pts.emplace_back(t0 + static_cast<double>(k) * h, false);
  for (double t : stops) {
    if (t >= t0 && t <= t1) pts.emplace_back(t, true);
  }
  pts.emplace_back(t0, true);
  pts.emplace_back(t1, true);
  std::sort(pts.begin(), pts.end());
  const double merge = 1e-9 * h;
  std::vector<double> grid;
  bool last_is_stop = false;
  for (const auto& [t, is_stop] : pts) {
    if (t > t1) continue;
    if (!grid.empty() && t - grid.back() <= merge) {
      // Stops win over nearby multiples of h.
      if (is_stop && !last_is_stop) {
        grid.back() = t;
        last_is_stop = true;
      }
      continue;
    }
    grid.push_back(t);
    last_is_stop = is_stop;
  }
  return grid;
}

Trajectory integrate(const OcpProblem& problem, const KiteState<double>& x0, const ControlSchedule& schedule,
                     double h_step, double flag_tol) {
  const auto grid = step_grid(0.0, schedule.duration(), h_step, schedule.times());
  Trajectory traj;
  traj.samples.reserve(grid.size());
  std::vector<char> violating(problem.path.size(), 0);
  auto rhs = [&](double t, const std::array<double, kNumStates>& x) {
    return problem.rhs(KiteState<double>::from(x), schedule.at(t));
  };
  auto observe = [&](double t, const std::array<double, kNumStates>& xa) {
    const auto x = KiteState<double>::from(xa);
    const auto u = schedule.at(t);
    const auto f = flow_state(problem.params, x, u);
    traj.samples.push_back({t, x, u, f});
    for (std::size_t c = 0; c < problem.path.size(); ++c) {
      const double v = problem.path_value(problem.path[c], x, f) / problem.path_scale(problem.path[c]);
      const bool bad = v < -flag_tol;
      if (bad && !violating[c]) traj.violations.push_back({t, problem.path[c].name, v});
      violating[c] = bad;
    }
  };
  rk4(rhs, x0.as_array(), std::span<const double>(grid), observe);
  return traj;
}

ValidationReport validate(const CycleResult& result, const OcpProblem& problem, double h_step) {
  if (result.states.size() < 2) throw InputError("validate: result has no trajectory");
  const ControlSchedule schedule = schedule_of(result);
  const double duration = schedule.duration();
  ValidationReport rep;
  rep.h_step = h_step > 0.0 ? h_step : duration / 2000.0;
  const Trajectory traj = integrate(problem, result.states.front(), schedule, rep.h_step);

  const Scaling sc = problem.scaling == Scaling{} ? default_scaling(problem.params) : problem.scaling;
  std::size_t s = 0;
  for (std::size_t i = 0; i < result.t.size(); ++i) {
    while (s + 1 < traj.samples.size() && traj.samples[s].t < result.t[i] - 1e-9 * rep.h_step) ++s;
    const auto xs = traj.samples[s].state.as_array();
    const auto xn = result.states[i].as_array();
    double dev = 0.0;
    for (int k = 0; k < kNumStates; ++k) dev = std::max(dev, std::fabs(xs[k] - xn[k]) / sc.state[k]);
    if (dev > rep.max_state_deviation) {
      rep.max_state_deviation = dev;
      rep.worst_node = static_cast<int>(i);
    }
  }
  const auto x_end = traj.samples.back().state.as_array();
  const auto x_start = result.states.front().as_array();
  for (int k = 0; k < kNumStates; ++k) {
    if (problem.options.periodic[k]) {
      rep.periodicity_gap = std::max(rep.periodicity_gap, std::fabs(x_end[k] - x_start[k]) / sc.state[k]);
    }
  }
  double energy = 0.0;
  for (std::size_t i = 0; i + 1 < traj.samples.size(); ++i) {
    const auto& a = traj.samples[i];
    const auto& b = traj.samples[i + 1];
    energy += 0.5 * (b.t - a.t) * (a.flow.elec_power + b.flow.elec_power);
  }
  rep.p_mean_replay = energy / duration;
  rep.p_mean_optimized = result.energy.p_mean;
  rep.p_mean_rel_error = std::fabs(rep.p_mean_replay - rep.p_mean_optimized) /
                         std::max(std::fabs(rep.p_mean_optimized), 1e-12);
  rep.path_violations = static_cast<int>(traj.violations.size());
  return rep;
}

}  // namespace kiteopt::sim
