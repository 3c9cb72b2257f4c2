#pragma once

// Fixed-step RK4 replay of control schedules through the kite model, used to
// check collocation solutions independently of the transcription.

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kiteopt/ocp.hpp"
#include "kiteopt/transcribe.hpp"

namespace kiteopt::sim {

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, double time) : std::runtime_error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

// Piecewise-linear controls on [0, duration].
class ControlSchedule {
 public:
  // Throws InputError unless t is strictly increasing from 0 to duration.
  ControlSchedule(std::vector<double> t, std::vector<std::array<double, kNumControls>> values);

  double duration() const { return t_.back(); }
  const std::vector<double>& times() const { return t_; }
  KiteControl<double> at(double t) const;

 private:
  std::vector<double> t_;
  std::vector<std::array<double, kNumControls>> u_;
};

ControlSchedule schedule_of(const CycleResult& result);

// Step grid on [t0, t1]: multiples of h plus every time in `stops`, with
// points closer than 1e-9 h merged.
std::vector<double> step_grid(double t0, double t1, double h, std::span<const double> stops);

// Classic RK4 for x' = f(t, x) along `grid`. `observe(t, x)` sees every grid point.
template <std::size_t M, class F, class Observe>
std::array<double, M> rk4(const F& f, std::array<double, M> x, std::span<const double> grid, const Observe& observe) {
  auto axpy = [](const std::array<double, M>& a, double s, const std::array<double, M>& b) {
    std::array<double, M> out;
    for (std::size_t k = 0; k < M; ++k) out[k] = a[k] + s * b[k];
    return out;
  };
  observe(grid[0], x);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double t = grid[i];
    const double dt = grid[i + 1] - t;
    const auto k1 = f(t, x);
    const auto k2 = f(t + 0.5 * dt, axpy(x, 0.5 * dt, k1));
    const auto k3 = f(t + 0.5 * dt, axpy(x, 0.5 * dt, k2));
    const auto k4 = f(t + dt, axpy(x, dt, k3));
    for (std::size_t k = 0; k < M; ++k) {
      x[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
      if (!std::isfinite(x[k])) throw IntegrationError("non-finite state during integration", grid[i + 1]);
    }
    observe(grid[i + 1], x);
  }
  return x;
}

struct Sample {
  double t;
  KiteState<double> state;
  KiteControl<double> control;
  FlowState<double> flow;
};

struct PathFlag {
  double t;
  std::string constraint;
  double value;  // scaled constraint value, < 0
};

struct Trajectory {
  std::vector<Sample> samples;
  std::vector<PathFlag> violations;  // first violation per constraint excursion
};

// Integrates the kite kinematics of `problem` (respecting frozen kinematics)
// under `schedule` from x0. Samples at multiples of h_step and at all schedule
// nodes. Path constraints are checked along the way and flagged below -tol.
Trajectory integrate(const OcpProblem& problem, const KiteState<double>& x0, const ControlSchedule& schedule,
                     double h_step, double flag_tol = 1e-6);

struct ValidationReport {
  double max_state_deviation = 0.0;  // max over nodes of the scaled infinity-norm
  int worst_node = 0;
  double periodicity_gap = 0.0;      // scaled infinity-norm of x(T) - x(0), periodic states
  double p_mean_replay = 0.0;        // [W]
  double p_mean_optimized = 0.0;     // [W]
  double p_mean_rel_error = 0.0;
  int path_violations = 0;
  double h_step = 0.0;
};

// Replays the controls of `result` from its first node. h_step <= 0 selects T/2000.
ValidationReport validate(const CycleResult& result, const OcpProblem& problem, double h_step = 0.0);

}  // namespace kiteopt::sim
