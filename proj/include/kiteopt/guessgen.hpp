#pragma once

// Synthetic, wind-dependent initial trajectories and seeded perturbations.
//
// Reel-out traces figure-eights phi = phi_amp sin(2 theta),
// beta = beta_c + beta_amp sin(theta) at full trim, reeling at a third of the
// local wind component along the tether. Reel-in climbs through a vertical
// figure-eight at zero trim and constant negative reel speed, so the heading
// has zero net rotation over the cycle and the curve closes exactly.

#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "kiteopt/transcribe.hpp"

namespace kiteopt {

struct GuessRecipe {
  int n_eights = 0;  // 0 selects max(2, round(64 / w_ref))
  double beta_center = 30.0 * std::numbers::pi / 180.0;
  double phi_amp = 25.0 * std::numbers::pi / 180.0;
  double beta_amp = 6.0 * std::numbers::pi / 180.0;
  double reel_out_fraction = 0.75;
  // Retraction figure: azimuth half-width and climb above beta_center.
  double retract_phi_amp = 10.0 * std::numbers::pi / 180.0;
  double retract_climb = 20.0 * std::numbers::pi / 180.0;
  // T_guess(w) = cycle_time_at_8 + cycle_time_slope * (w - 8), clamped to the T box.
  double cycle_time_at_8 = 220.0;  // [s]
  double cycle_time_slope = -10.0;  // [s per m/s]

  int eights_for(double w_ref) const;
  double cycle_time_for(double w_ref) const;  // unclamped
  // Throws ConfigError on non-positive counts or fractions outside (0, 1).
  void validate() const;
};

struct GuessTrajectory {
  std::vector<std::array<double, kNumStates>> states;    // physical
  std::vector<std::array<double, kNumControls>> controls;
  double duration = 0.0;
};

// Physical guess on the mesh of `nlp` for its wind speed. Throws ConfigError
// when the figure does not fit the airspace boxes.
GuessTrajectory synth_trajectory(const CollocationNlp& nlp, const GuessRecipe& recipe = {});

// Scaled decision vector of the guess; x at tau = 0 equals x at tau = 1.
std::vector<double> synth_guess(const CollocationNlp& nlp, const GuessRecipe& recipe = {});

// Smooth seeded perturbation of controls and T (magnitude in scaled units,
// [0, 0.2]). Each node state moves by the change that simulating its incoming
// interval under the new controls makes; states are then re-closed to
// periodicity and clipped into their boxes.
std::vector<double> perturb(const CollocationNlp& nlp, std::span<const double> z0, std::uint64_t seed,
                            double magnitude);

}  // namespace kiteopt
