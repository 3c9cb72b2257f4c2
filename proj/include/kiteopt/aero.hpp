#pragma once

// Steady sheared wind and trim-dependent kite aerodynamics.

#include <cmath>

#include "kiteopt/dual.hpp"

namespace kiteopt {

// Power-law wind shear w(h) = w_ref * (max(h, h_floor) / h_ref)^shear_exp.
struct WindProfile {
  double w_ref = 10.0;     // [m/s]
  double h_ref = 100.0;    // [m]
  double shear_exp = 0.14; // [-]
  double h_floor = 1.0;    // [m]

  void validate() const;
};

// Lift grows affinely with the normalized trim; drag follows a quadratic polar.
struct AeroTrimMap {
  double c_L_min = 0.3;
  double c_L_max = 1.0;
  double c_D0 = 0.04;
  double k_ind = 0.06;

  void validate() const;
};

template <class S>
struct AeroCoefficients {
  S lift;
  S drag;
  S glide;      // lift / drag
  S resultant;  // sqrt(lift^2 + drag^2)
};

template <class S>
S wind_speed(const WindProfile& profile, const S& height) {
  using std::pow;
  // The clamp only switches below the floor, which path constraints keep far away.
  const S h = height > profile.h_floor ? height : S(profile.h_floor);
  if (profile.shear_exp == 0.0) return S(profile.w_ref) + 0.0 * h;
  return profile.w_ref * pow(h / profile.h_ref, profile.shear_exp);
}

template <class S>
AeroCoefficients<S> aero_coeffs(const AeroTrimMap& map, const S& trim) {
  using std::sqrt;
  const S lift = map.c_L_min + trim * (map.c_L_max - map.c_L_min);
  const S drag = map.c_D0 + map.k_ind * lift * lift;
  return {lift, drag, lift / drag, sqrt(lift * lift + drag * drag)};
}

// Tether-force factor c_R * (1 + E^2) at full trim over the same at zero trim.
double force_modulation_range(const AeroTrimMap& map);

}  // namespace kiteopt
