#include "kiteopt/aero.hpp"

#include <cmath>
#include <string>

#include "kiteopt/errors.hpp"

namespace kiteopt {

void WindProfile::validate() const {
  if (!(w_ref > 0.0)) throw ConfigError("wind: w_ref must be positive");
  if (!(h_ref > 0.0)) throw ConfigError("wind: h_ref must be positive");
  if (!(shear_exp >= 0.0)) throw ConfigError("wind: shear_exp must be non-negative");
  if (!(h_floor > 0.0)) throw ConfigError("wind: h_floor must be positive");
}

void AeroTrimMap::validate() const {
  if (!(c_L_min > 0.0)) throw ConfigError("aero: c_L_min must be positive");
  if (!(c_L_min < c_L_max)) throw ConfigError("aero: c_L_min must be below c_L_max");
  if (!(c_D0 > 0.0)) throw ConfigError("aero: c_D0 must be positive");
  if (!(k_ind >= 0.0)) throw ConfigError("aero: k_ind must be non-negative");
}

double force_modulation_range(const AeroTrimMap& map) {
  const auto hi = aero_coeffs(map, 1.0);
  const auto lo = aero_coeffs(map, 0.0);
  return hi.resultant * (1.0 + hi.glide * hi.glide) / (lo.resultant * (1.0 + lo.glide * lo.glide));
}

}  // namespace kiteopt
