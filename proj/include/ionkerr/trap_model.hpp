#pragma once

#include <cmath>
#include <string>

#include "ionkerr/constants.hpp"
#include "ionkerr/errors.hpp"

namespace ionkerr {

/// Two identical ions in an anisotropic harmonic trap. All frequencies are
/// angular (rad/s).
struct TrapConfig {
  double ion_mass;    // kg
  double omega_z;     // axial COM frequency
  double omega_perp;  // radial frequency, omega_x == omega_y

  static TrapConfig from_amu(double mass_amu, double omega_z, double omega_perp,
                             const PhysicalConstants& consts = codata2018_constants()) {
    return TrapConfig{mass_amu * consts.atomic_mass_unit, omega_z, omega_perp};
  }
};

/// Stretch / rocking mode frequencies and the length scales of the relative
/// motion. u0 and x0 are ground-state half widths of the relative coordinate,
/// whose effective mass is 2m.
struct ModeSpectrum {
  double omega_s;  // stretch, sqrt(3) omega_z
  double omega_r;  // rocking, doubly degenerate
  double z0;       // equilibrium half spacing
  double u0;       // sqrt(hbar / (4 m omega_s))
  double x0;       // sqrt(hbar / (4 m omega_r))
};

/// Prefactors of the cross-coupling terms c3 u (x^2 + y^2) and c4 u^2 (x^2 + y^2).
struct NonlinearCoefficients {
  double c3;  // J/m^3
  double c4;  // J/m^4
};

struct ValidityReport {
  double ratio_a;             // (omega_r / omega_s) / (x0 / z0)
  double ratio_b;             // (|2 omega_r - omega_s| / omega_s) / (u0 / z0)
  double resonance_detuning;  // 2 omega_r - omega_s, rad/s
  double threshold;
  bool ok;
};

inline constexpr double kDefaultValidityThreshold = 100.0;

inline void validate(const TrapConfig& config) {
  detail::require(std::isfinite(config.ion_mass) && config.ion_mass > 0.0,
                  "ion_mass must be positive");
  detail::require(std::isfinite(config.omega_z) && config.omega_z > 0.0,
                  "omega_z must be positive");
  detail::require(std::isfinite(config.omega_perp) && config.omega_perp > config.omega_z,
                  "omega_perp must exceed omega_z (linear crystal condition)");
}

inline double equilibrium_half_spacing(const TrapConfig& config,
                                       const PhysicalConstants& consts = codata2018_constants()) {
  detail::require(config.ion_mass > 0.0 && config.omega_z > 0.0,
                  "equilibrium_half_spacing: mass and omega_z must be positive");
  const double e2 = consts.elementary_charge * consts.elementary_charge;
  return std::cbrt(e2 / (16.0 * std::numbers::pi * consts.vacuum_permittivity * config.ion_mass *
                         config.omega_z * config.omega_z));
}

inline ModeSpectrum normal_modes(const TrapConfig& config,
                                 const PhysicalConstants& consts = codata2018_constants()) {
  validate(config);
  ModeSpectrum s{};
  s.omega_s = std::sqrt(3.0) * config.omega_z;
  // (wp - wz)(wp + wz) keeps precision when omega_perp is close to omega_z.
  s.omega_r = std::sqrt((config.omega_perp - config.omega_z) * (config.omega_perp + config.omega_z));
  s.z0 = equilibrium_half_spacing(config, consts);
  s.u0 = std::sqrt(consts.reduced_planck / (4.0 * config.ion_mass * s.omega_s));
  s.x0 = std::sqrt(consts.reduced_planck / (4.0 * config.ion_mass * s.omega_r));
  return s;
}

inline NonlinearCoefficients nonlinear_coefficients(const ModeSpectrum& spectrum,
                                                    const TrapConfig& config) {
  const double k = config.ion_mass * spectrum.omega_s * spectrum.omega_s;
  return NonlinearCoefficients{k / spectrum.z0, -2.0 * k / (spectrum.z0 * spectrum.z0)};
}

inline ValidityReport validity_check(const ModeSpectrum& spectrum,
                                     double threshold = kDefaultValidityThreshold) {
  detail::require(threshold >= 0.0, "validity threshold must be non-negative");
  ValidityReport r{};
  r.resonance_detuning = 2.0 * spectrum.omega_r - spectrum.omega_s;
  r.ratio_a = (spectrum.omega_r / spectrum.omega_s) / (spectrum.x0 / spectrum.z0);
  r.ratio_b = (std::abs(r.resonance_detuning) / spectrum.omega_s) / (spectrum.u0 / spectrum.z0);
  r.threshold = threshold;
  const bool resonant = r.resonance_detuning == 0.0;
  r.ok = !resonant && r.ratio_a > threshold && r.ratio_b > threshold;
  return r;
}

}  // namespace ionkerr
