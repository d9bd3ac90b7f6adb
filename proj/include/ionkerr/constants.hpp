#pragma once

#include <numbers>

namespace ionkerr {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// SI constants used by every model in the library.
///
/// The snapshot is CODATA 2018. The elementary charge, the Planck constant and
/// the speed of light are exact in the revised SI; the reduced Planck constant
/// and the vacuum permittivity are derived from them (and from alpha) so that
/// e^2 / (4 pi eps0 hbar c) == alpha holds to rounding. Mixing independently
/// rounded published values of hbar and eps0 would break that identity at the
/// 1e-10 level, which is larger than the tolerance of the analytic cross-checks.
struct PhysicalConstants {
  double elementary_charge;    // C
  double vacuum_permittivity;  // F/m
  double reduced_planck;       // J s
  double atomic_mass_unit;     // kg
  double fine_structure_alpha;
  double speed_of_light;  // m/s
};

namespace codata2018 {
inline constexpr double kElementaryCharge = 1.602176634e-19;
inline constexpr double kPlanck = 6.62607015e-34;
inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kFineStructure = 7.2973525693e-3;
inline constexpr double kAtomicMassUnit = 1.66053906660e-27;
}  // namespace codata2018

inline constexpr PhysicalConstants codata2018_constants() {
  using namespace codata2018;
  const double hbar = kPlanck / kTwoPi;
  const double eps0 =
      kElementaryCharge * kElementaryCharge / (2.0 * kFineStructure * kPlanck * kSpeedOfLight);
  return PhysicalConstants{kElementaryCharge, eps0, hbar, kAtomicMassUnit, kFineStructure,
                           kSpeedOfLight};
}

/// Atomic mass of 40Ca (AME2016), in u.
inline constexpr double kCalcium40MassAmu = 39.962590863;

inline constexpr double khz_to_rad_s(double f_khz) { return kTwoPi * 1e3 * f_khz; }
inline constexpr double mhz_to_rad_s(double f_mhz) { return kTwoPi * 1e6 * f_mhz; }
inline constexpr double rad_s_to_hz(double omega) { return omega / kTwoPi; }
inline constexpr double hz_to_rad_s(double f_hz) { return kTwoPi * f_hz; }

}  // namespace ionkerr
