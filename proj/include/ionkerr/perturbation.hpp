#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <sstream>
#include <string>

#include "ionkerr/constants.hpp"
#include "ionkerr/errors.hpp"
#include "ionkerr/thermal.hpp"
#include "ionkerr/trap_model.hpp"

namespace ionkerr {

/// Fock occupations of the stretch mode and the two rocking modes.
struct PhononState {
  unsigned n_s = 0;
  unsigned n_rx = 0;
  unsigned n_ry = 0;

  friend bool operator==(const PhononState&, const PhononState&) = default;
};

inline std::string to_string(const PhononState& s) {
  std::ostringstream os;
  os << '(' << s.n_s << ',' << s.n_rx << ',' << s.n_ry << ')';
  return os.str();
}

struct KerrCoupling {
  double chi = 0.0;                  // rad/s, signed
  double shift_per_phonon_hz = 0.0;  // chi / 2 pi
  ValidityReport validity{};
};

inline KerrCoupling make_kerr_coupling(double chi, const ValidityReport& validity = {}) {
  return KerrCoupling{chi, rad_s_to_hz(chi), validity};
}

/// Reject when any second-order denominator (omega_s, omega_s +- 2 omega_r) is
/// smaller than this fraction of omega_s.
inline constexpr double kDefaultResonanceGuard = 1e-3;

namespace matrix_elements {

/// <out| (a + a^dag) |in>
inline double position(unsigned out, unsigned in) {
  if (out == in + 1) return std::sqrt(static_cast<double>(in) + 1.0);
  if (in == out + 1) return std::sqrt(static_cast<double>(in));
  return 0.0;
}

/// <out| (a + a^dag)^2 |in>
inline double position_squared(unsigned out, unsigned in) {
  const double n = in;
  if (out == in) return 2.0 * n + 1.0;
  if (out == in + 2) return std::sqrt((n + 1.0) * (n + 2.0));
  if (in == out + 2) return std::sqrt(n * (n - 1.0));
  return 0.0;
}

}  // namespace matrix_elements

/// <state| c4 u^2 (x^2 + y^2) |state> with u = u0 (a + a^dag), x = x0 (b + b^dag),
/// y = x0 (c + c^dag):  c4 u0^2 x0^2 (2 n_s + 1) [(2 n_rx + 1) + (2 n_ry + 1)].
inline double first_order_shift(const ModeSpectrum& spectrum, const NonlinearCoefficients& coeffs,
                                const PhononState& state) {
  using matrix_elements::position_squared;
  const double u2 = position_squared(state.n_s, state.n_s);
  const double r2 = position_squared(state.n_rx, state.n_rx) + position_squared(state.n_ry, state.n_ry);
  return coeffs.c4 * spectrum.u0 * spectrum.u0 * spectrum.x0 * spectrum.x0 * u2 * r2;
}

inline void check_resonance_guard(const ModeSpectrum& spectrum,
                                  double guard_fraction = kDefaultResonanceGuard) {
  const double limit = guard_fraction * spectrum.omega_s;
  const double closest = std::abs(spectrum.omega_s - 2.0 * spectrum.omega_r);
  if (closest < limit) {
    std::ostringstream os;
    os << "resonance guard: |omega_s - 2 omega_r| = " << closest << " rad/s is below "
       << guard_fraction << " omega_s (parametric resonance 2 omega_r = omega_s)";
    throw NumericalError(os.str());
  }
}

/// Second-order shift from c3 u (x^2 + y^2). The operator changes n_s by +-1
/// and, through x^2 or y^2, one rocking occupation by 0 or +-2. The Delta n_r = 0
/// pieces of x^2 and y^2 reach the same intermediate state and are summed as
/// amplitudes before squaring.
inline double second_order_shift(const ModeSpectrum& spectrum, const NonlinearCoefficients& coeffs,
                                 const PhononState& state, const PhysicalConstants& consts,
                                 double guard_fraction = kDefaultResonanceGuard) {
  using matrix_elements::position;
  using matrix_elements::position_squared;
  check_resonance_guard(spectrum, guard_fraction);

  struct Channel {
    int dx, dy;
  };
  static constexpr std::array<Channel, 5> kChannels{{{0, 0}, {2, 0}, {-2, 0}, {0, 2}, {0, -2}}};

  const double hbar = consts.reduced_planck;
  const double x0sq = spectrum.x0 * spectrum.x0;
  double sum = 0.0;
  for (int ds : {-1, 1}) {
    if (ds < 0 && state.n_s == 0) continue;
    const unsigned ks = state.n_s + ds;
    const double us = coeffs.c3 * spectrum.u0 * position(ks, state.n_s);
    for (const auto& ch : kChannels) {
      if (static_cast<int>(state.n_rx) + ch.dx < 0 || static_cast<int>(state.n_ry) + ch.dy < 0) continue;
      const unsigned kx = state.n_rx + ch.dx;
      const unsigned ky = state.n_ry + ch.dy;
      double rock = 0.0;
      if (ch.dy == 0) rock += position_squared(kx, state.n_rx);
      if (ch.dx == 0) rock += position_squared(ky, state.n_ry);
      const double amplitude = us * x0sq * rock;
      if (amplitude == 0.0) continue;
      // E_state - E_k
      const double denom = -hbar * (ds * spectrum.omega_s + (ch.dx + ch.dy) * spectrum.omega_r);
      sum += amplitude * amplitude / denom;
    }
  }
  return sum;
}

/// epsilon(state): first order in the quartic term plus second order in the cubic term.
inline double perturbative_energy_shift(const ModeSpectrum& spectrum,
                                        const NonlinearCoefficients& coeffs,
                                        const PhononState& state, const PhysicalConstants& consts,
                                        double guard_fraction = kDefaultResonanceGuard) {
  return first_order_shift(spectrum, coeffs, state) +
         second_order_shift(spectrum, coeffs, state, consts, guard_fraction);
}

/// chi from the double difference
/// [eps(s+1, x+1) - eps(s, x+1)] - [eps(s+1, x) - eps(s, x)], divided by hbar.
inline double chi_perturbative(const ModeSpectrum& spectrum, const NonlinearCoefficients& coeffs,
                               const PhysicalConstants& consts, const PhononState& base = {},
                               double guard_fraction = kDefaultResonanceGuard) {
  auto eps = [&](unsigned ds, unsigned dx) {
    return perturbative_energy_shift(spectrum, coeffs,
                                     {base.n_s + ds, base.n_rx + dx, base.n_ry}, consts,
                                     guard_fraction);
  };
  return ((eps(1, 1) - eps(0, 1)) - (eps(1, 0) - eps(0, 0))) / consts.reduced_planck;
}

/// (2 hbar omega_z / (alpha^2 m c^2))^(1/3); equals hbar / (2 m z0^2 omega_z).
inline double kerr_length_factor(const TrapConfig& config, const PhysicalConstants& consts) {
  const double a = consts.fine_structure_alpha;
  const double mc2 = config.ion_mass * consts.speed_of_light * consts.speed_of_light;
  return std::cbrt(2.0 * consts.reduced_planck * config.omega_z / (a * a * mc2));
}

/// Closed-form cross-Kerr constant
/// chi = -omega_s (1 + (omega_s^2/2) / (4 omega_r^2 - omega_s^2)) (omega_z/omega_r)
///       (2 hbar omega_z / (alpha^2 m c^2))^(1/3).
inline KerrCoupling chi_closed_form(const TrapConfig& config, const ModeSpectrum& spectrum,
                                    const PhysicalConstants& consts = codata2018_constants(),
                                    double validity_threshold = kDefaultValidityThreshold) {
  const double ws2 = spectrum.omega_s * spectrum.omega_s;
  const double gap = 4.0 * spectrum.omega_r * spectrum.omega_r - ws2;
  if (gap == 0.0) throw NumericalError("chi_closed_form: 4 omega_r^2 == omega_s^2 (parametric resonance)");
  const double enhancement = 1.0 + 0.5 * ws2 / gap;
  const double chi = -spectrum.omega_s * enhancement * (config.omega_z / spectrum.omega_r) *
                     kerr_length_factor(config, consts);
  return make_kerr_coupling(chi, validity_check(spectrum, validity_threshold));
}

/// First-order (quartic) contribution alone, i.e. chi_closed_form without the
/// second-order enhancement factor.
inline double chi_quartic_only(const TrapConfig& config, const ModeSpectrum& spectrum,
                               const PhysicalConstants& consts = codata2018_constants()) {
  return -spectrum.omega_s * (config.omega_z / spectrum.omega_r) * kerr_length_factor(config, consts);
}

/// delta omega_s = chi (n_rx + n_ry + 1)
inline double stretch_shift(const PhononState& state, const KerrCoupling& kerr) {
  return kerr.chi * (static_cast<double>(state.n_rx) + static_cast<double>(state.n_ry) + 1.0);
}

/// Phase-variance infidelity proxy 1 - |<exp(i chi n t)>_thermal|^2 for a
/// spectator mode with mean occupation nbar during an interaction of length t.
inline double gate_dephasing_estimate(const KerrCoupling& kerr, double nbar, double interaction_time) {
  detail::require(nbar >= 0.0, "gate_dephasing_estimate: nbar must be non-negative");
  detail::require(interaction_time > 0.0, "gate_dephasing_estimate: interaction time must be positive");
  const double m = std::abs(thermal_dephasing_factor(nbar, kerr.chi, interaction_time));
  return std::clamp(1.0 - m * m, 0.0, 1.0);
}

}  // namespace ionkerr
