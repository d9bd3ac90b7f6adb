#pragma once

#include <cmath>
#include <complex>

#include "ionkerr/errors.hpp"
#include "ionkerr/rng.hpp"

namespace ionkerr {

/// Thermal (geometric) phonon distribution p(n) = nbar^n / (nbar + 1)^(n + 1).
struct ThermalOccupation {
  double nbar = 0.0;

  double ratio() const { return nbar / (nbar + 1.0); }

  double probability(unsigned n) const {
    if (nbar == 0.0) return n == 0 ? 1.0 : 0.0;
    return std::pow(ratio(), static_cast<double>(n)) / (nbar + 1.0);
  }

  unsigned sample(Xoshiro256& rng) const { return rng.geometric(ratio()); }
};

/// Thermal average of exp(i chi n tau): the geometric series sums to
/// 1 / (nbar + 1 - nbar exp(i chi tau)).
inline std::complex<double> thermal_dephasing_factor(double nbar, double chi, double tau) {
  detail::require(nbar >= 0.0, "thermal_dephasing_factor: nbar must be non-negative");
  const std::complex<double> phase = std::polar(1.0, chi * tau);
  return 1.0 / ((nbar + 1.0) - nbar * phase);
}

}  // namespace ionkerr
