#pragma once

#include <cstddef>
#include <vector>

namespace ionkerr {

/// Interferometer contrast and fringe phase against free-evolution time.
struct ContrastCurve {
  std::vector<double> taus;          // s
  std::vector<double> contrast;      // in [0, 1 + 3 sigma]
  std::vector<double> contrast_err;  // 1 sigma, statistical
  std::vector<double> phase;         // rad, in (-pi, pi]
  std::vector<double> phase_err;     // rad
  std::vector<bool> degenerate;      // every shot at this tau had the same outcome

  std::size_t size() const { return taus.size(); }

  void push_back(double tau, double c, double c_err, double ph, double ph_err, bool degen = false) {
    taus.push_back(tau);
    contrast.push_back(c);
    contrast_err.push_back(c_err);
    phase.push_back(ph);
    phase_err.push_back(ph_err);
    degenerate.push_back(degen);
  }
};

}  // namespace ionkerr
