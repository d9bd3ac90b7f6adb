#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ionkerr/constants.hpp"
#include "ionkerr/contrast_curve.hpp"
#include "ionkerr/errors.hpp"
#include "ionkerr/fitting.hpp"
#include "ionkerr/perturbation.hpp"
#include "ionkerr/rng.hpp"
#include "ionkerr/thermal.hpp"

namespace ionkerr {

enum class SequenceKind { Ramsey, SpinEcho, SpinEchoInjection };

inline std::string to_string(SequenceKind k) {
  switch (k) {
    case SequenceKind::Ramsey: return "ramsey";
    case SequenceKind::SpinEcho: return "echo";
    case SequenceKind::SpinEchoInjection: return "inject";
  }
  return "?";
}

inline SequenceKind parse_sequence_kind(const std::string& s) {
  if (s == "ramsey") return SequenceKind::Ramsey;
  if (s == "echo") return SequenceKind::SpinEcho;
  if (s == "inject") return SequenceKind::SpinEchoInjection;
  throw InvalidInput("unknown protocol '" + s + "' (expected ramsey, echo or inject)");
}

/// One interferometer setting. For the echo sequences tau is the total free
/// evolution, split into two equal halves around the swap.
struct SequenceSpec {
  SequenceKind kind = SequenceKind::Ramsey;
  double tau = 0.0;                     // s
  std::vector<double> analysis_phases;  // rad, phase of the final pi/2 pulse
  double injection_success_prob = 0.5;  // SpinEchoInjection only
};

/// Imperfections and optional extras layered on the ideal pulse sequence.
struct SimulationOptions {
  double initial_contrast = 1.0;
  double gamma = 0.0;            // 1/s, overall contrast decay
  double static_detuning = 0.0;  // rad/s, constant stretch-mode frequency offset
  double heating_rate_x = 0.0;   // phonons/s added to the x rocking mode
  double heating_rate_y = 0.0;   // phonons/s added to the y rocking mode
};

struct ShotRecord {
  double tau = 0.0;
  double analysis_phase = 0.0;
  bool primary_outcome = false;    // ion 1 found in D
  bool spectator_outcome = false;  // ion 2 found in D (injection succeeded)
  unsigned sampled_n_rx = 0;       // hidden truth at the start of the shot
  unsigned sampled_n_ry = 0;
};

/// Arrival times of a Poisson process with the given rate on [0, tau).
inline std::vector<double> heating_process(double rate_up, double tau, Xoshiro256& rng) {
  detail::require(rate_up >= 0.0, "heating_process: rate must be non-negative");
  std::vector<double> jumps;
  if (rate_up == 0.0) return jumps;
  for (double t = rng.exponential(rate_up); t < tau; t += rng.exponential(rate_up)) jumps.push_back(t);
  return jumps;
}

inline std::vector<double> heating_process(double rate_up, double tau, std::uint64_t seed) {
  auto rng = derive_stream(seed, {});
  return heating_process(rate_up, tau, rng);
}

namespace detail {

/// Integral over [a, b] of n(t) = n0 + #{jumps <= t}.
inline double occupation_integral(double n0, std::span<const double> jumps, double a, double b) {
  double v = n0 * (b - a);
  for (double t : jumps)
    if (t < b) v += b - std::max(a, t);
  return v;
}

}  // namespace detail

/// Motional phase picked up by one shot. The vacuum part of chi (n_rx + n_ry + 1)
/// is common to both arms and left out. Echo phases are second half minus
/// first half; an injected phonon sits in the x mode during the second half.
inline double shot_phase(SequenceKind kind, double tau, double chi, double detuning, unsigned n_rx,
                         unsigned n_ry, std::span<const double> jumps_x, std::span<const double> jumps_y,
                         bool injected) {
  auto omega_integral = [&](double a, double b, double extra) {
    const double occ = detail::occupation_integral(n_rx + extra, jumps_x, a, b) +
                       detail::occupation_integral(n_ry, jumps_y, a, b);
    return detuning * (b - a) + chi * occ;
  };
  if (kind == SequenceKind::Ramsey) return omega_integral(0.0, tau, 0.0);
  const double half = 0.5 * tau;
  const double extra = (kind == SequenceKind::SpinEchoInjection && injected) ? 1.0 : 0.0;
  return omega_integral(half, tau, extra) - omega_integral(0.0, half, 0.0);
}

/// Seeded shot simulation. Each shot has its own stream derived from
/// (seed, tau, phase index, shot index), so the output is independent of
/// execution order. Per shot: sample n_rx and n_ry, draw the injection bit,
/// draw heating jumps, then a Bernoulli D-state outcome with
/// p(D) = (1 + C0 exp(-gamma tau) cos(analysis_phase + phi)) / 2.
inline std::vector<ShotRecord> simulate_sequence(const SequenceSpec& spec, const KerrCoupling& kerr,
                                                 const ThermalOccupation& thermal_x,
                                                 const ThermalOccupation& thermal_y, unsigned shots_per_phase,
                                                 std::uint64_t seed, const SimulationOptions& opt = {}) {
  detail::require(shots_per_phase >= 1, "simulate_sequence: shots_per_phase must be >= 1");
  detail::require(spec.tau >= 0.0, "simulate_sequence: tau must be non-negative");
  detail::require(!spec.analysis_phases.empty(), "simulate_sequence: no analysis phases");
  detail::require(thermal_x.nbar >= 0.0 && thermal_y.nbar >= 0.0, "simulate_sequence: nbar must be non-negative");
  detail::require(opt.initial_contrast >= 0.0 && opt.initial_contrast <= 1.0,
                  "simulate_sequence: initial contrast must lie in [0, 1]");
  detail::require(opt.gamma >= 0.0, "simulate_sequence: gamma must be non-negative");
  detail::require(spec.injection_success_prob >= 0.0 && spec.injection_success_prob <= 1.0,
                  "simulate_sequence: injection probability must lie in [0, 1]");

  const double envelope = opt.initial_contrast * std::exp(-opt.gamma * spec.tau);
  const auto tau_key = std::bit_cast<std::uint64_t>(spec.tau);
  const bool injecting = spec.kind == SequenceKind::SpinEchoInjection;
  std::vector<ShotRecord> out;
  out.reserve(spec.analysis_phases.size() * shots_per_phase);
  for (std::size_t ip = 0; ip < spec.analysis_phases.size(); ++ip) {
    const double theta = spec.analysis_phases[ip];
    for (unsigned shot = 0; shot < shots_per_phase; ++shot) {
      auto rng = derive_stream(seed, {tau_key, ip, shot});
      ShotRecord rec;
      rec.tau = spec.tau;
      rec.analysis_phase = theta;
      rec.sampled_n_rx = thermal_x.sample(rng);
      rec.sampled_n_ry = thermal_y.sample(rng);
      const bool injected = rng.bernoulli(spec.injection_success_prob);
      const auto jumps_x = heating_process(opt.heating_rate_x, spec.tau, rng);
      const auto jumps_y = heating_process(opt.heating_rate_y, spec.tau, rng);
      const double phi = shot_phase(spec.kind, spec.tau, kerr.chi, opt.static_detuning, rec.sampled_n_rx,
                                    rec.sampled_n_ry, jumps_x, jumps_y, injecting && injected);
      rec.primary_outcome = rng.bernoulli(0.5 * (1.0 + envelope * std::cos(theta + phi)));
      rec.spectator_outcome = injecting && injected;
      out.push_back(rec);
    }
  }
  return out;
}

/// Equally spaced analysis phases covering [0, 2 pi).
inline std::vector<double> uniform_phases(unsigned count) {
  detail::require(count >= 1, "uniform_phases: count must be >= 1");
  std::vector<double> p(count);
  for (unsigned i = 0; i < count; ++i) p[i] = kTwoPi * i / count;
  return p;
}

/// e^{-gamma tau} |F(nbar_x)| |F(nbar_y)| with F the thermal dephasing factor.
inline double analytic_contrast(double nbar_x, double nbar_y, double chi, double gamma, double tau,
                                double initial_contrast = 1.0) {
  detail::require(gamma >= 0.0, "analytic_contrast: gamma must be non-negative");
  return initial_contrast * std::exp(-gamma * tau) * std::abs(thermal_dephasing_factor(nbar_x, chi, tau)) *
         std::abs(thermal_dephasing_factor(nbar_y, chi, tau));
}

/// Average of exp(i phi_heat) over Poisson heating at `rate` in one rocking
/// mode. A jump at time s adds chi (tau - s) in Ramsey; in the echo
/// sequences it adds chi s in the first half and chi (tau - s) in the second.
inline std::complex<double> heating_fringe_factor(SequenceKind kind, double chi, double rate, double tau) {
  detail::require(rate >= 0.0, "heating_fringe_factor: rate must be non-negative");
  // integral_0^t (e^{i chi s} - 1) ds
  auto kernel = [chi](double t) -> std::complex<double> {
    if (chi == 0.0) return 0.0;
    return (std::polar(1.0, chi * t) - 1.0) / std::complex<double>(0.0, chi) - t;
  };
  const std::complex<double> exponent = kind == SequenceKind::Ramsey ? kernel(tau) : 2.0 * kernel(0.5 * tau);
  return std::exp(rate * exponent);
}

/// Shot-averaged fringe C e^{i psi} including heating; for SpinEchoInjection
/// `injected` selects the class.
inline std::complex<double> expected_fringe(SequenceKind kind, double tau, const KerrCoupling& kerr,
                                            const ThermalOccupation& tx, const ThermalOccupation& ty,
                                            const SimulationOptions& opt = {}, bool injected = false) {
  const std::complex<double> heating = heating_fringe_factor(kind, kerr.chi, opt.heating_rate_x, tau) *
                                       heating_fringe_factor(kind, kerr.chi, opt.heating_rate_y, tau);
  const double envelope = opt.initial_contrast * std::exp(-opt.gamma * tau);
  switch (kind) {
    case SequenceKind::Ramsey:
      return envelope * heating * std::polar(1.0, opt.static_detuning * tau) *
             thermal_dephasing_factor(tx.nbar, kerr.chi, tau) * thermal_dephasing_factor(ty.nbar, kerr.chi, tau);
    case SequenceKind::SpinEcho: return envelope * heating;
    case SequenceKind::SpinEchoInjection:
      return envelope * heating * std::polar(1.0, injected ? 0.5 * kerr.chi * tau : 0.0);
  }
  return 0.0;
}

/// Period of the gamma = 0 Ramsey contrast, 2 pi / |chi|.
inline double revival_time(const KerrCoupling& kerr) {
  detail::require(kerr.chi != 0.0, "revival_time: chi is zero");
  return kTwoPi / std::abs(kerr.chi);
}

struct ContrastAnalysis {
  ContrastCurve all;
  std::optional<ContrastCurve> class0;  // spectator not excited
  std::optional<ContrastCurve> class1;  // spectator excited
};

namespace detail {

/// Sinusoid fit of D-state fractions against analysis phase. The estimator
/// weights each phase by its shot count; errors use binomial variances
/// evaluated at the fitted pattern.
inline SinusoidFit fit_shot_fractions(const std::map<double, std::pair<unsigned, unsigned>>& by_phase) {
  std::vector<double> phases, fractions, weights, variances;
  for (const auto& [phase, counts] : by_phase) {
    phases.push_back(phase);
    fractions.push_back(static_cast<double>(counts.first) / counts.second);
    weights.push_back(static_cast<double>(counts.second));
  }
  detail::require(phases.size() >= 4, "contrast_from_shots: need at least 4 distinct analysis phases");
  const SinusoidFit first = fit_sinusoid(phases, fractions, weights);
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const double p = std::clamp(first.offset + 0.5 * first.contrast * std::cos(phases[i] + first.phase), 0.0, 1.0);
    variances.push_back(p * (1.0 - p) / weights[i]);
  }
  return fit_sinusoid(phases, fractions, weights, variances);
}

inline ContrastCurve curve_from_records(std::span<const ShotRecord> records, int spectator_class) {
  std::map<double, std::map<double, std::pair<unsigned, unsigned>>> grouped;
  for (const auto& r : records) {
    if (spectator_class >= 0 && static_cast<int>(r.spectator_outcome) != spectator_class) continue;
    auto& cell = grouped[r.tau][r.analysis_phase];
    cell.first += r.primary_outcome ? 1u : 0u;
    cell.second += 1u;
  }
  ContrastCurve curve;
  for (const auto& [tau, by_phase] : grouped) {
    const SinusoidFit f = fit_shot_fractions(by_phase);
    curve.push_back(tau, f.contrast, f.contrast_err, f.phase, f.phase_err, f.degenerate);
  }
  return curve;
}

}  // namespace detail

/// Contrast and fringe phase per tau; with sort_by_spectator the shots are
/// also split into the two spectator classes.
inline ContrastAnalysis contrast_from_shots(std::span<const ShotRecord> records, bool sort_by_spectator = false) {
  detail::require(!records.empty(), "contrast_from_shots: no records");
  ContrastAnalysis out;
  out.all = detail::curve_from_records(records, -1);
  if (sort_by_spectator) {
    out.class0 = detail::curve_from_records(records, 0);
    out.class1 = detail::curve_from_records(records, 1);
  }
  return out;
}

/// Phase difference class 1 minus class 0, wrapped to (-pi, pi], with
/// independent errors added in quadrature.
struct PhaseDifference {
  std::vector<double> taus, delta, delta_err;
};

inline PhaseDifference class_phase_difference(const ContrastAnalysis& a) {
  detail::require(a.class0 && a.class1, "class_phase_difference: analysis was not sorted by spectator");
  detail::require(a.class0->taus == a.class1->taus, "class_phase_difference: classes cover different taus");
  PhaseDifference d;
  for (std::size_t i = 0; i < a.class0->size(); ++i) {
    d.taus.push_back(a.class0->taus[i]);
    d.delta.push_back(wrap_phase(a.class1->phase[i] - a.class0->phase[i]));
    d.delta_err.push_back(std::hypot(a.class0->phase_err[i], a.class1->phase_err[i]));
  }
  return d;
}

}  // namespace ionkerr
