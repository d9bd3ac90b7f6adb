#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#include "ionkerr/constants.hpp"
#include "ionkerr/contrast_curve.hpp"
#include "ionkerr/errors.hpp"

namespace ionkerr {

inline double wrap_phase(double phi) {
  double w = std::remainder(phi, kTwoPi);
  if (w <= -std::numbers::pi) w += kTwoPi;
  return w;
}

// ---------------------------------------------------------------------------
// Sinusoid: y = offset + (contrast / 2) cos(phi + phase)

struct SinusoidFit {
  double contrast = 0.0;
  double phase = 0.0;  // (-pi, pi]
  double offset = 0.0;
  double contrast_err = 0.0;
  double phase_err = 0.0;
  double offset_err = 0.0;
  bool degenerate = false;  // every input value identical
};

/// Weighted least squares for the fringe pattern. The model is linear in
/// (offset, A cos, A sin); that solve is followed by one Gauss-Newton step in
/// (offset, contrast, phase), whose Jacobian also propagates the errors.
///
/// `weights` (relative, optional) define the estimator. With `variances` the
/// parameter covariance is the sandwich A^-1 J^T W S W J A^-1 for the given
/// per-point variances S; otherwise it is scaled by the residual variance.
inline SinusoidFit fit_sinusoid(std::span<const double> phases, std::span<const double> values,
                                std::span<const double> weights = {},
                                std::span<const double> variances = {}) {
  const std::size_t n = phases.size();
  detail::require(values.size() == n, "fit_sinusoid: phases and values differ in length");
  detail::require(weights.empty() || weights.size() == n, "fit_sinusoid: weights length mismatch");
  detail::require(variances.empty() || variances.size() == n, "fit_sinusoid: variances length mismatch");
  detail::require(n >= 4, "fit_sinusoid: need at least 4 points");
  for (double w : weights) detail::require(w > 0.0 && std::isfinite(w), "fit_sinusoid: weights must be positive");

  std::vector<double> wrapped(phases.begin(), phases.end());
  for (double& p : wrapped) {
    p = std::fmod(p, kTwoPi);
    if (p < 0.0) p += kTwoPi;
  }
  std::sort(wrapped.begin(), wrapped.end());
  if (wrapped.back() - wrapped.front() == 0.0)
    throw InvalidInput("fit_sinusoid: rank-deficient design, all phases equal");
  double gap = wrapped.front() + kTwoPi - wrapped.back();
  for (std::size_t i = 1; i < n; ++i) gap = std::max(gap, wrapped[i] - wrapped[i - 1]);
  detail::require(kTwoPi - gap >= std::numbers::pi - 1e-9, "fit_sinusoid: phases must span at least half a period");

  Eigen::VectorXd w(n), y(n);
  Eigen::MatrixXd x(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    w(i) = weights.empty() ? 1.0 : weights[i];
    y(i) = values[i];
    x(i, 0) = 1.0;
    x(i, 1) = std::cos(phases[i]);
    x(i, 2) = std::sin(phases[i]);
  }
  const Eigen::VectorXd sw = w.cwiseSqrt();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sw.asDiagonal() * x);
  if (qr.rank() < 3) throw InvalidInput("fit_sinusoid: rank-deficient design");
  const Eigen::Vector3d lin = qr.solve(sw.asDiagonal() * y);

  SinusoidFit fit;
  fit.degenerate = (y.array() == y(0)).all();
  fit.offset = lin(0);
  fit.contrast = 2.0 * std::hypot(lin(1), lin(2));
  fit.phase = std::atan2(-lin(2), lin(1));

  auto jacobian = [&](const SinusoidFit& f) {
    Eigen::MatrixXd j(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
      j(i, 0) = 1.0;
      j(i, 1) = 0.5 * std::cos(phases[i] + f.phase);
      j(i, 2) = -0.5 * f.contrast * std::sin(phases[i] + f.phase);
    }
    return j;
  };
  auto residual = [&](const SinusoidFit& f) {
    Eigen::VectorXd r(n);
    for (std::size_t i = 0; i < n; ++i) r(i) = y(i) - (f.offset + 0.5 * f.contrast * std::cos(phases[i] + f.phase));
    return r;
  };

  const bool has_amplitude = fit.contrast > 1e-12;
  Eigen::MatrixXd j = jacobian(fit);
  if (has_amplitude) {
    const Eigen::MatrixXd a = j.transpose() * w.asDiagonal() * j;
    const Eigen::Vector3d step = a.ldlt().solve(j.transpose() * w.asDiagonal() * residual(fit));
    SinusoidFit refined = fit;
    refined.offset += step(0);
    refined.contrast += step(1);
    refined.phase += step(2);
    if (refined.contrast < 0.0) {
      refined.contrast = -refined.contrast;
      refined.phase += std::numbers::pi;
    }
    const Eigen::VectorXd r0 = residual(fit), r1 = residual(refined);
    if (r1.dot(w.asDiagonal() * r1) <= r0.dot(w.asDiagonal() * r0)) fit = refined;
    fit.phase = wrap_phase(fit.phase);
    j = jacobian(fit);
  }

  // Errors in (offset, A cos, A sin) are always well defined; map them to
  // (offset, contrast, phase) through the linear-model Jacobian.
  const Eigen::MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
  const Eigen::MatrixXd ainv = xtwx.inverse();
  Eigen::MatrixXd cov_lin;
  if (!variances.empty()) {
    Eigen::VectorXd s(n);
    for (std::size_t i = 0; i < n; ++i) s(i) = variances[i];
    const Eigen::VectorXd ws = w.cwiseProduct(s).cwiseProduct(w);
    cov_lin = ainv * (x.transpose() * ws.asDiagonal() * x) * ainv;
  } else {
    const Eigen::VectorXd r = y - x * lin;
    const double dof = n > 3 ? static_cast<double>(n - 3) : 1.0;
    cov_lin = ainv * (r.dot(w.asDiagonal() * r) / dof);
  }
  const double a = lin(1), b = lin(2);
  const double rho = std::hypot(a, b);
  fit.offset_err = std::sqrt(std::max(cov_lin(0, 0), 0.0));
  if (rho > 0.0) {
    Eigen::RowVector3d dc(0.0, 2.0 * a / rho, 2.0 * b / rho);
    Eigen::RowVector3d dp(0.0, b / (rho * rho), -a / (rho * rho));
    fit.contrast_err = std::sqrt(std::max((dc * cov_lin * dc.transpose())(0, 0), 0.0));
    fit.phase_err = std::min(std::sqrt(std::max((dp * cov_lin * dp.transpose())(0, 0), 0.0)), std::numbers::pi);
  } else {
    fit.contrast_err = 2.0 * std::sqrt(std::max(0.5 * (cov_lin(1, 1) + cov_lin(2, 2)), 0.0));
    fit.phase_err = std::numbers::pi;
  }
  fit.contrast = std::clamp(fit.contrast, 0.0, 1.0 + 3.0 * fit.contrast_err);
  return fit;
}

// ---------------------------------------------------------------------------
// Straight lines

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_err = 0.0;
  double intercept_err = 0.0;
  double covariance = 0.0;
  double residual_norm = 0.0;  // sqrt(chi^2) with sigmas, plain RMS-sum otherwise
};

/// y = intercept + slope * x. With sigmas the errors are absolute; without,
/// they are scaled by the residual variance (zero for an exact fit).
inline LineFit weighted_line_fit(std::span<const double> x, std::span<const double> y,
                                 std::span<const double> sigmas = {}) {
  const std::size_t n = x.size();
  detail::require(y.size() == n, "line fit: x and y differ in length");
  detail::require(sigmas.empty() || sigmas.size() == n, "line fit: sigma length mismatch");
  for (double s : sigmas) detail::require(s > 0.0 && std::isfinite(s), "line fit: sigmas must be positive");
  double s0 = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = sigmas.empty() ? 1.0 : 1.0 / (sigmas[i] * sigmas[i]);
    s0 += w;
    sx += w * x[i];
    sy += w * y[i];
    sxx += w * x[i] * x[i];
    sxy += w * x[i] * y[i];
  }
  const double det = s0 * sxx - sx * sx;
  if (!(det > 1e-300 * s0 * sxx) || n < 2) throw InvalidInput("line fit: need at least 2 distinct abscissae");
  LineFit f;
  f.slope = (s0 * sxy - sx * sy) / det;
  f.intercept = (sxx * sy - sx * sxy) / det;
  double chi2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = sigmas.empty() ? 1.0 : 1.0 / (sigmas[i] * sigmas[i]);
    const double r = y[i] - f.intercept - f.slope * x[i];
    chi2 += w * r * r;
  }
  f.residual_norm = std::sqrt(chi2);
  const double scale = sigmas.empty() ? (n > 2 ? chi2 / static_cast<double>(n - 2) : 0.0) : 1.0;
  f.slope_err = std::sqrt(scale * s0 / det);
  f.intercept_err = std::sqrt(scale * sxx / det);
  f.covariance = -scale * sx / det;
  return f;
}

struct PhaseSlopeFit {
  LineFit line;                    // slope in rad/s
  double protocol_factor = 2.0;    // shift per phonon = factor * slope
  double shift_per_phonon_hz = 0.0;
  double shift_err_hz = 0.0;
};

/// Linear fit of the injected-phonon phase difference against the echo time.
/// With the phonon present during the second half only, the phase grows as
/// chi tau / 2, so the per-phonon shift is 2 * slope (protocol_factor).
/// Inputs must already be unwrapped: adjacent points (sorted by tau) that jump
/// by more than pi are rejected.
inline PhaseSlopeFit fit_phase_slope(std::span<const double> taus, std::span<const double> delta_phases,
                                     std::span<const double> errors = {}, double protocol_factor = 2.0) {
  detail::require(taus.size() == delta_phases.size(), "fit_phase_slope: length mismatch");
  std::vector<std::size_t> order(taus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return taus[a] < taus[b]; });
  for (std::size_t k = 1; k < order.size(); ++k) {
    const double jump = delta_phases[order[k]] - delta_phases[order[k - 1]];
    if (std::abs(jump) > std::numbers::pi) {
      std::ostringstream os;
      os << "fit_phase_slope: phase wrap detected between tau = " << taus[order[k - 1]] << " s and "
         << taus[order[k]] << " s (jump " << jump << " rad); unwrap the input";
      throw InvalidInput(os.str());
    }
  }
  PhaseSlopeFit f;
  f.line = weighted_line_fit(taus, delta_phases, errors);
  f.protocol_factor = protocol_factor;
  f.shift_per_phonon_hz = protocol_factor * f.line.slope / kTwoPi;
  f.shift_err_hz = std::abs(protocol_factor) * f.line.slope_err / kTwoPi;
  return f;
}

struct PowerLawFit {
  double beta = 0.0;
  double amplitude_hz = 0.0;     // shift at the reference frequency
  double beta_err = 0.0;
  double amplitude_err = 0.0;
  double reference_omega = 0.0;  // rad/s
  double residual_norm = 0.0;    // in log space
};

/// shift = amplitude (omega / reference)^beta, fitted as a line in log-log
/// space. The reference defaults to the geometric mean of the abscissae.
inline PowerLawFit fit_power_law(std::span<const double> omegas, std::span<const double> shifts_hz,
                                 std::span<const double> errors = {}, double reference_omega = 0.0) {
  detail::require(omegas.size() == shifts_hz.size(), "fit_power_law: length mismatch");
  detail::require(omegas.size() >= 2, "fit_power_law: need at least 2 points");
  detail::require(errors.empty() || errors.size() == omegas.size(), "fit_power_law: errors length mismatch");
  for (std::size_t i = 0; i < omegas.size(); ++i)
    detail::require(omegas[i] > 0.0 && shifts_hz[i] > 0.0, "fit_power_law: inputs must be positive");
  if (reference_omega <= 0.0) {
    double s = 0.0;
    for (double w : omegas) s += std::log(w);
    reference_omega = std::exp(s / static_cast<double>(omegas.size()));
  }
  std::vector<double> lx, ly, ls;
  for (std::size_t i = 0; i < omegas.size(); ++i) {
    lx.push_back(std::log(omegas[i] / reference_omega));
    ly.push_back(std::log(shifts_hz[i]));
    if (!errors.empty()) ls.push_back(errors[i] / shifts_hz[i]);
  }
  const LineFit line = weighted_line_fit(lx, ly, ls);
  PowerLawFit f;
  f.beta = line.slope;
  f.beta_err = line.slope_err;
  f.amplitude_hz = std::exp(line.intercept);
  f.amplitude_err = f.amplitude_hz * line.intercept_err;
  f.reference_omega = reference_omega;
  f.residual_norm = line.residual_norm;
  return f;
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt

struct LmOptions {
  int max_iterations = 200;
  double step_tolerance = 1e-10;  // per-component relative step
  double cost_tolerance = 1e-12;  // relative cost decrease
  double initial_damping = 1e-3;
};

struct LmResult {
  Eigen::VectorXd params;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Damped Gauss-Newton with Marquardt's diagonal scaling: solve
/// (J^T J + lambda diag(J^T J)) delta = -J^T r, divide lambda by 10 after an
/// accepted step and multiply by 10 after a rejected one. Stops when the step
/// is below step_tolerance relative to every component, the relative cost
/// decrease is below cost_tolerance, or no step can lower the cost any more.
/// `eval(p, r, J)` fills weighted residuals and their Jacobian; parameters
/// with active[i] == false are held fixed.
template <class Eval>
LmResult levenberg_marquardt(Eval&& eval, Eigen::VectorXd p, const std::vector<bool>& active,
                             const LmOptions& opt = {}) {
  const Eigen::Index np = p.size();
  Eigen::VectorXd r;
  Eigen::MatrixXd j;
  eval(p, r, j);
  for (Eigen::Index k = 0; k < np; ++k)
    if (!active[k]) j.col(k).setZero();
  double cost = r.squaredNorm();
  double lambda = opt.initial_damping;
  LmResult out;
  for (int it = 0; it < opt.max_iterations; ++it) {
    out.iterations = it + 1;
    const Eigen::MatrixXd a = j.transpose() * j;
    const Eigen::VectorXd g = j.transpose() * r;
    const double dmax = std::max(a.diagonal().maxCoeff(), 1e-300);
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd m = a;
      for (Eigen::Index k = 0; k < np; ++k) {
        if (!active[k]) {
          m.row(k).setZero();
          m.col(k).setZero();
          m(k, k) = 1.0;
        } else {
          m(k, k) += lambda * std::max(a(k, k), 1e-15 * dmax);
        }
      }
      Eigen::VectorXd rhs = -g;
      for (Eigen::Index k = 0; k < np; ++k)
        if (!active[k]) rhs(k) = 0.0;
      const Eigen::VectorXd delta = m.ldlt().solve(rhs);
      const Eigen::VectorXd trial = p + delta;
      Eigen::VectorXd rt;
      Eigen::MatrixXd jt;
      bool finite = delta.allFinite();
      if (finite) {
        eval(trial, rt, jt);
        finite = rt.allFinite() && jt.allFinite();
      }
      const double trial_cost = finite ? rt.squaredNorm() : std::numeric_limits<double>::infinity();
      if (trial_cost < cost) {
        bool small_step = true;
        for (Eigen::Index k = 0; k < np; ++k)
          if (std::abs(delta(k)) > opt.step_tolerance * (std::abs(p(k)) + opt.step_tolerance)) small_step = false;
        const bool small_decrease = (cost - trial_cost) <= opt.cost_tolerance * cost;
        p = trial;
        r = rt;
        j = jt;
        for (Eigen::Index k = 0; k < np; ++k)
          if (!active[k]) j.col(k).setZero();
        cost = trial_cost;
        lambda = std::max(lambda / 10.0, 1e-15);
        accepted = true;
        if (small_step || small_decrease) {
          out.converged = true;
          out.params = p;
          out.cost = cost;
          return out;
        }
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // No direction lowers the cost: stationary up to rounding.
          out.converged = true;
          out.params = p;
          out.cost = cost;
          return out;
        }
      }
    }
  }
  out.params = p;
  out.cost = cost;
  return out;
}

// ---------------------------------------------------------------------------
// Collapse and revival

struct RevivalParams {
  double tau_star = 0.0;  // s, 2 pi / |chi|
  double nbar = 0.0;
  double gamma = 0.0;  // 1/s
  double scale = 1.0;  // initial contrast
};

/// C(tau) = scale exp(-gamma tau) / |nbar + 1 - nbar exp(2 pi i tau / tau_star)|
///        = scale exp(-gamma tau) / sqrt(1 + 4 nbar (nbar + 1) sin^2(pi tau / tau_star)).
inline double revival_model(double tau, const RevivalParams& p) {
  const double s = std::sin(std::numbers::pi * tau / p.tau_star);
  const double d = 1.0 + 4.0 * p.nbar * (p.nbar + 1.0) * s * s;
  return p.scale * std::exp(-p.gamma * tau) / std::sqrt(d);
}

/// d C / d (tau_star, nbar, gamma, scale).
inline Eigen::Vector4d revival_gradient(double tau, const RevivalParams& p) {
  const double theta = kTwoPi * tau / p.tau_star;
  const double half = std::sin(0.5 * theta);
  const double one_minus_cos = 2.0 * half * half;
  const double nn1 = p.nbar * (p.nbar + 1.0);
  const double d = 1.0 + 2.0 * nn1 * one_minus_cos;
  const double e = std::exp(-p.gamma * tau);
  const double g = 1.0 / std::sqrt(d);
  const double c = p.scale * e * g;
  Eigen::Vector4d grad;
  grad(0) = c * nn1 * std::sin(theta) * (kTwoPi * tau / (p.tau_star * p.tau_star)) / d;
  grad(1) = -c * (2.0 * p.nbar + 1.0) * one_minus_cos / d;
  grad(2) = -tau * c;
  grad(3) = e * g;
  return grad;
}

struct RevivalFit {
  double tau_star = 0.0;
  double nbar = 0.0;
  double gamma = 0.0;
  double scale = 0.0;
  RevivalParams param_errors{};  // 1 sigma, same layout
  double residual_norm = 0.0;
  bool converged = false;
  bool at_bound = false;             // nbar or gamma pushed to the edge of its domain
  bool tau_star_identified = true;   // false when the data cannot constrain tau_star
  int starts = 0;
  int starts_converged = 0;
};

struct RevivalFitOptions {
  int multistart_count = 20;
  int placement_points_per_peak = 5;  // profile scan density, per revival-peak width
  LmOptions lm{};
};

namespace detail {

inline double softplus(double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); }
inline double softplus_inverse(double n) { return n > 30.0 ? n : std::log(std::expm1(n)); }
inline double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Internal coordinates: (log tau_star, softplus^-1 nbar, log gamma, scale).
inline RevivalParams from_internal(const Eigen::Vector4d& q) {
  return {std::exp(q(0)), softplus(q(1)), std::exp(q(2)), q(3)};
}

inline Eigen::Vector4d to_internal(const RevivalParams& p) {
  return {std::log(p.tau_star), softplus_inverse(std::max(p.nbar, 1e-12)), std::log(std::max(p.gamma, 1e-300)),
          p.scale};
}

}  // namespace detail

/// Nonlinear least squares for (tau_star, nbar, gamma) with the initial
/// contrast as a nuisance scale. Without an initial guess, 20 starts are
/// spread log-uniformly in tau_star over the sampled range. Revival peaks are
/// narrow, so each start is first moved to the best tau_star of its log cell
/// on a profile scan (nbar from the contrast depth, gamma = 0, scale solved
/// linearly), then all four parameters are released. The lowest cost wins,
/// ties going to the smaller tau_star.
/// Errors come from the inverse normal matrix, using contrast_err as absolute
/// sigmas when every one is positive and the residual variance otherwise.
inline RevivalFit fit_revival(const ContrastCurve& curve, std::optional<RevivalParams> initial_guess = std::nullopt,
                              const RevivalFitOptions& opt = {}) {
  const std::size_t n = curve.size();
  detail::require(n >= 5 && curve.contrast.size() == n && curve.contrast_err.size() == n,
                  "fit_revival: need at least 5 points with matching columns");
  const bool absolute = std::all_of(curve.contrast_err.begin(), curve.contrast_err.end(),
                                    [](double e) { return e > 0.0 && std::isfinite(e); });
  std::vector<double> sw(n);
  for (std::size_t i = 0; i < n; ++i) sw[i] = absolute ? 1.0 / curve.contrast_err[i] : 1.0;

  auto eval = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r, Eigen::MatrixXd& j) {
    const RevivalParams p = detail::from_internal(q);
    const Eigen::Vector4d chain(p.tau_star, detail::logistic(q(1)), p.gamma, 1.0);
    r.resize(n);
    j.resize(n, 4);
    for (std::size_t i = 0; i < n; ++i) {
      r(i) = sw[i] * (revival_model(curve.taus[i], p) - curve.contrast[i]);
      j.row(i) = (sw[i] * revival_gradient(curve.taus[i], p).cwiseProduct(chain)).transpose();
    }
  };

  const double tau_max = *std::max_element(curve.taus.begin(), curve.taus.end());
  detail::require(tau_max > 0.0, "fit_revival: taus must include positive values");
  const double c_max = *std::max_element(curve.contrast.begin(), curve.contrast.end());
  double c_min = c_max;
  for (std::size_t i = 0; i < n; ++i)
    if (curve.taus[i] > 0.0) c_min = std::min(c_min, curve.contrast[i]);
  const double depth = c_min > 0.0 ? c_max / c_min : 200.0;
  const double nbar_guess = std::clamp(0.5 * (depth - 1.0), 0.1, 100.0);

  std::vector<RevivalParams> starts;
  if (initial_guess) {
    starts.push_back(*initial_guess);
  } else {
    std::vector<double> sorted = curve.taus;
    std::sort(sorted.begin(), sorted.end());
    double spacing = tau_max;
    for (std::size_t i = 1; i < sorted.size(); ++i)
      if (sorted[i] > sorted[i - 1]) spacing = std::min(spacing, sorted[i] - sorted[i - 1]);
    const double lo = std::max(4.0 * spacing, tau_max / 50.0);
    const int k = std::max(opt.multistart_count, 1);
    const double cell = k == 1 ? 0.0 : std::log(tau_max / lo) / (k - 1);
    // Relative width of a revival peak is about 1 / (2 pi nbar).
    const double step = 1.0 / (2.0 * std::numbers::pi * std::max(nbar_guess, 1.0) *
                               std::max(opt.placement_points_per_peak, 1));
    auto profile_cost = [&](double tau_star) {
      const RevivalParams p{tau_star, nbar_guess, 0.0, 1.0};
      double sgg = 0.0, sgy = 0.0, syy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double g = sw[i] * revival_model(curve.taus[i], p);
        const double y = sw[i] * curve.contrast[i];
        sgg += g * g;
        sgy += g * y;
        syy += y * y;
      }
      return std::pair{syy - sgy * sgy / sgg, sgy / sgg};
    };
    for (int s = 0; s < k; ++s) {
      const double centre = std::log(lo) + cell * s;
      const int m = static_cast<int>(std::ceil(0.5 * cell / step));
      double best_tau = std::exp(centre), best_c = std::numeric_limits<double>::infinity(), best_scale = c_max;
      for (int i = -m; i <= m; ++i) {
        const double tau_star = std::exp(centre + i * step);
        const auto [c, scale] = profile_cost(tau_star);
        if (c < best_c) {
          best_c = c;
          best_tau = tau_star;
          best_scale = scale;
        }
      }
      starts.push_back({best_tau, nbar_guess, 0.1 / tau_max, best_scale > 0.0 ? best_scale : std::max(c_max, 1e-6)});
    }
  }

  RevivalFit best;
  double best_cost = std::numeric_limits<double>::infinity();
  Eigen::Vector4d best_q = Eigen::Vector4d::Zero();
  for (const auto& s : starts) {
    ++best.starts;
    const LmResult res = levenberg_marquardt(eval, detail::to_internal(s), {true, true, true, true}, opt.lm);
    if (!res.params.allFinite() || !std::isfinite(res.cost)) continue;
    if (res.converged) ++best.starts_converged;
    const double tau = std::exp(res.params(0));
    const bool better = res.cost < best_cost * (1.0 - 1e-12) ||
                        (res.cost <= best_cost * (1.0 + 1e-12) && tau < std::exp(best_q(0)));
    if (better) {
      best_cost = res.cost;
      best_q = res.params;
      best.converged = res.converged;
    }
  }
  if (!std::isfinite(best_cost)) throw NumericalError("fit_revival: no start produced a finite fit");

  const RevivalParams p = detail::from_internal(best_q);
  best.tau_star = p.tau_star;
  best.nbar = p.nbar;
  best.gamma = p.gamma;
  best.scale = p.scale;
  best.residual_norm = std::sqrt(best_cost);
  best.at_bound = p.nbar < 1e-6 || p.gamma * tau_max < 1e-9;

  // Covariance in natural parameters, via an equilibrated pseudo-inverse.
  Eigen::MatrixXd j(n, 4);
  for (std::size_t i = 0; i < n; ++i) j.row(i) = (sw[i] * revival_gradient(curve.taus[i], p)).transpose();
  Eigen::Vector4d colnorm;
  for (int k = 0; k < 4; ++k) colnorm(k) = j.col(k).norm() > 0.0 ? j.col(k).norm() : 1.0;
  const Eigen::MatrixXd js = j * colnorm.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(js.transpose() * js);
  const double lmax = es.eigenvalues().maxCoeff();
  Eigen::Matrix4d pinv = Eigen::Matrix4d::Zero();
  Eigen::Vector4d unresolved = Eigen::Vector4d::Zero();
  for (int k = 0; k < 4; ++k) {
    const double l = es.eigenvalues()(k);
    const Eigen::Vector4d v = es.eigenvectors().col(k);
    if (l > 1e-12 * lmax) {
      pinv += v * v.transpose() / l;
    } else {
      unresolved = unresolved.cwiseMax(v.cwiseAbs());
    }
  }
  const double dof = n > 4 ? static_cast<double>(n - 4) : 1.0;
  const double s2 = absolute ? 1.0 : best_cost / dof;
  Eigen::Vector4d err;
  for (int k = 0; k < 4; ++k) {
    err(k) = unresolved(k) > 1e-3 ? std::numeric_limits<double>::infinity()
                                  : std::sqrt(std::max(s2 * pinv(k, k), 0.0)) / colnorm(k);
  }
  best.param_errors = {err(0), err(1), err(2), err(3)};
  best.tau_star_identified = std::isfinite(err(0)) && err(0) < 0.5 * p.tau_star && p.nbar >= 1e-3;
  return best;
}

}  // namespace ionkerr
