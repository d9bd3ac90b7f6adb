#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ionkerr/errors.hpp"
#include "ionkerr/perturbation.hpp"
#include "ionkerr/trap_model.hpp"

namespace ionkerr {

/// Per-mode Fock cutoffs. n_max_ry == 0 freezes the y rocking mode in its
/// ground state: y^2 is replaced by its ground-state expectation x0^2.
struct Truncation {
  unsigned n_max_s = 12;
  unsigned n_max_rx = 12;
  unsigned n_max_ry = 0;
  std::size_t dimension_cap = 200000;

  std::size_t dimension() const {
    return std::size_t{n_max_s + 1} * (n_max_rx + 1) * (n_max_ry + 1);
  }

  static Truncation two_mode(unsigned n_max) { return {n_max, n_max, 0}; }
  static Truncation three_mode(unsigned n_max) { return {n_max, n_max, n_max}; }
};

inline void validate(const Truncation& t) {
  detail::require(t.n_max_s >= 2 && t.n_max_rx >= 2, "truncation: n_max_s and n_max_rx must be >= 2");
  if (t.dimension() > t.dimension_cap) {
    std::ostringstream os;
    os << "truncation: basis dimension " << t.dimension() << " exceeds cap " << t.dimension_cap;
    throw InvalidInput(os.str());
  }
}

/// Row-major product basis |n_s, n_rx, n_ry>.
class FockBasis {
 public:
  explicit FockBasis(const Truncation& t)
      : ns_(t.n_max_s + 1), nx_(t.n_max_rx + 1), ny_(t.n_max_ry + 1) {}

  std::size_t size() const { return ns_ * nx_ * ny_; }

  bool contains(const PhononState& s) const {
    return s.n_s < ns_ && s.n_rx < nx_ && s.n_ry < ny_;
  }

  std::size_t index(const PhononState& s) const { return (s.n_s * nx_ + s.n_rx) * ny_ + s.n_ry; }

  PhononState state(std::size_t i) const {
    const auto ny = static_cast<unsigned>(i % ny_);
    i /= ny_;
    const auto nx = static_cast<unsigned>(i % nx_);
    return {static_cast<unsigned>(i / nx_), nx, ny};
  }

 private:
  std::size_t ns_, nx_, ny_;
};

/// Relative-motion Hamiltonian in a truncated Fock basis. The matrix is in
/// units of hbar*omega_z with the harmonic zero-point energy removed; the
/// energy in joules of an eigenvalue lambda is (lambda + zero_point) * energy_unit.
struct OracleHamiltonian {
  Eigen::SparseMatrix<double> matrix;
  double energy_unit = 0.0;  // J
  double zero_point = 0.0;   // in energy_unit
  double omega_unit = 0.0;   // rad/s, energy_unit / hbar
  Truncation truncation;

  FockBasis basis() const { return FockBasis(truncation); }
  double to_joules(double reduced) const { return (reduced + zero_point) * energy_unit; }
};

namespace detail {

/// Projection of (a + a^dag) and (a + a^dag)^2 onto the first n + 1 Fock
/// states. The square is multiplied out in a larger space and cut afterwards,
/// so the top-left block carries exact matrix elements of the squared operator.
struct ModeOperators {
  Eigen::MatrixXd q, q2, number;
};

inline ModeOperators mode_operators(unsigned n_max) {
  const Eigen::Index big = n_max + 3;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(big, big);
  for (Eigen::Index n = 0; n + 1 < big; ++n) {
    q(n, n + 1) = std::sqrt(static_cast<double>(n + 1));
    q(n + 1, n) = q(n, n + 1);
  }
  const Eigen::MatrixXd q2 = q * q;
  const Eigen::Index d = n_max + 1;
  ModeOperators ops;
  ops.q = q.topLeftCorner(d, d);
  ops.q2 = q2.topLeftCorner(d, d);
  ops.number = Eigen::VectorXd::LinSpaced(d, 0.0, static_cast<double>(n_max)).asDiagonal();
  return ops;
}

struct SparseEntry {
  Eigen::Index i, j;
  double v;
};

inline std::vector<SparseEntry> nonzeros(const Eigen::MatrixXd& m) {
  std::vector<SparseEntry> out;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (m(i, j) != 0.0) out.push_back({i, j, m(i, j)});
  return out;
}

/// coef * (A_s (x) A_x (x) A_y), upper triangle only.
inline void add_product_term(std::vector<Eigen::Triplet<double>>& out, const FockBasis& basis,
                             double coef, const Eigen::MatrixXd& as, const Eigen::MatrixXd& ax,
                             const Eigen::MatrixXd& ay) {
  if (coef == 0.0) return;
  const auto ns = nonzeros(as), nx = nonzeros(ax), ny = nonzeros(ay);
  for (const auto& s : ns)
    for (const auto& x : nx)
      for (const auto& y : ny) {
        const auto r = basis.index({static_cast<unsigned>(s.i), static_cast<unsigned>(x.i),
                                    static_cast<unsigned>(y.i)});
        const auto c = basis.index({static_cast<unsigned>(s.j), static_cast<unsigned>(x.j),
                                    static_cast<unsigned>(y.j)});
        if (r <= c) out.emplace_back(static_cast<int>(r), static_cast<int>(c), coef * s.v * x.v * y.v);
      }
}

}  // namespace detail

/// H = sum_m hbar omega_m n_m + c3 u (x^2 + y^2) + c4 u^2 (x^2 + y^2),
/// with u = u0 (a + a^dag), x = x0 (b + b^dag), y = x0 (c + c^dag).
inline OracleHamiltonian build_hamiltonian(const TrapConfig& config, const ModeSpectrum& spectrum,
                                           const NonlinearCoefficients& coeffs, const Truncation& trunc,
                                           const PhysicalConstants& consts = codata2018_constants()) {
  validate(trunc);
  OracleHamiltonian h;
  h.truncation = trunc;
  h.omega_unit = config.omega_z;
  h.energy_unit = consts.reduced_planck * config.omega_z;
  h.zero_point = 0.5 * (spectrum.omega_s + 2.0 * spectrum.omega_r) / config.omega_z;

  const FockBasis basis(trunc);
  const auto s = detail::mode_operators(trunc.n_max_s);
  const auto x = detail::mode_operators(trunc.n_max_rx);
  const auto y = detail::mode_operators(trunc.n_max_ry);
  const Eigen::MatrixXd is = Eigen::MatrixXd::Identity(trunc.n_max_s + 1, trunc.n_max_s + 1);
  const Eigen::MatrixXd ix = Eigen::MatrixXd::Identity(trunc.n_max_rx + 1, trunc.n_max_rx + 1);
  const Eigen::MatrixXd iy = Eigen::MatrixXd::Identity(trunc.n_max_ry + 1, trunc.n_max_ry + 1);

  const double ws = spectrum.omega_s / config.omega_z;
  const double wr = spectrum.omega_r / config.omega_z;
  const double x0sq = spectrum.x0 * spectrum.x0;
  const double g3 = coeffs.c3 * spectrum.u0 * x0sq / h.energy_unit;
  const double g4 = coeffs.c4 * spectrum.u0 * spectrum.u0 * x0sq / h.energy_unit;

  std::vector<Eigen::Triplet<double>> upper;
  detail::add_product_term(upper, basis, ws, s.number, ix, iy);
  detail::add_product_term(upper, basis, wr, is, x.number, iy);
  if (trunc.n_max_ry > 0) detail::add_product_term(upper, basis, wr, is, ix, y.number);
  detail::add_product_term(upper, basis, g3, s.q, x.q2, iy);
  detail::add_product_term(upper, basis, g3, s.q, ix, y.q2);
  detail::add_product_term(upper, basis, g4, s.q2, x.q2, iy);
  detail::add_product_term(upper, basis, g4, s.q2, ix, y.q2);

  const auto n = static_cast<Eigen::Index>(basis.size());
  Eigen::SparseMatrix<double> u(n, n);
  u.setFromTriplets(upper.begin(), upper.end());
  h.matrix = u.selfadjointView<Eigen::Upper>();
  h.matrix.makeCompressed();
  return h;
}

struct EigenSolverOptions {
  Eigen::Index dense_limit = 4000;  // dense solve at or below this dimension
  Eigen::Index num_eigenpairs = 50;  // iterative path: lowest pairs wanted
  int max_iterations = 500;
  double tolerance = 1e-13;  // residual relative to the matrix scale
};

struct EigenPairs {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns
};

/// Lowest eigenpairs by shift-invert subspace iteration with Rayleigh-Ritz.
/// The block starts from the unit vectors with the smallest diagonal entries,
/// which are close to the true eigenvectors when the coupling is perturbative,
/// and the shift sits below the Gershgorin bound so H - sigma is positive definite.
inline EigenPairs lowest_eigenpairs_iterative(const Eigen::SparseMatrix<double>& h, Eigen::Index nev,
                                              const EigenSolverOptions& opt = {}) {
  const Eigen::Index n = h.rows();
  nev = std::min(nev, n);
  const Eigen::Index block = std::min(n, nev + std::max<Eigen::Index>(10, nev / 2));

  Eigen::VectorXd diag = h.diagonal();
  double lower = diag.minCoeff();
  double scale = 0.0;
  for (Eigen::Index k = 0; k < h.outerSize(); ++k) {
    double radius = 0.0;
    for (Eigen::SparseMatrix<double>::InnerIterator it(h, k); it; ++it) {
      if (it.row() != it.col()) radius += std::abs(it.value());
      scale = std::max(scale, std::abs(it.value()));
    }
    lower = std::min(lower, diag(k) - radius);
  }
  const double sigma = lower - 1.0;

  Eigen::SparseMatrix<double> shifted = h;
  for (Eigen::Index k = 0; k < n; ++k) shifted.coeffRef(k, k) -= sigma;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) throw NumericalError("shift-invert factorization failed");

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return diag(a) < diag(b); });
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, block);
  for (Eigen::Index k = 0; k < block; ++k) x(order[k], k) = 1.0;

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    Eigen::MatrixXd y = ldlt.solve(x);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, block);
    Eigen::MatrixXd hq = h * q;
    Eigen::MatrixXd t = q.transpose() * hq;
    t = 0.5 * (t + t.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz(t);
    x = q * ritz.eigenvectors();
    Eigen::MatrixXd hx = hq * ritz.eigenvectors();

    double worst = 0.0;
    for (Eigen::Index k = 0; k < nev; ++k)
      worst = std::max(worst, (hx.col(k) - ritz.eigenvalues()(k) * x.col(k)).norm());
    if (worst <= opt.tolerance * std::max(scale, 1.0)) {
      return EigenPairs{ritz.eigenvalues().head(nev), x.leftCols(nev)};
    }
  }
  throw NumericalError("subspace iteration did not converge");
}

inline EigenPairs solve_eigenpairs(const Eigen::SparseMatrix<double>& h, Eigen::Index nev,
                                   const EigenSolverOptions& opt = {}) {
  if (h.rows() <= opt.dense_limit) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(h), Eigen::ComputeEigenvectors);
    if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver failed");
    return EigenPairs{es.eigenvalues(), es.eigenvectors()};
  }
  return lowest_eigenpairs_iterative(h, nev, opt);
}

struct LabeledLevel {
  PhononState label;
  double energy = 0.0;   // J, including the harmonic zero point
  double reduced = 0.0;  // hbar*omega_z units, zero point removed
  double overlap = 0.0;  // weight of the bare state in the assigned eigenspace
  double residual = 0.0; // max ||Hv - lambda v|| / ||Hv|| over the assigned eigenspace
};

struct LabeledSpectrum {
  std::vector<LabeledLevel> levels;

  const LabeledLevel& at(const PhononState& s) const {
    for (const auto& l : levels)
      if (l.label == s) return l;
    throw InvalidInput("labeled spectrum has no level " + to_string(s));
  }
};

struct LabelingOptions {
  double overlap_floor = 0.5;
  double degeneracy_tolerance = 1e-9;  // hbar*omega_z units
  unsigned edge_margin = 4;            // wanted quantum numbers <= n_max - edge_margin
  EigenSolverOptions solver{};
};

/// Assigns each wanted bare state the eigenvalue whose eigenspace carries the
/// largest share of it. Exactly degenerate eigenvalues (the x/y pair) form one
/// eigenspace, so the assignment does not depend on how the solver rotates
/// vectors inside it.
inline LabeledSpectrum labeled_eigenspectrum(const OracleHamiltonian& h,
                                             const std::vector<PhononState>& wanted,
                                             const LabelingOptions& opt = {}) {
  const auto& t = h.truncation;
  const FockBasis basis(t);
  for (std::size_t i = 0; i < wanted.size(); ++i) {
    const auto& w = wanted[i];
    const bool inside = w.n_s + opt.edge_margin <= t.n_max_s && w.n_rx + opt.edge_margin <= t.n_max_rx &&
                        (t.n_max_ry == 0 ? w.n_ry == 0 : w.n_ry + opt.edge_margin <= t.n_max_ry);
    if (!inside) throw InvalidInput("labeled_eigenspectrum: state " + to_string(w) + " too close to the truncation edge");
    for (std::size_t j = 0; j < i; ++j)
      if (wanted[j] == w) throw InvalidInput("labeled_eigenspectrum: duplicate label " + to_string(w));
  }

  // Iterative path: make sure every wanted state's harmonic level is inside the block.
  Eigen::Index nev = opt.solver.num_eigenpairs;
  if (h.matrix.rows() > opt.solver.dense_limit) {
    double e_max = 0.0;
    for (const auto& w : wanted) e_max = std::max(e_max, h.matrix.coeff(basis.index(w), basis.index(w)));
    Eigen::Index below = 0;
    for (Eigen::Index k = 0; k < h.matrix.rows(); ++k)
      if (h.matrix.coeff(k, k) <= e_max + 0.5) ++below;
    nev = std::max(nev, below + 5);
  }
  const EigenPairs pairs = solve_eigenpairs(h.matrix, nev, opt.solver);
  const Eigen::Index m = pairs.values.size();

  std::vector<Eigen::Index> cluster_start{0};
  for (Eigen::Index k = 1; k < m; ++k)
    if (pairs.values(k) - pairs.values(k - 1) > opt.degeneracy_tolerance) cluster_start.push_back(k);
  cluster_start.push_back(m);
  const std::size_t nclusters = cluster_start.size() - 1;
  std::vector<int> cluster_uses(nclusters, 0);

  LabeledSpectrum out;
  for (const auto& w : wanted) {
    const auto b = static_cast<Eigen::Index>(basis.index(w));
    std::size_t best = 0;
    double best_weight = -1.0;
    for (std::size_t c = 0; c < nclusters; ++c) {
      double weight = 0.0;
      for (Eigen::Index k = cluster_start[c]; k < cluster_start[c + 1]; ++k)
        weight += pairs.vectors(b, k) * pairs.vectors(b, k);
      if (weight > best_weight) {
        best_weight = weight;
        best = c;
      }
    }
    if (best_weight <= opt.overlap_floor) {
      std::ostringstream os;
      os << "ambiguous eigenstate assignment for " << to_string(w) << ": best overlap " << best_weight;
      throw NumericalError(os.str());
    }
    const Eigen::Index lo = cluster_start[best], hi = cluster_start[best + 1];
    if (++cluster_uses[best] > hi - lo)
      throw NumericalError("ambiguous eigenstate assignment: eigenspace claimed twice, last by " + to_string(w));

    LabeledLevel level;
    level.label = w;
    level.overlap = best_weight;
    level.reduced = pairs.values(lo);
    level.energy = h.to_joules(level.reduced);
    for (Eigen::Index k = lo; k < hi; ++k) {
      const Eigen::VectorXd v = pairs.vectors.col(k);
      const Eigen::VectorXd hv = h.matrix * v;
      const double r = (hv - pairs.values(k) * v).norm();
      const double full = (hv + h.zero_point * v).norm();
      level.residual = std::max(level.residual, r / full);
    }
    out.levels.push_back(level);
  }
  return out;
}

/// chi from exact diagonalization:
/// ([E(s+1, x+1) - E(s, x+1)] - [E(s+1, x) - E(s, x)]) / hbar around `base`.
inline double chi_numeric(const TrapConfig& config, const ModeSpectrum& spectrum,
                          const NonlinearCoefficients& coeffs, const Truncation& trunc,
                          const PhononState& base = {},
                          const PhysicalConstants& consts = codata2018_constants(),
                          const LabelingOptions& opt = {}) {
  const auto h = build_hamiltonian(config, spectrum, coeffs, trunc, consts);
  const PhononState s00 = base;
  const PhononState s10{base.n_s + 1, base.n_rx, base.n_ry};
  const PhononState s01{base.n_s, base.n_rx + 1, base.n_ry};
  const PhononState s11{base.n_s + 1, base.n_rx + 1, base.n_ry};
  const auto spec = labeled_eigenspectrum(h, {s00, s10, s01, s11}, opt);
  const double d = (spec.at(s11).reduced - spec.at(s01).reduced) -
                   (spec.at(s10).reduced - spec.at(s00).reduced);
  return d * h.omega_unit;
}

inline double chi_numeric(const TrapConfig& config, const Truncation& trunc,
                          const PhysicalConstants& consts = codata2018_constants()) {
  const auto spectrum = normal_modes(config, consts);
  return chi_numeric(config, spectrum, nonlinear_coefficients(spectrum, config), trunc, {}, consts);
}

struct ConvergenceRow {
  unsigned n_max = 0;
  double value = 0.0;  // energy in J, or chi in rad/s
  double delta = 0.0;  // change against the previous row (0 for the first)
};

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
  double tolerance = 0.0;
  bool converged = false;  // last |delta| below tolerance
};

namespace detail {
inline void finish_report(ConvergenceReport& r) {
  for (std::size_t i = 1; i < r.rows.size(); ++i) r.rows[i].delta = r.rows[i].value - r.rows[i - 1].value;
  r.converged = r.rows.size() >= 2 && std::abs(r.rows.back().delta) < r.tolerance;
}

inline void require_increasing(const std::vector<unsigned>& n_max_list) {
  detail::require(!n_max_list.empty(), "convergence report: empty n_max list");
  for (std::size_t i = 1; i < n_max_list.size(); ++i)
    detail::require(n_max_list[i] > n_max_list[i - 1], "convergence report: n_max list must increase");
}
}  // namespace detail

/// Labeled energy of `state` against the cutoff (equal cutoff on every
/// included mode). Default tolerance is 1e-3 hbar |chi_closed_form|.
inline ConvergenceReport convergence_report(const TrapConfig& config, const PhononState& state,
                                            const std::vector<unsigned>& n_max_list,
                                            bool include_y_mode = false, double tolerance = -1.0,
                                            const PhysicalConstants& consts = codata2018_constants()) {
  detail::require_increasing(n_max_list);
  const auto spectrum = normal_modes(config, consts);
  const auto coeffs = nonlinear_coefficients(spectrum, config);
  ConvergenceReport report;
  report.tolerance = tolerance >= 0.0
                         ? tolerance
                         : 1e-3 * consts.reduced_planck * std::abs(chi_closed_form(config, spectrum, consts).chi);
  for (unsigned n : n_max_list) {
    const Truncation t = include_y_mode ? Truncation::three_mode(n) : Truncation::two_mode(n);
    const auto h = build_hamiltonian(config, spectrum, coeffs, t, consts);
    const auto spec = labeled_eigenspectrum(h, {state});
    report.rows.push_back({n, spec.levels.front().energy, 0.0});
  }
  detail::finish_report(report);
  return report;
}

/// chi_numeric against the cutoff; default tolerance 1e-3 |chi_closed_form|.
inline ConvergenceReport chi_convergence(const TrapConfig& config, const std::vector<unsigned>& n_max_list,
                                         double tolerance = -1.0,
                                         const PhysicalConstants& consts = codata2018_constants()) {
  detail::require_increasing(n_max_list);
  const auto spectrum = normal_modes(config, consts);
  ConvergenceReport report;
  report.tolerance = tolerance >= 0.0 ? tolerance : 1e-3 * std::abs(chi_closed_form(config, spectrum, consts).chi);
  for (unsigned n : n_max_list) report.rows.push_back({n, chi_numeric(config, Truncation::two_mode(n), consts), 0.0});
  detail::finish_report(report);
  return report;
}

}  // namespace ionkerr
