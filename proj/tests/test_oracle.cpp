#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "ionkerr/oracle.hpp"

namespace ionkerr {
namespace {

const PhysicalConstants kConsts = codata2018_constants();

struct Point {
  TrapConfig config;
  ModeSpectrum spectrum;
  NonlinearCoefficients coeffs;
};

Point calcium(double fz_khz, double fperp_mhz = 4.0) {
  Point s;
  s.config = TrapConfig::from_amu(kCalcium40MassAmu, khz_to_rad_s(fz_khz), mhz_to_rad_s(fperp_mhz));
  s.spectrum = normal_modes(s.config, kConsts);
  s.coeffs = nonlinear_coefficients(s.spectrum, s.config);
  return s;
}

double closed(const Point& s) { return chi_closed_form(s.config, s.spectrum, kConsts).chi; }

TEST(Truncation, DimensionAndCap) {
  EXPECT_EQ(Truncation::two_mode(12).dimension(), 169u);
  EXPECT_EQ(Truncation::three_mode(4).dimension(), 125u);
  Truncation t = Truncation::three_mode(80);
  EXPECT_THROW(validate(t), InvalidInput);
  EXPECT_THROW(validate(Truncation{1, 5, 0}), InvalidInput);
  const auto s = calcium(1716.0);
  EXPECT_THROW(build_hamiltonian(s.config, s.spectrum, s.coeffs, t, kConsts), InvalidInput);
}

TEST(FockBasis, IndexRoundTrip) {
  const FockBasis b(Truncation{3, 4, 2});
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(b.index(b.state(i)), i);
  EXPECT_TRUE(b.contains({3, 4, 2}));
  EXPECT_FALSE(b.contains({0, 5, 0}));
}

TEST(BuildHamiltonian, ZeroCouplingIsDiagonalHarmonic) {
  const auto s = calcium(1716.0);
  const Truncation t{6, 6, 3};
  const auto h = build_hamiltonian(s.config, s.spectrum, {0.0, 0.0}, t, kConsts);
  const FockBasis b(t);
  for (int k = 0; k < h.matrix.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(h.matrix, k); it; ++it) EXPECT_EQ(it.row(), it.col());
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto st = b.state(i);
    const double e = (st.n_s * s.spectrum.omega_s + (st.n_rx + st.n_ry) * s.spectrum.omega_r) / s.config.omega_z;
    EXPECT_NEAR(h.matrix.coeff(i, i), e, 1e-14 * (1.0 + e));
  }
}

TEST(BuildHamiltonian, BitExactSymmetry) {
  const auto s = calcium(1716.0);
  for (const Truncation t : {Truncation::two_mode(10), Truncation::three_mode(5)}) {
    const auto h = build_hamiltonian(s.config, s.spectrum, s.coeffs, t, kConsts);
    const Eigen::MatrixXd d(h.matrix);
    EXPECT_EQ((d - d.transpose()).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(BuildHamiltonian, CubicMatrixElementFromLadderAlgebra) {
  const auto s = calcium(1716.0);
  const Truncation t = Truncation::three_mode(4);
  const auto h = build_hamiltonian(s.config, s.spectrum, s.coeffs, t, kConsts);
  const FockBasis b(t);
  // <1,0,0| c3 u (x^2 + y^2) |0,0,0> = c3 u0 (x0^2 + x0^2)
  const double expected = s.coeffs.c3 * s.spectrum.u0 * 2.0 * s.spectrum.x0 * s.spectrum.x0;
  EXPECT_NEAR(h.matrix.coeff(b.index({1, 0, 0}), b.index({0, 0, 0})) * h.energy_unit, expected,
              1e-12 * std::abs(expected));
  // <1,2,0| c3 u x^2 |0,0,0> = c3 u0 x0^2 sqrt(2)
  const double e2 = s.coeffs.c3 * s.spectrum.u0 * s.spectrum.x0 * s.spectrum.x0 * std::sqrt(2.0);
  EXPECT_NEAR(h.matrix.coeff(b.index({1, 2, 0}), b.index({0, 0, 0})) * h.energy_unit, e2, 1e-12 * std::abs(e2));
}

TEST(BuildHamiltonian, RespectsLadderSelectionRules) {
  const auto s = calcium(1716.0);
  const Truncation t = Truncation::three_mode(5);
  const auto h = build_hamiltonian(s.config, s.spectrum, s.coeffs, t, kConsts);
  const FockBasis b(t);
  for (int k = 0; k < h.matrix.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(h.matrix, k); it; ++it) {
      const auto r = b.state(it.row()), c = b.state(it.col());
      const int ds = std::abs(int(r.n_s) - int(c.n_s));
      const int dx = std::abs(int(r.n_rx) - int(c.n_rx));
      const int dy = std::abs(int(r.n_ry) - int(c.n_ry));
      EXPECT_LE(ds, 2);
      EXPECT_TRUE(dx == 0 || dy == 0);
      EXPECT_EQ(dx % 2, 0);
      EXPECT_EQ(dy % 2, 0);
    }
}

TEST(LabeledEigenspectrum, ZeroCouplingIsExactlyHarmonic) {
  const auto s = calcium(1716.0);
  const auto h = build_hamiltonian(s.config, s.spectrum, {0.0, 0.0}, Truncation::two_mode(8), kConsts);
  const auto spec = labeled_eigenspectrum(h, {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {2, 3, 0}});
  for (const auto& l : spec.levels) {
    EXPECT_DOUBLE_EQ(l.overlap, 1.0);
    const double e = kConsts.reduced_planck * (s.spectrum.omega_s * (l.label.n_s + 0.5) +
                                                s.spectrum.omega_r * (l.label.n_rx + 1.0));
    EXPECT_NEAR(l.energy / e, 1.0, 1e-13);
  }
  EXPECT_EQ(chi_numeric(s.config, s.spectrum, {0.0, 0.0}, Truncation::two_mode(8), {}, kConsts), 0.0);
}

TEST(LabeledEigenspectrum, GroundStateOverlapAndResidual) {
  const auto s = calcium(1716.0);
  const auto h = build_hamiltonian(s.config, s.spectrum, s.coeffs, Truncation::two_mode(12), kConsts);
  const auto spec = labeled_eigenspectrum(h, {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}});
  EXPECT_GT(spec.at({0, 0, 0}).overlap, 0.999);
  for (const auto& l : spec.levels) EXPECT_LE(l.residual, 1e-10);
}

TEST(LabeledEigenspectrum, RejectsStatesNearTheEdgeAndDuplicates) {
  const auto s = calcium(1716.0);
  const auto h = build_hamiltonian(s.config, s.spectrum, s.coeffs, Truncation::two_mode(6), kConsts);
  EXPECT_THROW(labeled_eigenspectrum(h, {{3, 0, 0}}), InvalidInput);
  EXPECT_THROW(labeled_eigenspectrum(h, {{0, 0, 1}}), InvalidInput);
  EXPECT_THROW(labeled_eigenspectrum(h, {{1, 0, 0}, {1, 0, 0}}), InvalidInput);
  EXPECT_THROW(LabeledSpectrum{}.at({0, 0, 0}), InvalidInput);
}

TEST(LabeledEigenspectrum, AmbiguousAssignmentIsAnError) {
  // On 2 omega_r = omega_s the states |3,0>, |2,2>, |1,4>, |0,6> form a resonant chain.
  auto s = calcium(1716.0);
  s.spectrum.omega_r = 0.5 * s.spectrum.omega_s;
  const auto h = build_hamiltonian(s.config, s.spectrum, s.coeffs, Truncation::two_mode(10), kConsts);
  EXPECT_THROW(labeled_eigenspectrum(h, {{2, 2, 0}}), NumericalError);
  try {
    labeled_eigenspectrum(h, {{0, 0, 0}, {2, 2, 0}});
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("(2,2,0)"), std::string::npos);
  }
}

TEST(LabeledEigenspectrum, VariationalUnderRefinement) {
  const auto s = calcium(1716.0);
  for (const PhononState st : {PhononState{0, 0, 0}, PhononState{1, 1, 0}}) {
    double prev = 0.0;
    for (unsigned n = 6; n <= 18; n += 2) {
      const auto h = build_hamiltonian(s.config, s.spectrum, s.coeffs, Truncation::two_mode(n), kConsts);
      const double e = labeled_eigenspectrum(h, {st}).levels.front().reduced;
      if (n > 6) {
        EXPECT_LE(e, prev + 1e-13);  // dense solver precision, ~eps ||H||
      }
      prev = e;
    }
  }
}

TEST(ChiNumeric, AgreesWithClosedFormAtOperatingPoint) {
  const auto s = calcium(1716.0);
  const double num = chi_numeric(s.config, s.spectrum, s.coeffs, Truncation::two_mode(12), {}, kConsts);
  const double ref = closed(s);
  EXPECT_LT(num, 0.0);
  EXPECT_NEAR(num / ref, 1.0, 0.05);
}

TEST(ChiNumeric, AgreesAcrossTheAxialScan) {
  for (double fz = 860.0; fz <= 1720.0; fz += 215.0) {
    const auto s = calcium(fz);
    const double num = chi_numeric(s.config, Truncation::two_mode(14), kConsts);
    EXPECT_NEAR(num / closed(s), 1.0, 0.10) << fz;
  }
}

TEST(ChiNumeric, StrongerNonlinearityWorsensAgreementMonotonically) {
  // Shrinking z0 by a factor k scales c3 by k and c4 by k^2 at fixed mode frequencies.
  const auto s = calcium(1716.0);
  double prev_chi = 0.0, prev_err = -1.0;
  for (double k : {1.0, 2.0, 4.0, 8.0}) {
    Point t = s;
    t.spectrum.z0 = s.spectrum.z0 / k;
    t.coeffs = nonlinear_coefficients(t.spectrum, t.config);
    const double num = chi_numeric(t.config, t.spectrum, t.coeffs, Truncation::two_mode(16), {}, kConsts);
    const double pt = chi_perturbative(t.spectrum, t.coeffs, kConsts);
    const double err = std::abs(num - pt) / std::abs(pt);
    EXPECT_GT(std::abs(num), std::abs(prev_chi));
    EXPECT_GT(err, prev_err);
    prev_chi = num;
    prev_err = err;
  }
}

TEST(ChiNumeric, BaseStateIndependence) {
  const auto s = calcium(1716.0);
  const Truncation t = Truncation::two_mode(16);
  const double a = chi_numeric(s.config, s.spectrum, s.coeffs, t, {0, 0, 0}, kConsts);
  const double b = chi_numeric(s.config, s.spectrum, s.coeffs, t, {1, 1, 0}, kConsts);
  EXPECT_LE(std::abs(a - b), 0.10 * std::abs(a));
}

TEST(ChiNumeric, RockingModesAreSymmetricInThreeModeBasis) {
  const auto s = calcium(1716.0);
  const auto h = build_hamiltonian(s.config, s.spectrum, s.coeffs, Truncation::three_mode(8), kConsts);
  const auto spec = labeled_eigenspectrum(h, {{0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, 0, 1}});
  EXPECT_NEAR(spec.at({0, 1, 0}).energy / spec.at({0, 0, 1}).energy, 1.0, 1e-12);
  EXPECT_NEAR(spec.at({1, 1, 0}).energy / spec.at({1, 0, 1}).energy, 1.0, 1e-12);
}

TEST(ChiNumeric, ThreeModeMatchesTwoMode) {
  const auto s = calcium(1716.0);
  const double two = chi_numeric(s.config, s.spectrum, s.coeffs, Truncation::two_mode(8), {}, kConsts);
  const double three = chi_numeric(s.config, s.spectrum, s.coeffs, Truncation::three_mode(8), {}, kConsts);
  EXPECT_NEAR(three / two, 1.0, 0.02);
}

TEST(Eigensolver, IterativePathMatchesDense) {
  const auto s = calcium(1716.0);
  const auto h = build_hamiltonian(s.config, s.spectrum, s.coeffs, Truncation{14, 14, 5}, kConsts);
  const std::vector<PhononState> wanted{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {0, 0, 1}};
  LabelingOptions iterative;
  iterative.solver.dense_limit = 100;
  const auto a = labeled_eigenspectrum(h, wanted);
  const auto b = labeled_eigenspectrum(h, wanted, iterative);
  for (const auto& w : wanted) {
    EXPECT_NEAR(a.at(w).reduced, b.at(w).reduced, 1e-11) << to_string(w);
    EXPECT_LE(b.at(w).residual, 1e-10);
  }
}

TEST(ConvergenceReport, ZeroCouplingDeltasVanish) {
  // A vanishing cubic/quartic coupling is emulated through an explicit report over a decoupled Hamiltonian.
  const auto s = calcium(1716.0);
  for (unsigned n : {6u, 8u, 10u}) {
    const auto h = build_hamiltonian(s.config, s.spectrum, {0.0, 0.0}, Truncation::two_mode(n), kConsts);
    EXPECT_EQ(labeled_eigenspectrum(h, {{1, 1, 0}}).levels.front().reduced,
              (s.spectrum.omega_s + s.spectrum.omega_r) / s.config.omega_z);
  }
}

TEST(ConvergenceReport, OperatingPointConverges) {
  const auto s = calcium(1716.0);
  const auto r = convergence_report(s.config, {1, 1, 0}, {6, 8, 10, 12, 14, 16}, false, -1.0, kConsts);
  ASSERT_EQ(r.rows.size(), 6u);
  EXPECT_EQ(r.rows.front().delta, 0.0);
  EXPECT_TRUE(r.converged);
  for (std::size_t i = 3; i < r.rows.size(); ++i) EXPECT_LE(std::abs(r.rows[i].delta), std::abs(r.rows[i - 1].delta) + 1e-40);
  const auto c = chi_convergence(s.config, {10, 12, 14}, -1.0, kConsts);
  EXPECT_TRUE(c.converged);
  EXPECT_LT(std::abs(c.rows.back().delta), 1e-3 * std::abs(closed(s)));
  EXPECT_THROW(convergence_report(s.config, {0, 0, 0}, {8, 6}), InvalidInput);
}

}  // namespace
}  // namespace ionkerr
