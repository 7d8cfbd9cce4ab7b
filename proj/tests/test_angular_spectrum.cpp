#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "almgren/angular_spectrum.hpp"

using namespace almgren;

namespace {

AngularSpectrum spectrum_of(const PotentialDescriptor& d, int J, int K) {
  return angular_spectrum(build_potential(d), J, K);
}

void expect_orthonormal(const AngularSpectrum& s, double tol) {
  const Eigen::MatrixXcd G = s.eigenvectors.adjoint() * s.eigenvectors;
  EXPECT_LT((G - Eigen::MatrixXcd::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff(), tol);
}

// < Y_{l,m} | cos(theta) Y_{l+1,m} > for real harmonics of equal order
double gaunt_cos(int l, int m) {
  const double lp = l + 1, mm = m;
  return std::sqrt((lp * lp - mm * mm) / ((2.0 * l + 1.0) * (2.0 * l + 3.0)));
}

}  // namespace

TEST(BuildPotential, AharonovBohmIsConstant) {
  const auto p = build_potential(PotentialDescriptor::aharonov_bohm(0.3, 0.0));
  EXPECT_EQ(p.dimension(), 2);
  AngularNode n;
  for (double t : {0.0, 1.0, 4.0}) {
    n.t = t;
    EXPECT_DOUBLE_EQ(p.alpha_at(n), 0.3);
    EXPECT_DOUBLE_EQ(p.a_at(n), 0.0);
  }
}

TEST(BuildPotential, DipoleIsPolarCosine) {
  const auto p = build_potential(PotentialDescriptor::dipole(1.0, {0.0, 0.0, 1.0}));
  EXPECT_EQ(p.dimension(), 3);
  const auto g = AngularGrid::sphere(5, 7);
  for (const auto& n : g.nodes()) EXPECT_NEAR(p.a_at(n), std::cos(n.theta), 1e-14);
  const auto q = build_potential(PotentialDescriptor::dipole(2.0, {1.0, 1.0, 0.0}));
  for (const auto& n : g.nodes())
    EXPECT_NEAR(q.a_at(n), 2.0 * (n.x[0] + n.x[1]) / std::sqrt(2.0), 1e-13);
}

TEST(BuildPotential, Errors) {
  PotentialDescriptor d = PotentialDescriptor::zero(3);
  d.magnetic_trig[0] = 0.2;
  try {
    build_potential(d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unsupported_configuration);
  }
  PotentialDescriptor c = PotentialDescriptor::zero(2);
  c.electric_trig[1] = 1.0;  // e^{it} alone is complex-valued
  try {
    build_potential(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_coefficients);
  }
  try {
    build_potential(PotentialDescriptor::dipole(1.0, {0.0, 0.0, 0.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_coefficients);
  }
}

TEST(Circulation, MeanOfTangentialComponent) {
  EXPECT_DOUBLE_EQ(circulation(build_potential(PotentialDescriptor::aharonov_bohm(0.3, 0.0))), 0.3);
  PotentialDescriptor d = PotentialDescriptor::zero(2);
  d.magnetic_trig = {{0, 0.3}, {1, 0.25}, {-1, 0.25}};
  EXPECT_DOUBLE_EQ(circulation(build_potential(d)), 0.3);
  const double phi = circulation(build_potential(PotentialDescriptor::aharonov_bohm(0.5, 0.0)));
  EXPECT_DOUBLE_EQ(phi, 0.5);
  EXPECT_DOUBLE_EQ(flux_distance(phi), 0.5);
  EXPECT_THROW(circulation(build_potential(PotentialDescriptor::dipole(1.0, {0, 0, 1}))), Error);
}

TEST(AssembleAngularMatrix, ZeroPotentialCircle) {
  const auto m = assemble_angular_matrix(build_potential(PotentialDescriptor::zero(2)), 2);
  Eigen::MatrixXcd expected = Eigen::MatrixXcd::Zero(5, 5);
  const double d[] = {4, 1, 0, 1, 4};
  for (int i = 0; i < 5; ++i) expected(i, i) = d[i];
  EXPECT_LT((m.matrix - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AssembleAngularMatrix, AharonovBohmDiagonal) {
  const double alpha = 0.3, a0 = 0.07;
  const auto m = assemble_angular_matrix(build_potential(PotentialDescriptor::aharonov_bohm(alpha, a0)), 4);
  for (int j = -4; j <= 4; ++j)
    for (int k = -4; k <= 4; ++k) {
      const cplx expected = (j == k) ? cplx((j + alpha) * (j + alpha) - a0) : cplx(0.0);
      EXPECT_LT(std::abs(m.matrix(k + 4, j + 4) - expected), 1e-14);
    }
}

TEST(AssembleAngularMatrix, DipoleMatchesGauntCoefficients) {
  const int J = 5;
  const auto m = assemble_angular_matrix(build_potential(PotentialDescriptor::dipole(1.0, {0, 0, 1})), J);
  EXPECT_LT((m.matrix - m.matrix.adjoint()).cwiseAbs().maxCoeff(), 1e-13);
  for (int l = 0; l <= 3; ++l)
    for (int l2 = 0; l2 <= 3; ++l2)
      for (int mm = -l; mm <= l; ++mm)
        for (int mm2 = -l2; mm2 <= l2; ++mm2) {
          double expected = (l == l2 && mm == mm2) ? l * (l + 1.0) : 0.0;
          if (mm == mm2 && l2 == l + 1) expected -= gaunt_cos(l, std::abs(mm));
          if (mm == mm2 && l == l2 + 1) expected -= gaunt_cos(l2, std::abs(mm));
          EXPECT_NEAR(m.matrix(sh_index(l, mm), sh_index(l2, mm2)).real(), expected, 1e-13)
              << l << "," << mm << " / " << l2 << "," << mm2;
        }
}

TEST(Eigendecompose, ZeroPotentialCircle) {
  const auto s = spectrum_of(PotentialDescriptor::zero(2), 8, 5);
  const double expected[] = {0, 1, 1, 4, 4};
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(s.eigenvalues[k], expected[k], 1e-13);
  ASSERT_EQ(s.blocks.size(), 3u);
  EXPECT_EQ(s.blocks[1].j0, 2);
  EXPECT_EQ(s.blocks[1].m, 2);
  expect_orthonormal(s, 1e-12);
}

TEST(Eigendecompose, AharonovBohmSimpleAndDouble) {
  const auto s = spectrum_of(PotentialDescriptor::aharonov_bohm(0.3, 0.0), 16, 4);
  const double expected[] = {0.09, 0.49, 1.69, 2.89};
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(s.eigenvalues[k], expected[k], 1e-13);
  EXPECT_EQ(s.blocks.size(), 4u);

  const auto h = spectrum_of(PotentialDescriptor::aharonov_bohm(0.5, 0.0), 16, 4);
  const double half[] = {0.25, 0.25, 2.25, 2.25};
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(h.eigenvalues[k], half[k], 1e-13);
  ASSERT_EQ(h.blocks.size(), 2u);
  EXPECT_EQ(h.blocks[0].m, 2);
  EXPECT_EQ(h.blocks[1].m, 2);
}

TEST(Eigendecompose, CanonicalPhaseAndBlockBasis) {
  const auto s = spectrum_of(PotentialDescriptor::zero(2), 4, 3);
  // degenerate pair {e^{-it}, e^{it}}: lowest coordinate index first
  EXPECT_NEAR(std::abs(s.eigenvectors(4 - 1, 1)), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(s.eigenvectors(4 + 1, 2)), 1.0, 1e-12);
  for (int k = 0; k < 3; ++k) {
    Eigen::Index i;
    s.eigenvectors.col(k).cwiseAbs().maxCoeff(&i);
    EXPECT_GT(s.eigenvectors(i, k).real(), 0.0);
    EXPECT_NEAR(s.eigenvectors(i, k).imag(), 0.0, 1e-15);
  }
}

TEST(Eigendecompose, OutOfRangeCount) {
  const auto m = assemble_angular_matrix(build_potential(PotentialDescriptor::zero(2)), 2);
  EXPECT_THROW(eigendecompose(m, 6), Error);
  EXPECT_THROW(eigendecompose(m, 0), Error);
}

TEST(Mu1, ClosedForms) {
  EXPECT_NEAR(mu1(spectrum_of(PotentialDescriptor::aharonov_bohm(0.3, 0.05), 16, 1)), 0.04, 1e-14);
  EXPECT_NEAR(mu1(spectrum_of(PotentialDescriptor::zero(3), 4, 1)), 0.0, 1e-14);
  const double d = flux_distance(0.3);
  EXPECT_NEAR(mu1(spectrum_of(PotentialDescriptor::aharonov_bohm(0.3, 0.0), 16, 1)), d * d, 1e-14);
}

TEST(Eigenspace, Blocks) {
  const auto ab = spectrum_of(PotentialDescriptor::aharonov_bohm(0.3, 0.0), 16, 4);
  auto e = eigenspace(ab, 1);
  EXPECT_EQ(e.j0, 1);
  EXPECT_EQ(e.m, 1);
  EXPECT_NEAR(std::abs(e.vectors(16, 0)), 1.0, 1e-13);  // the j = 0 direction

  const auto half = spectrum_of(PotentialDescriptor::aharonov_bohm(0.5, 0.0), 16, 4);
  e = eigenspace(half, 2);
  EXPECT_EQ(e.j0, 1);
  EXPECT_EQ(e.m, 2);
  EXPECT_LT((e.vectors.adjoint() * e.vectors - Eigen::MatrixXcd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-13);

  const auto zero = spectrum_of(PotentialDescriptor::zero(2), 8, 5);
  e = eigenspace(zero, 2);
  EXPECT_EQ(e.j0, 2);
  EXPECT_EQ(e.m, 2);
  const double span = std::norm(e.vectors(7, 0)) + std::norm(e.vectors(9, 0)) +
                      std::norm(e.vectors(7, 1)) + std::norm(e.vectors(9, 1));
  EXPECT_NEAR(span, 2.0, 1e-13);
  EXPECT_THROW(eigenspace(zero, 6), Error);
}

TEST(ClosedFormAbSpectrum, Examples) {
  auto v = closed_form_ab_spectrum(0.3, 0.0, 3);
  EXPECT_NEAR(v[0], 0.09, 1e-15);
  EXPECT_NEAR(v[1], 0.49, 1e-15);
  EXPECT_NEAR(v[2], 1.69, 1e-15);
  v = closed_form_ab_spectrum(0.0, 0.0, 3);
  EXPECT_EQ(v, (std::vector<double>{0.0, 1.0, 1.0}));
  v = closed_form_ab_spectrum(0.5, 0.1, 2);
  EXPECT_NEAR(v[0], 0.15, 1e-15);
  EXPECT_NEAR(v[1], 0.15, 1e-15);
}

TEST(AngularSpectrumProperties, OracleEquivalenceRandomAharonovBohm) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ua(-1.0, 1.0), ub(-0.2, 0.2);
  for (int trial = 0; trial < 20; ++trial) {
    const double alpha = ua(rng), a0 = ub(rng);
    const auto s = spectrum_of(PotentialDescriptor::aharonov_bohm(alpha, a0), 64, 10);
    const auto exact = closed_form_ab_spectrum(alpha, a0, 10);
    for (int k = 0; k < 10; ++k) EXPECT_NEAR(s.eigenvalues[k], exact[k], 1e-10);
    // shifting the flux by one leaves the spectrum unchanged
    const auto shifted = spectrum_of(PotentialDescriptor::aharonov_bohm(alpha + 1.0, a0), 64, 10);
    for (int k = 0; k < 10; ++k) EXPECT_NEAR(shifted.eigenvalues[k], s.eigenvalues[k], 1e-10);
  }
}

TEST(AngularSpectrumProperties, GaugeFieldMatchesFreeSpectrum) {
  // alpha = phi' with phi = 0.5 sin t has zero circulation
  PotentialDescriptor d = PotentialDescriptor::zero(2);
  d.magnetic_trig = {{1, 0.25}, {-1, 0.25}};
  d.electric_trig = {{0, 0.1}, {2, 0.05}, {-2, 0.05}};
  PotentialDescriptor e = d;
  e.magnetic_trig.clear();
  const auto with_a = spectrum_of(d, 64, 10);
  const auto without = spectrum_of(e, 64, 10);
  for (int k = 0; k < 10; ++k) EXPECT_NEAR(with_a.eigenvalues[k], without.eigenvalues[k], 1e-10);
}

TEST(AngularSpectrumProperties, NonconstantFluxMatchesConstantCirculation) {
  PotentialDescriptor d = PotentialDescriptor::zero(2);
  d.magnetic_trig = {{0, 0.3}, {1, cplx(0.2, 0.1)}, {-1, cplx(0.2, -0.1)}, {3, 0.05}, {-3, 0.05}};
  const auto s = spectrum_of(d, 64, 10);
  const auto exact = closed_form_ab_spectrum(0.3, 0.0, 10);
  for (int k = 0; k < 10; ++k) EXPECT_NEAR(s.eigenvalues[k], exact[k], 1e-10);
  const AngularMatrix m = assemble_angular_matrix(build_potential(d), 64);
  EXPECT_LT((m.matrix - m.matrix.adjoint()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(galerkin_residual(m, s), 1e-10);
  expect_orthonormal(s, 1e-10);
}

TEST(AngularSpectrumProperties, DiamagneticComparisonOfFirstEigenvalue) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int trial = 0; trial < 10; ++trial) {
    PotentialDescriptor d = PotentialDescriptor::zero(2);
    for (int n = 0; n <= 3; ++n) {
      const cplx c(u(rng), n == 0 ? 0.0 : u(rng));
      d.magnetic_trig[n] = c;
      if (n) d.magnetic_trig[-n] = std::conj(c);
      const cplx e(0.3 * u(rng), n == 0 ? 0.0 : 0.3 * u(rng));
      d.electric_trig[n] = e;
      if (n) d.electric_trig[-n] = std::conj(e);
    }
    PotentialDescriptor free = d;
    free.magnetic_trig.clear();
    EXPECT_GE(mu1(spectrum_of(d, 48, 1)), mu1(spectrum_of(free, 48, 1)) - 1e-10);
  }
}

TEST(AngularSpectrumProperties, SpectralConvergenceInTruncation) {
  PotentialDescriptor d = PotentialDescriptor::zero(2);
  d.magnetic_trig = {{0, 0.2}, {2, 0.1}, {-2, 0.1}};
  d.electric_trig = {{0, 0.3}, {1, 0.2}, {-1, 0.2}};
  const auto a = spectrum_of(d, 24, 10), b = spectrum_of(d, 48, 10);
  for (int k = 0; k < 10; ++k) EXPECT_NEAR(a.eigenvalues[k], b.eigenvalues[k], 1e-9);

  const auto p = PotentialDescriptor::dipole(1.0, {0, 0, 1});
  const auto c = spectrum_of(p, 10, 9), e = spectrum_of(p, 20, 9);
  for (int k = 0; k < 9; ++k) EXPECT_NEAR(c.eigenvalues[k], e.eigenvalues[k], 1e-9);
}

TEST(AngularSpectrumProperties, DipoleLowestEigenvalueBelowZero) {
  const auto s = spectrum_of(PotentialDescriptor::dipole(1.0, {0, 0, 1}), 12, 4);
  EXPECT_LT(s.eigenvalues[0], 0.0);
  // second-order perturbation estimate -lambda^2/6 is close for lambda = 1
  EXPECT_NEAR(s.eigenvalues[0], -1.0 / 6.0, 0.01);
  expect_orthonormal(s, 1e-12);
  // rotating the axis does not change the spectrum
  const auto r = spectrum_of(PotentialDescriptor::dipole(1.0, {1, 2, 2}), 12, 4);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(r.eigenvalues[k], s.eigenvalues[k], 1e-11);
}

TEST(AngularSpectrumJson, Fields) {
  const auto s = spectrum_of(PotentialDescriptor::aharonov_bohm(0.5, 0.0), 8, 4);
  const auto j = to_json(s);
  EXPECT_EQ(j["mu"].size(), 4u);
  EXPECT_EQ(j["blocks"][0][0], 1);
  EXPECT_EQ(j["blocks"][0][1], 2);
  EXPECT_EQ(j["truncation"], 8);
}
