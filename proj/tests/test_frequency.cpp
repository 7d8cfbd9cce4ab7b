#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "almgren/frequency.hpp"

using namespace almgren;

namespace {

constexpr double kPi = std::numbers::pi;

// phi = A sum_n a_n r^{g + n eps} solves the radial equation with h = c r^{-2+eps}
struct SeriesOracle {
  std::vector<cplx> a;
  double g, eps;
  cplx A = 1.0;
  SeriesOracle(int N, double gamma, cplx c, double e, double R, cplx boundary) : g(gamma), eps(e) {
    a.push_back(1.0);
    for (int n = 1; n < 60; ++n) a.push_back(-c * a.back() / (n * e * (2 * gamma + N - 2 + n * e)));
    A = boundary / raw(R, false);
  }
  cplx raw(double r, bool derivative) const {
    cplx s = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) {
      const double p = g + n * eps;
      s += a[n] * (derivative ? p * std::pow(r, p - 1) : std::pow(r, p));
    }
    return s;
  }
  cplx value(double r) const { return A * raw(r, false); }
  cplx slope(double r) const { return A * raw(r, true); }
};

struct Problem {
  AngularPotential pot;
  AngularSpectrum spec;
};

Problem ab(double alpha, int J = 16, int K = 8) {
  auto pot = build_potential(PotentialDescriptor::aharonov_bohm(alpha, 0.0));
  return {pot, angular_spectrum(pot, J, K)};
}

Problem dipole(double lambda, int J = 10, int K = 6) {
  auto pot = build_potential(PotentialDescriptor::dipole(lambda, {0, 0, 1}));
  return {pot, angular_spectrum(pot, J, K)};
}

Problem zero(int N, int J, int K) {
  auto pot = build_potential(PotentialDescriptor::zero(N));
  return {pot, angular_spectrum(pot, J, K)};
}

FieldSolution solve(const Problem& s, std::vector<BoundaryDatum> b, PerturbationSpec h = {},
                    LogGrid grid = LogGrid(1e-6, 1.0, 400), Side side = Side::interior) {
  FieldProblem p;
  p.side = side;
  p.grid = grid;
  p.angular = AngularGrid::for_truncation(s.spec.dimension, s.spec.truncation);
  p.modes = s.spec.count();
  p.boundary = std::move(b);
  p.h = h;
  return solve_field(s.spec, p);
}

PerturbationSpec perturbation(double c, double eps, Side side = Side::interior) {
  PerturbationSpec h;
  h.c = c;
  h.eps = eps;
  h.side = side;
  return h;
}

double max_deviation(const std::vector<double>& v, double target) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x - target));
  return m;
}

}  // namespace

TEST(Height, NormalizedModeAndConstantField) {
  const auto s = ab(0.3);
  const auto sol = solve(s, {{1, 1.0}});
  for (double r : {1e-5, 1e-3, 0.2, 1.0}) {
    EXPECT_NEAR(height(sol.field, r), std::pow(r, 0.6), 1e-10 * std::pow(r, 0.6));
    EXPECT_NEAR(height(sol.modal, r), std::pow(r, 0.6), 1e-10 * std::pow(r, 0.6));
  }
  FieldSample f = sol.field;
  f.u.setOnes();
  EXPECT_NEAR(height(f, 0.01), 2 * kPi, 1e-12);
  EXPECT_THROW(height(f, 2.0), Error);
}

TEST(Height, TwoModesByParsevalAndQuadrature) {
  const auto s = ab(0.3);
  const auto sol = solve(s, {{1, 1.0}, {2, 1.0}});
  ASSERT_NEAR(s.spec.eigenvalues[1], 0.49, 1e-12);
  for (double r : {1e-4, 0.05, 0.7}) {
    const double expected = std::pow(r, 0.6) + std::pow(r, 1.4);
    EXPECT_NEAR(height(sol.field, r), expected, 1e-10 * expected);
    EXPECT_NEAR(height(sol.modal, r), expected, 1e-10 * expected);
  }
}

TEST(Dirichlet, ConstantFieldHasNoEnergy) {
  const auto s = zero(2, 8, 3);
  FieldSample f;
  f.dimension = 2;
  f.radial = LogGrid(1e-4, 1.0, 100);
  f.angular = AngularGrid::for_truncation(2, 8);
  f.u = Eigen::MatrixXcd::Ones(f.radial.size(), f.angular.size());
  f.du_dr = Eigen::MatrixXcd::Zero(f.radial.size(), f.angular.size());
  for (auto& g : f.grad_s) g = f.du_dr;
  f.has_gradient = true;
  const auto p = frequency_profile(f, s.pot, no_perturbation());
  EXPECT_EQ(max_deviation(p.D, 0.0), 0.0);
  EXPECT_NEAR(p.H[10], 2 * kPi, 1e-12);
  EXPECT_EQ(pohozaev_terms(p, 0.5).residual(), 0.0);
  EXPECT_EQ(dirichlet(f, s.pot, no_perturbation(), 0.5), 0.0);
}

TEST(Dirichlet, PerturbedModeMatchesModalClosedForm) {
  // for a single mode D(r) = r phi(r) phi'(r), by integration by parts.
  // The absolute error is the power-law closure remainder, second order in
  // c r_min^eps, so the relative error is largest at r_min.
  const auto s = ab(0.3);
  const auto h = perturbation(0.05, 0.5);
  const auto sol = solve(s, {{1, 1.0}}, h);
  const SeriesOracle o(2, 0.3, 0.05, 0.5, 1.0, 1.0);
  const auto p = frequency_profile(sol.field, s.pot, h);
  double worst_abs = 0.0, worst_rel = 0.0;
  for (int i = 0; i < p.grid.size(); i += 7) {
    const double r = p.grid.r(i);
    const double exact = (r * o.value(r) * std::conj(o.slope(r))).real();
    worst_abs = std::max(worst_abs, std::abs(p.D[i] - exact));
    worst_rel = std::max(worst_rel, std::abs(p.D[i] - exact) / std::abs(exact));
  }
  EXPECT_LT(worst_abs, 1e-8);
  EXPECT_LT(worst_rel, 1e-7);
}

TEST(FrequencyTrace, ConstantOnHomogeneousModes) {
  struct Case {
    Problem s;
    int k0;
  };
  std::vector<Case> cases = {{zero(3, 4, 4), 1}, {zero(3, 4, 4), 2}, {ab(0.3), 1},
                             {dipole(1.0), 1},   {dipole(1.0), 2}};
  for (const auto& c : cases) {
    const auto ex = characteristic_exponents(c.s.spec.dimension, c.s.spec.eigenvalues[c.k0 - 1]);
    const auto sol = solve(c.s, {{c.k0, 1.0}});
    const auto tr = frequency_trace(sol.field, c.s.pot, no_perturbation());
    EXPECT_LT(max_deviation(tr.N, ex.sigma_plus), 1e-10) << "k0 " << c.k0;
    EXPECT_NEAR(tr.fit.gamma_hat, ex.sigma_plus, 1e-10);
    EXPECT_FALSE(tr.fit.eps_identifiable);
    EXPECT_LT(tr.drift, 1e-8);
    EXPECT_TRUE(satisfies_lower_bound(tr, c.s.spec.dimension));
  }
}

TEST(FrequencyTrace, StorageOrderAndExports) {
  const auto s = ab(0.3);
  const auto sol = solve(s, {{1, 1.0}}, {}, LogGrid(1e-3, 1.0, 60));
  const auto tr = frequency_trace(sol.field, s.pot, no_perturbation());
  ASSERT_EQ(tr.r.size(), 61u);
  EXPECT_DOUBLE_EQ(tr.r.front(), 1.0);
  EXPECT_GT(tr.r[0], tr.r[1]);
  std::ostringstream csv;
  write_csv(csv, tr);
  EXPECT_EQ(csv.str().substr(0, 8), "r,H,D,N\n");
  const auto j = fit_json(tr);
  EXPECT_NEAR(j["gamma_hat"].get<double>(), 0.3, 1e-10);
  EXPECT_TRUE(j["eps_hat"].is_null());
  EXPECT_TRUE(j.contains("drift"));
}

TEST(FrequencyTrace, PerturbedLimitAndRate) {
  const auto s = ab(0.3);
  for (double eps : {0.5, 1.0}) {
    const auto h = perturbation(0.05, eps);
    const auto sol = solve(s, {{1, 1.0}}, h);
    const auto tr = frequency_trace(sol.field, s.pot, h);
    EXPECT_NEAR(tr.fit.gamma_hat, 0.3, 1e-6) << "eps " << eps;
    ASSERT_TRUE(tr.fit.eps_identifiable);
    EXPECT_NEAR(tr.fit.eps_hat, eps, 0.1 * eps);
    // |N - gamma| decreases towards the origin
    const auto& N = tr.N;
    for (std::size_t i = 1; i < N.size(); i += 20) EXPECT_LE(std::abs(N[i] - 0.3), std::abs(N[i - 1] - 0.3) + 1e-12);
    EXPECT_GE(tr.drift, 0.0);
    EXPECT_TRUE(std::isfinite(tr.drift));
  }
}

TEST(FrequencyTrace, DegenerateAndMissingGradient) {
  const auto s = ab(0.3);
  auto f = solve(s, {{1, 1.0}}, {}, LogGrid(1e-3, 1.0, 60)).field;
  FieldSample bare = f;
  bare.has_gradient = false;
  try {
    frequency_trace(bare, s.pot, no_perturbation());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::missing_gradient);
  }
  f.u.setZero();
  f.du_dr.setZero();
  for (auto& g : f.grad_s) g.setZero();
  try {
    frequency_trace(f, s.pot, no_perturbation());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate_solution);
  }
}

TEST(HeightDerivative, HomogeneousAndMultiMode) {
  const auto s = ab(0.3);
  EXPECT_LT(check_height_derivative(frequency_profile(solve(s, {{1, 1.0}}).field, s.pot, {})), 1e-8);
  const auto multi = solve(s, {{1, 1.0}, {2, 0.5}, {3, cplx(0.0, 0.2)}});
  EXPECT_LT(check_height_derivative(frequency_profile(multi.field, s.pot, {})), 1e-6);
  // zero amplitudes on the other modes leave the identity intact
  const auto some = solve(s, {{2, 1.0}, {5, 0.0}});
  EXPECT_LT(check_height_derivative(frequency_profile(some.field, s.pot, {})), 1e-8);
  const auto h = perturbation(0.05, 0.5);
  const auto pert = solve(s, {{1, 1.0}, {3, 0.3}}, h);
  EXPECT_LT(check_height_derivative(frequency_profile(pert.field, s.pot, h)), 1e-6);
}

TEST(Pohozaev, HomogeneousPerturbedAndNoisy) {
  const auto s = ab(0.3);
  const auto hom = solve(s, {{1, 1.0}});
  for (double r : {1e-4, 0.01, 0.5}) EXPECT_LT(pohozaev_residual(hom.field, s.pot, {}, r), 1e-8);
  const auto h = perturbation(0.05, 0.5);
  const auto pert = solve(s, {{1, 1.0}, {2, 0.4}}, h);
  for (double r : {1e-4, 0.01, 0.5}) EXPECT_LT(pohozaev_residual(pert.field, s.pot, h, r), 1e-6);
  const auto noisy = with_multiplicative_noise(pert.field, 0.01, 42);
  EXPECT_GT(pohozaev_residual(noisy, s.pot, h, 0.5), 1e-2);
}

TEST(Pohozaev, DipoleInThreeDimensions) {
  const auto s = dipole(1.0);
  const auto sol = solve(s, {{1, 1.0}, {2, 0.3}});
  for (double r : {1e-3, 0.3}) EXPECT_LT(pohozaev_residual(sol.field, s.pot, {}, r), 1e-8);
}

TEST(HeightScaling, LimitsAndSlopes) {
  const auto s = ab(0.3);
  const auto p = frequency_profile(solve(s, {{1, 1.0}}).field, s.pot, {});
  auto hs = height_scaling_limit(p, 0.3);
  EXPECT_NEAR(hs.limit, 1.0, 1e-10);
  EXPECT_LT(hs.drift, 1e-10);
  EXPECT_NEAR(hs.slope, 0.6, 1e-10);

  const auto h = perturbation(0.05, 0.5);
  const auto pp = frequency_profile(solve(s, {{1, 1.0}}, h).field, s.pot, h);
  hs = height_scaling_limit(pp, 0.3);
  EXPECT_GT(hs.limit, 0.0);
  EXPECT_LT(hs.drift, 0.01);
  EXPECT_NEAR(hs.slope, 0.6, 1e-3);

  // two-dimensional eigenspace at half flux, mu = 1/4
  const auto z = ab(0.5);
  ASSERT_NEAR(z.spec.eigenvalues[1], 0.25, 1e-12);
  const auto pz = frequency_profile(solve(z, {{1, 0.6}, {2, 0.8}}).field, z.pot, {});
  hs = height_scaling_limit(pz, 0.5);
  EXPECT_NEAR(hs.limit, 1.0, 1e-10);
}

TEST(ExteriorTrace, HomogeneousDecayRate) {
  const auto s = ab(0.3);
  const LogGrid g(1.0, 1e6, 400);
  const auto sol = solve(s, {{2, 1.0}}, {}, g, Side::exterior);
  const auto tr = exterior_frequency_trace(sol.field, s.pot, no_perturbation());
  EXPECT_LT(tr.r[0], tr.r[1]);
  EXPECT_LT(max_deviation(tr.N, 0.7), 1e-10);
  EXPECT_NEAR(tr.fit.gamma_hat, 0.7, 1e-10);
  const auto p = frequency_profile(sol.field, s.pot, {});
  EXPECT_LT(check_height_derivative(p), 1e-8);
  const auto hs = height_scaling_limit(p, 0.7);
  EXPECT_NEAR(hs.slope, -1.4, 1e-10);
  EXPECT_NEAR(hs.limit, 1.0, 1e-10);
  EXPECT_THROW(exterior_frequency_trace(solve(s, {{1, 1.0}}).field, s.pot, {}), Error);
}

TEST(ExteriorTrace, PerturbedLimit) {
  const auto s = dipole(1.0);
  const LogGrid g(1.0, 1e6, 400);
  const auto h = perturbation(0.05, 1.0, Side::exterior);
  const auto sol = solve(s, {{1, 1.0}}, h, g, Side::exterior);
  const auto tr = exterior_frequency_trace(sol.field, s.pot, h);
  const double mu = s.spec.eigenvalues[0];
  EXPECT_NEAR(tr.fit.gamma_hat, 0.5 + std::sqrt(0.25 + mu), 1e-6);
  EXPECT_NEAR(tr.fit.eps_hat, 1.0, 0.1);
}

TEST(PowerFit, RecoversSyntheticParameters) {
  std::vector<double> t, y;
  for (int i = 0; i < 50; ++i) {
    t.push_back(1e-6 * std::pow(10.0, i / 49.0));
    y.push_back(0.25 - 3.0 * std::pow(t.back(), 0.7));
  }
  const auto fit = fit_power_approach(t, y);
  EXPECT_NEAR(fit.gamma_hat, 0.25, 1e-10);
  EXPECT_NEAR(fit.eps_hat, 0.7, 1e-5);
  EXPECT_NEAR(fit.C, -3.0, 1e-3);
}
