#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>

#include "almgren/inequalities.hpp"

using namespace almgren;

namespace {

constexpr double kPi = std::numbers::pi;

PotentialDescriptor fourier(std::map<int, cplx> magnetic, std::map<int, cplx> electric = {}) {
  PotentialDescriptor d;
  d.kind = PotentialKind::fourier;
  d.dimension = 2;
  d.magnetic_trig = std::move(magnetic);
  d.electric_trig = std::move(electric);
  return d;
}

// f(r) Y with Y = e^{ijt}/sqrt(2 pi) on the circle
TestFunction circular_mode(const RadialProfile& f, int j, int J = 12) {
  const AngularGrid g = AngularGrid::for_truncation(2, J);
  Eigen::VectorXcd Y(g.size());
  std::array<Eigen::VectorXcd, 3> dY;
  for (auto& d : dY) d.resize(g.size());
  for (int n = 0; n < g.size(); ++n) {
    const auto& node = g.node(n);
    Y[n] = std::polar(1.0 / std::sqrt(2 * kPi), j * node.t);
    for (int c = 0; c < 3; ++c) dY[c][n] = cplx(0.0, j) * Y[n] * node.e1[c];
  }
  return separable_test_function(2, g, f, Y, dY);
}

TestFunction constant_angular(int N, const RadialProfile& f, double value = 1.0) {
  const AngularGrid g = AngularGrid::for_truncation(N, 4);
  Eigen::VectorXcd Y = Eigen::VectorXcd::Constant(g.size(), value);
  std::array<Eigen::VectorXcd, 3> dY;
  for (auto& d : dY) d = Eigen::VectorXcd::Zero(g.size());
  return separable_test_function(N, g, f, Y, dY);
}

template <class F>
double integrate(F f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-14);
}

}  // namespace

TEST(QuadraticForm, RadialBumpIsDirichletEnergy) {
  RadialProfile f{RadialShape::cubic_bump, 0.2, 0.9};
  for (int N : {2, 3}) {
    const auto tf = constant_angular(N, f);
    const double omega = N == 2 ? 2 * kPi : 4 * kPi;
    const double expected = omega * integrate([&](double r) { return std::pow(f(r).second, 2) * std::pow(r, N - 1); }, f.a, f.b);
    const auto pot = build_potential(PotentialDescriptor::zero(N));
    EXPECT_NEAR(quadratic_form(pot, tf, 1.0), expected, 1e-10 * expected) << N;
  }
}

TEST(QuadraticForm, AharonovBohmModeReduction) {
  RadialProfile f{RadialShape::cubic_bump, 0.3, 1.0};
  const auto pot = build_potential(PotentialDescriptor::aharonov_bohm(0.3, 0.05));
  for (int j : {-2, 0, 3}) {
    const auto tf = circular_mode(f, j);
    const double radial = integrate([&](double r) { return std::pow(f(r).second, 2) * r; }, f.a, f.b);
    const double weight = integrate([&](double r) { return std::pow(f(r).first, 2) / r; }, f.a, f.b);
    const double expected = radial + ((j + 0.3) * (j + 0.3) - 0.05) * weight;
    EXPECT_NEAR(quadratic_form(pot, tf, 1.0), expected, 1e-10 * std::abs(expected)) << j;
    EXPECT_NEAR(hardy_weight(tf), weight, 1e-10 * weight);
  }
}

TEST(QuadraticForm, ScalingHomogeneity) {
  const auto d = build_potential(PotentialDescriptor::dipole(1.0, {0.3, 0.1, 1.0}));
  std::mt19937_64 rng(7);
  const Eigen::VectorXcd c = random_angular_coefficients(3, 4, rng);
  const GalerkinBasis basis(3, 4);
  const AngularGrid g = AngularGrid::for_truncation(3, 8);
  const AngularTable t = tabulate(basis, g, c);
  const std::array<Eigen::VectorXcd, 3> dY{t.grad[0].col(0), t.grad[1].col(0), t.grad[2].col(0)};
  for (double s : {0.5, 3.0}) {
    const auto a = separable_test_function(3, g, {RadialShape::cubic_bump, 0.2, 0.8}, t.values.col(0), dY);
    const auto b = separable_test_function(3, g, {RadialShape::cubic_bump, 0.2 * s, 0.8 * s}, t.values.col(0), dY);
    EXPECT_NEAR(quadratic_form(d, b, 0.8 * s), s * quadratic_form(d, a, 0.8), 1e-10 * s * std::abs(quadratic_form(d, a, 0.8)));
  }
}

TEST(QuadraticForm, SupportViolation) {
  const auto tf = constant_angular(2, {RadialShape::cubic_bump, 0.2, 0.9});
  try {
    quadratic_form(build_potential(PotentialDescriptor::zero(2)), tf, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation_error);
  }
}

TEST(QuadraticForm, PolarAgreesWithCartesianQuadrature) {
  // C-infinity bump times a trigonometric polynomial, integrated on a
  // Cartesian grid with analytic Cartesian gradients
  const RadialProfile f{RadialShape::smooth_bump, 0.25, 0.95};
  const std::map<int, cplx> coef = {{-2, cplx(0.3, 0.1)}, {0, 0.8}, {1, cplx(-0.2, 0.5)}, {3, 0.4}};
  const auto pd = fourier({{0, 0.3}, {1, 0.1}, {-1, 0.1}}, {{0, 0.02}, {2, 0.05}, {-2, 0.05}});
  const auto pot = build_potential(pd);
  auto Y = [&](double t, cplx& dY) {
    cplx v = 0.0;
    dY = 0.0;
    for (const auto& [j, c] : coef) {
      const cplx e = c * std::polar(1.0, j * t);
      v += e;
      dY += cplx(0.0, j) * e;
    }
    return v;
  };
  auto alpha = [](double t) { return 0.3 + 0.2 * std::cos(t); };
  auto a = [](double t) { return 0.02 + 0.1 * std::cos(2 * t); };
  const int n = 1601;
  const double hx = 2.0 / (n - 1);
  double cart = 0.0;
  for (int ix = 0; ix < n; ++ix)
    for (int iy = 0; iy < n; ++iy) {
      const double x = -1 + ix * hx, y = -1 + iy * hx, r = std::hypot(x, y);
      if (r <= f.a || r >= f.b) continue;
      const double t = std::atan2(y, x);
      cplx dY;
      const cplx Yv = Y(t, dY);
      const auto [B, dB] = f(r);
      const cplx u = B * Yv;
      const cplx ux = std::cos(t) * dB * Yv - std::sin(t) * B * dY / r;
      const cplx uy = std::sin(t) * dB * Yv + std::cos(t) * B * dY / r;
      const double Ax = -alpha(t) * std::sin(t) / r, Ay = alpha(t) * std::cos(t) / r;
      cart += std::norm(ux + cplx(0.0, Ax) * u) + std::norm(uy + cplx(0.0, Ay) * u) - a(t) * std::norm(u) / (r * r);
    }
  cart *= hx * hx;

  const AngularGrid g = AngularGrid::for_truncation(2, 12);
  Eigen::VectorXcd Yn(g.size());
  std::array<Eigen::VectorXcd, 3> dYn;
  for (auto& d : dYn) d.resize(g.size());
  for (int k = 0; k < g.size(); ++k) {
    cplx d;
    Yn[k] = Y(g.node(k).t, d);
    for (int c = 0; c < 3; ++c) dYn[c][k] = d * g.node(k).e1[c];
  }
  const auto tf = separable_test_function(2, g, f, Yn, dYn, 400);
  const double polar = quadratic_form(pot, tf, 1.0);
  EXPECT_NEAR(polar, cart, 1e-6 * std::abs(cart));
}

TEST(Lambda1, ClosedFormsAndPositivity) {
  EXPECT_DOUBLE_EQ(lambda1_from_mu1(2, 0.09), 0.09);
  EXPECT_DOUBLE_EQ(lambda1_from_mu1(3, 0.0), 0.25);
  EXPECT_DOUBLE_EQ(lambda1_from_mu1(4, -0.5), 0.5);
  auto p = positivity_check(3, -0.24);
  EXPECT_TRUE(p.positive);
  EXPECT_NEAR(p.margin, 0.01, 1e-15);
  EXPECT_FALSE(positivity_check(2, 0.0).positive);
  const auto ab = build_potential(PotentialDescriptor::aharonov_bohm(0.3, 0.0));
  p = positivity_check(2, mu1(angular_spectrum(ab, 32, 1)));
  EXPECT_TRUE(p.positive);
  EXPECT_NEAR(p.margin, 0.09, 1e-12);
}

TEST(HardyBoundary, ConstantFieldInTheUnitBall) {
  const auto tf = constant_angular(3, {RadialShape::power, 0.0, 1.0, 0.0});
  EXPECT_NEAR(hardy_boundary_margin(build_potential(PotentialDescriptor::zero(3)), 0.0, tf, 1.0), kPi, 1e-9);
}

TEST(HardyBoundary, TruncatedFirstEigenprofile) {
  // u = |x|^{sigma+} psi_1 on B_1: margin = lambda1 / (2 sigma+ + N - 2) = sqrt(lambda1)/2
  const auto ab = build_potential(PotentialDescriptor::aharonov_bohm(0.3, 0.0));
  const auto tf = circular_mode({RadialShape::power, 0.0, 1.0, 0.3}, 0);
  EXPECT_NEAR(hardy_boundary_margin(ab, 0.09, tf, 1.0), 0.15, 1e-9);

  const auto d = build_potential(PotentialDescriptor::dipole(1.0, {0, 0, 1}));
  const auto s = angular_spectrum(d, 10, 1);
  const double m1 = mu1(s);
  const double sp = characteristic_exponents(3, m1).sigma_plus;
  const AngularGrid g = AngularGrid::for_truncation(3, 10);
  const AngularTable t = mode_table(s, g, 1);
  const auto tf3 = separable_test_function(3, g, {RadialShape::power, 0.0, 1.0, sp}, t.values.col(0),
                                           {t.grad[0].col(0), t.grad[1].col(0), t.grad[2].col(0)});
  const double margin = hardy_boundary_margin(d, m1, tf3, 1.0);
  EXPECT_GE(margin, 0.0);
  EXPECT_NEAR(margin, 0.5 * std::sqrt(lambda1_from_mu1(3, m1)), 1e-8);
}

TEST(HardyBoundary, RandomSweeps) {
  const std::vector<PotentialDescriptor> pots = {
      PotentialDescriptor::aharonov_bohm(0.3, 0.0), PotentialDescriptor::aharonov_bohm(1.2, 0.1),
      fourier({{0, 0.4}, {1, cplx(0.1, 0.2)}, {-1, cplx(0.1, -0.2)}}, {{0, 0.05}, {2, 0.03}, {-2, 0.03}}),
      PotentialDescriptor::dipole(1.0, {0, 0, 1})};
  for (const auto& pd : pots) {
    const auto pot = build_potential(pd);
    const double m = mu1(angular_spectrum(pot, pot.dimension() == 2 ? 32 : 10, 1));
    const auto rep = hardy_boundary_sweep(pot, m, 50, 42);
    EXPECT_EQ(rep.count, 50);
    EXPECT_GE(rep.min_margin, -1e-8);
    EXPECT_TRUE(rep.passed());
  }
}

TEST(Diamagnetic, EqualityCases) {
  const RadialProfile f{RadialShape::cubic_bump, 0.2, 0.9};
  const auto tf = constant_angular(2, f, 0.7);
  EXPECT_NEAR(diamagnetic_margin(build_potential(PotentialDescriptor::zero(2)), tf), 0.0, 1e-12);

  // u = e^{i phi} v with phi = -0.5 sin t removes A = 0.5 cos t
  const auto pot = build_potential(fourier({{1, 0.25}, {-1, 0.25}}));
  const AngularGrid g = AngularGrid::for_truncation(2, 12);
  Eigen::VectorXcd Y(g.size());
  std::array<Eigen::VectorXcd, 3> dY;
  for (auto& d : dY) d.resize(g.size());
  for (int k = 0; k < g.size(); ++k) {
    const double t = g.node(k).t;
    Y[k] = (1.2 + std::cos(2 * t)) * std::polar(1.0, -0.5 * std::sin(t));
    const cplx d = (-2 * std::sin(2 * t)) * std::polar(1.0, -0.5 * std::sin(t)) +
                   Y[k] * cplx(0.0, -0.5 * std::cos(t));
    for (int c = 0; c < 3; ++c) dY[c][k] = d * g.node(k).e1[c];
  }
  const auto gauge = separable_test_function(2, g, f, Y, dY);
  EXPECT_NEAR(diamagnetic_margin(pot, gauge), 0.0, 1e-10);
}

TEST(Diamagnetic, RandomSweeps) {
  for (const auto& pd : {PotentialDescriptor::aharonov_bohm(0.3, 0.0),
                         fourier({{0, 0.2}, {2, 0.3}, {-2, 0.3}}),
                         PotentialDescriptor::dipole(1.0, {1, 0, 0})}) {
    const auto rep = diamagnetic_sweep(build_potential(pd), 50, 42);
    EXPECT_GE(rep.min_margin, -1e-10);
    EXPECT_TRUE(rep.passed());
  }
}

TEST(Mu1Comparison, FluxGaugeAndElectricOnly) {
  EXPECT_NEAR(mu1_comparison(build_potential(PotentialDescriptor::aharonov_bohm(0.3, 0.0))), 0.09, 1e-10);
  EXPECT_NEAR(mu1_comparison(build_potential(fourier({{1, 0.25}, {-1, 0.25}}))), 0.0, 1e-9);
  EXPECT_EQ(mu1_comparison(build_potential(fourier({}, {{0, 0.1}, {1, 0.2}, {-1, 0.2}}))), 0.0);
  EXPECT_GE(mu1_comparison(build_potential(fourier({{0, 0.7}, {3, cplx(0.1, 0.1)}, {-3, cplx(0.1, -0.1)}},
                                                    {{0, -0.1}, {1, 0.3}, {-1, 0.3}}))),
            -1e-10);
}

TEST(Hardy2d, BestConstant) {
  for (auto [alpha, expected] : {std::pair{0.3, 0.09}, {0.5, 0.25}, {1.2, 0.04}}) {
    const auto pot = build_potential(PotentialDescriptor::aharonov_bohm(alpha, 0.0));
    const auto h = hardy_2d_constant_check(pot);
    EXPECT_NEAR(h.closed_form, expected, 1e-14);
    EXPECT_NEAR(h.eigensolver, expected, 1e-9);
    EXPECT_FALSE(h.degenerate);
    const auto rep = hardy_2d_sweep(pot, 50, 42);
    EXPECT_GE(rep.min_margin, -1e-8);
    EXPECT_EQ(rep.status, "pass");
  }
  const auto integer = hardy_2d_constant_check(build_potential(PotentialDescriptor::aharonov_bohm(1.0, 0.0)));
  EXPECT_TRUE(integer.degenerate);
  EXPECT_EQ(hardy_2d_sweep(build_potential(PotentialDescriptor::aharonov_bohm(1.0, 0.0)), 4, 1).status,
            "degenerate");
  EXPECT_THROW(hardy_2d_constant_check(build_potential(PotentialDescriptor::dipole(1.0, {0, 0, 1}))), Error);
}

TEST(Rayleigh, QuotientApproachesLambda1FromAbove) {
  // r^{-1/2} times a bump in log r over L decades: the quotient exceeds
  // lambda1 by O(1/L^2)
  for (const auto& pd : {PotentialDescriptor::zero(3), PotentialDescriptor::dipole(1.0, {0, 0, 1})}) {
    const auto pot = build_potential(pd);
    const auto s = angular_spectrum(pot, 10, 1);
    const double l1 = lambda1_from_mu1(3, mu1(s));
    const AngularGrid g = AngularGrid::for_truncation(3, 10);
    const AngularTable t = mode_table(s, g, 1);
    double previous = std::numeric_limits<double>::infinity();
    for (double decades : {1.0, 2.0, 4.0, 8.0}) {
      const RadialProfile f{RadialShape::log_bump, std::pow(10.0, -decades), 1.0, -0.5};
      const auto tf = separable_test_function(3, g, f, t.values.col(0),
                                              {t.grad[0].col(0), t.grad[1].col(0), t.grad[2].col(0)}, 400);
      const double q = rayleigh_quotient(pot, tf);
      EXPECT_GE(q, l1 - 1e-6);
      EXPECT_LT(q, previous);
      previous = q;
    }
    EXPECT_LT(previous - l1, 0.05);
  }
}

TEST(Report, JsonLayout) {
  InequalityReport r{"hardy"};
  r.record(0.5, 1e-8);
  r.record(-1e-9, 1e-8);
  auto j = to_json(r);
  EXPECT_EQ(j["name"], "hardy");
  EXPECT_EQ(j["count"], 2);
  EXPECT_DOUBLE_EQ(j["min_margin"].get<double>(), -1e-9);
  EXPECT_EQ(j["status"], "pass");
  r.record(-1e-6, 1e-8);
  EXPECT_EQ(to_json(r)["status"], "fail");
}
