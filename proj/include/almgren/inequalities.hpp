#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <json.hpp>
#include <random>
#include <string>
#include <vector>

#include "almgren/angular_spectrum.hpp"
#include "almgren/frequency.hpp"
#include "almgren/modal_field.hpp"

namespace almgren {

constexpr double kQuadratureTolerance = 1e-8;

/// Field sampled on a log grid covering its support [inner, outer]; identically
/// zero for r >= outer. inner == 0 means the support reaches the origin, and
/// the grid then starts at 1e-6 outer with a power-law tail closure.
struct TestFunction {
  FieldSample field;
  double inner = 0.0, outer = 1.0;
  std::string provenance;
};

enum class RadialShape {
  cubic_bump,   // ((r-a)(b-r))^3, C^2 across both ends
  smooth_bump,  // exp(-1/((r-a)(b-r))), C^infinity
  edge,         // ((r-a)/(b-a))^3, vanishing at a only
  power,        // r^p, for profiles reaching the origin
  log_bump,     // r^p ((log r - log a)(log b - log r))^3, near-extremal for Hardy with p = -(N-2)/2
};

struct RadialProfile {
  RadialShape shape = RadialShape::cubic_bump;
  double a = 0.25, b = 1.0;
  double p = 0.0;  // exponent of the power shape

  /// value and derivative at r in [a, b]
  std::pair<double, double> operator()(double r) const {
    const double w = b - a;
    switch (shape) {
      case RadialShape::cubic_bump: {
        const double q = (r - a) * (b - r) / (0.25 * w * w);
        const double dq = (b + a - 2 * r) / (0.25 * w * w);
        return {q * q * q, 3 * q * q * dq};
      }
      case RadialShape::smooth_bump: {
        const double q = (r - a) * (b - r);
        if (q <= 0.0) return {0.0, 0.0};
        const double e = std::exp(-w * w / (4 * q) + 1.0);  // peak value 1 at the midpoint
        return {e, e * w * w / (4 * q * q) * (b + a - 2 * r)};
      }
      case RadialShape::edge: {
        const double q = (r - a) / w;
        return {q * q * q, 3 * q * q / w};
      }
      case RadialShape::power: return {std::pow(r, p), p * std::pow(r, p - 1)};
      case RadialShape::log_bump: {
        const double la = std::log(a), lb = std::log(b), l = std::log(r), half = 0.5 * (lb - la);
        const double q = (l - la) * (lb - l) / (half * half);
        const double dq = (la + lb - 2 * l) / (half * half) / r;
        const double rp = std::pow(r, p);
        return {rp * q * q * q, p * rp / r * q * q * q + rp * 3 * q * q * dq};
      }
    }
    return {0.0, 0.0};
  }
};

/// u(r, theta) = f(r) Y(theta) with Y and its tangential gradient given on
/// the angular nodes.
inline TestFunction separable_test_function(int dimension, const AngularGrid& angular, const RadialProfile& f,
                                            const Eigen::VectorXcd& Y, const std::array<Eigen::VectorXcd, 3>& dY,
                                            int intervals = 200, std::string provenance = "explicit") {
  if (!(f.b > f.a) || f.a < 0.0) throw Error(ErrorKind::validation_error, "support needs 0 <= a < b");
  TestFunction tf;
  tf.inner = f.a;
  tf.outer = f.b;
  tf.provenance = std::move(provenance);
  FieldSample& s = tf.field;
  s.dimension = dimension;
  s.side = Side::interior;
  s.radial = LogGrid(f.a > 0.0 ? f.a : 1e-6 * f.b, f.b, intervals);
  s.angular = angular;
  const int nr = s.radial.size(), nn = angular.size();
  s.u.resize(nr, nn);
  s.du_dr.resize(nr, nn);
  for (auto& g : s.grad_s) g.resize(nr, nn);
  for (int i = 0; i < nr; ++i) {
    const auto [v, dv] = f(s.radial.r(i));
    s.u.row(i) = v * Y.transpose();
    s.du_dr.row(i) = dv * Y.transpose();
    for (int c = 0; c < 3; ++c) s.grad_s[c].row(i) = v * dY[c].transpose();
  }
  s.has_gradient = true;
  return tf;
}

/// Random angular polynomial of degree <= `degree` (trigonometric for N = 2,
/// spherical harmonics for N = 3) with coefficients uniform in the unit disk.
inline Eigen::VectorXcd random_angular_coefficients(int dimension, int degree, std::mt19937_64& rng) {
  const GalerkinBasis basis(dimension, degree);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Eigen::VectorXcd c(basis.size());
  for (int p = 0; p < basis.size(); ++p) c[p] = std::polar(std::sqrt(U(rng)), 2 * std::numbers::pi * U(rng));
  return c;
}

inline TestFunction random_test_function(int dimension, std::mt19937_64& rng, bool reach_boundary,
                                         double r = 1.0, int degree = 8) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  RadialProfile f;
  f.a = (0.05 + 0.45 * U(rng)) * r;
  if (reach_boundary) {
    f.shape = RadialShape::edge;
    f.b = r;
  } else {
    f.shape = RadialShape::cubic_bump;
    f.b = f.a + (r - f.a) * (0.3 + 0.7 * U(rng));
  }
  const GalerkinBasis basis(dimension, degree);
  const AngularGrid grid = AngularGrid::for_truncation(dimension, degree + 4);
  const Eigen::VectorXcd c = random_angular_coefficients(dimension, degree, rng);
  const AngularTable t = tabulate(basis, grid, c);
  return separable_test_function(dimension, grid, f, t.values.col(0),
                                 {t.grad[0].col(0), t.grad[1].col(0), t.grad[2].col(0)}, 200,
                                 reach_boundary ? "random angular polynomial x edge profile"
                                                : "random angular polynomial x cubic bump");
}

namespace detail {

/// int_{B_r} g dx for sphere integrals G(s) = int_{S} g(s theta) dS.
inline double ball_integral(const TestFunction& tf, const std::vector<double>& G) {
  const LogGrid& g = tf.field.radial;
  std::vector<double> F(g.size());
  for (int i = 0; i < g.size(); ++i) F[i] = g.pow(i, tf.field.dimension) * G[i];
  std::vector<cplx> f(F.begin(), F.end());
  const CumulativeIntegrator integ(g.size());
  cplx total = integ.total<cplx>(f, g.h());
  if (tf.inner == 0.0) total += power_law_tail(f, g.h(), TailEnd::lower);
  return total.real();
}

inline void require_support(const TestFunction& tf, double r) {
  if (r < tf.outer * (1 - 1e-12))
    throw Error(ErrorKind::validation_error, "test function support exceeds the ball radius");
}

}  // namespace detail

/// Q(u) = int_{B_r} |grad u + i A u/|x||^2 - a |u|^2/|x|^2 by polar quadrature.
inline double quadratic_form(const AngularPotential& pot, const TestFunction& tf, double r) {
  detail::require_support(tf, r);
  const SphereDensities d = sphere_densities(tf.field, pot, no_perturbation());
  return detail::ball_integral(tf, d.energy);
}

/// int_{B_r} |u|^2 / |x|^2.
inline double hardy_weight(const TestFunction& tf) {
  const FieldSample& f = tf.field;
  std::vector<double> G(f.radii(), 0.0);
  for (int i = 0; i < f.radii(); ++i) {
    for (int j = 0; j < f.nodes(); ++j) G[i] += f.angular.node(j).weight * std::norm(f.u(i, j));
    G[i] /= f.radial.r(i) * f.radial.r(i);
  }
  return detail::ball_integral(tf, G);
}

inline double lambda1_from_mu1(int N, double mu1) { return mu1 + 0.25 * (N - 2) * (N - 2); }

struct Positivity {
  bool positive = false;
  double margin = 0.0;
};

inline Positivity positivity_check(int N, double mu1) {
  const double m = lambda1_from_mu1(N, mu1);
  return {m > 0.0, m};
}

/// Q + (N-2)/(2r) int_{dB_r} |u|^2 - (mu1 + ((N-2)/2)^2) int_{B_r} |u|^2/|x|^2.
inline double hardy_boundary_margin(const AngularPotential& pot, double mu1, const TestFunction& tf, double r) {
  detail::require_support(tf, r);
  const int N = tf.field.dimension;
  double boundary = 0.0;
  if (std::abs(r - tf.outer) <= 1e-12 * r) {
    const int last = tf.field.radial.intervals();
    double m = 0.0;
    for (int j = 0; j < tf.field.nodes(); ++j) m += tf.field.angular.node(j).weight * std::norm(tf.field.u(last, j));
    boundary = 0.5 * (N - 2) / r * std::pow(r, N - 1) * m;
  }
  return quadratic_form(pot, tf, r) + boundary - lambda1_from_mu1(N, mu1) * hardy_weight(tf);
}

/// Pointwise min of |grad u + i A u/|x||^2 - |grad |u||^2 over nodes with
/// |u| > 1e-10, grad |u| = Re(conj(u) grad u)/|u|.
inline double diamagnetic_margin(const AngularPotential& pot, const TestFunction& tf) {
  const FieldSample& f = tf.field;
  f.require_gradient();
  double worst = std::numeric_limits<double>::infinity();
  std::vector<Vec3> A(f.nodes());
  for (int j = 0; j < f.nodes(); ++j) A[j] = pot.magnetic_vector(f.angular.node(j));
  for (int i = 0; i < f.radii(); ++i) {
    const double r = f.radial.r(i);
    for (int j = 0; j < f.nodes(); ++j) {
      const cplx u = f.u(i, j);
      const double m = std::abs(u);
      if (m <= 1e-10) continue;
      const cplx ur = f.du_dr(i, j);
      double mag = std::norm(ur), mod = std::pow((std::conj(u) * ur).real() / m, 2);
      for (int c = 0; c < 3; ++c) {
        const cplx g = f.grad_s[c](i, j);
        mag += std::norm(g + cplx(0.0, A[j][c]) * u) / (r * r);
        mod += std::pow((std::conj(u) * g).real() / m, 2) / (r * r);
      }
      worst = std::min(worst, mag - mod);
    }
  }
  return worst;
}

/// Rayleigh quotient Q(u) / int |u|^2/|x|^2.
inline double rayleigh_quotient(const AngularPotential& pot, const TestFunction& tf) {
  return quadratic_form(pot, tf, tf.outer) / hardy_weight(tf);
}

inline PotentialDescriptor without_magnetic(PotentialDescriptor d) {
  d.alpha = 0.0;
  d.magnetic_trig.clear();
  return d;
}

inline PotentialDescriptor without_electric(PotentialDescriptor d) {
  d.a0 = 0.0;
  d.electric_trig.clear();
  d.electric_harmonics.clear();
  d.lambda = 0.0;
  return d;
}

/// mu1(A, a) - mu1(0, a) from two eigendecompositions.
inline double mu1_comparison(const AngularPotential& pot, int J = -1) {
  if (J < 0) J = default_truncation(pot.dimension());
  const double with = mu1(angular_spectrum(pot, J, 1));
  const double without = mu1(angular_spectrum(build_potential(without_magnetic(pot.descriptor())), J, 1));
  return with - without;
}

struct Hardy2dConstant {
  double eigensolver = 0.0;    // mu1(A, 0)
  double closed_form = 0.0;    // (min_k |k - Phi_A|)^2
  bool degenerate = false;     // Phi_A integer: the constant vanishes
};

inline Hardy2dConstant hardy_2d_constant_check(const AngularPotential& pot, int J = -1) {
  if (pot.dimension() != 2)
    throw Error(ErrorKind::unsupported_configuration, "the magnetic Hardy constant is defined for N = 2");
  if (J < 0) J = default_truncation(2);
  Hardy2dConstant h;
  const double d = flux_distance(circulation(pot));
  h.closed_form = d * d;
  h.degenerate = d < 1e-12;
  h.eigensolver = mu1(angular_spectrum(build_potential(without_electric(pot.descriptor())), J, 1));
  return h;
}

struct InequalityReport {
  std::string name;
  int count = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  std::string status = "pass";

  void record(double margin, double tol) {
    ++count;
    min_margin = std::min(min_margin, margin);
    if (!(margin >= -tol)) status = "fail";
  }
  bool passed() const { return status != "fail"; }
};

inline nlohmann::json to_json(const InequalityReport& r) {
  return {{"name", r.name}, {"count", r.count}, {"min_margin", nullable(r.min_margin)}, {"status", r.status}};
}

inline InequalityReport hardy_boundary_sweep(const AngularPotential& pot, double mu1, int count,
                                             std::uint64_t seed, double tol = kQuadratureTolerance) {
  std::mt19937_64 rng(seed);
  InequalityReport rep{"hardy"};
  for (int k = 0; k < count; ++k) {
    const TestFunction tf = random_test_function(pot.dimension(), rng, k % 2 == 0);
    rep.record(hardy_boundary_margin(pot, mu1, tf, 1.0), tol);
  }
  return rep;
}

inline InequalityReport diamagnetic_sweep(const AngularPotential& pot, int count, std::uint64_t seed,
                                          double tol = kQuadratureTolerance) {
  std::mt19937_64 rng(seed);
  InequalityReport rep{"diamagnetic"};
  for (int k = 0; k < count; ++k) {
    const TestFunction tf = random_test_function(pot.dimension(), rng, k % 2 == 0);
    rep.record(diamagnetic_margin(pot, tf), tol);
  }
  return rep;
}

/// Q_A(u) - (min_k |k - Phi_A|)^2 int |u|^2/|x|^2 >= 0 with a = 0.
inline InequalityReport hardy_2d_sweep(const AngularPotential& pot, int count, std::uint64_t seed,
                                       double tol = kQuadratureTolerance) {
  const AngularPotential magnetic = build_potential(without_electric(pot.descriptor()));
  const double d = flux_distance(circulation(pot));
  std::mt19937_64 rng(seed);
  InequalityReport rep{"hardy2d"};
  for (int k = 0; k < count; ++k) {
    const TestFunction tf = random_test_function(2, rng, k % 2 == 0);
    rep.record(quadratic_form(magnetic, tf, 1.0) - d * d * hardy_weight(tf), tol);
  }
  if (d < 1e-12) rep.status = "degenerate";
  return rep;
}

}  // namespace almgren
