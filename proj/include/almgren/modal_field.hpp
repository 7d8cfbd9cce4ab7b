#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "almgren/angular.hpp"
#include "almgren/angular_spectrum.hpp"
#include "almgren/error.hpp"
#include "almgren/radial.hpp"

namespace almgren {

enum class Side { interior, exterior };

inline const char* to_string(Side s) { return s == Side::interior ? "interior" : "exterior"; }
inline Side opposite(Side s) { return s == Side::interior ? Side::exterior : Side::interior; }

struct ModalExponents {
  int k = 1;
  double mu = 0.0;
  double sigma_plus = 0.0, sigma_minus = 0.0;
  double gap() const { return sigma_plus - sigma_minus; }
};

/// Roots -(N-2)/2 +- sqrt(((N-2)/2)^2 + mu) of the indicial equation.
inline ModalExponents characteristic_exponents(int N, double mu, int k = 1) {
  const double c = 0.5 * (N - 2);
  const double disc = c * c + mu;
  if (!(disc > 0.0))
    throw Error(ErrorKind::indefinite_form,
                "((N-2)/2)^2 + mu = " + std::to_string(disc) +
                    " is not positive; the quadratic form is not positive definite");
  const double root = std::sqrt(disc);
  return {k, mu, -c + root, -c - root};
}

/// Perturbation h(x) = c |x|^{-2+eps} f(x/|x|) near the origin (interior) or
/// h(x) = c |x|^{-2-eps} f(x/|x|) near infinity (exterior).
struct PerturbationSpec {
  cplx c = 0.0;
  double eps = 1.0;
  std::optional<AngularFunction> factor;  // empty means f = 1
  Side side = Side::interior;

  bool is_zero() const { return c == cplx(0.0) || (factor && factor->is_zero()); }
  double radial_power() const { return side == Side::interior ? -2.0 + eps : -2.0 - eps; }
  std::vector<cplx> factor_on(const AngularGrid& g) const {
    std::vector<cplx> f(g.size(), 1.0);
    if (factor)
      for (int j = 0; j < g.size(); ++j) f[j] = (*factor)(g.node(j));
    return f;
  }
  void validate() const {
    if (!(eps > 0.0) || !std::isfinite(eps))
      throw Error(ErrorKind::validation_error,
                  "perturbation exponent offset eps must be positive (h = O(|x|^{-2+eps}))");
  }
};

inline PerturbationSpec no_perturbation() { return PerturbationSpec{}; }

struct ModeProfile {
  ModalExponents exponents;
  cplx boundary = 0.0;
  std::vector<cplx> phi, dphi, zeta;
};

/// Radial profiles phi_k on a shared log grid. R is the grid end adjacent to
/// the boundary: r_max for interior problems, r_min for exterior ones.
struct ModalSolution {
  Side side = Side::interior;
  LogGrid grid;
  std::vector<ModeProfile> modes;
  double R() const { return side == Side::interior ? grid.r_max() : grid.r_min(); }
  int count() const { return static_cast<int>(modes.size()); }
};

/// Regular-branch solution of -phi'' - (N-1)/r phi' + mu/r^2 phi = zeta with
/// phi(R) = boundary, by variation of parameters. Integrals are taken in
/// s = log r; the singular end is closed by power-law extrapolation.
inline ModeProfile solve_radial_mode(const ModalExponents& ex, const std::vector<cplx>& zeta,
                                     cplx boundary, const LogGrid& grid,
                                     Side side = Side::interior) {
  const int n = grid.size();
  if (static_cast<int>(zeta.size()) != n)
    throw Error(ErrorKind::grid_mismatch, "forcing samples do not match the radial grid");
  const double sp = ex.sigma_plus, sm = ex.sigma_minus, delta = ex.gap();
  if (!(delta > 1e-12))
    throw Error(ErrorKind::degenerate_indicial,
                "sigma+ = sigma-: the logarithmic branch is not supported");
  ModeProfile out;
  out.exponents = ex;
  out.boundary = boundary;
  out.zeta = zeta;
  out.phi.assign(n, 0.0);
  out.dphi.assign(n, 0.0);

  const bool forced = std::any_of(zeta.begin(), zeta.end(), [](cplx z) { return z != cplx(0.0); });
  const double h = grid.h();
  const int last = n - 1;
  if (!forced) {
    const int anchor = side == Side::interior ? last : 0;
    const double p = side == Side::interior ? sp : sm;
    for (int i = 0; i < n; ++i) {
      out.phi[i] = boundary * std::exp(p * (grid.s(i) - grid.s(anchor)));
      out.dphi[i] = p * out.phi[i] / grid.r(i);
    }
    return out;
  }

  // integrands in s = log r of the two variation-of-parameters integrals
  std::vector<cplx> fp(n), fm(n);
  for (int i = 0; i < n; ++i) {
    fp[i] = grid.pow(i, 2.0 - sp) * zeta[i] / delta;
    fm[i] = grid.pow(i, 2.0 - sm) * zeta[i] / delta;
  }
  const CumulativeIntegrator integ(n);
  cplx tail = 0.0;
  try {
    tail = side == Side::interior ? power_law_tail(fm, h, TailEnd::lower)
                                  : power_law_tail(fp, h, TailEnd::upper);
  } catch (const Error& e) {
    throw Error(ErrorKind::forcing_too_singular,
                std::string("forcing is not integrable at the singular end: ") + e.what());
  }

  if (side == Side::interior) {
    // phi = r^{s+}(c1 + int_r^R fp) + r^{s-} int_0^r fm
    const std::vector<cplx> jp = integ.cumulative_from_end<cplx>(fp, h);
    std::vector<cplx> im = integ.cumulative<cplx>(fm, h);
    for (auto& v : im) v += tail;
    const cplx c1 = grid.pow(last, -sp) * (boundary - grid.pow(last, sm) * im[last]);
    for (int i = 0; i < n; ++i) {
      const double ap = grid.pow(i, sp), am = grid.pow(i, sm);
      out.phi[i] = ap * (c1 + jp[i]) + am * im[i];
      out.dphi[i] = (sp * ap * (c1 + jp[i]) + sm * am * im[i]) / grid.r(i);
    }
  } else {
    // phi = r^{s-}(c2 + int_R^r fm) + r^{s+} int_r^inf fp
    const std::vector<cplx> km = integ.cumulative<cplx>(fm, h);
    std::vector<cplx> lp = integ.cumulative_from_end<cplx>(fp, h);
    for (auto& v : lp) v += tail;
    const cplx c2 = grid.pow(0, -sm) * (boundary - grid.pow(0, sp) * lp[0]);
    for (int i = 0; i < n; ++i) {
      const double ap = grid.pow(i, sp), am = grid.pow(i, sm);
      out.phi[i] = am * (c2 + km[i]) + ap * lp[i];
      out.dphi[i] = (sm * am * (c2 + km[i]) + sp * ap * lp[i]) / grid.r(i);
    }
  }
  return out;
}

/// Samples of a field on a log-radial x angular grid. Rows index radii,
/// columns angular nodes. grad_s holds the tangential gradient on the unit
/// sphere, so that grad u = du_dr theta + grad_s / r.
struct FieldSample {
  int dimension = 2;
  Side side = Side::interior;
  LogGrid radial;
  AngularGrid angular;
  Eigen::MatrixXcd u;
  bool has_gradient = false;
  Eigen::MatrixXcd du_dr;
  std::array<Eigen::MatrixXcd, 3> grad_s;

  int radii() const { return radial.size(); }
  int nodes() const { return angular.size(); }
  void require_gradient() const {
    if (!has_gradient)
      throw Error(ErrorKind::missing_gradient, "field has no gradient samples");
  }
  void require_shape() const {
    if (u.rows() != radial.size() || u.cols() != angular.size())
      throw Error(ErrorKind::grid_mismatch, "value array does not match the grid");
  }
};

/// Eigenfunctions of the first `count` spectrum entries tabulated on a grid.
inline AngularTable mode_table(const AngularSpectrum& s, const AngularGrid& g, int count) {
  if (count < 1 || count > s.count())
    throw Error(ErrorKind::out_of_range, "mode count outside the computed spectrum");
  return tabulate(s.basis(), g, s.eigenvectors.leftCols(count));
}

inline FieldSample synthesize_field(const AngularTable& table, const ModalSolution& sol,
                                    const AngularGrid& g, int dimension, bool with_gradient = true) {
  if (table.columns() < sol.count())
    throw Error(ErrorKind::grid_mismatch, "more modal profiles than tabulated modes");
  if (table.values.rows() != g.size())
    throw Error(ErrorKind::grid_mismatch, "mode table does not match the angular grid");
  const int nr = sol.grid.size(), K = sol.count();
  Eigen::MatrixXcd phi(nr, K), dphi(nr, K);
  for (int k = 0; k < K; ++k) {
    if (static_cast<int>(sol.modes[k].phi.size()) != nr)
      throw Error(ErrorKind::grid_mismatch, "modal profiles do not share the radial grid");
    for (int i = 0; i < nr; ++i) {
      phi(i, k) = sol.modes[k].phi[i];
      dphi(i, k) = sol.modes[k].dphi[i];
    }
  }
  FieldSample f;
  f.dimension = dimension;
  f.side = sol.side;
  f.radial = sol.grid;
  f.angular = g;
  f.u = phi * table.values.leftCols(K).transpose();
  if (with_gradient) {
    f.has_gradient = true;
    f.du_dr = dphi * table.values.leftCols(K).transpose();
    for (int c = 0; c < 3; ++c) f.grad_s[c] = phi * table.grad[c].leftCols(K).transpose();
  }
  return f;
}

inline FieldSample synthesize_field(const AngularSpectrum& s, const ModalSolution& sol,
                                    const AngularGrid& g, bool with_gradient = true) {
  return synthesize_field(mode_table(s, g, sol.count()), sol, g, s.dimension, with_gradient);
}

/// Quadrature weights times conj(psi_k): multiply field rows by this to project.
inline Eigen::MatrixXcd projector(const AngularTable& table, const AngularGrid& g) {
  Eigen::MatrixXcd p = table.values.conjugate();
  for (int j = 0; j < g.size(); ++j) p.row(j) *= g.node(j).weight;
  return p;
}

/// phi_k(r_i) = int u(r_i theta) conj(psi_k(theta)) dS, as an (radii x modes) matrix.
inline Eigen::MatrixXcd project_onto_modes(const FieldSample& field, const AngularSpectrum& s,
                                           int count) {
  field.require_shape();
  field.angular.require_resolves(s.truncation);
  return field.u * projector(mode_table(s, field.angular, count), field.angular);
}

/// Per-mode forcing zeta_k(r) = int h u conj(psi_k) dS. Coefficients below
/// roundoff relative to the L2 norm of h u on the sphere are set to zero.
inline Eigen::MatrixXcd perturbation_samples(const PerturbationSpec& h, const FieldSample& field,
                                             const Eigen::MatrixXcd& proj) {
  field.require_shape();
  const int nr = field.radii(), nn = field.nodes();
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(nr, proj.cols());
  if (h.is_zero()) return out;
  const std::vector<cplx> f = h.factor_on(field.angular);
  Eigen::MatrixXcd hu(nr, nn);
  for (int i = 0; i < nr; ++i) {
    const cplx amp = h.c * field.radial.pow(i, h.radial_power());
    for (int j = 0; j < nn; ++j) hu(i, j) = amp * f[j] * field.u(i, j);
  }
  out = hu * proj;
  for (int i = 0; i < nr; ++i) {
    double norm2 = 0.0;
    for (int j = 0; j < nn; ++j) norm2 += field.angular.node(j).weight * std::norm(hu(i, j));
    const double floor = 1e-13 * std::sqrt(norm2);
    for (int k = 0; k < out.cols(); ++k)
      if (std::abs(out(i, k)) <= floor) out(i, k) = 0.0;
  }
  return out;
}

inline Eigen::MatrixXcd perturbation_samples(const PerturbationSpec& h, const FieldSample& field,
                                             const AngularSpectrum& s, int count) {
  field.angular.require_resolves(s.truncation);
  return perturbation_samples(h, field, projector(mode_table(s, field.angular, count), field.angular));
}

/// Prescribed value of mode k (1-based) at the boundary radius.
struct BoundaryDatum {
  int k = 1;
  cplx value = 0.0;
};

struct FieldProblem {
  Side side = Side::interior;
  LogGrid grid;
  AngularGrid angular;
  PerturbationSpec h;
  std::vector<BoundaryDatum> boundary;
  int modes = 16;
  double tol_fp = 1e-13;
  int max_iter = 50;
};

struct FieldSolution {
  ModalSolution modal;
  FieldSample field;
  std::vector<double> residuals;  // relative sup-norm change per Picard step
  int iterations = 0;
};

/// Builds the solution of L u = h u with the given boundary modes: homogeneous
/// start, then Picard iteration on (forcing, radial solve) until successive
/// fields agree to tol_fp in relative sup norm.
inline FieldSolution solve_field(const AngularSpectrum& s, const FieldProblem& p) {
  if (p.angular.dimension() != s.dimension)
    throw Error(ErrorKind::grid_mismatch, "angular grid dimension differs from the spectrum");
  const int K = std::min(p.modes, s.count());
  if (K < 1) throw Error(ErrorKind::out_of_range, "no modes requested");
  std::vector<cplx> bc(K, 0.0);
  for (const auto& b : p.boundary) {
    if (b.k < 1 || b.k > K)
      throw Error(ErrorKind::out_of_range, "boundary mode " + std::to_string(b.k) +
                                               " outside the retained modes 1.." +
                                               std::to_string(K));
    bc[b.k - 1] += b.value;
  }
  if (!p.h.is_zero()) p.h.validate();
  if (p.h.side != p.side && !p.h.is_zero())
    throw Error(ErrorKind::validation_error, "perturbation side differs from the problem side");

  std::vector<ModalExponents> ex;
  for (int k = 0; k < K; ++k) ex.push_back(characteristic_exponents(s.dimension, s.eigenvalues[k], k + 1));

  const AngularTable table = mode_table(s, p.angular, K);
  p.angular.require_resolves(s.truncation);
  const Eigen::MatrixXcd proj = projector(table, p.angular);
  const int nr = p.grid.size();

  FieldSolution out;
  out.modal.side = p.side;
  out.modal.grid = p.grid;
  const std::vector<cplx> none(nr, 0.0);
  for (int k = 0; k < K; ++k) out.modal.modes.push_back(solve_radial_mode(ex[k], none, bc[k], p.grid, p.side));

  if (!p.h.is_zero()) {
    FieldSample current = synthesize_field(table, out.modal, p.angular, s.dimension, false);
    for (int it = 1;; ++it) {
      const Eigen::MatrixXcd zeta = perturbation_samples(p.h, current, proj);
      ModalSolution next;
      next.side = p.side;
      next.grid = p.grid;
      for (int k = 0; k < K; ++k) {
        std::vector<cplx> z(nr);
        for (int i = 0; i < nr; ++i) z[i] = zeta(i, k);
        next.modes.push_back(solve_radial_mode(ex[k], z, bc[k], p.grid, p.side));
      }
      FieldSample updated = synthesize_field(table, next, p.angular, s.dimension, false);
      const double scale = updated.u.cwiseAbs().maxCoeff();
      const double change = (updated.u - current.u).cwiseAbs().maxCoeff() / (scale > 0 ? scale : 1.0);
      out.residuals.push_back(change);
      out.modal = std::move(next);
      current = std::move(updated);
      out.iterations = it;
      if (change < p.tol_fp) break;
      if (it >= p.max_iter)
        throw Error(ErrorKind::non_convergence,
                    "Picard iteration did not converge in " + std::to_string(p.max_iter) +
                        " steps; last relative change " + std::to_string(change));
    }
  }
  out.field = synthesize_field(table, out.modal, p.angular, s.dimension, true);
  return out;
}

/// Recomputes gradient samples from values alone: eighth-order differences in
/// log r and spectral differentiation on the sphere (projection onto the
/// largest basis the angular grid resolves).
inline FieldSample differentiate(FieldSample f) {
  f.require_shape();
  const int nr = f.radii();
  const UniformDerivative d(nr);
  f.du_dr.resize(nr, f.nodes());
  std::vector<cplx> col(nr);
  for (int j = 0; j < f.nodes(); ++j) {
    for (int i = 0; i < nr; ++i) col[i] = f.u(i, j);
    const auto ds = d.apply<cplx>(col, f.radial.h());
    for (int i = 0; i < nr; ++i) f.du_dr(i, j) = ds[i] / f.radial.r(i);
  }
  const int J = f.angular.exact_degree() / 2;
  const GalerkinBasis basis(f.dimension, J);
  const AngularTable full = tabulate_basis(basis, f.angular);
  const Eigen::MatrixXcd coeffs = f.u * projector(full, f.angular);
  for (int c = 0; c < 3; ++c) f.grad_s[c] = coeffs * full.grad[c].transpose();
  f.has_gradient = true;
  return f;
}

/// Lagrange interpolation of field values at an arbitrary radius of the grid.
inline Eigen::RowVectorXcd values_at(const FieldSample& f, double r) {
  const auto [start, w] = f.radial.interpolation_weights(r);
  Eigen::RowVectorXcd row = Eigen::RowVectorXcd::Zero(f.nodes());
  for (std::size_t k = 0; k < w.size(); ++k) row += w[k] * f.u.row(start + static_cast<int>(k));
  return row;
}

inline nlohmann::json to_json(const ModalSolution& s) {
  nlohmann::json j;
  j["side"] = to_string(s.side);
  j["R"] = s.R();
  j["grid"] = {{"r_min", s.grid.r_min()}, {"r_max", s.grid.r_max()}, {"intervals", s.grid.intervals()}};
  nlohmann::json modes = nlohmann::json::array();
  for (const auto& m : s.modes) {
    modes.push_back({{"k", m.exponents.k},
                     {"mu", m.exponents.mu},
                     {"sigma_plus", m.exponents.sigma_plus},
                     {"sigma_minus", m.exponents.sigma_minus},
                     {"boundary", {m.boundary.real(), m.boundary.imag()}}});
  }
  j["modes"] = modes;
  return j;
}

inline nlohmann::json grid_header(const FieldSample& f) {
  nlohmann::json j;
  j["dimension"] = f.dimension;
  j["side"] = to_string(f.side);
  j["radial"] = {{"r_min", f.radial.r_min()}, {"r_max", f.radial.r_max()}, {"intervals", f.radial.intervals()}};
  if (f.dimension == 2)
    j["angular"] = {{"kind", "circle"}, {"nodes", f.angular.n1()}};
  else
    j["angular"] = {{"kind", "sphere"}, {"ntheta", f.angular.n1()}, {"nphi", f.angular.n2()}};
  j["has_gradient"] = f.has_gradient;
  return j;
}

/// Rows (r, angles..., Re u, Im u).
inline void write_csv(std::ostream& os, const FieldSample& f) {
  os.precision(17);
  os << (f.dimension == 2 ? "r,t,re_u,im_u\n" : "r,theta,phi,re_u,im_u\n");
  for (int i = 0; i < f.radii(); ++i)
    for (int j = 0; j < f.nodes(); ++j) {
      const auto& n = f.angular.node(j);
      os << f.radial.r(i) << ',';
      if (f.dimension == 2)
        os << n.t << ',';
      else
        os << n.theta << ',' << n.phi << ',';
      os << f.u(i, j).real() << ',' << f.u(i, j).imag() << '\n';
    }
}

}  // namespace almgren
