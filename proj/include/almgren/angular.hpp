#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <utility>
#include <vector>

#include "almgren/error.hpp"
#include "almgren/quadrature.hpp"
#include "almgren/spherical_harmonics.hpp"

namespace almgren {

using cplx = std::complex<double>;
using Vec3 = std::array<double, 3>;

inline void require_supported_dimension(int dimension) {
  if (dimension != 2 && dimension != 3)
    throw Error(ErrorKind::unsupported_configuration,
                "angular discretisation is implemented for N = 2 and N = 3 only (got N = " +
                    std::to_string(dimension) + ")");
}

/// A quadrature node on S^{N-1}. Points and tangent frames are embedded in
/// R^3 (third component zero when N = 2). For N = 2, e1 is the unit tangent
/// (-sin t, cos t); for N = 3, e1 = e_theta and e2 = e_phi.
struct AngularNode {
  Vec3 x{}, e1{}, e2{};
  double weight = 0.0;
  double t = 0.0, theta = 0.0, phi = 0.0;
};

/// Quadrature grid on the unit circle (uniform trapezoid) or the unit sphere
/// (Gauss-Legendre in cos theta times uniform trapezoid in phi).
class AngularGrid {
 public:
  AngularGrid() = default;

  static AngularGrid circle(int nt) {
    if (nt < 1) throw Error(ErrorKind::out_of_range, "circle grid needs at least one node");
    AngularGrid g;
    g.dimension_ = 2;
    g.n1_ = nt;
    g.n2_ = 1;
    const double w = 2.0 * std::numbers::pi / nt;
    for (int j = 0; j < nt; ++j) {
      AngularNode n;
      n.t = w * j;
      n.x = {std::cos(n.t), std::sin(n.t), 0.0};
      n.e1 = {-std::sin(n.t), std::cos(n.t), 0.0};
      n.weight = w;
      g.nodes_.push_back(n);
    }
    return g;
  }

  static AngularGrid sphere(int ntheta, int nphi) {
    if (ntheta < 1 || nphi < 1) throw Error(ErrorKind::out_of_range, "sphere grid needs nodes");
    AngularGrid g;
    g.dimension_ = 3;
    g.n1_ = ntheta;
    g.n2_ = nphi;
    const GaussRule gl = gauss_legendre(ntheta);
    const double dphi = 2.0 * std::numbers::pi / nphi;
    for (int i = 0; i < ntheta; ++i) {
      const double x = gl.nodes[i];
      const double theta = std::acos(x), st = std::sqrt(std::max(0.0, 1.0 - x * x));
      for (int k = 0; k < nphi; ++k) {
        AngularNode n;
        n.theta = theta;
        n.phi = dphi * k;
        const double cp = std::cos(n.phi), sp = std::sin(n.phi);
        n.x = {st * cp, st * sp, x};
        n.e1 = {x * cp, x * sp, -st};
        n.e2 = {-sp, cp, 0.0};
        n.weight = gl.weights[i] * dphi;
        g.nodes_.push_back(n);
      }
    }
    return g;
  }

  /// Default field grid for Galerkin degree J: resolves products of two
  /// basis functions of degree J with room for a low-degree factor.
  static AngularGrid for_truncation(int dimension, int J) {
    require_supported_dimension(dimension);
    if (dimension == 2) return circle(4 * J);
    return sphere(J + 2, 2 * J + 2);
  }

  int dimension() const { return dimension_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  int n1() const { return n1_; }
  int n2() const { return n2_; }
  const AngularNode& node(int j) const { return nodes_[j]; }
  const std::vector<AngularNode>& nodes() const { return nodes_; }

  /// Largest total degree integrated exactly by this rule.
  int exact_degree() const {
    if (dimension_ == 2) return n1_ - 1;
    return std::min(2 * n1_ - 1, n2_ - 1);
  }

  /// Throws aliasing when products of degree-J basis functions are not
  /// integrated exactly.
  void require_resolves(int J) const {
    if (exact_degree() < 2 * J)
      throw Error(ErrorKind::aliasing,
                  "angular grid with " + std::to_string(size()) +
                      " nodes does not resolve products of degree-" + std::to_string(J) +
                      " basis functions");
  }

  double total_weight() const {
    double s = 0.0;
    for (const auto& n : nodes_) s += n.weight;
    return s;
  }

 private:
  int dimension_ = 0, n1_ = 0, n2_ = 0;
  std::vector<AngularNode> nodes_;
};

/// Orthonormal Galerkin basis on S^{N-1} of degree J:
/// N = 2: e^{ijt}/sqrt(2 pi), |j| <= J, index j + J;
/// N = 3: real spherical harmonics, l <= J, index l^2 + l + m.
class GalerkinBasis {
 public:
  GalerkinBasis(int dimension, int J) : dimension_(dimension), J_(J) {
    require_supported_dimension(dimension);
    if (J < 0) throw Error(ErrorKind::out_of_range, "truncation must be nonnegative");
  }

  int dimension() const { return dimension_; }
  int truncation() const { return J_; }
  int size() const { return dimension_ == 2 ? 2 * J_ + 1 : sh_count(J_); }

  /// Laplace-Beltrami eigenvalue of basis element p (N = 3) or its Fourier
  /// frequency j (N = 2).
  int frequency(int p) const { return p - J_; }
  int degree(int p) const {
    if (dimension_ == 2) return std::abs(p - J_);
    return static_cast<int>(std::sqrt(static_cast<double>(p)) + 1e-9);
  }

  /// Values and ambient tangential gradients of all basis functions at a node.
  void evaluate(const AngularNode& n, std::vector<cplx>& values,
                std::array<std::vector<cplx>, 3>& grad) const {
    const int m = size();
    values.assign(m, 0.0);
    for (auto& g : grad) g.assign(m, 0.0);
    if (dimension_ == 2) {
      const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
      for (int p = 0; p < m; ++p) {
        const int j = p - J_;
        const cplx e = norm * std::polar(1.0, j * n.t);
        values[p] = e;
        const cplx d = cplx(0.0, j) * e;
        for (int c = 0; c < 3; ++c) grad[c][p] = d * n.e1[c];
      }
      return;
    }
    const RealHarmonics y(J_, n.theta, n.phi);
    for (int p = 0; p < m; ++p) {
      values[p] = y.y[p];
      for (int c = 0; c < 3; ++c) grad[c][p] = y.dtheta[p] * n.e1[c] + y.dphi_over_sin[p] * n.e2[c];
    }
  }

 private:
  int dimension_, J_;
};

/// Angular functions spanned by coefficient columns of a Galerkin basis,
/// tabulated on a grid: values(node, col) and ambient tangential gradient
/// components grad[c](node, col).
struct AngularTable {
  Eigen::MatrixXcd values;
  std::array<Eigen::MatrixXcd, 3> grad;
  int columns() const { return static_cast<int>(values.cols()); }
};

inline AngularTable tabulate(const GalerkinBasis& basis, const AngularGrid& grid,
                             const Eigen::MatrixXcd& coefficients) {
  if (grid.dimension() != basis.dimension())
    throw Error(ErrorKind::grid_mismatch, "basis and grid dimensions differ");
  if (coefficients.rows() != basis.size())
    throw Error(ErrorKind::grid_mismatch, "coefficient rows do not match basis size");
  const int nn = grid.size(), k = static_cast<int>(coefficients.cols());
  AngularTable t;
  t.values.resize(nn, k);
  for (auto& g : t.grad) g.resize(nn, k);
  std::vector<cplx> v;
  std::array<std::vector<cplx>, 3> d;
  for (int j = 0; j < nn; ++j) {
    basis.evaluate(grid.node(j), v, d);
    const Eigen::Map<const Eigen::RowVectorXcd> row(v.data(), basis.size());
    t.values.row(j) = row * coefficients;
    for (int c = 0; c < 3; ++c) {
      const Eigen::Map<const Eigen::RowVectorXcd> drow(d[c].data(), basis.size());
      t.grad[c].row(j) = drow * coefficients;
    }
  }
  return t;
}

inline AngularTable tabulate_basis(const GalerkinBasis& basis, const AngularGrid& grid) {
  return tabulate(basis, grid, Eigen::MatrixXcd::Identity(basis.size(), basis.size()));
}

/// Complex function on S^{N-1} given by a finite expansion: Fourier
/// coefficients of e^{int} (N = 2) or real spherical-harmonic coefficients
/// keyed by (l, m) (N = 3).
class AngularFunction {
 public:
  AngularFunction() = default;

  static AngularFunction zero(int dimension) {
    require_supported_dimension(dimension);
    AngularFunction f;
    f.dimension_ = dimension;
    return f;
  }
  static AngularFunction constant(int dimension, cplx value) {
    AngularFunction f = zero(dimension);
    if (value == cplx(0.0)) return f;
    if (dimension == 2)
      f.trig_[0] = value;
    else
      f.harm_[{0, 0}] = value * std::sqrt(4.0 * std::numbers::pi);
    return f;
  }
  static AngularFunction trig(std::map<int, cplx> coefficients) {
    AngularFunction f = zero(2);
    for (const auto& [n, c] : coefficients)
      if (c != cplx(0.0)) f.trig_[n] += c;
    return f;
  }
  static AngularFunction harmonics(const std::map<std::pair<int, int>, cplx>& coefficients) {
    AngularFunction f = zero(3);
    for (const auto& [lm, c] : coefficients) {
      if (lm.first < 0 || std::abs(lm.second) > lm.first)
        throw Error(ErrorKind::invalid_coefficients,
                    "harmonic index (" + std::to_string(lm.first) + ", " +
                        std::to_string(lm.second) + ") is not valid");
      if (c != cplx(0.0)) f.harm_[lm] += c;
    }
    return f;
  }

  int dimension() const { return dimension_; }
  bool is_zero() const { return trig_.empty() && harm_.empty(); }
  bool is_constant() const {
    if (dimension_ == 2) return trig_.empty() || (trig_.size() == 1 && trig_.count(0));
    return harm_.empty() || (harm_.size() == 1 && harm_.count({0, 0}));
  }
  int degree() const {
    int d = 0;
    for (const auto& [n, c] : trig_) d = std::max(d, std::abs(n));
    for (const auto& [lm, c] : harm_) d = std::max(d, lm.first);
    return d;
  }

  /// Fourier coefficient (1/2pi) int f e^{-int} dt (N = 2).
  cplx fourier(int n) const {
    auto it = trig_.find(n);
    return it == trig_.end() ? cplx(0.0) : it->second;
  }
  const std::map<int, cplx>& trig_coefficients() const { return trig_; }
  const std::map<std::pair<int, int>, cplx>& harmonic_coefficients() const { return harm_; }

  cplx operator()(const AngularNode& n) const {
    if (dimension_ == 2) {
      cplx s = 0.0;
      for (const auto& [k, c] : trig_) s += c * std::polar(1.0, k * n.t);
      return s;
    }
    if (harm_.empty()) return 0.0;
    const RealHarmonics y(degree(), n.theta, n.phi);
    cplx s = 0.0;
    for (const auto& [lm, c] : harm_) s += c * y.y[sh_index(lm.first, lm.second)];
    return s;
  }

  /// Largest |Im f| relative to 1 + max|f| over a grid that resolves f.
  double imaginary_defect() const {
    if (is_zero()) return 0.0;
    const int d = degree();
    const AngularGrid g = dimension_ == 2 ? AngularGrid::circle(4 * d + 4)
                                          : AngularGrid::sphere(2 * d + 2, 4 * d + 4);
    double im = 0.0, mag = 0.0;
    for (const auto& n : g.nodes()) {
      const cplx v = (*this)(n);
      im = std::max(im, std::abs(v.imag()));
      mag = std::max(mag, std::abs(v));
    }
    return im / (1.0 + mag);
  }

  /// Coefficients of this function in a Galerkin basis of degree J.
  Eigen::VectorXcd galerkin_coefficients(int J) const {
    const GalerkinBasis basis(dimension_, J);
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(basis.size());
    if (degree() > J)
      throw Error(ErrorKind::out_of_range, "function degree exceeds basis truncation");
    if (dimension_ == 2) {
      for (const auto& [n, c] : trig_) v[n + J] = c * std::sqrt(2.0 * std::numbers::pi);
    } else {
      for (const auto& [lm, c] : harm_) v[sh_index(lm.first, lm.second)] = c;
    }
    return v;
  }

 private:
  int dimension_ = 0;
  std::map<int, cplx> trig_;
  std::map<std::pair<int, int>, cplx> harm_;
};

}  // namespace almgren
