#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <utility>
#include <vector>

#include "almgren/angular.hpp"
#include "almgren/error.hpp"
#include "almgren/potential.hpp"

namespace almgren {

/// Galerkin matrix of the angular operator together with the basis it lives in.
struct AngularMatrix {
  int dimension = 2;
  int truncation = 0;
  Eigen::MatrixXcd matrix;

  GalerkinBasis basis() const { return GalerkinBasis(dimension, truncation); }
};

struct MultiplicityBlock {
  int j0 = 1;  // 1-based index of the first eigenvalue in the block
  int m = 1;
};

struct AngularSpectrum {
  int dimension = 2;
  int truncation = 0;
  std::vector<double> eigenvalues;
  Eigen::MatrixXcd eigenvectors;  // basis size x K, orthonormal columns
  std::vector<MultiplicityBlock> blocks;

  int count() const { return static_cast<int>(eigenvalues.size()); }
  GalerkinBasis basis() const { return GalerkinBasis(dimension, truncation); }
  const MultiplicityBlock& block_of(int k) const {
    for (const auto& b : blocks)
      if (k >= b.j0 && k < b.j0 + b.m) return b;
    throw Error(ErrorKind::out_of_range, "eigenvalue index " + std::to_string(k) + " out of range");
  }
};

inline double default_multiplicity_tolerance(double mu) { return 1e-8 * (1.0 + std::abs(mu)); }

/// Fourier coefficients of the product of two trigonometric polynomials.
inline std::map<int, cplx> trig_product(const AngularFunction& f, const AngularFunction& g) {
  std::map<int, cplx> out;
  for (const auto& [n, a] : f.trig_coefficients())
    for (const auto& [k, b] : g.trig_coefficients()) out[n + k] += a * b;
  return out;
}

/// Matrix of the form q(psi, phi) = int (grad psi + i A psi) . conj(grad phi + i A phi) - a psi conj(phi)
/// in the Galerkin basis, entry (k, j) = q(e_j, e_k).
inline AngularMatrix assemble_angular_matrix(const AngularPotential& pot, int J) {
  if (J < 1) throw Error(ErrorKind::out_of_range, "truncation must be at least 1");
  require_supported_dimension(pot.dimension());
  AngularMatrix out;
  out.dimension = pot.dimension();
  out.truncation = J;
  const GalerkinBasis basis(pot.dimension(), J);
  const int n = basis.size();
  out.matrix = Eigen::MatrixXcd::Zero(n, n);

  if (pot.dimension() == 2) {
    const AngularFunction& al = pot.magnetic();
    const AngularFunction& a = pot.electric();
    const std::map<int, cplx> al2 = trig_product(al, al);
    auto coef = [](const std::map<int, cplx>& m, int k) {
      auto it = m.find(k);
      return it == m.end() ? cplx(0.0) : it->second;
    };
    for (int k = -J; k <= J; ++k) {
      for (int j = -J; j <= J; ++j) {
        const int d = k - j;
        cplx v = (j == k ? double(j) * k : 0.0) + double(j + k) * al.fourier(d) + coef(al2, d) -
                 a.fourier(d);
        out.matrix(k + J, j + J) = v;
      }
    }
  } else {
    for (int p = 0; p < n; ++p) {
      const int l = basis.degree(p);
      out.matrix(p, p) = double(l) * (l + 1);
    }
    const AngularFunction& a = pot.electric();
    if (!a.is_zero()) {
      // product Gauss x trapezoid rule exact for Y_p a Y_q
      const int L = a.degree();
      const int ntheta = std::max(2 * J + 2, J + (L + 1) / 2 + 1);
      const int nphi = std::max(2 * J + 2, 2 * J + L + 1);
      const AngularGrid g = AngularGrid::sphere(ntheta, nphi);
      Eigen::MatrixXd B(g.size(), n);
      Eigen::VectorXd wa(g.size());
      for (int q = 0; q < g.size(); ++q) {
        const auto& node = g.node(q);
        const RealHarmonics y(J, node.theta, node.phi);
        for (int p = 0; p < n; ++p) B(q, p) = y.y[p];
        wa[q] = node.weight * pot.a_at(node);
      }
      Eigen::MatrixXd coupling = B.transpose() * (wa.asDiagonal() * B);
      out.matrix.real() -= coupling;
    }
  }
  return out;
}

namespace detail {

/// Deterministic orthonormal basis of span(V): pivoted Gram-Schmidt on the
/// projector V V^*, choosing at each step the coordinate direction with the
/// largest remaining weight (ties to the lowest index).
inline Eigen::MatrixXcd canonical_block_basis(const Eigen::MatrixXcd& V) {
  const int n = static_cast<int>(V.rows()), m = static_cast<int>(V.cols());
  Eigen::MatrixXcd P = V * V.adjoint();
  Eigen::MatrixXcd out(n, m);
  for (int c = 0; c < m; ++c) {
    int best = 0;
    double best_w = -1.0;
    for (int i = 0; i < n; ++i) {
      const double w = P(i, i).real();
      if (w > best_w * (1.0 + 1e-10) + 1e-14) {
        best_w = w;
        best = i;
      }
    }
    Eigen::VectorXcd v = P.col(best);
    v /= v.norm();
    out.col(c) = v;
    P -= v * v.adjoint();
  }
  return out;
}

inline void fix_phase(Eigen::Ref<Eigen::VectorXcd> v) {
  int best = 0;
  double mag = -1.0;
  for (int i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]);
    if (a > mag * (1.0 + 1e-10) + 1e-14) {
      mag = a;
      best = i;
    }
  }
  if (mag > 0.0) v *= std::conj(v[best]) / mag;
}

}  // namespace detail

/// K smallest eigenpairs of a Hermitian Galerkin matrix, with degenerate
/// eigenspaces given a canonical basis and each eigenvector phase-fixed so its
/// largest coefficient is real positive.
inline AngularSpectrum eigendecompose(const AngularMatrix& am, int K) {
  const int n = static_cast<int>(am.matrix.rows());
  if (K < 1 || K > n)
    throw Error(ErrorKind::out_of_range,
                "requested " + std::to_string(K) + " eigenpairs from a matrix of size " +
                    std::to_string(n));
  Eigen::VectorXd values;
  Eigen::MatrixXcd vectors;
  const double scale = am.matrix.cwiseAbs().maxCoeff();
  if (am.matrix.imag().cwiseAbs().maxCoeff() == 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(am.matrix.real());
    if (es.info() != Eigen::Success)
      throw Error(ErrorKind::numerical_failure,
                  "real symmetric eigensolver failed for a matrix of size " + std::to_string(n));
    values = es.eigenvalues();
    vectors = es.eigenvectors().cast<cplx>();
  } else {
    const Eigen::MatrixXcd H = 0.5 * (am.matrix + am.matrix.adjoint());
    if ((H - am.matrix).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + scale))
      throw Error(ErrorKind::numerical_failure, "angular matrix is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
    if (es.info() != Eigen::Success)
      throw Error(ErrorKind::numerical_failure,
                  "Hermitian eigensolver failed for a matrix of size " + std::to_string(n));
    values = es.eigenvalues();
    vectors = es.eigenvectors();
  }

  // group the full spectrum first so a block cut at K keeps a canonical basis
  std::vector<std::pair<int, int>> groups;
  for (int i = 0; i < n;) {
    int j = i + 1;
    while (j < n && values[j] - values[i] <= default_multiplicity_tolerance(values[i])) ++j;
    groups.emplace_back(i, j - i);
    i = j;
  }
  AngularSpectrum s;
  s.dimension = am.dimension;
  s.truncation = am.truncation;
  s.eigenvectors.resize(n, K);
  for (const auto& [start, size] : groups) {
    if (start >= K) break;
    Eigen::MatrixXcd block = vectors.middleCols(start, size);
    if (size > 1) block = detail::canonical_block_basis(block);
    double mean = 0.0;
    for (int c = 0; c < size; ++c) mean += values[start + c];
    mean /= size;
    const int kept = std::min(size, K - start);
    for (int c = 0; c < kept; ++c) {
      Eigen::VectorXcd v = block.col(c);
      detail::fix_phase(v);
      s.eigenvectors.col(start + c) = v;
      s.eigenvalues.push_back(size > 1 ? mean : values[start + c]);
    }
    s.blocks.push_back({start + 1, kept});
  }
  return s;
}

inline AngularSpectrum angular_spectrum(const AngularPotential& pot, int J, int K) {
  return eigendecompose(assemble_angular_matrix(pot, J), K);
}

inline int default_truncation(int dimension) { return dimension == 2 ? 64 : 32; }

inline double mu1(const AngularSpectrum& s) {
  if (s.eigenvalues.empty()) throw Error(ErrorKind::out_of_range, "empty spectrum");
  return s.eigenvalues.front();
}

struct Eigenspace {
  int j0 = 1, m = 1;
  Eigen::MatrixXcd vectors;
};

/// Multiplicity block containing the 1-based eigenvalue index k0.
inline Eigenspace eigenspace(const AngularSpectrum& s, int k0) {
  if (k0 < 1 || k0 > s.count())
    throw Error(ErrorKind::out_of_range, "eigenvalue index " + std::to_string(k0) +
                                             " outside 1.." + std::to_string(s.count()));
  const auto& b = s.block_of(k0);
  return {b.j0, b.m, s.eigenvectors.middleCols(b.j0 - 1, b.m)};
}

/// K smallest values of (alpha - j)^2 - a0 over integers j.
inline std::vector<double> closed_form_ab_spectrum(double alpha, double a0, int K) {
  if (K < 1) throw Error(ErrorKind::out_of_range, "count must be positive");
  const long c = std::lround(alpha);
  std::vector<double> v;
  for (long j = c - K - 1; j <= c + K + 1; ++j) v.push_back((alpha - j) * (alpha - j) - a0);
  std::sort(v.begin(), v.end());
  v.resize(K);
  return v;
}

/// max |(M - mu_k) v_k| over the returned eigenpairs.
inline double galerkin_residual(const AngularMatrix& am, const AngularSpectrum& s) {
  double r = 0.0;
  for (int k = 0; k < s.count(); ++k)
    r = std::max(r, (am.matrix * s.eigenvectors.col(k) - s.eigenvalues[k] * s.eigenvectors.col(k))
                        .norm());
  return r;
}

inline nlohmann::json to_json(const AngularSpectrum& s) {
  nlohmann::json j;
  j["mu"] = s.eigenvalues;
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : s.blocks) blocks.push_back({b.j0, b.m});
  j["blocks"] = blocks;
  j["truncation"] = s.truncation;
  j["dimension"] = s.dimension;
  return j;
}

}  // namespace almgren
