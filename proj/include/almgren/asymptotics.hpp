#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "almgren/angular_spectrum.hpp"
#include "almgren/frequency.hpp"
#include "almgren/modal_field.hpp"

namespace almgren {

enum class RegularityClass { unbounded, bounded, holder, lipschitz };

inline const char* to_string(RegularityClass c) {
  switch (c) {
    case RegularityClass::unbounded: return "unbounded";
    case RegularityClass::bounded: return "bounded";
    case RegularityClass::holder: return "holder";
    case RegularityClass::lipschitz: return "lipschitz";
  }
  return "unknown";
}

struct Regularity {
  RegularityClass kind = RegularityClass::bounded;
  double exponent = 0.0;
  int dimension = 2;
  std::string label() const {
    if (kind == RegularityClass::holder) {
      std::ostringstream os;
      os << "Holder(" << exponent << ")";
      return os.str();
    }
    if (kind == RegularityClass::lipschitz) return "Lipschitz";
    if (kind == RegularityClass::unbounded) return "unbounded-at-origin";
    return "bounded";
  }
};

/// Local regularity at the singular point implied by u ~ |x|^gamma psi:
/// C^{0,gamma} for 0 < gamma < 1, Lipschitz for gamma >= 1, unbounded for
/// gamma < 0. gamma = 0 gives a bounded, generally discontinuous, profile.
inline Regularity classify_regularity(double gamma, int dimension) {
  if (!std::isfinite(gamma)) throw Error(ErrorKind::validation_error, "exponent must be finite");
  Regularity r;
  r.exponent = gamma;
  r.dimension = dimension;
  if (gamma < 0.0) r.kind = RegularityClass::unbounded;
  else if (gamma == 0.0) r.kind = RegularityClass::bounded;
  else if (gamma < 1.0) r.kind = RegularityClass::holder;
  else r.kind = RegularityClass::lipschitz;
  return r;
}

inline nlohmann::json to_json(const Regularity& r) {
  return {{"class", to_string(r.kind)},
          {"label", r.label()},
          {"exponent", r.exponent},
          {"strong_unique_continuation", true}};
}

struct AsymptoticProfile {
  double gamma = 0.0;  // decay exponent gamma~ for exterior profiles
  int k0 = 1;
  MultiplicityBlock block;
  std::vector<cplx> beta;
  double R = 1.0;
  Side side = Side::interior;
  int dimension = 2;
  Regularity regularity;

  double beta_norm() const {
    double s = 0.0;
    for (const auto& b : beta) s += std::norm(b);
    return std::sqrt(s);
  }
};

constexpr double kBlockMatchTolerance = 1e-4;

/// Spectrum block whose interior exponent sigma+ (or exterior decay exponent
/// -sigma-) equals gamma to kBlockMatchTolerance.
inline MultiplicityBlock match_block(const AngularSpectrum& s, double gamma, Side side,
                                     double tol = kBlockMatchTolerance) {
  double nearest = std::numeric_limits<double>::infinity();
  for (const auto& b : s.blocks) {
    const auto ex = characteristic_exponents(s.dimension, s.eigenvalues[b.j0 - 1], b.j0);
    const double g = side == Side::interior ? ex.sigma_plus : -ex.sigma_minus;
    nearest = std::min(nearest, std::abs(g - gamma));
    if (std::abs(g - gamma) <= tol) {
      if (b.j0 + b.m - 1 > s.count())
        throw Error(ErrorKind::no_eigenvalue_match, "matched block is truncated by the computed spectrum");
      return b;
    }
  }
  throw Error(ErrorKind::no_eigenvalue_match,
              "exponent " + std::to_string(gamma) + " matches no eigenvalue block (nearest distance " +
                  std::to_string(nearest) + ")");
}

namespace detail {

/// Projections of the field and of h u onto the block's eigenfunctions.
struct BlockProjection {
  Eigen::MatrixXcd proj;   // nodes x block size, w conj(psi)
  Eigen::MatrixXcd table;  // nodes x block size, psi
  AngularTable full;
};

inline BlockProjection block_projection(const AngularSpectrum& s, const AngularGrid& g,
                                        const MultiplicityBlock& b) {
  g.require_resolves(s.truncation);
  BlockProjection out;
  out.full = mode_table(s, g, b.j0 + b.m - 1);
  out.table = out.full.values.rightCols(b.m);
  out.proj = projector(out.full, g).rightCols(b.m);
  return out;
}

inline cplx interpolate(const std::vector<cplx>& v, const LogGrid& g, double r) {
  const auto [start, w] = g.interpolation_weights(r);
  cplx out = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) out += w[k] * v[start + k];
  return out;
}

}  // namespace detail

/// beta_i = <R^{-gamma} u(R.) + int_0^R (h u)(s.) (s^{1-gamma} - s^{gamma+N-1} / R^{2gamma+N-2}) ds
///          / (2gamma+N-2), psi_i> for the eigenspace block matching gamma.
inline AsymptoticProfile extract_interior_coefficients(const FieldSample& f, const AngularSpectrum& s,
                                                       double gamma, double R, const PerturbationSpec& h) {
  if (f.side != Side::interior)
    throw Error(ErrorKind::validation_error, "interior coefficients need an interior field");
  const int N = f.dimension;
  const double k = 2.0 * gamma + N - 2.0;
  if (std::abs(k) < 1e-12)
    throw Error(ErrorKind::degenerate_exponent, "2 gamma + N - 2 = 0: the coefficient formula degenerates");
  AsymptoticProfile p;
  p.side = Side::interior;
  p.gamma = gamma;
  p.R = R;
  p.dimension = N;
  p.block = match_block(s, gamma, Side::interior);
  p.k0 = p.block.j0;
  p.regularity = classify_regularity(gamma, N);
  const auto bp = detail::block_projection(s, f.angular, p.block);

  const Eigen::RowVectorXcd uR = values_at(f, R);
  const Eigen::RowVectorXcd lead = std::pow(R, -gamma) * (uR * bp.proj);
  p.beta.assign(p.block.m, 0.0);
  for (int i = 0; i < p.block.m; ++i) p.beta[i] = lead[i];
  if (h.is_zero()) return p;

  const Eigen::MatrixXcd zeta = perturbation_samples(h, f, bp.proj);
  const LogGrid& g = f.radial;
  const CumulativeIntegrator integ(g.size());
  const double RN = std::pow(R, k);
  for (int i = 0; i < p.block.m; ++i) {
    std::vector<cplx> f1(g.size()), f2(g.size());
    for (int n = 0; n < g.size(); ++n) {
      f1[n] = g.pow(n, 2.0 - gamma) * zeta(n, i);
      f2[n] = g.pow(n, gamma + N) * zeta(n, i);
    }
    std::vector<cplx> c1 = integ.cumulative<cplx>(f1, g.h());
    std::vector<cplx> c2 = integ.cumulative<cplx>(f2, g.h());
    const cplx t1 = power_law_tail(f1, g.h(), TailEnd::lower);
    const cplx t2 = power_law_tail(f2, g.h(), TailEnd::lower);
    const cplx I1 = detail::interpolate(c1, g, R) + t1;
    const cplx I2 = detail::interpolate(c2, g, R) + t2;
    p.beta[i] += (I1 - I2 / RN) / k;
  }
  return p;
}

/// beta~_i = <R^{gamma} u(R.) + int_R^inf (h u)(s.) (s^{gamma+1} - R^{2gamma-N+2} s^{-gamma+N-1}) ds
///           / (2gamma-N+2), psi_i>, gamma the exterior decay exponent.
inline AsymptoticProfile extract_exterior_coefficients(const FieldSample& f, const AngularSpectrum& s,
                                                       double gamma, double R, const PerturbationSpec& h) {
  if (f.side != Side::exterior)
    throw Error(ErrorKind::validation_error, "exterior coefficients need an exterior field");
  const int N = f.dimension;
  const double k = 2.0 * gamma - N + 2.0;
  if (std::abs(k) < 1e-12)
    throw Error(ErrorKind::degenerate_exponent, "2 gamma - N + 2 = 0: the coefficient formula degenerates");
  AsymptoticProfile p;
  p.side = Side::exterior;
  p.gamma = gamma;
  p.R = R;
  p.dimension = N;
  p.block = match_block(s, gamma, Side::exterior);
  p.k0 = p.block.j0;
  // decay like |x|^{-gamma} at infinity; the Kelvin image behaves like |y|^{gamma - N + 2} at 0
  p.regularity = classify_regularity(gamma - N + 2.0, N);
  const auto bp = detail::block_projection(s, f.angular, p.block);

  const Eigen::RowVectorXcd uR = values_at(f, R);
  const Eigen::RowVectorXcd lead = std::pow(R, gamma) * (uR * bp.proj);
  p.beta.assign(p.block.m, 0.0);
  for (int i = 0; i < p.block.m; ++i) p.beta[i] = lead[i];
  if (h.is_zero()) return p;

  const Eigen::MatrixXcd zeta = perturbation_samples(h, f, bp.proj);
  const LogGrid& g = f.radial;
  const CumulativeIntegrator integ(g.size());
  const double RK = std::pow(R, k);
  for (int i = 0; i < p.block.m; ++i) {
    std::vector<cplx> f1(g.size()), f2(g.size());
    for (int n = 0; n < g.size(); ++n) {
      f1[n] = g.pow(n, gamma + 2.0) * zeta(n, i);
      f2[n] = g.pow(n, N - gamma) * zeta(n, i);
    }
    std::vector<cplx> c1 = integ.cumulative_from_end<cplx>(f1, g.h());
    std::vector<cplx> c2 = integ.cumulative_from_end<cplx>(f2, g.h());
    const cplx t1 = power_law_tail(f1, g.h(), TailEnd::upper);
    const cplx t2 = power_law_tail(f2, g.h(), TailEnd::upper);
    const cplx I1 = detail::interpolate(c1, g, R) + t1;
    const cplx I2 = detail::interpolate(c2, g, R) + t2;
    p.beta[i] += (I1 - RK * I2) / k;
  }
  return p;
}

inline nlohmann::json to_json(const AsymptoticProfile& p) {
  nlohmann::json beta = nlohmann::json::array();
  for (const auto& b : p.beta) beta.push_back({b.real(), b.imag()});
  return {{"gamma", p.gamma},
          {"k0", p.k0},
          {"block", {p.block.j0, p.block.m}},
          {"beta", beta},
          {"R", p.R},
          {"side", to_string(p.side)},
          {"regularity", to_json(p.regularity)}};
}

struct BlowupResult {
  std::vector<double> lambdas;
  std::vector<double> distances;  // sup over the sphere
  Eigen::MatrixXcd profiles;      // one row per lambda
  double rate = 0.0;              // fitted d log distance / d log(distance to the singular point)
};

namespace detail {

/// Least-squares slope of log d against log t, skipping vanishing distances.
inline double log_log_slope(const std::vector<double>& t, const std::vector<double>& d) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(d[i] > 0.0)) continue;
    const double x = std::log(t[i]), y = std::log(d[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline double blowup_scale(const AsymptoticProfile& p, double lambda) {
  return p.side == Side::interior ? std::pow(lambda, -p.gamma) : std::pow(lambda, p.gamma);
}

}  // namespace detail

/// lambda^{-gamma} u(lambda theta) (interior) or lambda^{gamma} u(lambda theta)
/// (exterior) against sum beta_i psi_i, in sup norm over the angular nodes.
/// The rate is the decay exponent of the distance in lambda (interior) or
/// 1/lambda (exterior).
inline BlowupResult blowup_profile(const FieldSample& f, const AngularSpectrum& s,
                                   const AsymptoticProfile& p, const std::vector<double>& lambdas) {
  const auto bp = detail::block_projection(s, f.angular, p.block);
  Eigen::VectorXcd beta(p.block.m);
  for (int i = 0; i < p.block.m; ++i) beta[i] = p.beta[i];
  const Eigen::VectorXcd target = bp.table * beta;
  BlowupResult out;
  out.lambdas = lambdas;
  out.profiles.resize(static_cast<int>(lambdas.size()), f.nodes());
  std::vector<double> t;
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    const Eigen::RowVectorXcd row = detail::blowup_scale(p, lambdas[l]) * values_at(f, lambdas[l]);
    out.profiles.row(static_cast<int>(l)) = row;
    out.distances.push_back((row.transpose() - target).cwiseAbs().maxCoeff());
    t.push_back(approach_variable(lambdas[l], p.side));
  }
  out.rate = detail::log_log_slope(t, out.distances);
  return out;
}

/// lambda^{1-gamma} grad u(lambda theta) against
/// sum beta_i (gamma psi_i theta + grad_S psi_i) (interior; -gamma and
/// lambda^{1+gamma} for exterior profiles), sup over nodes of the Euclidean
/// norm of the difference.
inline BlowupResult gradient_blowup_profile(const FieldSample& f, const AngularSpectrum& s,
                                            const AsymptoticProfile& p,
                                            const std::vector<double>& lambdas) {
  f.require_gradient();
  const auto bp = detail::block_projection(s, f.angular, p.block);
  Eigen::VectorXcd beta = Eigen::VectorXcd::Zero(bp.full.columns());
  for (int i = 0; i < p.block.m; ++i) beta[p.block.j0 - 1 + i] = p.beta[i];
  const double g = p.side == Side::interior ? p.gamma : -p.gamma;
  const Eigen::VectorXcd psi = bp.full.values * beta;
  std::array<Eigen::VectorXcd, 3> target;
  for (int c = 0; c < 3; ++c) {
    target[c] = bp.full.grad[c] * beta;
    for (int j = 0; j < f.nodes(); ++j) target[c][j] += g * psi[j] * f.angular.node(j).x[c];
  }
  BlowupResult out;
  out.lambdas = lambdas;
  out.profiles.resize(static_cast<int>(lambdas.size()), f.nodes());
  std::vector<double> t;
  for (double lambda : lambdas) {
    const auto [start, w] = f.radial.interpolation_weights(lambda);
    Eigen::RowVectorXcd ur = Eigen::RowVectorXcd::Zero(f.nodes());
    std::array<Eigen::RowVectorXcd, 3> gs;
    for (auto& x : gs) x = Eigen::RowVectorXcd::Zero(f.nodes());
    for (std::size_t k = 0; k < w.size(); ++k) {
      const int i = start + static_cast<int>(k);
      ur += w[k] * f.du_dr.row(i);
      for (int c = 0; c < 3; ++c) gs[c] += w[k] * f.grad_s[c].row(i);
    }
    const double scale = lambda * detail::blowup_scale(p, lambda);
    double worst = 0.0;
    for (int j = 0; j < f.nodes(); ++j) {
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const cplx v = scale * (ur[j] * f.angular.node(j).x[c] + gs[c][j] / lambda);
        d2 += std::norm(v - target[c][j]);
      }
      worst = std::max(worst, std::sqrt(d2));
    }
    out.profiles.row(static_cast<int>(out.distances.size())) = scale * ur;
    out.distances.push_back(worst);
    t.push_back(approach_variable(lambda, p.side));
  }
  out.rate = detail::log_log_slope(t, out.distances);
  return out;
}

/// v(y) = |y|^{2-N} u(y/|y|^2) on the reflected grid; interior and exterior
/// swap. Node i of the image corresponds to node (M - i) of the source.
inline FieldSample kelvin_transform(const FieldSample& f) {
  f.require_shape();
  FieldSample v;
  v.dimension = f.dimension;
  v.side = opposite(f.side);
  v.radial = f.radial.inverted();
  v.angular = f.angular;
  const int M = f.radial.intervals(), nn = f.nodes(), N = f.dimension;
  v.u.resize(M + 1, nn);
  v.has_gradient = f.has_gradient;
  if (f.has_gradient) {
    v.du_dr.resize(M + 1, nn);
    for (auto& g : v.grad_s) g.resize(M + 1, nn);
  }
  for (int i = 0; i <= M; ++i) {
    const int src = M - i;
    // rho = 1/r exactly in log variables
    const double log_rho = -f.radial.s(src);
    const double p2 = std::exp((2.0 - N) * log_rho);
    v.u.row(i) = p2 * f.u.row(src);
    if (f.has_gradient) {
      const double p1 = std::exp((1.0 - N) * log_rho), p0 = std::exp(-N * log_rho);
      v.du_dr.row(i) = (2.0 - N) * p1 * f.u.row(src) - p0 * f.du_dr.row(src);
      for (int c = 0; c < 3; ++c) v.grad_s[c].row(i) = p2 * f.grad_s[c].row(src);
    }
  }
  return v;
}

/// |y|^{-4} h(y/|y|^2): c |x|^{-2+eps} f maps to c |y|^{-2-eps} f and back.
inline PerturbationSpec kelvin_transform(const PerturbationSpec& h) {
  PerturbationSpec k = h;
  k.side = opposite(h.side);
  return k;
}

/// Largest |N_v(r) - (N~_u(1/r) - N + 2)| over the given radii of the image.
inline double kelvin_conjugacy_defect(const FieldSample& u, const AngularPotential& pot,
                                      const PerturbationSpec& h, const std::vector<double>& radii) {
  const FieldSample v = kelvin_transform(u);
  const FrequencyProfile pu = frequency_profile(u, pot, h);
  const FrequencyProfile pv = frequency_profile(v, pot, kelvin_transform(h));
  std::vector<double> inv;
  for (double r : radii) inv.push_back(1.0 / r);
  const auto nv = frequency_at(pv, radii);
  const auto nu = frequency_at(pu, inv);
  double worst = 0.0;
  for (std::size_t i = 0; i < radii.size(); ++i)
    worst = std::max(worst, std::abs(nv[i] - (nu[i] - u.dimension + 2.0)));
  return worst;
}

}  // namespace almgren
