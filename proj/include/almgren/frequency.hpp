#pragma once

#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <ostream>
#include <random>
#include <vector>

#include "almgren/modal_field.hpp"
#include "almgren/potential.hpp"
#include "almgren/radial.hpp"

namespace almgren {

/// Sphere integrals of the energy densities of a field at every grid radius.
/// All quantities are integrals over the unit sphere of
///   mass:     |u|^2
///   energy:   |du/dr|^2 + r^-2 |grad_S u + i A u|^2 - a |u|^2 / r^2
///   coupling: Re(h) |u|^2
///   normal:   |du/dr|^2
///   virial:   Re(h u r conj(du/dr))
struct SphereDensities {
  std::vector<double> mass, energy, coupling, normal, virial;
};

inline SphereDensities sphere_densities(const FieldSample& f, const AngularPotential& pot,
                                        const PerturbationSpec& h) {
  f.require_shape();
  f.require_gradient();
  if (pot.dimension() != f.dimension)
    throw Error(ErrorKind::grid_mismatch, "potential and field dimensions differ");
  const int nr = f.radii(), nn = f.nodes();
  std::vector<Vec3> A(nn);
  std::vector<double> a(nn), w(nn);
  std::vector<cplx> hf = h.factor_on(f.angular);
  for (int j = 0; j < nn; ++j) {
    const auto& node = f.angular.node(j);
    A[j] = pot.magnetic_vector(node);
    a[j] = pot.a_at(node);
    w[j] = node.weight;
  }
  SphereDensities d;
  for (auto* v : {&d.mass, &d.energy, &d.coupling, &d.normal, &d.virial}) v->assign(nr, 0.0);
  const bool perturbed = !h.is_zero();
  for (int i = 0; i < nr; ++i) {
    const double r = f.radial.r(i), r2 = r * r;
    const cplx hr = perturbed ? h.c * f.radial.pow(i, h.radial_power()) : cplx(0.0);
    for (int j = 0; j < nn; ++j) {
      const cplx u = f.u(i, j), ur = f.du_dr(i, j);
      double tang = 0.0;
      for (int c = 0; c < 3; ++c) tang += std::norm(f.grad_s[c](i, j) + cplx(0.0, A[j][c]) * u);
      const double m = std::norm(u);
      d.mass[i] += w[j] * m;
      d.normal[i] += w[j] * std::norm(ur);
      d.energy[i] += w[j] * (std::norm(ur) + (tang - a[j] * m) / r2);
      if (perturbed) {
        const cplx hv = hr * hf[j];
        d.coupling[i] += w[j] * hv.real() * m;
        d.virial[i] += w[j] * (hv * u * r * std::conj(ur)).real();
      }
    }
  }
  return d;
}

/// How the integral beyond the singular end of the grid is closed: `fitted`
/// requires clean power-law data, `averaged` tolerates noise.
enum class TailClosure { fitted, averaged };

namespace detail {

/// Integral in s = log r of samples F from the singular end to each node:
/// from 0 (interior) or from infinity (exterior), tail closed by power law.
inline std::vector<double> integral_from_singular_end(const std::vector<double>& F, const LogGrid& g,
                                                      Side side,
                                                      TailClosure closure = TailClosure::fitted) {
  std::vector<cplx> f(F.begin(), F.end());
  const CumulativeIntegrator integ(g.size());
  std::vector<cplx> c;
  cplx tail;
  const TailEnd end = side == Side::interior ? TailEnd::lower : TailEnd::upper;
  c = side == Side::interior ? integ.cumulative<cplx>(f, g.h()) : integ.cumulative_from_end<cplx>(f, g.h());
  tail = closure == TailClosure::fitted ? power_law_tail(f, g.h(), end) : averaged_power_tail(f, g.h(), end);
  std::vector<double> out(g.size());
  for (int i = 0; i < g.size(); ++i) out[i] = (c[i] + tail).real();
  return out;
}

inline double interpolate(const std::vector<double>& v, const LogGrid& g, double r) {
  const auto [start, w] = g.interpolation_weights(r);
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * v[start + k];
  return s;
}

}  // namespace detail

/// H, D and N at every node of the field's radial grid (increasing r).
struct FrequencyProfile {
  Side side = Side::interior;
  int dimension = 2;
  LogGrid grid;
  std::vector<double> H, D, N;
  std::vector<double> energy_volume;  // int of the energy density over B_r (or its exterior)
  SphereDensities densities;
  TailClosure closure = TailClosure::fitted;
};

inline FrequencyProfile frequency_profile(const FieldSample& f, const AngularPotential& pot,
                                          const PerturbationSpec& h,
                                          TailClosure closure = TailClosure::fitted) {
  FrequencyProfile p;
  p.side = f.side;
  p.dimension = f.dimension;
  p.grid = f.radial;
  p.densities = sphere_densities(f, pot, h);
  const int n = f.radii(), Nd = f.dimension;
  std::vector<double> G(n), E(n);
  for (int i = 0; i < n; ++i) {
    const double rn = f.radial.pow(i, Nd);
    G[i] = rn * (p.densities.energy[i] - p.densities.coupling[i]);
    E[i] = rn * p.densities.energy[i];
  }
  p.closure = closure;
  const std::vector<double> vol = detail::integral_from_singular_end(G, f.radial, f.side, closure);
  p.energy_volume = detail::integral_from_singular_end(E, f.radial, f.side, closure);
  p.H = p.densities.mass;
  p.D.resize(n);
  p.N.resize(n);
  for (int i = 0; i < n; ++i) {
    p.D[i] = f.radial.pow(i, 2.0 - Nd) * vol[i];
    if (!(p.H[i] > 0.0))
      throw Error(ErrorKind::degenerate_solution,
                  "H(r) vanishes at r = " + std::to_string(f.radial.r(i)) +
                      "; a nontrivial solution has H(r) > 0 for every r");
    p.N[i] = p.D[i] / p.H[i];
  }
  return p;
}

/// H(r) = sum_k |phi_k(r)|^2 from orthonormal modal profiles.
inline double height(const ModalSolution& s, double r) {
  const auto [start, w] = s.grid.interpolation_weights(r);
  double h = 0.0;
  for (const auto& m : s.modes) {
    cplx v = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) v += w[k] * m.phi[start + k];
    h += std::norm(v);
  }
  return h;
}

/// H(r) = r^{1-N} int_{dB_r} |u|^2 at any radius of the grid.
inline double height(const FieldSample& f, double r) {
  const Eigen::RowVectorXcd row = values_at(f, r);
  double s = 0.0;
  for (int j = 0; j < f.nodes(); ++j) s += f.angular.node(j).weight * std::norm(row[j]);
  return s;
}

inline double dirichlet(const FieldSample& f, const AngularPotential& pot, const PerturbationSpec& h,
                        double r) {
  const FrequencyProfile p = frequency_profile(f, pot, h);
  return detail::interpolate(p.D, p.grid, r);
}

struct FrequencyFit {
  double gamma_hat = std::numeric_limits<double>::quiet_NaN();
  double eps_hat = std::numeric_limits<double>::quiet_NaN();
  double gamma_err = 0.0;  // standard error of gamma_hat
  double C = 0.0;
  double rms = 0.0;
  bool eps_identifiable = false;
  int window = 0;
};

/// N(r) on stored radii: decreasing r for interior traces, increasing for exterior.
struct FrequencyTrace {
  Side side = Side::interior;
  std::vector<double> r, H, D, N;
  FrequencyFit fit;
  double drift = 0.0;  // monotonicity correction constant
};

/// Least-squares fit of y ~ gamma + C t^eps, linear in (gamma, C) for fixed eps,
/// with eps located by a coarse scan refined by Brent's method.
inline FrequencyFit fit_power_approach(const std::vector<double>& t, const std::vector<double>& y) {
  FrequencyFit fit;
  const int n = static_cast<int>(t.size());
  fit.window = n;
  if (n < 3) throw Error(ErrorKind::out_of_range, "fit window has fewer than three points");
  const double ymin = *std::min_element(y.begin(), y.end());
  const double ymax = *std::max_element(y.begin(), y.end());
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= n;
  if (ymax - ymin <= 1e-13 * (1.0 + std::abs(mean))) {
    fit.gamma_hat = mean;
    fit.C = 0.0;
    fit.rms = 0.5 * (ymax - ymin);
    return fit;
  }
  double gerr = 0.0;
  auto solve = [&](double eps, double& g, double& c) {
    // normal equations on the centred regressor for conditioning
    std::vector<double> x(n);
    double xm = 0.0;
    for (int i = 0; i < n; ++i) xm += (x[i] = std::pow(t[i], eps));
    xm /= n;
    double sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < n; ++i) {
      sxx += (x[i] - xm) * (x[i] - xm);
      sxy += (x[i] - xm) * (y[i] - mean);
    }
    c = sxx > 0.0 ? sxy / sxx : 0.0;
    g = mean - c * xm;
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = y[i] - g - c * x[i];
      ss += e * e;
    }
    if (n > 3 && sxx > 0.0) gerr = std::sqrt(ss / (n - 3) * (1.0 / n + xm * xm / sxx));
    return ss;
  };
  double g = 0.0, c = 0.0;
  auto objective = [&](double eps) { return solve(eps, g, c); };
  const double lo = 0.01, hi = 6.0;
  const int scan = 300;
  int best = 0;
  double best_v = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= scan; ++k) {
    const double v = objective(lo + (hi - lo) * k / scan);
    if (v < best_v) {
      best_v = v;
      best = k;
    }
  }
  const double a = lo + (hi - lo) * std::max(0, best - 1) / scan;
  const double b = lo + (hi - lo) * std::min(scan, best + 1) / scan;
  const auto res = boost::math::tools::brent_find_minima(objective, a, b, 52);
  fit.eps_hat = res.first;
  solve(fit.eps_hat, g, c);
  fit.gamma_hat = g;
  fit.C = c;
  fit.gamma_err = gerr;
  fit.rms = std::sqrt(res.second / n);
  fit.eps_identifiable = best > 0 && best < scan;
  if (!fit.eps_identifiable) fit.eps_hat = std::numeric_limits<double>::quiet_NaN();
  return fit;
}

/// Indices of the decade nearest the singular end, without the `skip` nodes
/// adjacent to it.
inline std::vector<int> singular_decade(const LogGrid& g, Side side, int skip = 5) {
  std::vector<int> idx;
  for (int i = 0; i < g.size(); ++i) {
    const bool inside = side == Side::interior ? g.r(i) <= 10.0 * g.r_min() * (1 + 1e-12)
                                               : g.r(i) >= 0.1 * g.r_max() * (1 - 1e-12);
    const bool skipped = side == Side::interior ? i < skip : i > g.intervals() - skip;
    if (inside && !skipped) idx.push_back(i);
  }
  return idx;
}

/// Distance to the singular point in the variable where N approaches its limit
/// as a positive power: r for interior, 1/r for exterior problems.
inline double approach_variable(double r, Side side) { return side == Side::interior ? r : 1.0 / r; }

inline FrequencyFit fit_frequency(const FrequencyProfile& p) {
  const auto idx = singular_decade(p.grid, p.side);
  std::vector<double> t, y;
  for (int i : idx) {
    t.push_back(approach_variable(p.grid.r(i), p.side));
    y.push_back(p.N[i]);
  }
  return fit_power_approach(t, y);
}

/// Smallest C2 >= 0 such that N + (2 C2 / eps) t^eps has increments >= -tol
/// towards the regular end on the given nodes (t as in approach_variable).
inline double monotone_correction(const FrequencyProfile& p, double eps, const std::vector<int>& idx,
                                  double tol = 1e-8) {
  double k = 0.0;
  for (std::size_t m = 1; m < idx.size(); ++m) {
    const int i0 = idx[m - 1], i1 = idx[m];
    const double t0 = std::pow(approach_variable(p.grid.r(i0), p.side), eps);
    const double t1 = std::pow(approach_variable(p.grid.r(i1), p.side), eps);
    // moving away from the singular point: t increases
    const double dN = (t1 > t0) ? p.N[i1] - p.N[i0] : p.N[i0] - p.N[i1];
    const double dt = std::abs(t1 - t0);
    if (dt > 0.0) k = std::max(k, (-dN - tol) / dt);
  }
  return 0.5 * eps * k;
}

inline FrequencyTrace frequency_trace(const FrequencyProfile& p) {
  FrequencyTrace tr;
  tr.side = p.side;
  const int n = p.grid.size();
  for (int m = 0; m < n; ++m) {
    const int i = p.side == Side::interior ? n - 1 - m : m;
    tr.r.push_back(p.grid.r(i));
    tr.H.push_back(p.H[i]);
    tr.D.push_back(p.D[i]);
    tr.N.push_back(p.N[i]);
  }
  tr.fit = fit_frequency(p);
  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  const double eps = std::isfinite(tr.fit.eps_hat) ? tr.fit.eps_hat : 1.0;
  tr.drift = monotone_correction(p, eps, all);
  return tr;
}

inline FrequencyTrace frequency_trace(const FieldSample& f, const AngularPotential& pot,
                                      const PerturbationSpec& h) {
  return frequency_trace(frequency_profile(f, pot, h));
}

inline FrequencyTrace exterior_frequency_trace(const FieldSample& f, const AngularPotential& pot,
                                               const PerturbationSpec& h) {
  if (f.side != Side::exterior)
    throw Error(ErrorKind::validation_error, "exterior trace requested for an interior field");
  return frequency_trace(f, pot, h);
}

/// N at arbitrary radii by interpolation of H and the volume integral.
inline std::vector<double> frequency_at(const FrequencyProfile& p, const std::vector<double>& radii) {
  std::vector<double> out;
  for (double r : radii) {
    const double H = detail::interpolate(p.H, p.grid, r);
    if (!(H > 0.0)) throw Error(ErrorKind::degenerate_solution, "H(r) vanishes");
    out.push_back(detail::interpolate(p.D, p.grid, r) / H);
  }
  return out;
}

/// max |D - (+-) r H'/2| / (|D| + |H|), with r H' = dH/ds by eighth-order
/// differences; the sign is negative for exterior problems.
inline double check_height_derivative(const FrequencyProfile& p) {
  const int n = p.grid.size();
  const UniformDerivative d(n);
  const double sign = p.side == Side::interior ? 1.0 : -1.0;
  double worst = 0.0;
  for (int i = 1; i + 1 < n; ++i) {
    const double rhp = d.at<double>(p.H, i, p.grid.h());
    const double res = std::abs(p.D[i] - sign * 0.5 * rhp) / (std::abs(p.D[i]) + std::abs(p.H[i]) + 1e-300);
    worst = std::max(worst, res);
  }
  return worst;
}

struct PohozaevTerms {
  double volume = 0.0, boundary = 0.0, normal = 0.0, perturbation = 0.0;
  double residual() const {
    const double s = std::abs(volume) + std::abs(boundary) + std::abs(normal) + std::abs(perturbation);
    return s > 0.0 ? std::abs(volume + boundary - normal - perturbation) / s : 0.0;
  }
};

/// Terms of the Pohozaev identity on B_r:
///   -(N-2)/2 int_{B_r} e + r/2 int_{dB_r} e = r int_{dB_r} |du/dnu|^2 + int_{B_r} Re(h u x.conj(grad u)).
inline PohozaevTerms pohozaev_terms(const FrequencyProfile& p, double r) {
  if (p.side != Side::interior)
    throw Error(ErrorKind::validation_error, "the Pohozaev check applies to interior fields");
  const int n = p.grid.size(), Nd = p.dimension;
  std::vector<double> V(n);
  for (int i = 0; i < n; ++i) V[i] = p.grid.pow(i, Nd) * p.densities.virial[i];
  const std::vector<double> virial = detail::integral_from_singular_end(V, p.grid, p.side, p.closure);
  const double rn = std::pow(r, Nd);
  PohozaevTerms t;
  t.volume = -0.5 * (Nd - 2) * detail::interpolate(p.energy_volume, p.grid, r);
  t.boundary = 0.5 * rn * detail::interpolate(p.densities.energy, p.grid, r);
  t.normal = rn * detail::interpolate(p.densities.normal, p.grid, r);
  t.perturbation = detail::interpolate(virial, p.grid, r);
  return t;
}

/// Residual of the Pohozaev identity. Data the fitted tail closure rejects is
/// closed by averaged fits, so corrupted fields yield a residual, not an error.
inline double pohozaev_residual(const FieldSample& f, const AngularPotential& pot,
                                const PerturbationSpec& h, double r) {
  try {
    return pohozaev_terms(frequency_profile(f, pot, h), r).residual();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::tail_fit_failure) throw;
  }
  return pohozaev_terms(frequency_profile(f, pot, h, TailClosure::averaged), r).residual();
}

/// Multiplies every value by (1 + level * xi), xi standard normal, and
/// recomputes gradients from the corrupted values.
inline FieldSample with_multiplicative_noise(FieldSample f, double level, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> xi(0.0, 1.0);
  for (int i = 0; i < f.u.rows(); ++i)
    for (int j = 0; j < f.u.cols(); ++j) f.u(i, j) *= 1.0 + level * xi(rng);
  return differentiate(std::move(f));
}

struct HeightScaling {
  double limit = 0.0;      // mean of t^{-2 gamma_t} H on the singular decade
  double drift = 0.0;      // max relative deviation from the mean
  double slope = 0.0;      // fitted d log H / d log r
  double expected_slope = 0.0;
};

/// r^{-2 gamma} H(r) on the decade nearest the singular end. For exterior
/// traces gamma is the decay exponent and the scaling is r^{2 gamma} H.
inline HeightScaling height_scaling_limit(const FrequencyProfile& p, double gamma) {
  const auto idx = singular_decade(p.grid, p.side);
  const double sgn = p.side == Side::interior ? 1.0 : -1.0;
  HeightScaling hs;
  hs.expected_slope = 2.0 * sgn * gamma;
  std::vector<double> v;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i : idx) {
    v.push_back(p.H[i] * std::exp(-hs.expected_slope * p.grid.s(i)));
    const double x = p.grid.s(i), y = std::log(p.H[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(idx.size());
  hs.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  for (double x : v) hs.limit += x;
  hs.limit /= n;
  for (double x : v) hs.drift = std::max(hs.drift, std::abs(x - hs.limit) / hs.limit);
  return hs;
}

/// N(r) > -(N-2)/2 at every stored radius.
inline bool satisfies_lower_bound(const FrequencyTrace& t, int dimension) {
  return std::all_of(t.N.begin(), t.N.end(), [&](double v) { return v > -0.5 * (dimension - 2); });
}

inline void write_csv(std::ostream& os, const FrequencyTrace& t) {
  os.precision(17);
  os << "r,H,D,N\n";
  for (std::size_t i = 0; i < t.r.size(); ++i)
    os << t.r[i] << ',' << t.H[i] << ',' << t.D[i] << ',' << t.N[i] << '\n';
}

inline nlohmann::json nullable(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline nlohmann::json fit_json(const FrequencyTrace& t) {
  return {{"gamma_hat", nullable(t.fit.gamma_hat)},
          {"eps_hat", nullable(t.fit.eps_hat)},
          {"drift", nullable(t.drift)}};
}

}  // namespace almgren
