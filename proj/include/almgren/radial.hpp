#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "almgren/error.hpp"
#include "almgren/quadrature.hpp"

namespace almgren {

using cplx = std::complex<double>;

/// Geometric radial grid r_i = r_min * q^i, i = 0..intervals, so that s = log r
/// is uniform with spacing h = log q.
class LogGrid {
 public:
  LogGrid() = default;
  LogGrid(double r_min, double r_max, int intervals) : r_min_(r_min), r_max_(r_max) {
    if (!(r_min > 0.0) || !(r_max > r_min) || intervals < 8)
      throw Error(ErrorKind::out_of_range,
                  "log grid needs 0 < r_min < r_max and at least 8 intervals");
    log_min_ = std::log(r_min);
    h_ = (std::log(r_max) - log_min_) / intervals;
    s_.resize(intervals + 1);
    r_.resize(intervals + 1);
    for (int i = 0; i <= intervals; ++i) {
      s_[i] = log_min_ + i * h_;
      r_[i] = std::exp(s_[i]);
    }
    r_.front() = r_min;
    r_.back() = r_max;
  }

  int size() const { return static_cast<int>(r_.size()); }
  int intervals() const { return size() - 1; }
  double h() const { return h_; }
  double r_min() const { return r_min_; }
  double r_max() const { return r_max_; }
  double r(int i) const { return r_[i]; }
  double s(int i) const { return s_[i]; }
  const std::vector<double>& radii() const { return r_; }
  const std::vector<double>& logs() const { return s_; }

  /// x^p at node i, evaluated as exp(p log r_i).
  double pow(int i, double p) const { return std::exp(p * s_[i]); }

  /// Index of the node nearest to r (in log distance). Throws when r lies
  /// outside [r_min, r_max] by more than half a cell.
  int nearest(double r) const {
    if (!(r > 0.0)) throw Error(ErrorKind::out_of_range, "radius must be positive");
    const double x = (std::log(r) - log_min_) / h_;
    if (x < -0.5 || x > intervals() + 0.5)
      throw Error(ErrorKind::out_of_range, "radius " + std::to_string(r) + " outside grid [" +
                                               std::to_string(r_min_) + ", " +
                                               std::to_string(r_max_) + "]");
    return std::clamp(static_cast<int>(std::lround(x)), 0, intervals());
  }

  /// The grid reflected through the unit sphere, r -> 1/r. Node i maps to
  /// node (intervals - i) of the image.
  LogGrid inverted() const { return LogGrid(1.0 / r_max_, 1.0 / r_min_, intervals()); }

  LogGrid scaled(double factor) const { return LogGrid(r_min_ * factor, r_max_ * factor, intervals()); }

  /// Lagrange interpolation in log r through the `points` nodes nearest to r.
  /// Returns the first stencil node and the weights.
  std::pair<int, std::vector<double>> interpolation_weights(double r, int points = 10) const {
    if (!(r > 0.0)) throw Error(ErrorKind::out_of_range, "radius must be positive");
    const double x = (std::log(r) - log_min_) / h_;
    const double slack = 1e-9;
    if (x < -slack || x > intervals() + slack)
      throw Error(ErrorKind::out_of_range, "radius " + std::to_string(r) + " outside grid [" +
                                               std::to_string(r_min_) + ", " +
                                               std::to_string(r_max_) + "]");
    points = std::min(points, size());
    const int start = std::clamp(static_cast<int>(std::floor(x)) - points / 2 + 1, 0, size() - points);
    std::vector<double> w(points, 1.0);
    const double nearest = std::round(x);
    if (std::abs(x - nearest) < 1e-12) {
      std::fill(w.begin(), w.end(), 0.0);
      w[static_cast<int>(nearest) - start] = 1.0;
      return {start, w};
    }
    for (int k = 0; k < points; ++k)
      for (int j = 0; j < points; ++j)
        if (j != k) w[k] *= (x - (start + j)) / static_cast<double>(k - j);
    return {start, w};
  }

 private:
  double r_min_ = 0.0, r_max_ = 0.0, log_min_ = 0.0, h_ = 0.0;
  std::vector<double> r_, s_;
};

/// Composite interpolatory quadrature on a uniform grid: each cell is
/// integrated with the degree-(P-1) Lagrange interpolant through the P
/// nearest nodes.
class CumulativeIntegrator {
 public:
  static constexpr int kStencil = 10;

  explicit CumulativeIntegrator(int n_nodes) {
    stencil_ = std::min(kStencil, n_nodes);
    if (stencil_ < 2) throw Error(ErrorKind::out_of_range, "need at least two nodes to integrate");
    const GaussRule gl = gauss_legendre(8);
    weights_.assign(stencil_ - 1, std::vector<double>(stencil_, 0.0));
    for (int o = 0; o + 1 < stencil_; ++o) {
      for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
        const double x = o + 0.5 * (gl.nodes[q] + 1.0);
        const double w = 0.5 * gl.weights[q];
        for (int k = 0; k < stencil_; ++k) {
          double l = 1.0;
          for (int j = 0; j < stencil_; ++j)
            if (j != k) l *= (x - j) / static_cast<double>(k - j);
          weights_[o][k] += w * l;
        }
      }
    }
  }

  /// out[i] = integral of f from node 0 to node i, spacing h.
  template <class T>
  std::vector<T> cumulative(std::span<const T> f, double h) const {
    const int n = static_cast<int>(f.size());
    std::vector<T> out(n, T{});
    for (int i = 0; i + 1 < n; ++i) {
      const int start = std::clamp(i - stencil_ / 2 + 1, 0, n - stencil_);
      const auto& w = weights_[i - start];
      T cell{};
      for (int k = 0; k < stencil_; ++k) cell += w[k] * f[start + k];
      out[i + 1] = out[i] + h * cell;
    }
    return out;
  }

  /// out[i] = integral of f from node i to the last node. Accumulating
  /// towards the small end avoids cancellation when f decays that way.
  template <class T>
  std::vector<T> cumulative_from_end(std::span<const T> f, double h) const {
    std::vector<T> rev(f.rbegin(), f.rend());
    std::vector<T> c = cumulative<T>(rev, h);
    std::reverse(c.begin(), c.end());
    return c;
  }

  template <class T>
  T total(std::span<const T> f, double h) const {
    return cumulative(f, h).back();
  }

 private:
  int stencil_ = 0;
  std::vector<std::vector<double>> weights_;
};

/// Eighth-order first derivative on a uniform grid (one-sided at the ends).
class UniformDerivative {
 public:
  static constexpr int kStencil = 9;

  explicit UniformDerivative(int n_nodes) {
    stencil_ = std::min(kStencil, n_nodes);
    if (stencil_ < 2) throw Error(ErrorKind::out_of_range, "need at least two nodes to differentiate");
    std::vector<double> x(stencil_);
    for (int j = 0; j < stencil_; ++j) x[j] = j;
    for (int o = 0; o < stencil_; ++o) weights_.push_back(fd_weights(o, x, 1)[1]);
  }

  template <class T>
  T at(std::span<const T> f, int i, double h) const {
    const int n = static_cast<int>(f.size());
    const int start = std::clamp(i - stencil_ / 2, 0, n - stencil_);
    const auto& w = weights_[i - start];
    T d{};
    for (int k = 0; k < stencil_; ++k) d += w[k] * f[start + k];
    return d / h;
  }

  template <class T>
  std::vector<T> apply(std::span<const T> f, double h) const {
    std::vector<T> out(f.size());
    for (int i = 0; i < static_cast<int>(f.size()); ++i) out[i] = at(f, i, h);
    return out;
  }

 private:
  int stencil_ = 0;
  std::vector<std::vector<double>> weights_;
};

enum class TailEnd { lower, upper };

/// Integral over the semi-infinite log-interval beyond one end of the grid of
/// a sampled integrand F(s) (already including the Jacobian), closed by a
/// fitted power law F ~ A e^{q s} (+ B e^{(q+eta) s} when a geometric drift of
/// the local exponent is resolvable). For TailEnd::lower the integral runs over
/// (-inf, s_0]; for TailEnd::upper over [s_M, +inf).
inline cplx power_law_tail(std::span<const cplx> f, double h, TailEnd end) {
  const int n = static_cast<int>(f.size());
  constexpr int kGap = 4;
  constexpr int kUsed = 2 * kGap + UniformDerivative::kStencil;
  if (n < kUsed) throw Error(ErrorKind::tail_fit_failure, "too few nodes for tail extrapolation");

  std::vector<cplx> g(kUsed);
  for (int j = 0; j < kUsed; ++j) g[j] = (end == TailEnd::lower) ? f[j] : f[n - 1 - j];

  double peak = 0.0;
  for (const auto& v : g) peak = std::max(peak, std::abs(v));
  if (peak == 0.0 || std::abs(g[0]) <= 1e-300) {
    if (peak <= 1e-300) return 0.0;
    throw Error(ErrorKind::tail_fit_failure, "integrand vanishes at the grid end but not nearby");
  }
  std::vector<double> logs(kUsed);
  const bool real_valued = std::all_of(g.begin(), g.end(), [&](const cplx& v) {
    return std::abs(v.imag()) <= 1e-14 * peak;
  });
  for (int j = 0; j < kUsed; ++j) {
    if (std::abs(g[j]) == 0.0)
      throw Error(ErrorKind::tail_fit_failure, "integrand has zeros near the grid end");
    if (real_valued && (g[j].real() > 0) != (g[0].real() > 0))
      throw Error(ErrorKind::tail_fit_failure, "integrand changes sign near the grid end");
    logs[j] = std::log(std::abs(g[j]));
  }
  // exponents measured in the outward variable t (t = s at the lower end, -s
  // at the upper end), so integrability always means q > 0
  const UniformDerivative d(kUsed);
  const std::span<const double> ls(logs);
  const double s0 = d.at(ls, 0, h);
  const double s1 = d.at(ls, kGap, h);
  const double s2 = d.at(ls, 2 * kGap, h);

  double q = s0, eta = 0.0, w = 0.0;
  const double d1 = s1 - s0, d2 = s2 - s1;
  if (std::abs(d1) > 1e-10 * (1.0 + std::abs(s0)) && d1 * d2 > 0.0) {
    const double ratio = d2 / d1;
    if (ratio > 1.001 && ratio < 1e3) {
      const double q_acc = s0 - d1 / (ratio - 1.0);
      const double eta_acc = std::log(ratio) / (kGap * h);
      if (q_acc > 0.0 && std::abs(q_acc - s0) < 0.5 * std::abs(s0) + 0.05) {
        q = q_acc;
        eta = eta_acc;
        w = (s0 - q) / eta;
      }
    }
  }
  if (!(q > 0.0))
    throw Error(ErrorKind::tail_fit_failure,
                "fitted power law is not integrable (exponent " + std::to_string(q) + ")");
  const double factor = eta > 0.0 ? (1.0 - w) / q + w / (q + eta) : 1.0 / q;
  return g[0] * factor;
}

/// Noise-tolerant variant of power_law_tail: the exponent is the least-squares
/// slope of log|F| over nodes [skip, nodes) counted from the end, the amplitude
/// the least-squares fit of F itself to that power. Skipping the end nodes
/// keeps one-sided difference noise out of the fit.
inline cplx averaged_power_tail(std::span<const cplx> f, double h, TailEnd end, int nodes = 40,
                                int skip = 4) {
  const int n = std::min<int>(nodes, static_cast<int>(f.size()));
  if (n - skip < 3) throw Error(ErrorKind::tail_fit_failure, "too few nodes for tail extrapolation");
  std::vector<cplx> g(n);
  for (int j = 0; j < n; ++j) g[j] = (end == TailEnd::lower) ? f[j] : f[f.size() - 1 - j];
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int used = 0;
  for (int j = skip; j < n; ++j) {
    if (std::abs(g[j]) == 0.0) continue;
    const double x = j * h, y = std::log(std::abs(g[j]));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++used;
  }
  if (used == 0) return 0.0;
  if (used < 3) throw Error(ErrorKind::tail_fit_failure, "integrand vanishes near the grid end");
  const double q = (used * sxy - sx * sy) / (used * sxx - sx * sx);
  if (!(q > 0.0))
    throw Error(ErrorKind::tail_fit_failure,
                "fitted power law is not integrable (exponent " + std::to_string(q) + ")");
  cplx num = 0.0;
  double den = 0.0;
  for (int j = skip; j < n; ++j) {
    const double e = std::exp(q * j * h);
    num += e * g[j];
    den += e * e;
  }
  return num / den / q;
}

}  // namespace almgren
