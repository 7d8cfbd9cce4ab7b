#pragma once

#include <cmath>
#include <numbers>
#include <vector>

namespace almgren {

/// Flat index of the real spherical harmonic Y_{l,m}, -l <= m <= l.
inline int sh_index(int l, int m) { return l * l + l + m; }
inline int sh_count(int lmax) { return (lmax + 1) * (lmax + 1); }

/// Orthonormal associated Legendre functions Pbar_l^m(cos theta) for
/// 0 <= m <= l <= lmax, without the Condon-Shortley phase, together with
/// d/dtheta Pbar_l^m. Normalised so that the real harmonics built from them
/// have unit L2 norm on S^2.
class LegendreTable {
 public:
  LegendreTable(int lmax, double x, double sin_theta)
      : lmax_(lmax), p_((lmax + 1) * (lmax + 2) / 2), dp_(p_.size()) {
    p_[at(0, 0)] = 0.5 / std::sqrt(std::numbers::pi);
    for (int m = 1; m <= lmax; ++m)
      p_[at(m, m)] = std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * sin_theta * p_[at(m - 1, m - 1)];
    for (int m = 0; m < lmax; ++m) p_[at(m + 1, m)] = std::sqrt(2.0 * m + 3.0) * x * p_[at(m, m)];
    for (int m = 0; m <= lmax; ++m) {
      for (int l = m + 2; l <= lmax; ++l) {
        const double ll = l, mm = m;
        const double a = std::sqrt((4.0 * ll * ll - 1.0) / (ll * ll - mm * mm));
        const double b = std::sqrt(((ll - 1.0) * (ll - 1.0) - mm * mm) /
                                   (4.0 * (ll - 1.0) * (ll - 1.0) - 1.0));
        p_[at(l, m)] = a * (x * p_[at(l - 1, m)] - b * p_[at(l - 2, m)]);
      }
    }
    // sin(theta) dP/dtheta = l x P_l - sqrt((2l+1)(l^2-m^2)/(2l-1)) P_{l-1}
    for (int m = 0; m <= lmax; ++m) {
      for (int l = m; l <= lmax; ++l) {
        double s = l * x * p_[at(l, m)];
        if (l > m)
          s -= std::sqrt((2.0 * l + 1.0) * (double(l) * l - double(m) * m) / (2.0 * l - 1.0)) *
               p_[at(l - 1, m)];
        dp_[at(l, m)] = s / sin_theta;
      }
    }
  }

  double p(int l, int m) const { return p_[at(l, m)]; }
  double dp(int l, int m) const { return dp_[at(l, m)]; }
  int lmax() const { return lmax_; }

 private:
  static int at(int l, int m) { return l * (l + 1) / 2 + m; }
  int lmax_;
  std::vector<double> p_, dp_;
};

/// Real spherical harmonics up to degree lmax at (theta, phi), with their
/// angular derivatives. Y_{l,m} ~ cos(m phi) for m > 0, sin(|m| phi) for m < 0.
/// dphi_over_sin holds (1/sin theta) dY/dphi.
struct RealHarmonics {
  std::vector<double> y, dtheta, dphi_over_sin;

  RealHarmonics(int lmax, double theta, double phi)
      : y(sh_count(lmax)), dtheta(sh_count(lmax)), dphi_over_sin(sh_count(lmax)) {
    const double x = std::cos(theta), st = std::sin(theta);
    const LegendreTable leg(lmax, x, st);
    for (int l = 0; l <= lmax; ++l) {
      y[sh_index(l, 0)] = leg.p(l, 0);
      dtheta[sh_index(l, 0)] = leg.dp(l, 0);
      dphi_over_sin[sh_index(l, 0)] = 0.0;
      for (int m = 1; m <= l; ++m) {
        const double c = std::cos(m * phi), s = std::sin(m * phi);
        const double p = std::numbers::sqrt2 * leg.p(l, m);
        const double dp = std::numbers::sqrt2 * leg.dp(l, m);
        y[sh_index(l, m)] = p * c;
        y[sh_index(l, -m)] = p * s;
        dtheta[sh_index(l, m)] = dp * c;
        dtheta[sh_index(l, -m)] = dp * s;
        dphi_over_sin[sh_index(l, m)] = -m * p * s / st;
        dphi_over_sin[sh_index(l, -m)] = m * p * c / st;
      }
    }
  }
};

}  // namespace almgren
