#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "almgren/angular.hpp"
#include "almgren/error.hpp"

namespace almgren {

enum class PotentialKind { aharonov_bohm, fourier, dipole };

inline const char* to_string(PotentialKind k) {
  switch (k) {
    case PotentialKind::aharonov_bohm: return "aharonov_bohm";
    case PotentialKind::fourier: return "fourier";
    case PotentialKind::dipole: return "dipole";
  }
  return "?";
}

/// Unvalidated description of the angular potential pair (A, a).
/// fourier: magnetic/electric_trig hold coefficients of e^{int} (N = 2),
/// electric_harmonics holds real spherical-harmonic coefficients (N = 3).
struct PotentialDescriptor {
  PotentialKind kind = PotentialKind::fourier;
  int dimension = 2;
  double alpha = 0.0, a0 = 0.0;
  std::map<int, cplx> magnetic_trig;
  std::map<int, cplx> electric_trig;
  std::map<std::pair<int, int>, cplx> electric_harmonics;
  double lambda = 0.0;
  Vec3 axis{0.0, 0.0, 1.0};

  static PotentialDescriptor aharonov_bohm(double alpha, double a0) {
    PotentialDescriptor d;
    d.kind = PotentialKind::aharonov_bohm;
    d.dimension = 2;
    d.alpha = alpha;
    d.a0 = a0;
    return d;
  }
  static PotentialDescriptor zero(int dimension) {
    PotentialDescriptor d;
    d.dimension = dimension;
    return d;
  }
  static PotentialDescriptor dipole(double lambda, Vec3 axis) {
    PotentialDescriptor d;
    d.kind = PotentialKind::dipole;
    d.dimension = 3;
    d.lambda = lambda;
    d.axis = axis;
    return d;
  }
};

/// Angular data of a homogeneous electromagnetic potential. The magnetic
/// potential is stored only through its tangential component alpha(t) on S^1,
/// so A(theta) . theta = 0 holds by construction.
class AngularPotential {
 public:
  int dimension() const { return dimension_; }
  PotentialKind kind() const { return kind_; }
  const AngularFunction& magnetic() const { return alpha_; }
  const AngularFunction& electric() const { return a_; }
  const PotentialDescriptor& descriptor() const { return desc_; }
  bool has_magnetic() const { return !alpha_.is_zero(); }

  double alpha_at(const AngularNode& n) const {
    return dimension_ == 2 ? alpha_(n).real() : 0.0;
  }
  double a_at(const AngularNode& n) const { return a_(n).real(); }
  /// Ambient components of the tangential magnetic potential at a node.
  Vec3 magnetic_vector(const AngularNode& n) const {
    const double al = alpha_at(n);
    return {al * n.e1[0], al * n.e1[1], al * n.e1[2]};
  }

 private:
  friend AngularPotential build_potential(const PotentialDescriptor&);
  int dimension_ = 2;
  PotentialKind kind_ = PotentialKind::fourier;
  AngularFunction alpha_, a_;
  PotentialDescriptor desc_;
};

inline AngularPotential build_potential(const PotentialDescriptor& d) {
  if (d.dimension < 2)
    throw Error(ErrorKind::unsupported_configuration, "dimension must be at least 2");
  AngularPotential p;
  p.dimension_ = d.dimension;
  p.kind_ = d.kind;
  p.desc_ = d;
  switch (d.kind) {
    case PotentialKind::aharonov_bohm:
      if (d.dimension != 2)
        throw Error(ErrorKind::unsupported_configuration,
                    "aharonov_bohm potentials are two-dimensional");
      if (!std::isfinite(d.alpha) || !std::isfinite(d.a0))
        throw Error(ErrorKind::invalid_coefficients, "aharonov_bohm parameters must be finite");
      p.alpha_ = AngularFunction::constant(2, d.alpha);
      p.a_ = AngularFunction::constant(2, d.a0);
      break;
    case PotentialKind::dipole: {
      if (d.dimension != 3)
        throw Error(ErrorKind::unsupported_configuration, "dipole potentials require N = 3");
      const double n = std::sqrt(d.axis[0] * d.axis[0] + d.axis[1] * d.axis[1] +
                                 d.axis[2] * d.axis[2]);
      if (!(n > 0.0) || !std::isfinite(n) || !std::isfinite(d.lambda))
        throw Error(ErrorKind::invalid_coefficients, "dipole axis must be finite and nonzero");
      // x, y, z are sqrt(4 pi / 3) times Y_{1,1}, Y_{1,-1}, Y_{1,0}
      const double s = d.lambda * std::sqrt(4.0 * std::numbers::pi / 3.0) / n;
      p.alpha_ = AngularFunction::zero(3);
      p.a_ = AngularFunction::harmonics(
          {{{1, 1}, s * d.axis[0]}, {{1, -1}, s * d.axis[1]}, {{1, 0}, s * d.axis[2]}});
      p.desc_.axis = {d.axis[0] / n, d.axis[1] / n, d.axis[2] / n};
      break;
    }
    case PotentialKind::fourier:
      if (d.dimension >= 3) {
        bool magnetic = false;
        for (const auto& [k, c] : d.magnetic_trig) magnetic = magnetic || c != cplx(0.0);
        if (magnetic)
          throw Error(ErrorKind::unsupported_configuration,
                      "nonzero magnetic potential is only supported for N = 2");
        if (!d.electric_trig.empty())
          throw Error(ErrorKind::invalid_coefficients,
                      "Fourier electric data given for N >= 3; use spherical harmonics");
        if (d.dimension > 3) {
          if (!d.electric_harmonics.empty())
            throw Error(ErrorKind::unsupported_configuration,
                        "only the zero potential is supported for N >= 4");
          p.alpha_ = AngularFunction();
          p.a_ = AngularFunction();
          return p;
        }
        p.alpha_ = AngularFunction::zero(3);
        p.a_ = AngularFunction::harmonics(d.electric_harmonics);
      } else {
        if (!d.electric_harmonics.empty())
          throw Error(ErrorKind::invalid_coefficients,
                      "spherical-harmonic data given for N = 2; use Fourier coefficients");
        p.alpha_ = AngularFunction::trig(d.magnetic_trig);
        p.a_ = AngularFunction::trig(d.electric_trig);
      }
      break;
  }
  for (const auto* f : {&p.alpha_, &p.a_}) {
    for (const auto& [k, c] : f->trig_coefficients())
      if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
        throw Error(ErrorKind::invalid_coefficients, "coefficients must be finite");
    for (const auto& [k, c] : f->harmonic_coefficients())
      if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
        throw Error(ErrorKind::invalid_coefficients, "coefficients must be finite");
    if (f->imaginary_defect() > 1e-12)
      throw Error(ErrorKind::invalid_coefficients,
                  "potential coefficients do not reconstruct a real-valued function");
  }
  return p;
}

/// Mean of the tangential magnetic component over the circle.
inline double circulation(const AngularPotential& pot) {
  if (pot.dimension() != 2)
    throw Error(ErrorKind::unsupported_configuration, "circulation is defined for N = 2");
  return pot.magnetic().fourier(0).real();
}

/// Distance from the circulation to the nearest integer.
inline double flux_distance(double phi) { return std::abs(phi - std::round(phi)); }

}  // namespace almgren
