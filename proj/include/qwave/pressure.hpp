#pragma once

#include <cmath>
#include <sstream>

#include "qwave/data.hpp"

namespace qwave {

/// Initial velocity field U0 = (U0_1, U0_2).
struct VectorField {
  ScalarField x = ScalarField::zero();
  ScalarField y = ScalarField::zero();
};

/// Largest sampled |v| on rings just outside radius M.
inline double ring_leak(const ScalarField& v, double M, int angles = 64) {
  if (v.identically_zero) return 0.0;
  double leak = 0.0;
  for (double scale : {1.0 + 1e-6, 1.02, 1.1, 1.3}) {
    for (int k = 0; k < angles; ++k) {
      leak = std::max(leak, std::abs(v((M * scale) * direction(kTwoPi * (k + 0.5) / angles))));
    }
  }
  return leak;
}

/// Data for the pressure-gradient system: u0 = P0, u1 = -div U0, a_i(u) = e^u.
///
/// The divergence uses 4th-order centered differences with spacing `h`.
inline InitialData pressure_gradient_setup(const VectorField& U0, const ScalarField& P0, double support_radius,
                                           double h = 0.01, double tol = 1e-12) {
  if (!(support_radius > 0.0)) reject("pressure_gradient_setup: support radius must be positive");
  if (!(h > 0.0)) reject("pressure_gradient_setup: difference step must be positive");
  for (const auto* f : {&U0.x, &U0.y, &P0}) {
    const double leak = ring_leak(*f, support_radius);
    if (leak > tol) {
      std::ostringstream os;
      os << "pressure_gradient_setup: data not supported in the disc of radius " << support_radius
         << " (|v| = " << leak << " outside)";
      reject(os.str());
    }
  }
  InitialData d;
  d.support_radius = support_radius;
  d.model = WaveModel::pressure_gradient();
  d.name = "pressure_gradient";
  d.u0 = P0;
  if (U0.x.identically_zero && U0.y.identically_zero) {
    d.u1 = ScalarField::zero();
    return d;
  }
  ScalarField u1;
  u1.value = [U0, h, support_radius](Vec2 p) {
    if (dot(p, p) >= support_radius * support_radius) return 0.0;
    auto ux = [&](double x) { return U0.x(Vec2{x, p.y}); };
    auto uy = [&](double y) { return U0.y(Vec2{p.x, y}); };
    return -(fd1(ux, p.x, h) + fd1(uy, p.y, h));
  };
  d.u1 = u1;
  return d;
}

}  // namespace qwave
