#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "qwave/core.hpp"
#include "qwave/data.hpp"

namespace qwave {

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

enum class GeometryKind { cartesian, annulus, radial };

inline std::string to_string(GeometryKind k) {
  switch (k) {
    case GeometryKind::cartesian: return "cartesian";
    case GeometryKind::annulus: return "annulus";
    case GeometryKind::radial: return "radial";
  }
  return "unknown";
}

struct Geometry {
  GeometryKind kind = GeometryKind::radial;
  double h = 0.02;            // Cartesian spacing, or radial spacing for radial/annulus
  double extent = 0.0;        // Cartesian half-width L (0 = size from the horizon)
  std::size_t n_theta = 512;  // annulus angular samples
  double trail = 0.0;         // comoving window: inner edge at t - trail; 0 keeps the whole disc
  double lead = 2.0;          // zero margin kept beyond the propagation bound
  double bootstrap_h = 0.0;   // annulus: Cartesian spacing before the polar transfer (0 = h)
  double min_radius = 0.0;    // annulus: transfer once t - trail exceeds this (0 = automatic)
  double horizon = 0.0;       // final time the geometry must accommodate

  static Geometry cartesian(double L, double h, double horizon = 0.0) {
    Geometry g;
    g.kind = GeometryKind::cartesian;
    g.extent = L;
    g.h = h;
    g.horizon = horizon;
    return g;
  }
  static Geometry radial(double h, double trail = 0.0, double horizon = 0.0) {
    Geometry g;
    g.kind = GeometryKind::radial;
    g.h = h;
    g.trail = trail;
    g.horizon = horizon;
    return g;
  }
  static Geometry annulus(double h_r, std::size_t n_theta, double trail, double horizon = 0.0,
                          double bootstrap_h = 0.0) {
    Geometry g;
    g.kind = GeometryKind::annulus;
    g.h = h_r;
    g.n_theta = n_theta;
    g.trail = trail;
    g.horizon = horizon;
    g.bootstrap_h = bootstrap_h;
    return g;
  }

  /// Radius at which the annulus run leaves its Cartesian start.
  [[nodiscard]] double transfer_radius() const {
    if (min_radius > 0.0) return min_radius;
    return std::max(2.0, 1.5 * h * static_cast<double>(n_theta) / kTwoPi);
  }
};

// ---------------------------------------------------------------------------
// Field
// ---------------------------------------------------------------------------

/// Discrete u and u_t on the current lattice.
///
/// Cartesian: nodes (origin + i h, origin + j h). Polar layouts: rows are radii
/// origin + i h, columns are angles j dtheta (one column for radial).
struct WaveField {
  Geometry geometry;
  WaveModel model;
  GeometryKind layout = GeometryKind::radial;  // annulus runs start on a Cartesian lattice
  double epsilon = 0.0;
  double t = 0.0;
  double energy = 0.0;
  double support_radius = 0.0;

  double h = 0.0;
  double origin = 0.0;
  double dtheta = 0.0;
  std::size_t nr = 0;
  std::size_t nc = 1;
  std::vector<double> u, ut, acc;

  double front = 0.0;  // M + integral of the running speed bound
  double c_sup = 1.0;  // running max of max_i sqrt(a_i), sets the step
  double c_now = 1.0;  // max_i sqrt(a_i) at the latest evaluation, advances the front
  double a_now = 1.0;  // max_i a_i at the latest evaluation
  double ut_max = 0.0; // sup |u_t| after the latest step
  double masked_max = 0.0;
  double max_cfl = 0.0;
  double min_coefficient = 1.0;
  bool acc_valid = false;
  long steps = 0;
  std::size_t box_lo = 0, box_hi = 0;  // Cartesian active index range (rows and columns)

  // scratch buffers for the double-buffered update
  std::vector<double> u_next, ut_next, acc_next, coef1, coef2;

  [[nodiscard]] std::size_t index(std::size_t i, std::size_t j) const { return i * nc + j; }
  [[nodiscard]] double radius(std::size_t i) const { return origin + h * static_cast<double>(i); }
  [[nodiscard]] double outer_radius() const { return radius(nr - 1); }
  [[nodiscard]] bool polar() const { return layout != GeometryKind::cartesian; }

  /// Stable step for unit wave speed: 1 / sqrt(sum of 1/spacing^2) over the active directions.
  /// The radial origin row doubles the stencil weight, so it counts as two directions.
  [[nodiscard]] double stability_length() const {
    switch (layout) {
      case GeometryKind::cartesian: return h / std::sqrt(2.0);
      case GeometryKind::radial: return origin == 0.0 ? h / std::sqrt(2.0) : h;
      case GeometryKind::annulus: {
        // mixed r-theta fluxes: bound by (1/h + 1/arc)^2 instead of the sum of squares
        const double arc = std::max(origin, h) * dtheta;
        return 1.0 / (1.0 / h + 1.0 / arc);
      }
    }
    return h;
  }
};

/// Cells are zeroed beyond the propagation bound plus this margin. The explicit stencil leaks
/// super-exponentially small precursors past the physical cone; 32 cells keeps them below roundoff.
inline constexpr int kMaskCells = 32;
inline double mask_margin(const WaveField& f) { return kMaskCells * f.h; }

struct StepStatus {
  bool finite = true;
  bool positive = true;  // all a_i(u) > 0
  [[nodiscard]] bool ok() const { return finite && positive; }
};

namespace detail {

inline void resize_buffers(WaveField& f) {
  const std::size_t n = f.nr * f.nc;
  f.u.assign(n, 0.0);
  f.ut.assign(n, 0.0);
  f.acc.assign(n, 0.0);
  f.u_next.assign(n, 0.0);
  f.ut_next.assign(n, 0.0);
  f.acc_next.assign(n, 0.0);
  f.coef1.assign(n, 1.0);
  f.coef2.assign(n, 1.0);
  f.acc_valid = false;
}

inline double node_x(const WaveField& f, std::size_t i) { return f.origin + f.h * static_cast<double>(i); }

// Cartesian index range covering [-R, R] clipped to the interior.
inline std::pair<std::size_t, std::size_t> cartesian_box(const WaveField& f, double R) {
  const double lo = (-R - f.origin) / f.h;
  const double hi = (R - f.origin) / f.h;
  const auto last = static_cast<long>(f.nr) - 2;
  const long a = std::clamp(static_cast<long>(std::floor(lo)), 1L, last);
  const long b = std::clamp(static_cast<long>(std::ceil(hi)), 1L, last);
  return {static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
}

// a_i(u) on the given row range; returns max a over both directions and min a.
inline std::pair<double, double> fill_coefficients(WaveField& f, const std::vector<double>& u, std::size_t i0,
                                                   std::size_t i1, std::size_t j0, std::size_t j1) {
  double amax = -std::numeric_limits<double>::infinity(), amin = std::numeric_limits<double>::infinity();
  const auto& m = f.model;
  double* A1 = f.coef1.data();
  double* A2 = f.coef2.data();
  const double* U = u.data();
  for (std::size_t i = i0; i <= i1; ++i) {
    const std::size_t k0 = f.index(i, j0), k1 = f.index(i, j1);
    switch (m.kind) {
      case WaveModel::Kind::linear:
        for (std::size_t k = k0; k <= k1; ++k) A1[k] = A2[k] = 1.0;
        amax = std::max(amax, 1.0);
        amin = std::min(amin, 1.0);
        break;
      case WaveModel::Kind::quadratic: {
        // a_i = 1 + c_i u is monotone in u, so the extremes come from the extremes of u
        double ulo = std::numeric_limits<double>::infinity(), uhi = -ulo;
        for (std::size_t k = k0; k <= k1; ++k) {
          A1[k] = 1.0 + m.c1 * U[k];
          A2[k] = 1.0 + m.c2 * U[k];
          ulo = std::min(ulo, U[k]);
          uhi = std::max(uhi, U[k]);
        }
        for (double c : {m.c1, m.c2}) {
          amax = std::max({amax, 1.0 + c * ulo, 1.0 + c * uhi});
          amin = std::min({amin, 1.0 + c * ulo, 1.0 + c * uhi});
        }
        if (!std::isfinite(ulo) || !std::isfinite(uhi)) amax = std::numeric_limits<double>::quiet_NaN();
        break;
      }
      default:
        for (std::size_t k = k0; k <= k1; ++k) {
          A1[k] = m.a1(U[k]);
          A2[k] = m.equal_coefficients ? A1[k] : m.a2(U[k]);
          amax = std::max({amax, A1[k], A2[k]});
          amin = std::min({amin, A1[k], A2[k]});
        }
    }
  }
  return {amax, amin};
}

inline void accel_cartesian(WaveField& f, const std::vector<double>& u, std::vector<double>& acc, std::size_t lo,
                            std::size_t hi) {
  const std::size_t nc = f.nc;
  const double inv = 1.0 / (f.h * f.h);
  const double* A1 = f.coef1.data();
  const double* A2 = f.coef2.data();
  const double* U = u.data();
  for (std::size_t i = lo; i <= hi; ++i) {
    for (std::size_t j = lo; j <= hi; ++j) {
      const std::size_t k = i * nc + j;
      const double c = U[k];
      const double ax_p = 0.5 * (A1[k] + A1[k + nc]);
      const double ax_m = 0.5 * (A1[k] + A1[k - nc]);
      const double ay_p = 0.5 * (A2[k] + A2[k + 1]);
      const double ay_m = 0.5 * (A2[k] + A2[k - 1]);
      acc[k] = inv * (ax_p * (U[k + nc] - c) - ax_m * (c - U[k - nc]) + ay_p * (U[k + 1] - c) - ay_m * (c - U[k - 1]));
    }
  }
}

inline void accel_radial(WaveField& f, const std::vector<double>& u, std::vector<double>& acc) {
  const std::size_t n = f.nr;
  const double h = f.h;
  const double* A = f.coef1.data();
  const double inv = 1.0 / (h * h);
  if (n < 3) return;
  if (f.origin == 0.0) {
    acc[0] = 4.0 * inv * 0.5 * (A[0] + A[1]) * (u[1] - u[0]);
  } else {
    // inner window edge: linear extrapolation ghost
    const double r0 = f.origin;
    const double flux_p = (r0 + 0.5 * h) * 0.5 * (A[0] + A[1]) * (u[1] - u[0]);
    const double flux_m = (r0 - 0.5 * h) * A[0] * (u[1] - u[0]);
    acc[0] = inv * (flux_p - flux_m) / r0;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double r = f.radius(i);
    const double fp = (r + 0.5 * h) * 0.5 * (A[i] + A[i + 1]) * (u[i + 1] - u[i]);
    const double fm = (r - 0.5 * h) * 0.5 * (A[i] + A[i - 1]) * (u[i] - u[i - 1]);
    acc[i] = inv * (fp - fm) / r;
  }
  acc[n - 1] = 0.0;
}

inline void accel_annulus(WaveField& f, const std::vector<double>& u, std::vector<double>& acc) {
  const std::size_t nr = f.nr, nt = f.nc;
  const double h = f.h, dt = f.dtheta;
  const double* A1 = f.coef1.data();
  const double* A2 = f.coef2.data();
  std::vector<double> cs(nt), sn(nt), csf(nt), snf(nt);
  for (std::size_t j = 0; j < nt; ++j) {
    cs[j] = std::cos(dt * static_cast<double>(j));
    sn[j] = std::sin(dt * static_cast<double>(j));
  }
  auto rr = [&](std::size_t k, std::size_t j) { return A1[k] * cs[j] * cs[j] + A2[k] * sn[j] * sn[j]; };
  auto rt = [&](std::size_t k, std::size_t j) { return (A2[k] - A1[k]) * sn[j] * cs[j]; };
  auto tt = [&](std::size_t k, std::size_t j) { return A1[k] * sn[j] * sn[j] + A2[k] * cs[j] * cs[j]; };
  // u at row i (ghost rows by linear extrapolation / zero beyond the outer edge)
  auto at = [&](long i, std::size_t j) -> double {
    if (i < 0) return 2.0 * u[f.index(0, j)] - u[f.index(1, j)];
    if (i >= static_cast<long>(nr)) return 0.0;
    return u[f.index(static_cast<std::size_t>(i), j)];
  };
  auto dtheta_c = [&](long i, std::size_t j) {
    return (at(i, (j + 1) % nt) - at(i, (j + nt - 1) % nt)) / (2.0 * dt);
  };
  auto dr_c = [&](long i, std::size_t j) { return (at(i + 1, j) - at(i - 1, j)) / (2.0 * h); };
  for (std::size_t i = 0; i + 1 < nr; ++i) {
    const double r = f.radius(i);
    const double rp = r + 0.5 * h, rm = r - 0.5 * h;
    const auto ii = static_cast<long>(i);
    const std::size_t km_row = i == 0 ? 0 : i - 1;
    for (std::size_t j = 0; j < nt; ++j) {
      const std::size_t k = f.index(i, j);
      const std::size_t kp = f.index(i + 1, j);
      const std::size_t km = f.index(km_row, j);
      const std::size_t jp = (j + 1) % nt, jm = (j + nt - 1) % nt;
      const std::size_t kjp = f.index(i, jp), kjm = f.index(i, jm);
      const double c = u[k];
      // radial faces
      const double arr_p = 0.5 * (rr(k, j) + rr(kp, j));
      const double art_p = 0.5 * (rt(k, j) + rt(kp, j));
      const double arr_m = i == 0 ? rr(k, j) : 0.5 * (rr(k, j) + rr(km, j));
      const double art_m = i == 0 ? rt(k, j) : 0.5 * (rt(k, j) + rt(km, j));
      const double Fr_p = arr_p * (at(ii + 1, j) - c) / h + art_p * 0.5 * (dtheta_c(ii, j) + dtheta_c(ii + 1, j)) / rp;
      const double Fr_m = arr_m * (c - at(ii - 1, j)) / h + art_m * 0.5 * (dtheta_c(ii, j) + dtheta_c(ii - 1, j)) / rm;
      // angular faces
      const double att_p = 0.5 * (tt(k, j) + tt(kjp, jp));
      const double att_m = 0.5 * (tt(k, j) + tt(kjm, jm));
      const double atr_p = 0.5 * (rt(k, j) + rt(kjp, jp));
      const double atr_m = 0.5 * (rt(k, j) + rt(kjm, jm));
      const double Ft_p = atr_p * 0.5 * (dr_c(ii, j) + dr_c(ii, jp)) + att_p * (u[kjp] - c) / (r * dt);
      const double Ft_m = atr_m * 0.5 * (dr_c(ii, j) + dr_c(ii, jm)) + att_m * (c - u[kjm]) / (r * dt);
      acc[k] = (rp * Fr_p - rm * Fr_m) / (r * h) + (Ft_p - Ft_m) / (r * dt);
    }
  }
  for (std::size_t j = 0; j < nt; ++j) acc[f.index(nr - 1, j)] = 0.0;
}

// Acceleration on the active region; returns (max a, min a).
inline std::pair<double, double> acceleration(WaveField& f, const std::vector<double>& u, std::vector<double>& acc,
                                              double R) {
  if (f.layout == GeometryKind::cartesian) {
    const auto [lo, hi] = cartesian_box(f, R + 2.0 * f.h);
    f.box_lo = lo;
    f.box_hi = hi;
    const auto m = fill_coefficients(f, u, lo - 1, hi + 1, lo - 1, hi + 1);
    accel_cartesian(f, u, acc, lo, hi);
    return m;
  }
  const auto m = fill_coefficients(f, u, 0, f.nr - 1, 0, f.nc - 1);
  if (f.layout == GeometryKind::radial) accel_radial(f, u, acc);
  else accel_annulus(f, u, acc);
  return m;
}

// Grows the polar window outward and drops rows behind t - trail.
inline void maintain_window(WaveField& f, double reach) {
  if (!f.polar()) return;
  const std::size_t nc = f.nc;
  std::size_t add = 0;
  while (f.outer_radius() + f.h * static_cast<double>(add) < reach) ++add;
  if (add > 0) {
    for (auto* v : {&f.u, &f.ut, &f.acc, &f.u_next, &f.ut_next, &f.acc_next}) v->resize(v->size() + add * nc, 0.0);
    f.coef1.resize(f.coef1.size() + add * nc, 1.0);
    f.coef2.resize(f.coef2.size() + add * nc, 1.0);
    f.nr += add;
  }
  if (f.geometry.trail <= 0.0) return;
  std::size_t drop = 0;
  while (f.radius(drop + 1) <= f.t - f.geometry.trail && f.nr - drop > 8) ++drop;
  // shifting every buffer costs a full pass, so rows go in batches
  const std::size_t batch = std::max<std::size_t>(1, std::min<std::size_t>(32, f.nr / 16));
  if (drop < batch) return;
  for (auto* v : {&f.u, &f.ut, &f.acc, &f.u_next, &f.ut_next, &f.acc_next, &f.coef1, &f.coef2}) {
    v->erase(v->begin(), v->begin() + static_cast<long>(drop * nc));
  }
  f.origin = f.radius(drop);
  f.nr -= drop;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

inline WaveField make_initial_field(const InitialData& data, double epsilon, const Geometry& geometry) {
  validate(data);
  if (!(geometry.h > 0.0)) reject("make_initial_field: grid spacing must be positive");
  if (!std::isfinite(epsilon)) reject("make_initial_field: epsilon must be finite");
  WaveField f;
  f.geometry = geometry;
  f.model = data.model;
  f.epsilon = epsilon;
  f.support_radius = data.support_radius;
  f.front = data.support_radius;
  const double M = data.support_radius;
  switch (geometry.kind) {
    case GeometryKind::radial: {
      if (!data.model.isotropic() || !is_radial(data)) {
        reject("make_initial_field: radial geometry needs radial data and an isotropic model");
      }
      f.layout = GeometryKind::radial;
      f.h = geometry.h;
      f.origin = 0.0;
      f.nc = 1;
      f.nr = static_cast<std::size_t>(std::ceil((M + geometry.lead) / f.h)) + 1;
      detail::resize_buffers(f);
      for (std::size_t i = 0; i < f.nr; ++i) {
        const Vec2 p{f.radius(i), 0.0};
        f.u[i] = epsilon * data.u0(p);
        f.ut[i] = epsilon * data.u1(p);
      }
      break;
    }
    case GeometryKind::cartesian:
    case GeometryKind::annulus: {
      const double h = geometry.kind == GeometryKind::annulus && geometry.bootstrap_h > 0.0 ? geometry.bootstrap_h
                                                                                            : geometry.h;
      double needed = M + geometry.horizon + 2.0;
      if (geometry.kind == GeometryKind::annulus) {
        needed = M + std::min(geometry.horizon, geometry.trail + geometry.transfer_radius() + 1.0) + 2.0;
      }
      double L = geometry.extent > 0.0 ? geometry.extent : needed;
      if (L < needed) {
        reject("make_initial_field: Cartesian extent " + std::to_string(L) + " too small; need at least " +
               std::to_string(needed));
      }
      const auto half = static_cast<std::size_t>(std::ceil(L / h));
      f.layout = GeometryKind::cartesian;
      f.h = h;
      f.origin = -h * static_cast<double>(half);
      f.nr = f.nc = 2 * half + 1;
      detail::resize_buffers(f);
      for (std::size_t i = 0; i < f.nr; ++i) {
        const double x = detail::node_x(f, i);
        if (std::abs(x) > M) continue;
        for (std::size_t j = 0; j < f.nc; ++j) {
          const Vec2 p{x, detail::node_x(f, j)};
          if (dot(p, p) > M * M) continue;
          f.u[f.index(i, j)] = epsilon * data.u0(p);
          f.ut[f.index(i, j)] = epsilon * data.u1(p);
        }
      }
      if (geometry.kind == GeometryKind::annulus) f.dtheta = kTwoPi / static_cast<double>(geometry.n_theta);
      break;
    }
  }
  if (!all_finite(f.u) || !all_finite(f.ut)) reject("make_initial_field: initial data not finite");
  const auto [amax, amin] = detail::fill_coefficients(f, f.u, 0, f.nr - 1, 0, f.nc - 1);
  if (!(amin > 0.0)) reject("make_initial_field: wave-speed coefficient not positive on the initial data");
  f.a_now = amax;
  f.c_now = f.c_sup = std::sqrt(amax);
  f.min_coefficient = amin;
  f.ut_max = max_abs(f.ut);
  return f;
}

// ---------------------------------------------------------------------------
// Norms and diagnostics
// ---------------------------------------------------------------------------

inline double sup_u(const WaveField& f) { return max_abs(f.u); }
inline double sup_ut(const WaveField& f) { return max_abs(f.ut); }

/// sup |grad u| with centered differences.
inline double sup_gradient(const WaveField& f) {
  double g = 0.0;
  const auto& u = f.u;
  if (f.layout == GeometryKind::cartesian) {
    const std::size_t lo = f.acc_valid ? f.box_lo : 1, hi = f.acc_valid ? f.box_hi : f.nr - 2;
    for (std::size_t i = lo; i <= hi; ++i) {
      for (std::size_t j = lo; j <= hi; ++j) {
        const std::size_t k = f.index(i, j);
        const double gx = u[k + f.nc] - u[k - f.nc];
        const double gy = u[k + 1] - u[k - 1];
        g = std::max(g, gx * gx + gy * gy);
      }
    }
    return std::sqrt(g) / (2.0 * f.h);
  }
  if (f.layout == GeometryKind::radial) {
    for (std::size_t i = 1; i + 1 < f.nr; ++i) g = std::max(g, std::abs(u[i + 1] - u[i - 1]));
    return g / (2.0 * f.h);
  }
  for (std::size_t i = 1; i + 1 < f.nr; ++i) {
    const double r = f.radius(i);
    for (std::size_t j = 0; j < f.nc; ++j) {
      const double gr = (u[f.index(i + 1, j)] - u[f.index(i - 1, j)]) / (2.0 * f.h);
      const double gt = (u[f.index(i, (j + 1) % f.nc)] - u[f.index(i, (j + f.nc - 1) % f.nc)]) / (2.0 * f.dtheta * r);
      g = std::max(g, gr * gr + gt * gt);
    }
  }
  return std::sqrt(g);
}

/// Location of the largest |grad u|: Cartesian (x1, x2) even for polar layouts.
inline Vec2 max_gradient_location(const WaveField& f) {
  double best = -1.0;
  Vec2 where{};
  const auto& u = f.u;
  if (f.layout == GeometryKind::cartesian) {
    for (std::size_t i = 1; i + 1 < f.nr; ++i) {
      for (std::size_t j = 1; j + 1 < f.nc; ++j) {
        const std::size_t k = f.index(i, j);
        const double gx = u[k + f.nc] - u[k - f.nc], gy = u[k + 1] - u[k - 1];
        if (gx * gx + gy * gy > best) {
          best = gx * gx + gy * gy;
          where = {detail::node_x(f, i), detail::node_x(f, j)};
        }
      }
    }
    return where;
  }
  for (std::size_t i = 1; i + 1 < f.nr; ++i) {
    for (std::size_t j = 0; j < f.nc; ++j) {
      const double g = std::abs(u[f.index(i + 1, j)] - u[f.index(i - 1, j)]);
      if (g > best) {
        best = g;
        where = f.radius(i) * direction(f.dtheta * static_cast<double>(j));
      }
    }
  }
  return where;
}

/// <x, K x> for the stiffness form of the flux discretisation (annulus: diagonal part only).
inline double stiffness_form(const WaveField& f, const std::vector<double>& x) {
  std::vector<double> terms;
  const auto& A1 = f.coef1;
  const auto& A2 = f.coef2;
  if (f.layout == GeometryKind::cartesian) {
    terms.reserve(f.nr);
    for (std::size_t i = 0; i + 1 < f.nr; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j + 1 < f.nc; ++j) {
        const std::size_t k = f.index(i, j);
        const double dx = x[k + f.nc] - x[k], dy = x[k + 1] - x[k];
        row += 0.5 * (A1[k] + A1[k + f.nc]) * dx * dx + 0.5 * (A2[k] + A2[k + 1]) * dy * dy;
      }
      terms.push_back(row);
    }
    return pairwise_sum(terms);
  }
  const double h = f.h;
  for (std::size_t i = 0; i + 1 < f.nr; ++i) {
    const double rp = f.radius(i) + 0.5 * h;
    double row = 0.0;
    for (std::size_t j = 0; j < f.nc; ++j) {
      const std::size_t k = f.index(i, j), kp = f.index(i + 1, j);
      const double d = x[kp] - x[k];
      row += rp * 0.5 * (A1[k] + A1[kp]) * d * d / h;
      if (f.layout == GeometryKind::annulus) {
        const std::size_t kj = f.index(i, (j + 1) % f.nc);
        const double e = x[kj] - x[k];
        row += h * 0.5 * (A2[k] + A2[kj]) * e * e / (f.radius(i) * f.dtheta * f.dtheta);
      }
    }
    terms.push_back(f.layout == GeometryKind::annulus ? row * f.dtheta : kTwoPi * row);
  }
  return pairwise_sum(terms);
}

/// Mass-weighted <x, x>.
inline double mass_form(const WaveField& f, const std::vector<double>& x) {
  std::vector<double> terms;
  terms.reserve(f.nr);
  if (f.layout == GeometryKind::cartesian) {
    for (std::size_t i = 0; i < f.nr; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < f.nc; ++j) row += x[f.index(i, j)] * x[f.index(i, j)];
      terms.push_back(row * f.h * f.h);
    }
    return pairwise_sum(terms);
  }
  for (std::size_t i = 0; i < f.nr; ++i) {
    const double r = f.radius(i);
    double w = r == 0.0 ? f.h * f.h / 8.0 : r * f.h;
    w *= f.layout == GeometryKind::annulus ? f.dtheta : kTwoPi;
    double row = 0.0;
    for (std::size_t j = 0; j < f.nc; ++j) row += x[f.index(i, j)] * x[f.index(i, j)];
    terms.push_back(row * w);
  }
  return pairwise_sum(terms);
}

/// Energy conserved exactly by the scheme in the linear case on a fixed grid:
/// 1/2 <v, v> + 1/2 <u, K u> - dt^2/8 <a, a>, with a = -M^{-1} K u the discrete acceleration.
inline double discrete_energy(WaveField& f, double dt) {
  if (!f.acc_valid) {
    const auto [amax, amin] = detail::acceleration(f, f.u, f.acc, f.front + mask_margin(f));
    f.a_now = std::max(amax, 0.0);
    f.c_now = std::sqrt(f.a_now);
    f.c_sup = std::max(f.c_sup, f.c_now);
    f.min_coefficient = amin;
    f.acc_valid = true;
  }
  return 0.5 * mass_form(f, f.ut) + 0.5 * stiffness_form(f, f.u) - dt * dt / 8.0 * mass_form(f, f.acc);
}

// ---------------------------------------------------------------------------
// Time stepping
// ---------------------------------------------------------------------------

/// Time step as a fraction `cfl` of the linear stability limit. The speed bound includes the
/// growth of max a_i over the step, |da/du| sup|u_t| dt with a factor 2 of slack.
inline double stable_step(const WaveField& f, double cfl) {
  const double len = cfl * f.stability_length();
  const double slope = std::max(std::abs(f.model.c1), std::abs(f.model.c2)) * std::max(1.0, f.a_now);
  const double guess = len / std::max(f.c_now, 1e-12);
  const double a_bound = f.a_now + 2.0 * slope * f.ut_max * guess;
  return len / std::sqrt(std::max(a_bound, 1e-24));
}

/// One velocity-Verlet step: positions match leapfrog started by a Taylor half step.
/// On a non-finite result or a non-positive coefficient the field keeps its last finite state.
inline StepStatus step(WaveField& f, double dt) {
  if (!(dt > 0.0)) reject("step: dt must be positive");
  StepStatus status;
  if (f.polar()) detail::maintain_window(f, f.front + f.c_now * dt + mask_margin(f) + f.geometry.lead);
  if (!f.acc_valid) {
    const auto [amax, amin] = detail::acceleration(f, f.u, f.acc, f.front + mask_margin(f));
    f.a_now = std::max(amax, 0.0);
    f.c_now = std::sqrt(f.a_now);
    f.c_sup = std::max(f.c_sup, f.c_now);
    f.ut_max = max_abs(f.ut);
    f.min_coefficient = amin;
    f.acc_valid = true;
  }
  const double front = f.front + f.c_now * dt;
  const double R = front + mask_margin(f);
  const double half = 0.5 * dt * dt;
  auto& un = f.u_next;
  auto& vn = f.ut_next;
  auto& an = f.acc_next;

  std::size_t lo = 0, hi = 0;
  if (f.layout == GeometryKind::cartesian) std::tie(lo, hi) = detail::cartesian_box(f, R + 2.0 * f.h);

  auto update_positions = [&](std::size_t k) { un[k] = f.u[k] + dt * f.ut[k] + half * f.acc[k]; };
  if (f.layout == GeometryKind::cartesian) {
    for (std::size_t i = lo; i <= hi; ++i)
      for (std::size_t j = lo; j <= hi; ++j) update_positions(f.index(i, j));
  } else {
    for (std::size_t k = 0; k < f.u.size(); ++k) update_positions(k);
  }
  const auto [amax, amin] = detail::acceleration(f, un, an, R);
  const double cmax = std::sqrt(std::max(amax, 0.0));
  double masked = 0.0;
  double probe = 0.0;  // NaN or inf anywhere poisons the sum
  const double hdt = 0.5 * dt;
  if (f.layout == GeometryKind::cartesian) {
    const double R2 = R * R;
    double vmax = 0.0;
    for (std::size_t i = lo; i <= hi; ++i) {
      const double x = detail::node_x(f, i);
      for (std::size_t j = lo; j <= hi; ++j) {
        const std::size_t k = f.index(i, j);
        vn[k] = f.ut[k] + hdt * (f.acc[k] + an[k]);
        probe += vn[k] + un[k];
        vmax = std::max(vmax, std::abs(vn[k]));
        const double y = detail::node_x(f, j);
        if (x * x + y * y > R2) {
          masked = std::max({masked, std::abs(un[k]), std::abs(vn[k])});
          un[k] = 0.0;
          vn[k] = 0.0;
        }
      }
    }
    f.ut_max = vmax;
  } else {
    const double* ut = f.ut.data();
    const double* a0 = f.acc.data();
    const double* a1 = an.data();
    double* v = vn.data();
    const double* x = un.data();
    const std::size_t n = f.u.size();
    double vmax = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      v[k] = ut[k] + hdt * (a0[k] + a1[k]);
      probe += v[k] + x[k];
      vmax = std::max(vmax, std::abs(v[k]));
    }
    f.ut_max = vmax;
    // rows beyond the propagation bound form a suffix
    std::size_t first_out = f.nr;
    while (first_out > 0 && f.radius(first_out - 1) > R) --first_out;
    for (std::size_t k = f.index(first_out, 0); k < n; ++k) {
      masked = std::max({masked, std::abs(un[k]), std::abs(vn[k])});
      un[k] = 0.0;
      vn[k] = 0.0;
    }
  }
  const bool finite = std::isfinite(probe);
  status.finite = finite && std::isfinite(amax);
  status.positive = amin > 0.0;
  if (!status.ok()) {
    f.acc_valid = false;
    return status;
  }
  std::swap(f.u, un);
  std::swap(f.ut, vn);
  std::swap(f.acc, an);
  f.t += dt;
  f.front = front;
  f.a_now = std::max(amax, 0.0);
  f.c_now = cmax;
  f.c_sup = std::max(f.c_sup, cmax);
  f.min_coefficient = amin;
  f.masked_max = std::max(f.masked_max, masked);
  f.max_cfl = std::max(f.max_cfl, dt * cmax / f.stability_length());
  ++f.steps;
  return status;
}

// ---------------------------------------------------------------------------
// Interpolation, refinement, polar transfer
// ---------------------------------------------------------------------------

namespace detail {

inline double lagrange4(const double* v, long n, double x) {
  // cubic through the 4 nearest samples of v (unit spacing), clamped at the ends
  long base = static_cast<long>(std::floor(x)) - 1;
  base = std::clamp(base, 0L, std::max(0L, n - 4));
  const double t = x - static_cast<double>(base);
  const double l0 = -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0;
  const double l1 = t * (t - 2.0) * (t - 3.0) / 2.0;
  const double l2 = -t * (t - 1.0) * (t - 3.0) / 2.0;
  const double l3 = t * (t - 1.0) * (t - 2.0) / 6.0;
  return l0 * v[base] + l1 * v[base + 1] + l2 * v[base + 2] + l3 * v[base + 3];
}

}  // namespace detail

/// u at a physical point (zero outside the lattice).
inline double sample(const WaveField& f, Vec2 p, bool velocity = false) {
  const auto& v = velocity ? f.ut : f.u;
  if (f.layout == GeometryKind::cartesian) {
    const double x = (p.x - f.origin) / f.h, y = (p.y - f.origin) / f.h;
    if (x < 0.0 || y < 0.0 || x > static_cast<double>(f.nr - 1) || y > static_cast<double>(f.nc - 1)) return 0.0;
    long bi = std::clamp(static_cast<long>(std::floor(x)) - 1, 0L, static_cast<long>(f.nr) - 4);
    std::array<double, 4> col{};
    for (int a = 0; a < 4; ++a) col[a] = detail::lagrange4(&v[f.index(static_cast<std::size_t>(bi + a), 0)], static_cast<long>(f.nc), y);
    return detail::lagrange4(col.data(), 4, x - static_cast<double>(bi));
  }
  const double r = norm(p);
  const double x = (r - f.origin) / f.h;
  if (x < 0.0 || x > static_cast<double>(f.nr - 1)) return 0.0;
  if (f.layout == GeometryKind::radial) {
    if (f.origin == 0.0 && x < 2.0) {
      // even extension through the origin
      std::array<double, 7> ext{};
      for (int k = -3; k <= 3; ++k) ext[static_cast<std::size_t>(k + 3)] = v[static_cast<std::size_t>(std::abs(k))];
      return detail::lagrange4(ext.data(), 7, x + 3.0);
    }
    return detail::lagrange4(v.data(), static_cast<long>(f.nr), x);
  }
  double th = std::atan2(p.y, p.x);
  if (th < 0.0) th += kTwoPi;
  const double y = th / f.dtheta;
  const auto nt = static_cast<long>(f.nc);
  const long bj = static_cast<long>(std::floor(y)) - 1;
  std::array<double, 4> row{};
  for (int b = 0; b < 4; ++b) {
    const long j = ((bj + b) % nt + nt) % nt;
    const long base = std::clamp(static_cast<long>(std::floor(x)) - 1, 0L, static_cast<long>(f.nr) - 4);
    std::array<double, 4> c4{};
    for (int a = 0; a < 4; ++a) c4[a] = v[f.index(static_cast<std::size_t>(base + a), static_cast<std::size_t>(j))];
    row[b] = detail::lagrange4(c4.data(), 4, x - static_cast<double>(base));
  }
  return detail::lagrange4(row.data(), 4, y - static_cast<double>(bj));
}

/// Halves the spacing (radial/annulus: radial spacing only; Cartesian: both directions).
inline void refine(WaveField& f) {
  const std::size_t nr_old = f.nr, nc_old = f.nc;
  auto upsample_rows = [&](const std::vector<double>& v) {
    const std::size_t nr = 2 * nr_old - 1;
    std::vector<double> out(nr * nc_old, 0.0);
    std::vector<double> col(nr_old);
    for (std::size_t j = 0; j < nc_old; ++j) {
      for (std::size_t i = 0; i < nr_old; ++i) col[i] = v[i * nc_old + j];
      for (std::size_t i = 0; i < nr; ++i) {
        out[i * nc_old + j] =
            i % 2 == 0 ? col[i / 2] : detail::lagrange4(col.data(), static_cast<long>(nr_old), 0.5 * static_cast<double>(i));
      }
    }
    return out;
  };
  auto upsample_cols = [&](const std::vector<double>& v, std::size_t nr) {
    const std::size_t nc = 2 * nc_old - 1;
    std::vector<double> out(nr * nc, 0.0);
    for (std::size_t i = 0; i < nr; ++i) {
      const double* row = &v[i * nc_old];
      for (std::size_t j = 0; j < nc; ++j) {
        out[i * nc + j] = j % 2 == 0 ? row[j / 2] : detail::lagrange4(row, static_cast<long>(nc_old), 0.5 * static_cast<double>(j));
      }
    }
    return out;
  };
  auto u = upsample_rows(f.u);
  auto ut = upsample_rows(f.ut);
  if (f.layout == GeometryKind::cartesian) {
    u = upsample_cols(u, 2 * nr_old - 1);
    ut = upsample_cols(ut, 2 * nr_old - 1);
    f.nc = 2 * nc_old - 1;
  }
  f.nr = 2 * nr_old - 1;
  f.h *= 0.5;
  detail::resize_buffers(f);
  f.u = std::move(u);
  f.ut = std::move(ut);
}

/// Moves a Cartesian-start annulus run onto its polar window [t - trail, front + lead].
inline void transfer_to_polar(WaveField& f) {
  if (f.geometry.kind != GeometryKind::annulus || f.layout != GeometryKind::cartesian) {
    reject("transfer_to_polar: field is not an annulus run on its Cartesian start");
  }
  WaveField g = f;
  g.layout = GeometryKind::annulus;
  g.h = f.geometry.h;
  g.nc = f.geometry.n_theta;
  g.dtheta = kTwoPi / static_cast<double>(g.nc);
  g.origin = std::max(f.t - f.geometry.trail, g.h);
  g.nr = static_cast<std::size_t>(std::ceil((f.front + mask_margin(g) + f.geometry.lead - g.origin) / g.h)) + 1;
  detail::resize_buffers(g);
  for (std::size_t i = 0; i < g.nr; ++i) {
    for (std::size_t j = 0; j < g.nc; ++j) {
      const Vec2 p = g.radius(i) * direction(g.dtheta * static_cast<double>(j));
      g.u[g.index(i, j)] = sample(f, p);
      g.ut[g.index(i, j)] = sample(f, p, true);
    }
  }
  f = std::move(g);
}

}  // namespace qwave
