#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "qwave/asymptotic.hpp"
#include "qwave/wavefield.hpp"

namespace qwave {

// ---------------------------------------------------------------------------
// Linear wave solution w0
// ---------------------------------------------------------------------------

struct LinearWaveOptions {
  double h = 0.02;
  double snapshot_dt = 0.25;  // snapshots are taken at k * snapshot_dt exactly
  double cfl = 0.9;           // fraction of the stability limit
  double cartesian_extent = 0.0;
};

/// Snapshots of the linear evolution of the (unscaled) data.
class LinearWaveSolution {
 public:
  double snapshot_dt = 0.0;
  double horizon = 0.0;
  double h = 0.0;
  GeometryKind layout = GeometryKind::radial;
  bool zero = false;
  std::vector<WaveField> snapshots;  // snapshot k holds time k * snapshot_dt

  /// Snapshot index for t, or -1 when t is not a snapshot time.
  [[nodiscard]] long snapshot_index(double t) const {
    if (zero) return 0;
    const double k = std::round(t / snapshot_dt);
    if (k < 0.0 || k >= static_cast<double>(snapshots.size())) return -1;
    if (std::abs(t - k * snapshot_dt) > 1e-9 * std::max(1.0, t)) return -1;
    return static_cast<long>(k);
  }

  /// w0(t, x): exact snapshot sample, cubic Hermite in t between snapshots.
  [[nodiscard]] double value(double t, Vec2 x) const { return evaluate(t, x, false); }
  /// d/dt w0(t, x).
  [[nodiscard]] double velocity(double t, Vec2 x) const { return evaluate(t, x, true); }

 private:
  [[nodiscard]] double evaluate(double t, Vec2 x, bool derivative) const {
    if (zero) return 0.0;
    if (t < 0.0 || t > horizon + 1e-9 * std::max(1.0, horizon)) reject("w0: time outside the computed range");
    const long k = snapshot_index(t);
    if (k >= 0) return sample(snapshots[static_cast<std::size_t>(k)], x, derivative);
    const auto k0 = std::min(static_cast<std::size_t>(std::floor(t / snapshot_dt)), snapshots.size() - 2);
    const auto& a = snapshots[k0];
    const auto& b = snapshots[k0 + 1];
    const double d = snapshot_dt, s = (t - a.t) / d;
    const double ua = sample(a, x), ub = sample(b, x), va = sample(a, x, true), vb = sample(b, x, true);
    if (derivative) {
      const double h00 = 6 * s * s - 6 * s, h10 = 3 * s * s - 4 * s + 1, h01 = -h00, h11 = 3 * s * s - 2 * s;
      return (h00 * ua + h01 * ub) / d + h10 * va + h11 * vb;
    }
    const double h00 = 2 * s * s * s - 3 * s * s + 1, h10 = s * s * s - 2 * s * s + s;
    const double h01 = -2 * s * s * s + 3 * s * s, h11 = s * s * s - s * s;
    return h00 * ua + h01 * ub + d * (h10 * va + h11 * vb);
  }
};

namespace detail {

// Keeps the samples and lattice description, drops the stepping scratch.
inline WaveField freeze(const WaveField& f) {
  WaveField g = f;
  for (auto* v : {&g.acc, &g.u_next, &g.ut_next, &g.acc_next, &g.coef1, &g.coef2}) {
    v->clear();
    v->shrink_to_fit();
  }
  return g;
}

}  // namespace detail

/// Runs the linear equation (unit speeds) from the data up to `horizon`.
/// Radial data uses the radial solver, anything else the Cartesian one.
inline LinearWaveSolution linear_wave_solution(const InitialData& data, double horizon,
                                               const LinearWaveOptions& opts = {}) {
  if (!(horizon >= 0.0)) reject("linear_wave_solution: horizon must be non-negative");
  if (!(opts.snapshot_dt > 0.0)) reject("linear_wave_solution: snapshot spacing must be positive");
  if (!(opts.cfl > 0.0 && opts.cfl < 1.0)) reject("linear_wave_solution: CFL fraction must lie in (0, 1)");
  LinearWaveSolution w;
  w.snapshot_dt = opts.snapshot_dt;
  w.horizon = horizon;
  w.h = opts.h;
  InitialData lin = data;
  lin.model = WaveModel::linear();
  if (lin.is_zero()) {
    w.zero = true;
    return w;
  }
  const bool radial = is_radial(lin);
  const Geometry g = radial ? Geometry::radial(opts.h, 0.0, horizon)
                            : Geometry::cartesian(opts.cartesian_extent, opts.h, horizon);
  WaveField f = make_initial_field(lin, 1.0, g);
  w.layout = f.layout;
  const auto snaps = static_cast<std::size_t>(std::ceil(horizon / opts.snapshot_dt - 1e-9));
  w.snapshots.reserve(snaps + 1);
  w.snapshots.push_back(detail::freeze(f));
  const double dt_max = stable_step(f, opts.cfl);
  const auto sub = static_cast<long>(std::ceil(opts.snapshot_dt / dt_max));
  const double dt = opts.snapshot_dt / static_cast<double>(sub);
  for (std::size_t k = 1; k <= snaps; ++k) {
    for (long s = 0; s < sub; ++s) {
      if (!step(f, dt).ok()) throw Error(ErrorKind::numerical, "linear_wave_solution: non-finite values");
    }
    f.t = static_cast<double>(k) * opts.snapshot_dt;  // no drift from the summed steps
    w.snapshots.push_back(detail::freeze(f));
  }
  w.horizon = static_cast<double>(snaps) * opts.snapshot_dt;
  return w;
}

// ---------------------------------------------------------------------------
// Approximate solution
// ---------------------------------------------------------------------------

struct ApproxSolution {
  double epsilon = 0.0;
  double c1 = 1.0;
  double c2 = 1.0;
  double tau0 = std::numeric_limits<double>::infinity();
  double support_radius = 6.0;
  std::shared_ptr<const DirectionalProfile> profile;
  std::shared_ptr<const LinearWaveSolution> w0;
};

inline ApproxSolution make_approx(std::shared_ptr<const DirectionalProfile> profile,
                                  std::shared_ptr<const LinearWaveSolution> w0, double epsilon) {
  if (!profile || !w0) reject("make_approx: profile and w0 are required");
  if (!(epsilon > 0.0)) reject("make_approx: epsilon must be positive");
  if (!profile->has_derivative()) reject("make_approx: profile derivative not filled");
  ApproxSolution a;
  a.epsilon = epsilon;
  a.c1 = profile->meta.c1;
  a.c2 = profile->meta.c2;
  a.support_radius = profile->support_radius();
  double wmin = 0.0;
  for (std::size_t i = 0; i < profile->n_sigma(); ++i) {
    for (std::size_t j = 0; j < profile->n_angles(); ++j) {
      wmin = std::min(wmin, profile->dF0_dsigma(i, j) * profile->angular(profile->theta_grid[j]));
    }
  }
  a.tau0 = wmin < 0.0 ? -1.0 / wmin : std::numeric_limits<double>::infinity();
  if (!w0->zero && w0->horizon + 1e-9 < 2.0 / epsilon) reject("make_approx: w0 must reach t = 2 / epsilon");
  a.profile = std::move(profile);
  a.w0 = std::move(w0);
  return a;
}

namespace detail {

inline double slow_time(const ApproxSolution& a, double t) { return a.epsilon * std::sqrt(1.0 + t); }

inline void check_slow_time(const ApproxSolution& a, double t) {
  if (slow_time(a, t) >= a.tau0) reject("approximate solution: slow time reached the profile lifespan");
}

/// r^{-1/2} chi(-3 eps sigma) V(sigma, theta, tau) with sigma = r - t.
inline double profile_term(const ApproxSolution& a, double t, Vec2 x) {
  const double r = norm(x);
  const double sigma = r - t;
  if (sigma >= a.support_radius) return 0.0;
  const double cut = cutoff(-3.0 * a.epsilon * sigma);
  if (cut == 0.0 || r <= 0.0) return 0.0;
  const double theta = std::atan2(x.y, x.x);
  return cut * transported_value(*a.profile, sigma, theta < 0.0 ? theta + kTwoPi : theta, slow_time(a, t)) /
         std::sqrt(r);
}

}  // namespace detail

/// u_a(t, x) = eps (chi(eps t) w0 + (1 - chi(eps t)) r^{-1/2} chi(-3 eps sigma) V).
inline double build_approx(const ApproxSolution& a, double t, Vec2 x) {
  detail::check_slow_time(a, t);
  const double chi = cutoff(a.epsilon * t);
  double v = 0.0;
  if (chi > 0.0) v += chi * a.w0->value(t, x);
  if (chi < 1.0) v += (1.0 - chi) * detail::profile_term(a, t, x);
  return a.epsilon * v;
}

// ---------------------------------------------------------------------------
// Residual
// ---------------------------------------------------------------------------

struct ResidualOptions {
  double h_res = 0.01;             // difference step and radial quadrature spacing
  std::size_t theta_samples = 0;   // 0: one ray for symmetric problems, else 64
};

struct ResidualField {
  double t = 0.0;
  std::vector<double> radii;
  std::vector<double> thetas;
  Matrix J;            // rows: radii, columns: thetas
  double l2 = 0.0;     // L2 norm over the plane
  double linf = 0.0;
};

namespace detail {

inline bool symmetric_problem(const ApproxSolution& a) {
  if (a.c1 != a.c2) return false;
  if (a.w0->layout != GeometryKind::radial && !a.w0->zero) return false;
  const auto& p = *a.profile;
  for (std::size_t i = 0; i < p.n_sigma(); ++i) {
    for (std::size_t j = 1; j < p.n_angles(); ++j) {
      if (std::abs(p.F0(i, j) - p.F0(i, 0)) > 1e-12 * std::max(1.0, std::abs(p.F0(i, 0)))) return false;
    }
  }
  return true;
}

struct Jet {
  double v = 0.0, d1 = 0.0, d2 = 0.0, d11 = 0.0, d22 = 0.0, tt = 0.0, t = 0.0;
};

// Spatial 4th-order jet of g at x.
template <class G>
Jet spatial_jet(G&& g, Vec2 x, double h) {
  Jet j;
  j.v = g(x);
  const double xm2 = g(Vec2{x.x - 2 * h, x.y}), xm1 = g(Vec2{x.x - h, x.y});
  const double xp1 = g(Vec2{x.x + h, x.y}), xp2 = g(Vec2{x.x + 2 * h, x.y});
  const double ym2 = g(Vec2{x.x, x.y - 2 * h}), ym1 = g(Vec2{x.x, x.y - h});
  const double yp1 = g(Vec2{x.x, x.y + h}), yp2 = g(Vec2{x.x, x.y + 2 * h});
  j.d1 = (xm2 - 8 * xm1 + 8 * xp1 - xp2) / (12 * h);
  j.d2 = (ym2 - 8 * ym1 + 8 * yp1 - yp2) / (12 * h);
  j.d11 = (-xm2 + 16 * xm1 - 30 * j.v + 16 * xp1 - xp2) / (12 * h * h);
  j.d22 = (-ym2 + 16 * ym1 - 30 * j.v + 16 * yp1 - yp2) / (12 * h * h);
  return j;
}

}  // namespace detail

/// J_a at one point. Inside the w0 region t must be a snapshot time; there the linear part of
/// w0 is taken as exactly zero and only the cutoff derivatives of chi(eps t) w0 remain.
inline double residual_at(const ApproxSolution& a, double t, Vec2 x, double h) {
  const double eps = a.epsilon;
  const double chi = cutoff(eps * t);
  detail::Jet w, q;
  double lin = 0.0;
  if (chi > 0.0) {
    const long k = a.w0->snapshot_index(t);
    if (k < 0) reject("residual: t must be a w0 snapshot time while chi(eps t) > 0");
    if (!a.w0->zero) {
      const auto& snap = a.w0->snapshots[static_cast<std::size_t>(k)];
      w = detail::spatial_jet([&](Vec2 p) { return sample(snap, p); }, x, h);
      w.t = sample(snap, x, true);
      lin += eps * (eps * eps * cutoff_second_derivative(eps * t) * w.v + 2.0 * eps * cutoff_derivative(eps * t) * w.t);
    }
  }
  if (chi < 1.0) {
    auto Q = [&](double s, Vec2 p) { return (1.0 - cutoff(eps * s)) * detail::profile_term(a, s, p); };
    q = detail::spatial_jet([&](Vec2 p) { return Q(t, p); }, x, h);
    q.tt = (-Q(t - 2 * h, x) + 16 * Q(t - h, x) - 30 * q.v + 16 * Q(t + h, x) - Q(t + 2 * h, x)) / (12 * h * h);
    lin += eps * (q.tt - q.d11 - q.d22);
  }
  const double u = eps * (chi * w.v + q.v);
  const double u1 = eps * (chi * w.d1 + q.d1), u2 = eps * (chi * w.d2 + q.d2);
  const double u11 = eps * (chi * w.d11 + q.d11), u22 = eps * (chi * w.d22 + q.d22);
  return lin - a.c1 * u * u11 - a.c2 * u * u22 - a.c1 * u1 * u1 - a.c2 * u2 * u2;
}

/// Sampled J_a(t, .) on a polar quadrature grid covering the support of u_a, and its L2 norm.
inline ResidualField residual(const ApproxSolution& a, double t, const ResidualOptions& opts = {}) {
  if (!(opts.h_res > 0.0)) reject("residual: step must be positive");
  if (t < 0.0) reject("residual: time must be non-negative");
  detail::check_slow_time(a, t + 2.0 * opts.h_res);
  ResidualField out;
  out.t = t;
  const double h = opts.h_res;
  const double eps = a.epsilon;
  const double M = a.support_radius;
  const std::size_t nt = opts.theta_samples > 0 ? opts.theta_samples : (detail::symmetric_problem(a) ? 1 : 64);
  for (std::size_t j = 0; j < nt; ++j) out.thetas.push_back(kTwoPi * static_cast<double>(j) / static_cast<double>(nt));
  const bool zero = a.w0->zero && a.profile->is_zero();
  double r_lo = 0.0;
  if (cutoff(eps * t) == 0.0) r_lo = std::max(0.0, t - 2.0 / (3.0 * eps) - 3.0 * h);
  const double r_hi = t + M + 3.0 * h;
  const auto i0 = static_cast<std::size_t>(std::floor(r_lo / h));
  const auto i1 = static_cast<std::size_t>(std::ceil(r_hi / h));
  for (std::size_t i = i0; i <= i1; ++i) out.radii.push_back(h * static_cast<double>(i));
  out.J = Matrix(out.radii.size(), nt);
  if (zero) return out;
  std::vector<double> terms;
  terms.reserve(out.radii.size());
  for (std::size_t i = 0; i < out.radii.size(); ++i) {
    const double r = out.radii[i];
    double ring = 0.0;
    for (std::size_t j = 0; j < nt; ++j) {
      const double v = residual_at(a, t, r * direction(out.thetas[j]), h);
      out.J(i, j) = v;
      out.linf = std::max(out.linf, std::abs(v));
      ring += v * v;
    }
    // trapezoid in r (the integrand r J^2 vanishes at both ends), rectangle rule in theta
    terms.push_back(ring * r * h * kTwoPi / static_cast<double>(nt));
  }
  out.l2 = std::sqrt(pairwise_sum(terms));
  return out;
}

/// Reference evaluation of the t <= 1/eps form -eps^2 (c1 w0 d11 w0 + c2 w0 d22 w0 + c1 (d1 w0)^2 + c2 (d2 w0)^2).
inline double early_residual(const ApproxSolution& a, double t, Vec2 x, double h) {
  const long k = a.w0->snapshot_index(t);
  if (k < 0) reject("early_residual: t must be a w0 snapshot time");
  if (a.w0->zero) return 0.0;
  const auto& snap = a.w0->snapshots[static_cast<std::size_t>(k)];
  const auto w = detail::spatial_jet([&](Vec2 p) { return sample(snap, p); }, x, h);
  const double e2 = a.epsilon * a.epsilon;
  return -e2 * (a.c1 * w.v * w.d11 + a.c2 * w.v * w.d22 + a.c1 * w.d1 * w.d1 + a.c2 * w.d2 * w.d2);
}

// ---------------------------------------------------------------------------
// Residual scaling
// ---------------------------------------------------------------------------

struct ResidualScalingOptions {
  LinearWaveOptions linear;       // w0 solver; h_res is linear.h / 2
  double node_dt = 0.25;          // time-node spacing up to t = 2 / eps
  double node_growth = 0.02;      // beyond 2 / eps the spacing is max(node_dt, growth * t)
  std::size_t theta_samples = 0;
};

struct ResidualRow {
  double epsilon = 0.0;
  double t_end = 0.0;
  double I = 0.0;    // integral of ||J_a(t)||_L2 over [0, t_end]
  double I_A = 0.0;  // t <= 1/eps
  double I_B = 0.0;  // 1/eps .. 2/eps
  double I_C = 0.0;  // beyond 2/eps
  std::size_t nodes = 0;
  bool flagged = false;
  std::string message;
  std::vector<double> t;
  std::vector<double> norm;
};

struct ResidualScalingReport {
  double b = 0.0;
  double tau0 = 0.0;
  std::vector<ResidualRow> rows;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double slope_r2 = 0.0;
  std::vector<double> ratios;  // I(eps_k) / I(eps_{k+1})
  bool zero_residual = false;
  std::string verdict;
};

namespace detail {

// Integral of the piecewise-linear interpolant over [lo, hi]; intervals cut by lo or hi are split.
inline double trapezoid(const std::vector<double>& t, const std::vector<double>& y, double lo, double hi) {
  std::vector<double> parts;
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    const double a = std::max(t[k], lo), b = std::min(t[k + 1], hi);
    if (!(b > a)) continue;
    const double span = t[k + 1] - t[k];
    auto at = [&](double s) { return y[k] + (y[k + 1] - y[k]) * (s - t[k]) / span; };
    parts.push_back(0.5 * (at(a) + at(b)) * (b - a));
  }
  return pairwise_sum(parts);
}

inline std::vector<double> residual_nodes(double eps, double t_end, const ResidualScalingOptions& o) {
  std::vector<double> nodes;
  const double t2 = 2.0 / eps;
  const double stop = std::min(t2, t_end);
  if (!(stop > 0.0)) return {0.0};
  auto n = static_cast<std::size_t>(std::ceil(stop / o.node_dt));
  if (n % 2 == 1) ++n;  // keeps 1/eps on the grid when stop = 2/eps
  for (std::size_t k = 0; k <= n; ++k) nodes.push_back(stop * static_cast<double>(k) / static_cast<double>(n));
  double t = stop;
  while (t < t_end) {
    const double dt = std::max(o.node_dt, o.node_growth * t);
    t = std::min(t_end, t + dt);
    if (t_end - t < 0.25 * dt) t = t_end;
    nodes.push_back(t);
  }
  return nodes;
}

}  // namespace detail

/// I(eps) = int_0^{b^2/eps^2 - 1} ||J_a(t)||_L2 dt for each epsilon, and the log-log slope.
inline ResidualScalingReport residual_norm_scaling(const InitialData& data, const std::vector<double>& epsilons,
                                                   double b, const ResidualScalingOptions& opts = {},
                                                   std::shared_ptr<const DirectionalProfile> profile = nullptr) {
  if (epsilons.size() < 3) reject("residual_norm_scaling: need at least 3 epsilon values");
  for (std::size_t k = 0; k + 1 < epsilons.size(); ++k) {
    if (std::abs(epsilons[k] / epsilons[k + 1] - 2.0) > 1e-9) {
      reject("residual_norm_scaling: consecutive epsilon values must be a factor 2 apart");
    }
  }
  if (!profile) {
    profile = std::make_shared<const DirectionalProfile>(
        profile_derivative(friedlander_profile(data, uniform_grid(-20.0, data.support_radius, 0.05),
                                               periodic_theta_grid(is_radial(data) ? 8 : 64))));
  }
  ResidualScalingReport rep;
  rep.b = b;
  const auto pred = predict_lifespan(*profile);
  rep.tau0 = pred.tau0;
  if (!(b > 0.0) || !(b < rep.tau0)) reject("residual_norm_scaling: need 0 < b < tau0");
  const ResidualOptions ropts{0.5 * opts.linear.h, opts.theta_samples};
  for (double eps : epsilons) {
    ResidualRow row;
    row.epsilon = eps;
    row.t_end = std::max(0.0, (b / eps) * (b / eps) - 1.0);
    try {
      const auto nodes = detail::residual_nodes(eps, row.t_end, opts);
      LinearWaveOptions lo = opts.linear;
      const double t2 = std::min(2.0 / eps, row.t_end);
      lo.snapshot_dt = nodes.size() > 1 ? nodes[1] - nodes[0] : opts.node_dt;
      auto w0 = std::make_shared<const LinearWaveSolution>(linear_wave_solution(data, std::max(2.0 / eps, t2), lo));
      const auto approx = make_approx(profile, w0, eps);
      for (double t : nodes) {
        row.t.push_back(t);
        row.norm.push_back(residual(approx, t, ropts).l2);
      }
      row.nodes = nodes.size();
      row.I = detail::trapezoid(row.t, row.norm, 0.0, row.t_end);
      row.I_A = detail::trapezoid(row.t, row.norm, 0.0, 1.0 / eps);
      row.I_B = detail::trapezoid(row.t, row.norm, 1.0 / eps, 2.0 / eps);
      row.I_C = detail::trapezoid(row.t, row.norm, 2.0 / eps, row.t_end);
    } catch (const Error& e) {
      row.flagged = true;
      row.message = e.what();
    }
    rep.rows.push_back(row);
  }
  bool all_zero = true, any_flag = false;
  for (const auto& r : rep.rows) {
    all_zero = all_zero && r.I == 0.0 && !r.flagged;
    any_flag = any_flag || r.flagged;
  }
  if (all_zero) {
    rep.zero_residual = true;
    rep.verdict = "zero residual";
    return rep;
  }
  if (any_flag) {
    rep.verdict = "flagged rows present";
    return rep;
  }
  std::vector<double> e, I;
  for (const auto& r : rep.rows) {
    e.push_back(r.epsilon);
    I.push_back(r.I);
  }
  for (std::size_t k = 0; k + 1 < I.size(); ++k) rep.ratios.push_back(I[k] / I[k + 1]);
  const auto fit = fit_power_law(e, I);
  rep.slope = fit.slope;
  rep.slope_r2 = fit.r2;
  rep.verdict = "slope computed";
  return rep;
}

}  // namespace qwave
