#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <vector>

#include "qwave/core.hpp"
#include "qwave/radon.hpp"

namespace qwave {

// ---------------------------------------------------------------------------
// Characteristic solution of  dV/dtau + c(theta) V dV/dsigma = 0,  V(., ., 0) = F0
// ---------------------------------------------------------------------------

/// Values along the characteristics s -> sigma(s, theta, tau), one row per s sample.
struct CharacteristicSolution {
  std::shared_ptr<const DirectionalProfile> profile;
  double tau = 0.0;
  std::vector<double> s_grid;      // the profile's sigma grid, used as characteristic labels
  std::vector<double> theta_grid;  // the profile's theta grid
  Matrix sigma_of_s;
  Matrix V_values;   // F0(s, theta), transported unchanged
  Matrix U_values;   // dV/dsigma
  Matrix jacobian;   // d sigma / ds
  double min_jacobian = 1.0;
  bool past_blowup = false;
};

inline CharacteristicSolution solve_characteristics(std::shared_ptr<const DirectionalProfile> profile, double tau) {
  if (!profile) reject("solve_characteristics: null profile");
  if (!(tau >= 0.0) || !std::isfinite(tau)) reject("solve_characteristics: tau must be finite and non-negative");
  if (!profile->has_derivative()) reject("solve_characteristics: profile derivative not filled");
  const auto& p = *profile;
  CharacteristicSolution sol;
  sol.profile = profile;
  sol.tau = tau;
  sol.s_grid = p.sigma_grid;
  sol.theta_grid = p.theta_grid;
  const std::size_t ns = p.n_sigma(), nt = p.n_theta();
  sol.sigma_of_s = Matrix(ns, nt);
  sol.V_values = Matrix(ns, nt);
  sol.U_values = Matrix(ns, nt);
  sol.jacobian = Matrix(ns, nt);
  double jmin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < nt; ++j) {
    const double c = p.angular(p.theta_grid[j]);
    for (std::size_t i = 0; i < ns; ++i) {
      const double s = p.sigma_grid[i];
      const double f = p.F0(i, j);
      const double df = p.dF0_dsigma(i, j);
      const double jac = 1.0 + c * df * tau;
      sol.sigma_of_s(i, j) = s + c * f * tau;
      sol.V_values(i, j) = f;
      sol.jacobian(i, j) = jac;
      sol.U_values(i, j) = df / jac;
      jmin = std::min(jmin, jac);
    }
  }
  sol.min_jacobian = jmin;
  sol.past_blowup = jmin <= 0.0;
  return sol;
}

inline CharacteristicSolution solve_characteristics(const DirectionalProfile& profile, double tau) {
  return solve_characteristics(std::make_shared<const DirectionalProfile>(profile), tau);
}

/// Characteristic label s with sigma(s, theta, tau) = sigma; bisection then Newton, tolerance 1e-12.
inline double characteristic_label(const DirectionalProfile& p, double sigma, double theta, double tau) {
  const double M = p.support_radius();
  if (sigma >= M) return sigma;
  const double c = p.angular(theta);
  auto forward = [&](double s) { return s + c * p.value(s, theta) * tau; };
  const double bound = c * max_abs(p.F0.data()) * tau;
  double lo = sigma - std::abs(bound) - 1.0;
  double hi = std::min(M, sigma + std::abs(bound) + 1.0);
  while (forward(lo) > sigma) lo -= 2.0 * (std::abs(bound) + 1.0);
  if (forward(hi) < sigma) hi = M;
  double s = 0.5 * (lo + hi);
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double r = forward(s) - sigma;
    if (r > 0.0) hi = s;
    else lo = s;
    const double slope = 1.0 + c * p.derivative(s, theta) * tau;
    double next = s - r / slope;
    if (!(slope > 0.0) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) < 1e-12) {
      s = next;
      break;
    }
    s = next;
  }
  return s;
}

/// V(sigma, theta, tau) = F0(s, theta) where s is the characteristic through sigma.
inline double transported_value(const DirectionalProfile& p, double sigma, double theta, double tau) {
  if (sigma >= p.support_radius()) return 0.0;
  if (tau == 0.0) return p.value(sigma, theta);
  return p.value(characteristic_label(p, sigma, theta, tau), theta);
}

inline double evaluate_V(const CharacteristicSolution& sol, double sigma, double theta) {
  if (sol.past_blowup) reject("evaluate_V: map not invertible at or past the lifespan");
  if (sigma > sol.profile->support_radius()) return 0.0;
  return transported_value(*sol.profile, sigma, theta, sol.tau);
}

// ---------------------------------------------------------------------------
// Lifespan prediction
// ---------------------------------------------------------------------------

struct MinimumCandidate {
  double sigma = 0.0;
  double theta = 0.0;
  double value = 0.0;
};

struct LifespanPrediction {
  double sigma0 = 0.0;
  double theta0 = 0.0;
  double min_value = 0.0;
  double tau0 = std::numeric_limits<double>::infinity();
  Sym2 hessian{};
  std::array<double, 2> eigenvalues{0.0, 0.0};
  std::optional<double> uniqueness_gap;  // empty when no competing minimum exists
  bool degenerate = false;
  bool no_blowup = true;
  int newton_iterations = 0;
  std::vector<MinimumCandidate> candidates;  // near-minimal local minima, deepest first

  /// T_eps = (tau0 / eps)^2.
  [[nodiscard]] double predicted_T(double eps) const {
    if (no_blowup) return std::numeric_limits<double>::infinity();
    return (tau0 / eps) * (tau0 / eps);
  }
};

struct PredictOptions {
  double hessian_floor = 1e-6;      // relative to |min_value|
  double uniqueness_tol = 1e-3;     // competitor within this fraction of |min_value| => degenerate
  double candidate_window = 0.05;   // report local minima within this fraction of |min_value|
  double neighborhood_sigma = 0.5;  // a competitor must lie outside this box around the minimiser
  double neighborhood_theta = 0.5;
  double fd_sigma = 1e-3;
  double fd_theta = 1e-3;
  int max_newton = 60;
  std::size_t max_candidates = 16;
};

namespace detail {

inline double wrap_angle(double t) {
  double r = std::fmod(t, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  return r;
}

inline double angle_distance(double a, double b) {
  const double d = std::abs(wrap_angle(a) - wrap_angle(b));
  return std::min(d, kTwoPi - d);
}

}  // namespace detail

/// W(sigma, theta) = dF0/dsigma (sigma, theta) * c(theta).
inline double steepness(const DirectionalProfile& p, double sigma, double theta) {
  return p.derivative(sigma, theta) * p.angular(theta);
}

inline Sym2 steepness_hessian(const DirectionalProfile& p, double sigma, double theta, double hs, double ht) {
  auto w = [&](double s, double t) { return steepness(p, s, t); };
  const double f0 = w(sigma, theta);
  Sym2 h;
  h.a = (w(sigma + hs, theta) - 2.0 * f0 + w(sigma - hs, theta)) / (hs * hs);
  h.c = (w(sigma, theta + ht) - 2.0 * f0 + w(sigma, theta - ht)) / (ht * ht);
  h.b = (w(sigma + hs, theta + ht) - w(sigma + hs, theta - ht) - w(sigma - hs, theta + ht) +
         w(sigma - hs, theta - ht)) /
        (4.0 * hs * ht);
  return h;
}

namespace detail {

struct NewtonResult {
  double sigma = 0.0;
  double theta = 0.0;
  double value = 0.0;
  int iterations = 0;
};

/// Damped Newton on W restricted to directions whose curvature exceeds `floor`.
inline NewtonResult newton_minimise(const DirectionalProfile& p, double sigma, double theta, double refine,
                                    double floor, const PredictOptions& opts) {
  const double hs = opts.fd_sigma, ht = opts.fd_theta;
  const double cell = p.sigma_step();
  int it = 0;
  for (; it < opts.max_newton; ++it) {
    const double gs = (steepness(p, sigma + hs, theta) - steepness(p, sigma - hs, theta)) / (2.0 * hs);
    const double gt = (steepness(p, sigma, theta + ht) - steepness(p, sigma, theta - ht)) / (2.0 * ht);
    const Sym2 h = steepness_hessian(p, sigma, theta, hs, ht);
    const auto ev = eigenvalues(h);
    std::array<Vec2, 2> vec;
    if (std::abs(h.b) > 1e-300) {
      vec[0] = Vec2{h.b, ev[0] - h.a};
      vec[1] = Vec2{h.b, ev[1] - h.a};
    } else {
      vec[0] = h.a <= h.c ? Vec2{1.0, 0.0} : Vec2{0.0, 1.0};
      vec[1] = h.a <= h.c ? Vec2{0.0, 1.0} : Vec2{1.0, 0.0};
    }
    Vec2 step{};
    for (int k = 0; k < 2; ++k) {
      const double n = norm(vec[k]);
      if (n == 0.0 || !(ev[k] > floor)) continue;
      const Vec2 e = (1.0 / n) * vec[k];
      step = step - ((gs * e.x + gt * e.y) / ev[k]) * e;
    }
    const double len = norm(step);
    if (len > cell) step = (cell / len) * step;
    const double before = steepness(p, sigma, theta);
    double damp = 1.0;
    while (damp > 1e-4 && steepness(p, sigma + damp * step.x, theta + damp * step.y) > before) damp *= 0.5;
    if (damp <= 1e-4) break;
    sigma = std::min(sigma + damp * step.x, p.support_radius());
    theta = wrap_angle(theta + damp * step.y);
    if (damp * norm(step) < refine) break;
  }
  return {sigma, theta, steepness(p, sigma, theta), it};
}

}  // namespace detail

/// Grid scan of W for the global minimum, Newton refinement, and a uniqueness/Hessian certificate.
inline LifespanPrediction predict_lifespan(const DirectionalProfile& p, double refine = 1e-10,
                                           const PredictOptions& opts = {}) {
  if (!p.has_derivative()) reject("predict_lifespan: profile derivative not filled");
  if (!(refine > 0.0)) reject("predict_lifespan: refinement tolerance must be positive");
  LifespanPrediction out;
  if (p.is_zero()) return out;

  const std::size_t ns = p.n_sigma(), na = p.n_angles();
  Matrix w(ns, na);
  std::size_t bi = 0, bj = 0;
  for (std::size_t i = 0; i < ns; ++i) {
    for (std::size_t j = 0; j < na; ++j) {
      w(i, j) = p.dF0_dsigma(i, j) * p.angular(p.theta_grid[j]);
      if (w(i, j) < w(bi, bj)) {
        bi = i;
        bj = j;
      }
    }
  }
  if (!(w(bi, bj) < 0.0)) return out;

  // Grid local minima (non-strict, periodic in theta).
  std::vector<MinimumCandidate> local;
  for (std::size_t i = 0; i < ns; ++i) {
    for (std::size_t j = 0; j < na; ++j) {
      const double v = w(i, j);
      if (v >= 0.0) continue;
      bool is_min = true;
      for (int di = -1; di <= 1 && is_min; ++di) {
        const long ii = static_cast<long>(i) + di;
        if (ii < 0 || ii >= static_cast<long>(ns)) continue;
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          const std::size_t jj = (j + na + static_cast<std::size_t>(dj + static_cast<int>(na))) % na;
          if (w(static_cast<std::size_t>(ii), jj) < v) {
            is_min = false;
            break;
          }
        }
      }
      if (is_min) local.push_back({p.sigma_grid[i], p.theta_grid[j], v});
    }
  }

  const double hs = opts.fd_sigma, ht = opts.fd_theta;
  const double floor = opts.hessian_floor * std::abs(w(bi, bj));
  const auto best = detail::newton_minimise(p, p.sigma_grid[bi], p.theta_grid[bj], refine, floor, opts);
  const double sigma = best.sigma, theta = best.theta;
  const int it = best.iterations;
  out.newton_iterations = it;
  out.no_blowup = false;
  out.sigma0 = sigma;
  out.theta0 = theta;
  out.min_value = best.value;
  out.tau0 = -1.0 / out.min_value;
  out.hessian = steepness_hessian(p, out.sigma0, out.theta0, hs, ht);
  out.eigenvalues = eigenvalues(out.hessian);

  const double scale = std::abs(out.min_value);
  std::optional<double> gap;
  for (const auto& m : local) {
    const bool inside = std::abs(m.sigma - out.sigma0) <= opts.neighborhood_sigma &&
                        detail::angle_distance(m.theta, out.theta0) <= opts.neighborhood_theta;
    if (inside) continue;
    double value = m.value;
    // Competitors deep enough to matter are refined the same way as the minimiser.
    if (value <= out.min_value + opts.candidate_window * scale) {
      value = detail::newton_minimise(p, m.sigma, m.theta, refine, floor, opts).value;
    }
    const double g = value - out.min_value;
    if (!gap || g < *gap) gap = g;
  }
  out.uniqueness_gap = gap;
  const bool flat = std::min(out.eigenvalues[0], out.eigenvalues[1]) < opts.hessian_floor * scale;
  const bool tied = gap && *gap < opts.uniqueness_tol * scale;
  out.degenerate = flat || tied;

  std::sort(local.begin(), local.end(), [](const auto& a, const auto& b) { return a.value < b.value; });
  for (const auto& m : local) {
    if (m.value > out.min_value + opts.candidate_window * scale) break;
    if (out.candidates.size() >= opts.max_candidates) break;
    out.candidates.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Direct method-of-lines integration of the transport equation
// ---------------------------------------------------------------------------

struct DirectGrid {
  double sigma_step = 0.005;
  double sigma_min = -10.0;
  double cfl = 0.5;
  int max_refinements = 4;
  std::size_t theta_samples = 4;  // evenly spaced slices in [0, 2 pi)
};

struct DirectIntegrationReport {
  double tau_max = 0.0;
  double linf_gap = 0.0;
  double l2_gap = 0.0;
  std::vector<double> thetas;
  std::vector<double> slice_linf;
  std::vector<double> slice_l2;
  double time_step = 0.0;
  long steps = 0;
  int refinements = 0;
};

namespace detail {

// dV/dtau = -c V dV/dsigma with second-order upwinding by the sign of c V.
inline void transport_rhs(std::span<const double> v, double c, double h, double left0, double left1,
                          std::vector<double>& out) {
  const std::size_t n = v.size();
  auto at = [&](long k) -> double {
    if (k < 0) return k == -1 ? left0 : left1;
    if (k >= static_cast<long>(n)) return 0.0;
    return v[static_cast<std::size_t>(k)];
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<long>(i);
    const double a = c * v[i];
    double d;
    if (a >= 0.0) d = (3.0 * at(k) - 4.0 * at(k - 1) + at(k - 2)) / (2.0 * h);
    else d = (-3.0 * at(k) + 4.0 * at(k + 1) - at(k + 2)) / (2.0 * h);
    out[i] = -a * d;
  }
}

}  // namespace detail

inline DirectIntegrationReport verify_against_direct_integration(const DirectionalProfile& p, double tau_max,
                                                                 const DirectGrid& grid = {}) {
  if (!p.has_derivative()) reject("verify_against_direct_integration: profile derivative not filled");
  if (tau_max < 0.0) reject("verify_against_direct_integration: tau_max must be non-negative");
  double wmin = 0.0;
  for (std::size_t i = 0; i < p.n_sigma(); ++i) {
    for (std::size_t j = 0; j < p.n_angles(); ++j) {
      wmin = std::min(wmin, p.dF0_dsigma(i, j) * p.angular(p.theta_grid[j]));
    }
  }
  if (wmin < 0.0 && tau_max > 0.9 * (-1.0 / wmin)) reject("verify_against_direct_integration: tau_max exceeds 0.9 tau0");
  const double M = p.support_radius();
  const auto sigma = uniform_grid(grid.sigma_min, M, grid.sigma_step);
  const double h = sigma[1] - sigma[0];
  const std::size_t n = sigma.size() - 1;  // last node is sigma = M where V = 0

  DirectIntegrationReport rep;
  rep.tau_max = tau_max;
  double sum_sq = 0.0;
  for (std::size_t q = 0; q < grid.theta_samples; ++q) {
    const double theta = kTwoPi * static_cast<double>(q) / static_cast<double>(grid.theta_samples);
    const double c = p.angular(theta);
    std::vector<double> v0(n);
    for (std::size_t i = 0; i < n; ++i) v0[i] = p.value(sigma[i], theta);
    const double vmax = max_abs(v0);
    auto ghost = [&](double tau, int k) { return transported_value(p, sigma[0] - h * k, theta, tau); };

    std::vector<double> v = v0;
    bool ok = false;
    double dt = 0.0;
    long steps = 0;
    int attempt = 0;
    double last_stable = 0.0;
    for (; attempt <= grid.max_refinements && !ok; ++attempt) {
      v = v0;
      if (tau_max == 0.0) {
        ok = true;
        break;
      }
      const double speed = std::max(std::abs(c) * vmax, 1e-12);
      steps = static_cast<long>(std::ceil(tau_max / (grid.cfl * std::ldexp(1.0, -attempt) * h / speed)));
      dt = tau_max / static_cast<double>(steps);
      std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
      bool stable = true;
      for (long st = 0; st < steps && stable; ++st) {
        const double t = dt * static_cast<double>(st);
        detail::transport_rhs(v, c, h, ghost(t, 1), ghost(t, 2), k1);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = v[i] + 0.5 * dt * k1[i];
        detail::transport_rhs(tmp, c, h, ghost(t + 0.5 * dt, 1), ghost(t + 0.5 * dt, 2), k2);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = v[i] + 0.5 * dt * k2[i];
        detail::transport_rhs(tmp, c, h, ghost(t + 0.5 * dt, 1), ghost(t + 0.5 * dt, 2), k3);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = v[i] + dt * k3[i];
        detail::transport_rhs(tmp, c, h, ghost(t + dt, 1), ghost(t + dt, 2), k4);
        for (std::size_t i = 0; i < n; ++i) v[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        // Transport preserves the extremes; growth signals instability.
        if (!all_finite(v) || max_abs(v) > 1.5 * vmax + 1e-12) stable = false;
        else last_stable = t + dt;
      }
      ok = stable;
      if (ok) break;
    }
    if (!ok) {
      std::ostringstream os;
      os << "verify_against_direct_integration: direct integration unstable after " << grid.max_refinements
         << " refinements; last stable tau " << last_stable;
      diagnose(os.str());
    }
    double linf = 0.0, l2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = v[i] - transported_value(p, sigma[i], theta, tau_max);
      linf = std::max(linf, std::abs(e));
      l2 += e * e * h;
    }
    sum_sq += l2;
    rep.thetas.push_back(theta);
    rep.slice_linf.push_back(linf);
    rep.slice_l2.push_back(std::sqrt(l2));
    rep.linf_gap = std::max(rep.linf_gap, linf);
    rep.time_step = dt;
    rep.steps = std::max(rep.steps, steps);
    rep.refinements = std::max(rep.refinements, attempt);
  }
  rep.l2_gap = std::sqrt(sum_sq / static_cast<double>(std::max<std::size_t>(1, grid.theta_samples)));
  return rep;
}

}  // namespace qwave
