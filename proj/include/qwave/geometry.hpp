#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qwave/asymptotic.hpp"
#include "qwave/detection.hpp"

namespace qwave {

// ---------------------------------------------------------------------------
// Chart construction
// ---------------------------------------------------------------------------

/// Inverts X = sigma + c(Y) F0(sigma, Y) tau1 (strictly increasing in sigma while tau1 < tau0).
inline double sigma_of_X(double X, double Y, double tau1, const DirectionalProfile& p, double tau0) {
  if (tau1 < 0.0) reject("sigma_of_X: tau1 must be non-negative");
  if (tau1 >= tau0) reject("sigma_of_X: tau1 must be below the lifespan tau0");
  if (tau1 == 0.0 || X >= p.support_radius()) return X;
  return characteristic_label(p, X, Y, tau1);
}

struct ChartOptions {
  double tau1 = 0.0;      // 0 selects 0.25 tau0
  double eta = 0.0;       // 0 selects 0.05 (tau0 - tau1)
  double x_min = 0.0;     // 0 selects the profile's first sigma node
  double x_step = 0.02;
  std::size_t y_samples = 128;
  std::size_t t_samples = 41;  // T nodes on [0, tau0 - tau1]
};

struct FoldPoint {
  double X = 0.0;
  double Y = 0.0;
  double T = 0.0;
};

/// (X, Y, T) box with W, v, and phi sampled on it.
struct BlowupChart {
  std::shared_ptr<const DirectionalProfile> profile;
  LifespanPrediction prediction;
  double tau0 = 0.0;
  double tau1 = 0.0;
  double eta = 0.0;
  std::vector<double> X, Y, T;  // Y has no closing column
  Matrix W;                     // c(Y) F0(sigma(X, Y, tau1), Y)
  Matrix v;                     // F0(sigma(X, Y, tau1), Y)
  std::vector<double> phi;      // index (k * nX + i) * nY + j for T[k], X[i], Y[j]
  FoldPoint fold;
  std::function<double(double, double, double)> local_phi;  // empty: phi-bar is phi0 itself
  bool glued = false;

  [[nodiscard]] double& phi_at(std::size_t k, std::size_t i, std::size_t j) {
    return phi[(k * X.size() + i) * Y.size() + j];
  }
  [[nodiscard]] double phi_at(std::size_t k, std::size_t i, std::size_t j) const {
    return phi[(k * X.size() + i) * Y.size() + j];
  }

  [[nodiscard]] double angular(double y) const { return profile->angular(y); }

  /// W at an arbitrary (X, Y).
  [[nodiscard]] double W_at(double x, double y) const {
    const double s = sigma_of_X(x, y, tau1, *profile, tau0);
    return angular(y) * profile->value(s, y);
  }
};

/// Builds the chart box and samples W and v; phi is filled by glue_chart().
inline BlowupChart make_chart(std::shared_ptr<const DirectionalProfile> profile, const LifespanPrediction& prediction,
                              const ChartOptions& opts = {}) {
  if (!profile) reject("make_chart: profile required");
  if (prediction.no_blowup) reject("make_chart: no blowup predicted, no fold to chart");
  BlowupChart c;
  c.profile = std::move(profile);
  c.prediction = prediction;
  c.tau0 = prediction.tau0;
  c.tau1 = opts.tau1 > 0.0 ? opts.tau1 : 0.25 * c.tau0;
  if (!(c.tau1 < c.tau0)) reject("make_chart: need 0 < tau1 < tau0");
  const double T0 = c.tau0 - c.tau1;
  c.eta = opts.eta > 0.0 ? opts.eta : 0.05 * T0;
  if (!(c.eta < T0)) reject("make_chart: glueing width must be below tau0 - tau1");
  if (!(opts.x_step > 0.0) || opts.y_samples < 8 || opts.t_samples < 2) reject("make_chart: box too coarse");
  const auto& p = *c.profile;
  const double M = p.support_radius();
  const double x_lo = opts.x_min != 0.0 ? opts.x_min : p.sigma_grid.front();
  if (!(x_lo < M)) reject("make_chart: X range empty");
  c.X = uniform_grid(x_lo, M, opts.x_step);
  for (std::size_t j = 0; j < opts.y_samples; ++j) {
    c.Y.push_back(kTwoPi * static_cast<double>(j) / static_cast<double>(opts.y_samples));
  }
  c.T = linspace(0.0, T0, opts.t_samples);
  c.W = Matrix(c.X.size(), c.Y.size());
  c.v = Matrix(c.X.size(), c.Y.size());
  for (std::size_t i = 0; i < c.X.size(); ++i) {
    for (std::size_t j = 0; j < c.Y.size(); ++j) {
      const double s = sigma_of_X(c.X[i], c.Y[j], c.tau1, p, c.tau0);
      c.v(i, j) = p.value(s, c.Y[j]);
      c.W(i, j) = c.angular(c.Y[j]) * c.v(i, j);
    }
  }
  // the fold sits where the minimising characteristic lands at time tau1
  c.fold.Y = prediction.theta0;
  c.fold.X = prediction.sigma0 + c.angular(prediction.theta0) * p.value(prediction.sigma0, prediction.theta0) * c.tau1;
  c.fold.T = T0;
  return c;
}

/// phi0(X, Y, T) = X + T c(Y) F0(sigma(X, Y, tau1), Y).
inline double phi0(double X, double Y, double T, const BlowupChart& chart) { return X + T * chart.W_at(X, Y); }

/// phi_a = chi(T / eta) phi-bar + (1 - chi(T / eta)) phi0 at an arbitrary point.
inline double phi_a(double X, double Y, double T, const BlowupChart& chart) {
  const double base = phi0(X, Y, T, chart);
  if (!chart.local_phi) return base;
  const double w = cutoff(T / chart.eta);
  if (w == 0.0) return base;
  return w * chart.local_phi(X, Y, T) + (1.0 - w) * base;
}

/// Fills phi on the box. Without `local_phi` the early-time chart is phi0 itself, so the glue is exact.
inline BlowupChart glue_chart(BlowupChart chart, std::function<double(double, double, double)> local_phi = {}) {
  const double T0 = chart.tau0 - chart.tau1;
  if (!(chart.eta < T0)) reject("glue_chart: glueing width must be below tau0 - tau1");
  chart.local_phi = std::move(local_phi);
  const std::size_t nx = chart.X.size(), ny = chart.Y.size(), nt = chart.T.size();
  chart.phi.assign(nx * ny * nt, 0.0);
  for (std::size_t k = 0; k < nt; ++k) {
    const double T = chart.T[k];
    const double w = chart.local_phi ? cutoff(T / chart.eta) : 0.0;
    for (std::size_t i = 0; i < nx; ++i) {
      for (std::size_t j = 0; j < ny; ++j) {
        const double base = chart.X[i] + T * chart.W(i, j);
        chart.phi_at(k, i, j) = w == 0.0 ? base : w * chart.local_phi(chart.X[i], chart.Y[j], T) + (1.0 - w) * base;
      }
    }
  }
  chart.glued = true;
  return chart;
}

// ---------------------------------------------------------------------------
// Condition (H)
// ---------------------------------------------------------------------------

struct HOptions {
  double tolerance = 1e-5;  // acceptance for refined differences and for (a), (d)
  double step = 1e-2;       // initial difference step, halved until two levels agree
  int max_halvings = 6;
  double eigen_floor = 1e-6;  // relative to |min dX W|
  double zero_level = 1e-3;   // dX phi below this counts as zero in (b); dX phi = 1 at T = 0
};

struct SubCheck {
  std::string name;
  bool pass = false;
  double witness = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct HReport {
  bool checkable = true;
  std::string reason;
  std::vector<SubCheck> subchecks;  // a..e
  bool all_pass = false;
  FoldPoint fold;
  std::array<double, 2> eigenvalues{0.0, 0.0};
  double min_dXW = 0.0;             // refined at the fold
  double grid_min_dXW = 0.0;        // dense-grid minimum
  double fold_time_expected = 0.0;  // -1 / (tau0 - tau1)
  double fold_identity_rel = 0.0;
  double mixed_XT = 0.0;            // d2 phi / dX dT at the fold
  double chain_rule_residual = 0.0; // max over the box of |FD dX W - chain-rule formula|
  double minimizer_transport = 0.0; // distance of the grid argmin from the fold point, in cells
  double tolerance = 0.0;
  double step_used = 0.0;
};

struct Refined {
  double value = 0.0;
  double change = 0.0;
  double step = 0.0;
};

/// Evaluates d(h) at h, h/2, ... until two successive values agree to `tol`.
template <class D>
Refined refine_difference(D&& d, double h, double tol, int max_halvings) {
  double prev = d(h);
  Refined r{prev, std::numeric_limits<double>::infinity(), h};
  for (int k = 0; k < max_halvings; ++k) {
    h *= 0.5;
    const double cur = d(h);
    const double change = std::abs(cur - prev);
    if (change < r.change) r = {cur, change, h};
    if (change < tol) break;
    prev = cur;
  }
  return r;
}

/// Checks the fold normal form (a)-(e) at the predicted fold point of a glued chart.
inline HReport check_condition_H(const BlowupChart& chart, const HOptions& opts = {}) {
  HReport rep;
  rep.tolerance = opts.tolerance;
  rep.fold = chart.fold;
  rep.fold_time_expected = -1.0 / (chart.tau0 - chart.tau1);
  if (!chart.glued) reject("check_condition_H: chart not glued");
  if (chart.prediction.degenerate) {
    rep.checkable = false;
    rep.reason = "H not checkable: degenerate minimizer";
    return rep;
  }
  const auto& p = *chart.profile;
  const std::size_t nx = chart.X.size(), ny = chart.Y.size(), nt = chart.T.size();
  const double hx = chart.X[1] - chart.X[0], hy = chart.Y[1] - chart.Y[0];
  const FoldPoint f = chart.fold;

  // dX phi on the box by 4th-order differences along X
  std::vector<double> dphi(nx * ny * nt);
  auto dphi_at = [&](std::size_t k, std::size_t i, std::size_t j) -> double& { return dphi[(k * nx + i) * ny + j]; };
  std::vector<double> line(nx);
  for (std::size_t k = 0; k < nt; ++k) {
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t i = 0; i < nx; ++i) line[i] = chart.phi_at(k, i, j);
      const auto d = differentiate_uniform(line, hx);
      for (std::size_t i = 0; i < nx; ++i) dphi_at(k, i, j) = d[i];
    }
  }

  // (a) dX phi >= 0 everywhere
  {
    double mn = std::numeric_limits<double>::infinity();
    for (double x : dphi) mn = std::min(mn, x);
    rep.subchecks.push_back({"a: dX phi >= 0 on the box", mn >= -opts.tolerance, mn, opts.tolerance, ""});
  }

  // (b) nodes with dX phi <= zero_level: all on the last T slice, one connected cluster,
  // and the fold point inside that cluster's cell hull
  {
    const std::size_t k = nt - 1;
    std::size_t early = 0;
    for (std::size_t kk = 0; kk < k; ++kk) {
      for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < ny; ++j) early += dphi_at(kk, i, j) <= opts.zero_level ? 1 : 0;
      }
    }
    std::vector<int> label(nx * ny, 0);
    int clusters = 0;
    double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x;
    double hull_dy = 0.0;
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < nx; ++i) {
      for (std::size_t j = 0; j < ny; ++j) {
        if (label[i * ny + j] != 0 || dphi_at(k, i, j) > opts.zero_level) continue;
        ++clusters;
        stack.push_back(i * ny + j);
        label[i * ny + j] = clusters;
        while (!stack.empty()) {
          const std::size_t q = stack.back();
          stack.pop_back();
          const std::size_t qi = q / ny, qj = q % ny;
          lo_x = std::min(lo_x, chart.X[qi]);
          hi_x = std::max(hi_x, chart.X[qi]);
          hull_dy = std::max(hull_dy, detail::angle_distance(chart.Y[qj], f.Y));
          for (int di = -1; di <= 1; ++di) {
            const long ii = static_cast<long>(qi) + di;
            if (ii < 0 || ii >= static_cast<long>(nx)) continue;
            for (int dj = -1; dj <= 1; ++dj) {
              const std::size_t jj = (qj + ny + static_cast<std::size_t>(dj + static_cast<int>(ny))) % ny;
              const std::size_t r = static_cast<std::size_t>(ii) * ny + jj;
              if (label[r] == 0 && dphi_at(k, static_cast<std::size_t>(ii), jj) <= opts.zero_level) {
                label[r] = clusters;
                stack.push_back(r);
              }
            }
          }
        }
      }
    }
    const bool covers = clusters == 1 && f.X >= lo_x - hx && f.X <= hi_x + hx;
    const bool ok = early == 0 && clusters == 1 && covers;
    SubCheck sc{"b: zero set of dX phi is the fold cell", ok, static_cast<double>(clusters), opts.zero_level, ""};
    sc.detail = std::to_string(clusters) + " cluster(s) on the last slice, " + std::to_string(early) +
                " near-zero node(s) before it, X hull [" + std::to_string(lo_x) + ", " + std::to_string(hi_x) +
                "], angular reach " + std::to_string(hull_dy);
    rep.subchecks.push_back(sc);
  }

  // pointwise derivatives of phi_a around the fold, refined by halving
  auto dX = [&](double x, double y, double t, double h) {
    return fd1([&](double s) { return phi_a(s, y, t, chart); }, x, h);
  };
  const double tol = opts.tolerance;
  const auto mixed = refine_difference(
      [&](double h) { return fd1([&](double t) { return dX(f.X, f.Y, t, h); }, f.T, h); }, opts.step, tol,
      opts.max_halvings);
  rep.mixed_XT = mixed.value;
  rep.subchecks.push_back({"c: d2 phi / dT dX < 0 at the fold", mixed.value < 0.0 && mixed.change < tol, mixed.value,
                           tol, ""});

  const auto gx = refine_difference([&](double h) { return fd1([&](double x) { return dX(x, f.Y, f.T, h); }, f.X, h); },
                                    opts.step, tol, opts.max_halvings);
  const auto gy = refine_difference([&](double h) { return fd1([&](double y) { return dX(f.X, y, f.T, h); }, f.Y, h); },
                                    opts.step, tol, opts.max_halvings);
  const double gnorm = std::hypot(gx.value, gy.value);
  rep.subchecks.push_back({"d: grad_(X,Y) dX phi = 0 at the fold", gnorm < tol, gnorm, tol, ""});

  const auto hxx = refine_difference([&](double h) { return fd2([&](double x) { return dX(x, f.Y, f.T, h); }, f.X, h); },
                                     opts.step, tol, opts.max_halvings);
  const auto hyy = refine_difference([&](double h) { return fd2([&](double y) { return dX(f.X, y, f.T, h); }, f.Y, h); },
                                     opts.step, tol, opts.max_halvings);
  const auto hxy = refine_difference(
      [&](double h) {
        return fd1([&](double y) { return fd1([&](double x) { return dX(x, y, f.T, h); }, f.X, h); }, f.Y, h);
      },
      opts.step, tol, opts.max_halvings);
  rep.eigenvalues = eigenvalues(Sym2{hxx.value, hxy.value, hyy.value});
  rep.step_used = std::min({mixed.step, gx.step, gy.step, hxx.step, hyy.step, hxy.step});

  // fold-time identity: min dX W = -1 / (tau0 - tau1)
  const auto dxw = refine_difference([&](double h) { return fd1([&](double x) { return chart.W_at(x, f.Y); }, f.X, h); },
                                     opts.step, 1e-10, opts.max_halvings);
  rep.min_dXW = dxw.value;
  rep.fold_identity_rel = std::abs(rep.min_dXW - rep.fold_time_expected) / std::abs(rep.fold_time_expected);
  const double floor = opts.eigen_floor * std::abs(rep.min_dXW);
  const double emin = std::min(rep.eigenvalues[0], rep.eigenvalues[1]);
  rep.subchecks.push_back({"e: Hessian of dX phi positive definite at the fold", emin > floor, emin, floor, ""});

  // dense-grid diagnostics: chain rule and minimiser transport
  {
    std::vector<double> col(nx);
    double worst = 0.0, gmin = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t i = 0; i < nx; ++i) col[i] = chart.W(i, j);
      const auto d = differentiate_uniform(col, hx);
      const double c = chart.angular(chart.Y[j]);
      for (std::size_t i = 2; i + 2 < nx; ++i) {
        const double s = sigma_of_X(chart.X[i], chart.Y[j], chart.tau1, p, chart.tau0);
        const double w = c * p.derivative(s, chart.Y[j]);
        worst = std::max(worst, std::abs(d[i] - w / (1.0 + chart.tau1 * w)));
        if (d[i] < gmin) {
          gmin = d[i];
          bi = i;
          bj = j;
        }
      }
    }
    rep.chain_rule_residual = worst;
    rep.grid_min_dXW = gmin;
    const double dy = detail::angle_distance(chart.Y[bj], f.Y);
    rep.minimizer_transport = std::hypot((chart.X[bi] - f.X) / hx, dy / hy);
  }

  rep.all_pass = true;
  for (const auto& s : rep.subchecks) rep.all_pass = rep.all_pass && s.pass;
  return rep;
}

// ---------------------------------------------------------------------------
// Predicted blowup point
// ---------------------------------------------------------------------------

struct BlowupPoint {
  bool degenerate = false;
  double T = std::numeric_limits<double>::infinity();
  double sigma = 0.0;
  double tau = 0.0;
  double theta = std::numeric_limits<double>::quiet_NaN();  // unspecified when degenerate
  Vec2 x{};
  double r = 0.0;
};

/// Leading-order prediction T = (tau0 / eps)^2, x = (T + sigma0)(cos theta0, sin theta0).
inline BlowupPoint blowup_point(const LifespanPrediction& pred, double epsilon) {
  if (!(epsilon > 0.0)) reject("blowup_point: epsilon must be positive");
  if (pred.no_blowup) reject("blowup_point: no blowup predicted");
  BlowupPoint b;
  b.T = pred.predicted_T(epsilon);
  b.sigma = pred.sigma0;
  b.tau = pred.tau0;
  b.r = b.T + pred.sigma0;
  b.degenerate = pred.degenerate;
  if (!pred.degenerate) {
    b.theta = pred.theta0;
    b.x = b.r * direction(pred.theta0);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Near-blowup rates
// ---------------------------------------------------------------------------

struct RateFit {
  double exponent = std::numeric_limits<double>::quiet_NaN();
  double r2 = 0.0;
  std::size_t samples = 0;
};

struct RateReport {
  double T_est = 0.0;
  double window_lo = 0.0;  // in T - t
  double window_hi = 0.0;
  RateFit ut;              // sup |u_t|
  RateFit grad;            // sup |grad u|
  RateFit ut_full;         // over the whole admissible window
  RateFit grad_full;
  double lower_bound_min = 0.0;  // min over the window of (T - t) sup |u_t|
  double lower_bound_margin = 0.0;  // that minimum over the window maximum
};

namespace detail {

inline RateFit log_fit(const std::vector<double>& x, const std::vector<double>& y) {
  RateFit f;
  if (x.size() < 3) return f;
  const auto pf = fit_power_law(x, y);
  f.exponent = pf.slope;
  f.r2 = pf.r2;
  f.samples = x.size();
  return f;
}

}  // namespace detail

/// Fits g ~ (T - t)^p for sup |u_t| and sup |grad u|.
///
/// Admissible samples have 5 dt <= T - t <= 0.2 T. The reported exponent uses the innermost
/// decade of those; the fit over the whole admissible range is kept as a drift diagnostic.
inline RateReport rate_fit(const std::vector<HistorySample>& history, double T_est, double dt = 0.0,
                           std::size_t min_samples = 10) {
  if (!std::isfinite(T_est) || !(T_est > 0.0)) reject("rate_fit: blowup time must be positive and finite");
  if (!(dt > 0.0)) {
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
      if (it->dt > 0.0) {
        dt = it->dt;
        break;
      }
    }
  }
  if (!(dt > 0.0)) reject("rate_fit: time step unknown");
  RateReport rep;
  rep.T_est = T_est;
  const double lo = 5.0 * dt, hi = 0.2 * T_est;
  std::vector<const HistorySample*> adm;
  double closest = std::numeric_limits<double>::infinity();
  for (const auto& s : history) {
    const double x = T_est - s.t;
    if (x >= lo && x <= hi && s.sup_ut > 0.0 && s.sup_grad > 0.0) {
      adm.push_back(&s);
      closest = std::min(closest, x);
    }
  }
  if (adm.size() < min_samples) {
    diagnose("rate_fit: insufficient samples (" + std::to_string(adm.size()) + " in the window, need " +
             std::to_string(min_samples) + ")");
  }
  rep.window_lo = closest;
  rep.window_hi = std::min(hi, 10.0 * closest);
  std::vector<double> x, u, g, xf, uf, gf;
  for (const auto* s : adm) {
    const double d = T_est - s->t;
    xf.push_back(d);
    uf.push_back(s->sup_ut);
    gf.push_back(s->sup_grad);
    if (d <= rep.window_hi) {
      x.push_back(d);
      u.push_back(s->sup_ut);
      g.push_back(s->sup_grad);
    }
  }
  if (x.size() < min_samples) {
    // too sparse near blowup: fall back to the whole admissible range
    x = xf;
    u = uf;
    g = gf;
    rep.window_hi = hi;
  }
  rep.ut = detail::log_fit(x, u);
  rep.grad = detail::log_fit(x, g);
  rep.ut_full = detail::log_fit(xf, uf);
  rep.grad_full = detail::log_fit(xf, gf);
  double mn = std::numeric_limits<double>::infinity(), mx = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mn = std::min(mn, x[k] * u[k]);
    mx = std::max(mx, x[k] * u[k]);
  }
  rep.lower_bound_min = mn;
  rep.lower_bound_margin = mx > 0.0 ? mn / mx : 0.0;
  return rep;
}

}  // namespace qwave
