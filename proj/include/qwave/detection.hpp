#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "qwave/core.hpp"
#include "qwave/wavefield.hpp"

namespace qwave {

struct DetectionConfig {
  double growth_factor = 8.0;
  double hard_threshold = 10.0;  // blowup once g > hard_threshold / epsilon
  int max_refinements = 4;
  bool refine_space = true;
  std::size_t max_cells = 16'000'000;  // Cartesian spatial refinement cap
  double horizon = 0.0;
  double cfl = 0.9999;  // fraction of the stability limit; radial phase error vanishes as this nears 1
  double resolution_limit = 0.1;  // h |grad u| / |u| above this marks a sample unresolved
  double bound_constant = 2.0;     // sup |u| <= C eps expected before blowup
  std::size_t max_samples = 4000;  // history budget before the first trigger
};

struct HistorySample {
  double t = 0.0;
  double sup_u = 0.0;
  double sup_ut = 0.0;
  double sup_grad = 0.0;
  double resolution = 0.0;
  double h = 0.0;
  double dt = 0.0;
  int level = 0;
};

struct RefinementEvent {
  double t = 0.0;
  double g = 0.0;
  double h_before = 0.0;
  double h_after = 0.0;
  double dt_after = 0.0;
  std::string action;
};

struct BlowupFit {
  double T = std::numeric_limits<double>::quiet_NaN();
  double slope = 0.0;  // d(1/g)/dt
  double rate_exponent = std::numeric_limits<double>::quiet_NaN();
  double rate_r2 = 0.0;
  double r2 = 0.0;
  std::size_t samples = 0;
  bool valid = false;
};

struct BlowupReport {
  bool detected = false;
  bool numerical_failure = false;
  std::string reason;
  double T_est = std::numeric_limits<double>::quiet_NaN();
  Vec2 location{};
  double location_r = 0.0;
  double location_theta = 0.0;
  double rate_exponent = std::numeric_limits<double>::quiet_NaN();
  double rate_r2 = 0.0;
  std::size_t fit_samples = 0;
  double fit_start = 0.0;
  double last_resolved_t = 0.0;
  double t_final = 0.0;
  double sup_u_run = 0.0;
  bool bounded = true;
  double max_cfl = 0.0;
  double masked_max = 0.0;
  long steps = 0;
  double first_trigger = std::numeric_limits<double>::quiet_NaN();
  std::vector<HistorySample> history;
  std::vector<RefinementEvent> refinement_trace;
};

/// Fits log g against log(T - t) over samples strictly before T; returns (exponent, r2).
inline std::pair<double, double> fit_rate(std::span<const double> t, std::span<const double> g, double T) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (T - t[i] > 0.0 && g[i] > 0.0) {
      x.push_back(T - t[i]);
      y.push_back(g[i]);
    }
  }
  if (x.size() < 3) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  const auto pf = fit_power_law(x, y);
  return {pf.slope, pf.r2};
}

/// Least-squares fit of 1/g = a (T - t), then of log g against log(T - t).
inline BlowupFit fit_blowup(std::span<const double> t, std::span<const double> g) {
  BlowupFit out;
  if (t.size() != g.size()) reject("fit_blowup: length mismatch");
  if (t.size() < 3) return out;
  std::vector<double> inv(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(g[i] > 0.0)) return out;
    inv[i] = 1.0 / g[i];
  }
  const auto lf = fit_line(t, inv);
  if (!(lf.slope < 0.0)) return out;
  out.T = -lf.intercept / lf.slope;
  out.slope = lf.slope;
  out.r2 = lf.r2;
  out.samples = t.size();
  std::tie(out.rate_exponent, out.rate_r2) = fit_rate(t, g, out.T);
  out.valid = true;
  return out;
}

namespace detail {

inline HistorySample observe(const WaveField& f, double dt, int level) {
  HistorySample s;
  s.t = f.t;
  s.sup_u = sup_u(f);
  s.sup_ut = sup_ut(f);
  s.sup_grad = sup_gradient(f);
  s.resolution = s.sup_u > 0.0 ? f.h * s.sup_grad / s.sup_u : 0.0;
  s.h = f.h;
  s.dt = dt;
  s.level = level;
  return s;
}

inline double growth_measure(const HistorySample& s) { return std::max(s.sup_ut, s.sup_grad); }

}  // namespace detail

/// Fit window: resolved samples from the first trigger on.
/// T comes from the combined growth measure, the rate from sup |u_t|.
inline BlowupFit fit_report(BlowupReport& rep, double resolution_limit) {
  std::vector<double> t, g, v;
  for (const auto& s : rep.history) {
    if (s.t < rep.first_trigger || s.resolution > resolution_limit) continue;
    t.push_back(s.t);
    g.push_back(detail::growth_measure(s));
    v.push_back(s.sup_ut);
  }
  rep.fit_start = t.empty() ? 0.0 : t.front();
  rep.last_resolved_t = t.empty() ? 0.0 : t.back();
  auto fit = fit_blowup(t, g);
  rep.fit_samples = fit.samples;
  if (fit.valid) {
    std::tie(fit.rate_exponent, fit.rate_r2) = fit_rate(t, v, fit.T);
    rep.T_est = fit.T;
    rep.rate_exponent = fit.rate_exponent;
    rep.rate_r2 = fit.rate_r2;
  }
  return fit;
}

/// Advances `f` until blowup is detected or the horizon is reached.
inline BlowupReport run_until_blowup(WaveField& f, const DetectionConfig& cfg) {
  if (!(cfg.horizon > f.t)) reject("run_until_blowup: horizon must exceed the current time");
  if (!(cfg.cfl > 0.0 && cfg.cfl < 1.0)) reject("run_until_blowup: CFL fraction must lie in (0, 1)");
  if (!(cfg.growth_factor > 1.0)) reject("run_until_blowup: growth factor must exceed 1");
  BlowupReport rep;
  const double threshold = f.epsilon != 0.0 ? cfg.hard_threshold / std::abs(f.epsilon)
                                            : std::numeric_limits<double>::infinity();
  double dt_factor = 1.0;
  int level = 0;
  bool grew = false;
  auto sample0 = detail::observe(f, 0.0, level);
  rep.history.push_back(sample0);
  double g_ref = detail::growth_measure(sample0);
  rep.sup_u_run = sample0.sup_u;
  const double dt0 = stable_step(f, cfg.cfl);
  const auto stride0 = static_cast<long>(
      std::max(1.0, std::floor((cfg.horizon - f.t) / dt0 / static_cast<double>(cfg.max_samples))));
  long since_record = 0;
  bool allow_transfer = true;

  while (f.t < cfg.horizon) {
    if (f.geometry.kind == GeometryKind::annulus && f.layout == GeometryKind::cartesian && allow_transfer &&
        f.t - f.geometry.trail >= f.geometry.transfer_radius()) {
      const double hb = f.h;
      transfer_to_polar(f);
      rep.refinement_trace.push_back({f.t, g_ref, hb, f.h, stable_step(f, cfg.cfl), "polar_transfer"});
    }
    double dt = dt_factor * stable_step(f, cfg.cfl);
    if (f.t + dt > cfg.horizon) dt = cfg.horizon - f.t;
    if (dt <= 1e-14 * std::max(1.0, cfg.horizon)) break;
    const auto st = step(f, dt);
    if (!st.ok()) {
      const std::string why = st.finite ? "non-positive wave-speed coefficient" : "non-finite values";
      if (grew) {
        rep.detected = true;
        rep.reason = why + " after gradient growth";
      } else {
        rep.numerical_failure = true;
        rep.reason = why + " without prior growth";
      }
      break;
    }
    const bool record = grew || ++since_record >= stride0;
    auto s = detail::observe(f, dt, level);
    rep.sup_u_run = std::max(rep.sup_u_run, s.sup_u);
    if (record) {
      since_record = 0;
      rep.history.push_back(s);
    }
    const double g = detail::growth_measure(s);
    g_ref = std::min(g_ref, g);
    if (g > threshold) {
      if (!record) rep.history.push_back(s);
      rep.detected = true;
      rep.reason = "gradient exceeded hard threshold";
      break;
    }
    if (grew && s.resolution > cfg.resolution_limit) {
      if (!record) rep.history.push_back(s);
      rep.detected = true;
      rep.reason = "gradient reached the grid scale after growth";
      break;
    }
    if (g > cfg.growth_factor * g_ref) {
      if (!grew) rep.first_trigger = f.t;
      grew = true;
      if (!record) rep.history.push_back(s);
      if (level >= cfg.max_refinements) {
        rep.detected = true;
        rep.reason = "refinements exhausted while gradient kept growing";
        break;
      }
      const double hb = f.h;
      std::string action;
      const bool cartesian = f.layout == GeometryKind::cartesian;
      if (cfg.refine_space && (!cartesian || 4 * f.u.size() <= cfg.max_cells)) {
        refine(f);
        action = f.polar() ? "halve radial spacing and dt" : "halve spacing and dt";
        if (cartesian) allow_transfer = false;
      } else {
        dt_factor *= 0.5;
        action = "halve dt";
      }
      ++level;
      g_ref = g;
      rep.refinement_trace.push_back({f.t, g, hb, f.h, dt_factor * stable_step(f, cfg.cfl), action});
    }
  }
  rep.t_final = f.t;
  rep.steps = f.steps;
  rep.max_cfl = f.max_cfl;
  rep.masked_max = f.masked_max;
  rep.bounded = rep.sup_u_run <= cfg.bound_constant * std::abs(f.epsilon) + 1e-300;
  rep.location = max_gradient_location(f);
  rep.location_r = norm(rep.location);
  rep.location_theta = std::atan2(rep.location.y, rep.location.x);
  if (rep.location_theta < 0.0) rep.location_theta += kTwoPi;
  if (!rep.detected && !rep.numerical_failure) rep.reason = "horizon reached without blowup";
  if (rep.detected) fit_report(rep, cfg.resolution_limit);
  return rep;
}

}  // namespace qwave
