#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "qwave/detection.hpp"

namespace qwave {

/// How each run of a study is gridded and how long it may go.
struct ScalingPolicy {
  GeometryKind kind = GeometryKind::radial;
  double h = 0.005;
  double trail = 6.0;
  std::size_t n_theta = 64;
  double bootstrap_h = 0.02;
  double horizon_factor = 3.0;      // horizon = factor * predicted T
  double fallback_horizon = 50.0;   // used when no blowup is predicted
  DetectionConfig detection;
};

struct ScalingRow {
  double epsilon = 0.0;
  bool detected = false;
  bool flagged = false;  // blowup predicted but not measured, or the run failed
  std::string reason;
  double T_pred = std::numeric_limits<double>::infinity();
  double T_est = std::numeric_limits<double>::quiet_NaN();
  double scaled = std::numeric_limits<double>::quiet_NaN();  // eps sqrt(T_est)
  double gap = std::numeric_limits<double>::quiet_NaN();     // |scaled - tau0| / tau0
  double rate_exponent = std::numeric_limits<double>::quiet_NaN();
  double rate_r2 = 0.0;
  double location_r = 0.0;
  double location_theta = 0.0;
  double sup_u_over_eps = 0.0;
  double h_initial = 0.0;
  double h_final = 0.0;
  std::size_t n_theta = 1;
  int refinements = 0;
  long steps = 0;
  double wall_seconds = 0.0;  // not part of the deterministic output
};

struct ScalingStudy {
  double tau0 = std::numeric_limits<double>::infinity();
  std::vector<ScalingRow> rows;
  bool gap_decreasing = false;  // over the last two rows
  double final_gap = std::numeric_limits<double>::quiet_NaN();
  std::string verdict;
};

inline Geometry scaling_geometry(const ScalingPolicy& p, double horizon) {
  switch (p.kind) {
    case GeometryKind::radial: return Geometry::radial(p.h, p.trail, horizon);
    case GeometryKind::annulus: return Geometry::annulus(p.h, p.n_theta, p.trail, horizon, p.bootstrap_h);
    case GeometryKind::cartesian: return Geometry::cartesian(0.0, p.h, horizon);
  }
  return Geometry::radial(p.h, p.trail, horizon);
}

/// One blowup run per epsilon; tau0 is the asymptotic prediction the runs are compared with.
inline ScalingStudy scaling_study(const InitialData& data, const std::vector<double>& epsilons, double tau0,
                                  const ScalingPolicy& policy) {
  if (epsilons.empty()) reject("scaling_study: no epsilon values");
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > 0.0)) reject("scaling_study: epsilon values must be positive");
    if (i > 0 && !(epsilons[i] < epsilons[i - 1])) reject("scaling_study: epsilon values must be sorted descending");
  }
  if (!(policy.horizon_factor > 1.0)) reject("scaling_study: horizon factor must exceed 1");
  ScalingStudy study;
  study.tau0 = tau0;
  const bool predicted = std::isfinite(tau0) && tau0 > 0.0 && !data.is_zero();

  for (double eps : epsilons) {
    ScalingRow row;
    row.epsilon = eps;
    row.T_pred = predicted ? (tau0 / eps) * (tau0 / eps) : std::numeric_limits<double>::infinity();
    const double horizon = predicted ? policy.horizon_factor * row.T_pred : policy.fallback_horizon;
    const auto start = std::chrono::steady_clock::now();
    try {
      auto field = make_initial_field(data, eps, scaling_geometry(policy, horizon));
      row.h_initial = field.h;
      DetectionConfig cfg = policy.detection;
      cfg.horizon = horizon;
      const auto rep = run_until_blowup(field, cfg);
      row.detected = rep.detected;
      row.reason = rep.reason;
      row.T_est = rep.T_est;
      row.rate_exponent = rep.rate_exponent;
      row.rate_r2 = rep.rate_r2;
      row.location_r = rep.location_r;
      row.location_theta = rep.location_theta;
      row.sup_u_over_eps = rep.sup_u_run / eps;
      row.h_final = field.h;
      row.n_theta = policy.kind == GeometryKind::annulus ? policy.n_theta : 1;
      row.steps = rep.steps;
      for (const auto& e : rep.refinement_trace) row.refinements += e.action == "polar_transfer" ? 0 : 1;
      if (rep.detected && std::isfinite(rep.T_est) && predicted) {
        row.scaled = eps * std::sqrt(rep.T_est);
        row.gap = std::abs(row.scaled - tau0) / tau0;
      }
      row.flagged = predicted && !(rep.detected && std::isfinite(rep.T_est));
    } catch (const Error& e) {
      row.flagged = true;
      row.reason = e.what();
    }
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    study.rows.push_back(row);
  }

  const auto& rows = study.rows;
  if (!predicted) {
    study.verdict = "no blowup predicted";
    return study;
  }
  study.final_gap = rows.back().gap;
  if (rows.size() >= 2) {
    const double a = rows[rows.size() - 2].gap, b = rows.back().gap;
    study.gap_decreasing = std::isfinite(a) && std::isfinite(b) && b < a;
  }
  bool any_flag = false;
  for (const auto& r : rows) any_flag = any_flag || r.flagged;
  if (any_flag) study.verdict = "flagged rows present";
  else if (study.gap_decreasing) study.verdict = "gap decreasing";
  else study.verdict = "gap not decreasing";
  return study;
}

}  // namespace qwave
