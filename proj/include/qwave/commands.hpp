#pragma once

#include <chrono>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>

#include "qwave/approx.hpp"
#include "qwave/config.hpp"
#include "qwave/geometry.hpp"
#include "qwave/io.hpp"
#include "qwave/pressure.hpp"
#include "qwave/scaling.hpp"

namespace qwave::cmd {

namespace fs = std::filesystem;

enum ExitCode : int { kSuccess = 0, kNumerical = 1, kConfigOrDiagnostic = 2, kNoBlowup = 3 };

/// What a subcommand needs besides its config.
struct Context {
  ExperimentConfig config;
  fs::path out_dir = "out";
  bool quiet = false;
  std::ostream* log = &std::cerr;

  void note(const std::string& s) const {
    if (!quiet) *log << s << "\n";
  }
};

inline bool synthetic_preset(const ExperimentConfig& c) {
  const auto& p = c.str("data.preset");
  return p == "modulated" || p == "synthetic_gaussian";
}

/// Preset or file data with the model override applied.
inline InitialData load_data(const ExperimentConfig& c) {
  const auto& preset = c.str("data.preset");
  if (synthetic_preset(c)) reject("preset '" + preset + "' is a profile, not field data; use profile, predict or geometry");
  InitialData d;
  if (preset == "gaussian") d = presets::gaussian();
  else if (preset == "gaussian_u0") d = presets::gaussian_displacement();
  else if (preset == "anisotropic") d = presets::anisotropic();
  else if (preset == "linear") d = presets::linear();
  else if (preset == "zero") d = presets::zero();
  else if (preset == "pressure") {
    // U0 = (g, 0) with g a truncated gaussian, P0 = 0
    d = pressure_gradient_setup(VectorField{truncated_gaussian(), ScalarField::zero()}, ScalarField::zero(), 6.0);
  } else {
    reject("unknown preset '" + preset + "'");
  }
  const auto& kind = c.str("model.kind");
  if (!c.str("data.file").empty()) {
    d = load_grid_csv(c.str("data.file"), c.num("data.support_radius"), d.model);
  }
  if (kind == "quadratic") d.model = WaveModel::quadratic(c.num("model.c1"), c.num("model.c2"));
  else if (kind == "linear") d.model = WaveModel::linear();
  else if (kind != "preset") reject("model.kind must be preset, quadratic or linear");
  validate(d);
  return d;
}

inline std::pair<double, double> synthetic_constants(const ExperimentConfig& c) {
  if (c.str("model.kind") == "quadratic") return {c.num("model.c1"), c.num("model.c2")};
  if (c.str("model.kind") == "linear") return {0.0, 0.0};
  return {1.0, 1.0};
}

/// Profile with its sigma derivative, from field data or a synthetic preset.
inline std::shared_ptr<const DirectionalProfile> build_profile(const ExperimentConfig& c) {
  const double smin = c.num("profile.sigma_min");
  const double step = c.num("profile.sigma_step");
  const std::size_t requested = c.count("profile.angles");
  if (synthetic_preset(c)) {
    const auto [c1, c2] = synthetic_constants(c);
    const std::size_t angles = requested ? requested : 64;
    auto p = c.str("data.preset") == "modulated" ? synthetic::modulated(c1, c2, smin, step, angles)
                                                 : synthetic::gaussian(c1, c2, smin, step, angles);
    return std::make_shared<const DirectionalProfile>(std::move(p));
  }
  const auto data = load_data(c);
  const std::size_t angles = requested ? requested : (is_radial(data) ? 8 : 64);
  FriedlanderOptions o;
  o.s_step = c.num("profile.s_step");
  o.gl_points = static_cast<int>(c.integer("profile.gl_points"));
  auto p = friedlander_profile(data, uniform_grid(smin, data.support_radius, step), periodic_theta_grid(angles), o);
  const auto& method = c.str("profile.derivative");
  if (method == "exact") p = profile_derivative(std::move(p), DerivativeMethod::exact, &data, o);
  else if (method == "finite_difference") p = profile_derivative(std::move(p));
  else reject("profile.derivative must be finite_difference or exact");
  return std::make_shared<const DirectionalProfile>(std::move(p));
}

inline LifespanPrediction predict(const ExperimentConfig& c, const DirectionalProfile& p) {
  PredictOptions o;
  o.hessian_floor = c.num("predict.hessian_floor");
  o.uniqueness_tol = c.num("predict.uniqueness_tol");
  return predict_lifespan(p, c.num("predict.refine"), o);
}

inline DetectionConfig detection_config(const ExperimentConfig& c) {
  DetectionConfig d;
  d.growth_factor = c.num("detection.growth_factor");
  d.hard_threshold = c.num("detection.hard_threshold");
  d.max_refinements = static_cast<int>(c.integer("detection.max_refinements"));
  d.cfl = c.num("detection.cfl");
  d.resolution_limit = c.num("detection.resolution_limit");
  d.bound_constant = c.num("detection.bound_constant");
  return d;
}

inline GeometryKind geometry_kind(const std::string& s) {
  if (s == "radial") return GeometryKind::radial;
  if (s == "annulus") return GeometryKind::annulus;
  if (s == "cartesian") return GeometryKind::cartesian;
  reject("geometry must be radial, annulus or cartesian, got '" + s + "'");
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void write_timing(const Context& ctx, const std::string& command, const io::Json& entries) {
  io::Json j;
  j["command"] = command;
  j["wall_seconds"] = entries;
  io::write_json(ctx.out_dir / "timing.json", j);
}

inline io::Json envelope(const Context& ctx, const std::string& command) {
  io::Json j;
  j["meta"] = io::meta(ctx.config, command);
  return j;
}

// ---------------------------------------------------------------------------
// Subcommands; each returns its exit code. Errors propagate to run().
// ---------------------------------------------------------------------------

inline int profile(const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto p = build_profile(ctx.config);
  auto j = envelope(ctx, "profile");
  j["profile"] = io::to_json(*p);
  j["empty"] = p->is_zero();
  io::Json decay = io::Json::array();
  std::string decay_note;
  if (p->sigma_grid.front() <= -50.0) {
    const std::pair<int, int> orders[] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    for (const auto& f : decay_check(*p, orders)) decay.push_back(io::to_json(f));
  } else {
    decay_note = "skipped: profile.sigma_min must be <= -50";
  }
  j["decay"] = decay;
  j["decay_note"] = decay_note;
  io::write_json(ctx.out_dir / "profile.json", j);

  io::CsvWriter zero_row(ctx.out_dir / "profile_sigma0.csv", ctx.config, {"theta", "F0", "dF0_dsigma"});
  for (std::size_t k = 0; k < p->n_angles(); ++k) {
    const double th = p->theta_grid[k];
    zero_row.row(th, p->value(0.0, th), p->derivative(0.0, th));
  }
  write_timing(ctx, "profile", {{"total", seconds_since(t0)}});
  ctx.note(p->is_zero() ? "profile: empty (zero data)" : "profile: written");
  return kSuccess;
}

inline int predict(const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto p = build_profile(ctx.config);
  const auto pred = predict(ctx.config, *p);
  auto j = envelope(ctx, "predict");
  j["prediction"] = io::to_json(pred);
  if (!pred.no_blowup) j["blowup_point"] = io::to_json(blowup_point(pred, ctx.config.num("predict.epsilon")));
  io::write_json(ctx.out_dir / "prediction.json", j);

  const double frac = ctx.config.num("predict.characteristics");
  if (frac > 0.0 && !pred.no_blowup) {
    const auto sol = solve_characteristics(p, frac * pred.tau0);
    io::CsvWriter csv(ctx.out_dir / "characteristics.csv", ctx.config,
                      {"theta", "s", "sigma", "V", "U", "jacobian"});
    for (std::size_t k = 0; k + 1 < sol.theta_grid.size(); ++k) {
      for (std::size_t i = 0; i < sol.s_grid.size(); ++i) {
        csv.row(sol.theta_grid[k], sol.s_grid[i], sol.sigma_of_s(i, k), sol.V_values(i, k), sol.U_values(i, k),
                sol.jacobian(i, k));
      }
    }
  }
  write_timing(ctx, "predict", {{"total", seconds_since(t0)}});
  if (pred.no_blowup) ctx.note("predict: no blowup predicted");
  else ctx.note("predict: tau0 = " + std::to_string(pred.tau0) + (pred.degenerate ? " (degenerate)" : ""));
  return kSuccess;
}

inline void write_snapshot(const Context& ctx, const WaveField& f) {
  io::CsvWriter csv(ctx.out_dir / "snapshot.csv", ctx.config,
                    f.polar() ? std::vector<std::string>{"r", "theta", "u", "ut"}
                              : std::vector<std::string>{"x", "y", "u", "ut"});
  for (std::size_t i = 0; i < f.nr; ++i) {
    for (std::size_t jj = 0; jj < f.nc; ++jj) {
      const auto k = f.index(i, jj);
      if (f.polar()) csv.row(f.radius(i), f.dtheta * static_cast<double>(jj), f.u[k], f.ut[k]);
      else csv.row(detail::node_x(f, i), detail::node_x(f, jj), f.u[k], f.ut[k]);
    }
  }
}

inline int simulate(const Context& ctx) {
  const auto& c = ctx.config;
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = load_data(c);
  const double eps = c.num("simulate.epsilon");
  if (!(eps > 0.0)) reject("simulate.epsilon must be positive");
  double horizon = c.num("simulate.horizon");
  double T_pred = std::numeric_limits<double>::infinity();
  double tau0 = std::numeric_limits<double>::infinity();
  if (!data.is_zero() && data.model.kind != WaveModel::Kind::linear) {
    const auto pred = predict(c, *build_profile(c));
    if (!pred.no_blowup) {
      tau0 = pred.tau0;
      T_pred = pred.predicted_T(eps);
    }
  }
  if (horizon == 0.0) {
    horizon = std::isfinite(T_pred) ? c.num("simulate.horizon_factor") * T_pred : c.num("simulate.fallback_horizon");
  }
  const auto kind = geometry_kind(c.str("simulate.geometry"));
  const double h = c.num("simulate.h");
  Geometry g = kind == GeometryKind::radial    ? Geometry::radial(h, c.num("simulate.trail"), horizon)
               : kind == GeometryKind::annulus ? Geometry::annulus(h, c.count("simulate.n_theta"), c.num("simulate.trail"),
                                                                   horizon, c.num("simulate.bootstrap_h"))
                                               : Geometry::cartesian(c.num("simulate.extent"), h, horizon);
  auto field = make_initial_field(data, eps, g);
  DetectionConfig det = detection_config(c);
  det.horizon = horizon;
  const auto rep = run_until_blowup(field, det);

  auto j = envelope(ctx, "simulate");
  j["report"] = io::to_json(rep);
  j["horizon"] = io::number(horizon);
  j["T_pred"] = io::number(T_pred);
  j["tau0"] = io::number(tau0);
  j["scaled_lifespan"] = rep.detected ? io::number(eps * std::sqrt(rep.T_est)) : io::Json(nullptr);
  if (rep.detected && std::isfinite(rep.T_est)) {
    try {
      j["rates"] = io::to_json(rate_fit(rep.history, rep.T_est));
    } catch (const Error& e) {
      j["rates"] = {{"error", e.what()}};
    }
  }
  io::write_json(ctx.out_dir / "report.json", j);

  io::CsvWriter hist(ctx.out_dir / "history.csv", ctx.config,
                     {"t", "sup_u", "sup_ut", "sup_grad", "resolution", "h", "dt", "level"});
  for (const auto& s : rep.history) hist.row(s.t, s.sup_u, s.sup_ut, s.sup_grad, s.resolution, s.h, s.dt, s.level);
  if (c.flag("simulate.snapshot")) write_snapshot(ctx, field);
  write_timing(ctx, "simulate", {{"total", seconds_since(t0)}});

  if (rep.numerical_failure) {
    ctx.note("simulate: numerical failure: " + rep.reason);
    return kNumerical;
  }
  if (!rep.detected) {
    ctx.note("simulate: no blowup up to t = " + std::to_string(rep.t_final));
    return kNoBlowup;
  }
  ctx.note("simulate: blowup at T_est = " + std::to_string(rep.T_est));
  return kSuccess;
}

inline int scaling(const Context& ctx) {
  const auto& c = ctx.config;
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = load_data(c);
  double tau0 = std::numeric_limits<double>::infinity();
  if (!data.is_zero() && data.model.kind != WaveModel::Kind::linear) {
    const auto pred = predict(c, *build_profile(c));
    if (!pred.no_blowup) tau0 = pred.tau0;
  }
  ScalingPolicy policy;
  policy.kind = geometry_kind(c.str("scaling.geometry"));
  policy.h = c.num("scaling.h");
  policy.trail = c.num("scaling.trail");
  policy.n_theta = c.count("scaling.n_theta");
  policy.bootstrap_h = c.num("scaling.bootstrap_h");
  policy.horizon_factor = c.num("scaling.horizon_factor");
  policy.fallback_horizon = c.num("simulate.fallback_horizon");
  policy.detection = detection_config(c);
  const auto study = scaling_study(data, c.list("scaling.epsilons"), tau0, policy);

  auto j = envelope(ctx, "scaling");
  j["study"] = io::to_json(study);
  io::write_json(ctx.out_dir / "scaling.json", j);
  io::CsvWriter csv(ctx.out_dir / "scaling.csv", c,
                    {"epsilon", "detected", "flagged", "T_pred", "T_est", "scaled", "gap", "rate_exponent", "rate_r2",
                     "location_r", "location_theta", "sup_u_over_eps", "h_final", "refinements", "steps"});
  io::Json timing = {{"total", 0.0}, {"rows", io::Json::array()}};
  for (const auto& r : study.rows) {
    csv.row(r.epsilon, r.detected, r.flagged, r.T_pred, r.T_est, r.scaled, r.gap, r.rate_exponent, r.rate_r2,
            r.location_r, r.location_theta, r.sup_u_over_eps, r.h_final, r.refinements, r.steps);
    timing["rows"].push_back({{"epsilon", r.epsilon}, {"seconds", r.wall_seconds}});
  }
  timing["total"] = seconds_since(t0);
  write_timing(ctx, "scaling", timing);
  ctx.note("scaling: " + study.verdict);
  return kSuccess;
}

inline int residual(const Context& ctx) {
  const auto& c = ctx.config;
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = load_data(c);
  const auto p = build_profile(c);
  const auto pred = predict(c, *p);
  // no predicted blowup: b is taken as an absolute slow time
  const double b = c.num("residual.b_fraction") * (pred.no_blowup ? 1.0 : pred.tau0);
  ResidualScalingOptions o;
  o.linear.h = c.num("residual.h");
  o.node_dt = c.num("residual.node_dt");
  o.node_growth = c.num("residual.node_growth");
  o.theta_samples = c.count("residual.theta_samples");
  const auto rep = residual_norm_scaling(data, c.list("residual.epsilons"), b, o, p);

  auto j = envelope(ctx, "residual");
  j["residual"] = io::to_json(rep);
  io::write_json(ctx.out_dir / "residual.json", j);
  io::CsvWriter rows(ctx.out_dir / "residual.csv", c, {"epsilon", "t_end", "I", "I_A", "I_B", "I_C", "nodes", "flagged"});
  io::CsvWriter series(ctx.out_dir / "residual_series.csv", c, {"epsilon", "t", "l2"});
  for (const auto& r : rep.rows) {
    rows.row(r.epsilon, r.t_end, r.I, r.I_A, r.I_B, r.I_C, r.nodes, r.flagged);
    for (std::size_t k = 0; k < r.t.size(); ++k) series.row(r.epsilon, r.t[k], r.norm[k]);
  }
  write_timing(ctx, "residual", {{"total", seconds_since(t0)}});
  ctx.note("residual: slope " + std::to_string(rep.slope) + ", " + rep.verdict);
  return kSuccess;
}

inline int geometry(const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  // the chart only reads the profile near its X range; a far-field grid just slows the box scans
  ExperimentConfig c = ctx.config;
  const double lo = c.num("geometry.x_min") - 2.0;
  if (c.num("profile.sigma_min") < lo) c.set("profile.sigma_min", std::to_string(lo));
  const auto p = build_profile(c);
  const auto pred = predict(c, *p);
  auto j = envelope(ctx, "geometry");
  j["prediction"] = io::to_json(pred);
  j["profile_sigma_min_used"] = p->sigma_grid.front();
  if (pred.no_blowup) {
    j["H"] = {{"checkable", false}, {"reason", "no blowup predicted"}};
    io::write_json(ctx.out_dir / "geometry.json", j);
    ctx.note("geometry: no blowup predicted, nothing to check");
    return kConfigOrDiagnostic;
  }
  ChartOptions co;
  co.tau1 = c.num("geometry.tau1");
  co.eta = c.num("geometry.eta");
  co.x_min = c.num("geometry.x_min");
  co.x_step = c.num("geometry.x_step");
  co.y_samples = c.count("geometry.y_samples");
  co.t_samples = c.count("geometry.t_samples");
  HOptions ho;
  ho.tolerance = c.num("geometry.tolerance");
  ho.zero_level = c.num("geometry.zero_level");
  const auto chart = glue_chart(make_chart(p, pred, co));
  const auto h = check_condition_H(chart, ho);
  j["H"] = io::to_json(h);
  j["chart"] = {{"tau1", chart.tau1}, {"eta", chart.eta}, {"nX", chart.X.size()}, {"nY", chart.Y.size()},
                {"nT", chart.T.size()}};
  io::write_json(ctx.out_dir / "geometry.json", j);

  if (c.flag("geometry.export_chart")) {
    // last T slice: phi and its X difference, for dX phi level sets
    io::CsvWriter csv(ctx.out_dir / "chart.csv", c, {"X", "Y", "T", "phi", "dX_phi"});
    const std::size_t k = chart.T.size() - 1, nx = chart.X.size();
    for (std::size_t i = 1; i + 1 < nx; ++i) {
      for (std::size_t jj = 0; jj < chart.Y.size(); ++jj) {
        const double d = (chart.phi_at(k, i + 1, jj) - chart.phi_at(k, i - 1, jj)) / (chart.X[i + 1] - chart.X[i - 1]);
        csv.row(chart.X[i], chart.Y[jj], chart.T[k], chart.phi_at(k, i, jj), d);
      }
    }
  }
  write_timing(ctx, "geometry", {{"total", seconds_since(t0)}});
  if (!h.checkable) {
    ctx.note("geometry: H not checkable: " + h.reason);
    return kConfigOrDiagnostic;
  }
  ctx.note(std::string("geometry: H ") + (h.all_pass ? "holds" : "fails"));
  return h.all_pass ? kSuccess : kConfigOrDiagnostic;
}

/// Runs a subcommand, mapping errors to exit codes.
inline int run(const std::string& name, const Context& ctx) {
  try {
    fs::create_directories(ctx.out_dir);
    if (name == "profile") return profile(ctx);
    if (name == "predict") return predict(ctx);
    if (name == "simulate") return simulate(ctx);
    if (name == "scaling") return scaling(ctx);
    if (name == "residual") return residual(ctx);
    if (name == "geometry") return geometry(ctx);
    reject("unknown subcommand '" + name + "'");
  } catch (const Error& e) {
    *ctx.log << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::numerical ? kNumerical : kConfigOrDiagnostic;
  } catch (const fs::filesystem_error& e) {
    *ctx.log << "error: " << e.what() << "\n";
    return kConfigOrDiagnostic;
  }
}

}  // namespace qwave::cmd
