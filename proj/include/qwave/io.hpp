#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qwave/approx.hpp"
#include "qwave/asymptotic.hpp"
#include "qwave/config.hpp"
#include "qwave/detection.hpp"
#include "qwave/geometry.hpp"
#include "qwave/radon.hpp"
#include "qwave/scaling.hpp"

namespace qwave::io {

using Json = nlohmann::json;

// NaN and inf are written as null.
inline Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json numbers(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

inline Json matrix(const Matrix& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (double x : m.row(i)) r.push_back(number(x));
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Provenance block embedded in every JSON output.
inline Json meta(const ExperimentConfig& cfg, const std::string& command) {
  Json m;
  m["version"] = std::string(kVersion);
  m["command"] = command;
  m["config_hash"] = cfg.hash();
  Json c = Json::object();
  for (const auto& [k, e] : cfg.entries()) c[k] = e.value;
  m["config"] = std::move(c);
  return m;
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) diagnose("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

/// CSV with `#` provenance lines; values printed with 17 significant digits.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const ExperimentConfig& cfg, const std::vector<std::string>& columns)
      : out_(path) {
    if (!out_) diagnose("cannot write " + path.string());
    out_ << "# qwave " << kVersion << " config_hash " << cfg.hash() << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
    out_ << "\n";
    out_ << std::setprecision(17);
  }

  template <class... Ts>
  void row(const Ts&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ","), put(cells), first = false), ...);
    out_ << "\n";
  }

 private:
  std::ofstream out_;

  void put(double x) {
    if (std::isfinite(x)) out_ << x;
    else if (std::isinf(x)) out_ << (x > 0 ? "inf" : "-inf");
    else out_ << "nan";
  }
  void put(const std::string& s) { out_ << s; }
  void put(const char* s) { out_ << s; }
  void put(bool b) { out_ << (b ? 1 : 0); }
  template <class I>
    requires std::is_integral_v<I>
  void put(I i) { out_ << i; }
};

// ---------------------------------------------------------------------------
// Report encoders
// ---------------------------------------------------------------------------

inline Json to_json(const DirectionalProfile& p) {
  Json j;
  j["sigma_grid"] = numbers(p.sigma_grid);
  j["theta_grid"] = numbers(p.theta_grid);
  j["F0"] = matrix(p.F0);
  j["dF0_dsigma"] = p.has_derivative() ? matrix(p.dF0_dsigma) : Json(nullptr);
  Json m;
  m["sigma_min"] = number(p.meta.sigma_min);
  m["support_radius"] = number(p.meta.support_radius);
  m["c1"] = number(p.meta.c1);
  m["c2"] = number(p.meta.c2);
  m["quad_step"] = number(p.meta.quad_step);
  m["line_step"] = number(p.meta.line_step);
  m["gl_points"] = p.meta.gl_points;
  m["quad_residual"] = number(p.meta.quad_residual);
  m["derivative_method"] = p.meta.derivative_method;
  m["source"] = p.meta.source;
  j["metadata"] = std::move(m);
  return j;
}

inline Json to_json(const DecayFit& f) {
  Json j;
  j["sigma_order"] = f.sigma_order;
  j["theta_order"] = f.theta_order;
  j["exponent"] = number(f.exponent);
  j["expected"] = number(f.expected);
  j["r2"] = number(f.r2);
  j["residual"] = number(f.residual);
  j["samples"] = f.samples;
  j["signal_too_small"] = f.signal_too_small;
  j["message"] = f.message;
  return j;
}

inline Json to_json(const LifespanPrediction& p) {
  Json j;
  j["sigma0"] = number(p.sigma0);
  j["theta0"] = number(p.theta0);
  j["min_value"] = number(p.min_value);
  j["tau0"] = number(p.tau0);
  j["hessian"] = {{number(p.hessian.a), number(p.hessian.b)}, {number(p.hessian.b), number(p.hessian.c)}};
  j["eigenvalues"] = {number(p.eigenvalues[0]), number(p.eigenvalues[1])};
  j["degenerate"] = p.degenerate;
  j["no_blowup"] = p.no_blowup;
  j["uniqueness_gap"] = p.uniqueness_gap ? number(*p.uniqueness_gap) : Json(nullptr);
  j["newton_iterations"] = p.newton_iterations;
  Json c = Json::array();
  for (const auto& m : p.candidates) c.push_back({{"sigma", number(m.sigma)}, {"theta", number(m.theta)}, {"value", number(m.value)}});
  j["candidates"] = std::move(c);
  return j;
}

inline Json to_json(const BlowupPoint& b) {
  Json j;
  j["T"] = number(b.T);
  j["sigma"] = number(b.sigma);
  j["tau"] = number(b.tau);
  j["theta"] = number(b.theta);
  j["r"] = number(b.r);
  j["x"] = b.degenerate ? Json(nullptr) : Json{number(b.x.x), number(b.x.y)};
  j["degenerate"] = b.degenerate;
  return j;
}

inline Json to_json(const RateFit& f) {
  return {{"exponent", number(f.exponent)}, {"r2", number(f.r2)}, {"samples", f.samples}};
}

inline Json to_json(const RateReport& r) {
  Json j;
  j["T_est"] = number(r.T_est);
  j["window"] = {number(r.window_lo), number(r.window_hi)};
  j["ut"] = to_json(r.ut);
  j["grad"] = to_json(r.grad);
  j["ut_full_window"] = to_json(r.ut_full);
  j["grad_full_window"] = to_json(r.grad_full);
  j["lower_bound_min"] = number(r.lower_bound_min);
  j["lower_bound_margin"] = number(r.lower_bound_margin);
  return j;
}

inline Json to_json(const BlowupReport& r) {
  Json j;
  j["detected"] = r.detected;
  j["numerical_failure"] = r.numerical_failure;
  j["reason"] = r.reason;
  j["T_est"] = number(r.T_est);
  j["location"] = {number(r.location.x), number(r.location.y)};
  j["location_r"] = number(r.location_r);
  j["location_theta"] = number(r.location_theta);
  j["rate_exponent"] = number(r.rate_exponent);
  j["rate_r2"] = number(r.rate_r2);
  j["fit_samples"] = r.fit_samples;
  j["fit_start"] = number(r.fit_start);
  j["first_trigger"] = number(r.first_trigger);
  j["last_resolved_t"] = number(r.last_resolved_t);
  j["t_final"] = number(r.t_final);
  j["sup_u_run"] = number(r.sup_u_run);
  j["bounded"] = r.bounded;
  j["max_cfl"] = number(r.max_cfl);
  j["masked_max"] = number(r.masked_max);
  j["steps"] = r.steps;
  Json trace = Json::array();
  for (const auto& e : r.refinement_trace) {
    trace.push_back({{"t", number(e.t)},
                     {"g", number(e.g)},
                     {"h_before", number(e.h_before)},
                     {"h_after", number(e.h_after)},
                     {"dt_after", number(e.dt_after)},
                     {"action", e.action}});
  }
  j["refinement_trace"] = std::move(trace);
  return j;
}

inline Json to_json(const ScalingStudy& s) {
  Json j;
  j["tau0"] = number(s.tau0);
  j["gap_decreasing"] = s.gap_decreasing;
  j["final_gap"] = number(s.final_gap);
  j["verdict"] = s.verdict;
  Json rows = Json::array();
  for (const auto& r : s.rows) {
    rows.push_back({{"epsilon", number(r.epsilon)},     {"detected", r.detected},
                    {"flagged", r.flagged},             {"reason", r.reason},
                    {"T_pred", number(r.T_pred)},       {"T_est", number(r.T_est)},
                    {"scaled", number(r.scaled)},       {"gap", number(r.gap)},
                    {"rate_exponent", number(r.rate_exponent)}, {"rate_r2", number(r.rate_r2)},
                    {"location_r", number(r.location_r)}, {"location_theta", number(r.location_theta)},
                    {"sup_u_over_eps", number(r.sup_u_over_eps)}, {"h_initial", number(r.h_initial)},
                    {"h_final", number(r.h_final)},     {"n_theta", r.n_theta},
                    {"refinements", r.refinements},     {"steps", r.steps}});
  }
  j["rows"] = std::move(rows);
  return j;
}

inline Json to_json(const ResidualScalingReport& r) {
  Json j;
  j["b"] = number(r.b);
  j["tau0"] = number(r.tau0);
  j["slope"] = number(r.slope);
  j["slope_r2"] = number(r.slope_r2);
  j["ratios"] = numbers(r.ratios);
  j["zero_residual"] = r.zero_residual;
  j["verdict"] = r.verdict;
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"epsilon", number(row.epsilon)}, {"t_end", number(row.t_end)}, {"I", number(row.I)},
                    {"I_A", number(row.I_A)},         {"I_B", number(row.I_B)},     {"I_C", number(row.I_C)},
                    {"nodes", row.nodes},             {"flagged", row.flagged},     {"message", row.message}});
  }
  j["rows"] = std::move(rows);
  return j;
}

inline Json to_json(const HReport& h) {
  Json j;
  j["checkable"] = h.checkable;
  j["reason"] = h.reason;
  j["all_pass"] = h.all_pass;
  Json subs = Json::object();
  for (const auto& s : h.subchecks) {
    subs[s.name] = {{"pass", s.pass}, {"witness", number(s.witness)}, {"tolerance", number(s.tolerance)},
                    {"detail", s.detail}};
  }
  j["subchecks"] = std::move(subs);
  j["fold_point"] = {{"X", number(h.fold.X)}, {"Y", number(h.fold.Y)}, {"T", number(h.fold.T)}};
  j["eigenvalues"] = {number(h.eigenvalues[0]), number(h.eigenvalues[1])};
  j["min_dXW"] = number(h.min_dXW);
  j["grid_min_dXW"] = number(h.grid_min_dXW);
  j["fold_time_expected"] = number(h.fold_time_expected);
  j["fold_identity_rel"] = number(h.fold_identity_rel);
  j["mixed_XT"] = number(h.mixed_XT);
  j["chain_rule_residual"] = number(h.chain_rule_residual);
  j["minimizer_transport_cells"] = number(h.minimizer_transport);
  j["tolerances"] = {{"difference", number(h.tolerance)}, {"step_used", number(h.step_used)}};
  return j;
}

}  // namespace qwave::io
