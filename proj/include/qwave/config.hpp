#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qwave/core.hpp"

namespace qwave {

/// Strict flat key-value configuration: `section.key = value`, `#` comments.
///
/// Every key has a default; unknown keys are rejected. The canonical text (all keys, sorted,
/// defaults resolved) is what gets hashed and echoed into outputs.
class ExperimentConfig {
 public:
  struct Entry {
    std::string value;
    std::string help;
  };

  ExperimentConfig() {
    auto add = [&](const std::string& k, const std::string& v, const std::string& help) { entries_[k] = {v, help}; };
    add("data.preset", "gaussian",
        "gaussian | gaussian_u0 | anisotropic | linear | zero | pressure | modulated | synthetic_gaussian");
    add("data.file", "", "CSV grid with columns x,y,u0,u1 (overrides the preset's fields)");
    add("data.support_radius", "6", "support radius M of file data");
    add("model.kind", "preset", "preset | quadratic | linear");
    add("model.c1", "1", "quadratic-model constant c1 (model.kind = quadratic)");
    add("model.c2", "1", "quadratic-model constant c2 (model.kind = quadratic)");

    add("profile.sigma_min", "-60", "lower end of the sigma grid (decay fits need <= -50)");
    add("profile.sigma_step", "0.05", "sigma grid step");
    add("profile.angles", "0", "distinct theta samples (0: 8 for radial data, else 64)");
    add("profile.s_step", "0.02", "Radon slice sampling step");
    add("profile.gl_points", "4", "Gauss-Legendre points per panel of the profile integral");
    add("profile.derivative", "finite_difference", "finite_difference | exact");

    add("predict.refine", "1e-10", "Newton step tolerance of the minimiser");
    add("predict.characteristics", "0", "export characteristics at this fraction of tau0 (0: skip)");
    add("predict.epsilon", "0.1", "amplitude for the reported blowup time and point");
    add("predict.hessian_floor", "1e-6", "degeneracy floor relative to |min|");
    add("predict.uniqueness_tol", "1e-3", "tie tolerance relative to |min|");

    add("simulate.epsilon", "0.1", "data amplitude");
    add("simulate.geometry", "radial", "radial | annulus | cartesian");
    add("simulate.h", "0.005", "grid spacing (radial spacing for polar grids)");
    add("simulate.extent", "0", "Cartesian half-width (0: sized from the horizon)");
    add("simulate.n_theta", "64", "annulus angular samples");
    add("simulate.trail", "6", "comoving window length behind the front (0: keep the disc)");
    add("simulate.bootstrap_h", "0.02", "annulus Cartesian spacing before the polar transfer");
    add("simulate.horizon", "0", "final time (0: horizon_factor times the predicted lifespan)");
    add("simulate.fallback_horizon", "50", "final time when no blowup is predicted");
    add("simulate.horizon_factor", "3", "horizon as a multiple of the predicted lifespan");
    add("simulate.snapshot", "false", "write the final field as a CSV grid dump");

    add("detection.growth_factor", "8", "refine when g exceeds this multiple of its reference");
    add("detection.hard_threshold", "10", "blowup once g exceeds this over epsilon");
    add("detection.max_refinements", "4", "refinement ladder length");
    add("detection.cfl", "0.9999", "time step as a fraction of the stability limit");
    add("detection.resolution_limit", "0.1", "h |grad u| / |u| above this is unresolved");
    add("detection.bound_constant", "2", "expected bound sup |u| <= C epsilon");

    add("scaling.epsilons", "0.4,0.2,0.1,0.05", "descending epsilon list");
    add("scaling.geometry", "radial", "radial | annulus | cartesian");
    add("scaling.h", "0.005", "grid spacing");
    add("scaling.trail", "6", "comoving window length");
    add("scaling.n_theta", "64", "annulus angular samples");
    add("scaling.bootstrap_h", "0.02", "annulus Cartesian start spacing");
    add("scaling.horizon_factor", "3", "horizon as a multiple of the predicted lifespan");

    add("residual.epsilons", "0.4,0.2,0.1", "epsilon list, factor 2 apart");
    add("residual.b_fraction", "0.5", "b = fraction times tau0");
    add("residual.h", "0.02", "linear solver spacing; residual step is half of it");
    add("residual.node_dt", "0.25", "time-node spacing up to 2 / epsilon");
    add("residual.node_growth", "0.02", "relative node spacing beyond 2 / epsilon");
    add("residual.theta_samples", "0", "angular quadrature samples (0: automatic)");

    add("geometry.tau1", "0", "chart base time (0: 0.25 tau0)");
    add("geometry.eta", "0", "glueing width (0: 0.05 (tau0 - tau1))");
    add("geometry.x_min", "-6", "chart lower X bound; the profile grid is clipped to 2 below it");
    add("geometry.x_step", "0.02", "chart X spacing");
    add("geometry.y_samples", "128", "chart Y samples");
    add("geometry.t_samples", "41", "chart T samples");
    add("geometry.tolerance", "1e-5", "difference refinement and (a)/(d) tolerance");
    add("geometry.zero_level", "1e-3", "dX phi below this counts as zero in (b)");
    add("geometry.export_chart", "false", "write the chart's last-T slice as CSV");
  }

  /// Parses `key = value` lines; unknown keys and malformed lines are rejected.
  void parse(std::istream& in, const std::string& origin = "config") {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        reject(origin + ":" + std::to_string(lineno) + ": expected key = value");
      }
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), origin + ":" + std::to_string(lineno));
    }
  }

  void load(const std::string& path) {
    std::ifstream in(path);
    if (!in) reject("cannot open config file " + path);
    parse(in, path);
  }

  void set(const std::string& key, const std::string& value, const std::string& where = "override") {
    auto it = entries_.find(key);
    if (it == entries_.end()) reject(where + ": unknown key '" + key + "'");
    it->second.value = value;
  }

  /// `key=value` override as given on the command line.
  void set_assignment(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) reject("override '" + kv + "' is not key=value");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }

  [[nodiscard]] const std::string& str(const std::string& key) const { return entry(key).value; }

  [[nodiscard]] double num(const std::string& key) const {
    const auto& v = str(key);
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (res.ec != std::errc() || res.ptr != end || !std::isfinite(out)) reject("key " + key + ": not a number: " + v);
    return out;
  }

  [[nodiscard]] long integer(const std::string& key) const {
    const double d = num(key);
    if (d != std::floor(d) || std::abs(d) > 1e15) reject("key " + key + ": not an integer: " + str(key));
    return static_cast<long>(d);
  }

  [[nodiscard]] std::size_t count(const std::string& key) const {
    const long v = integer(key);
    if (v < 0) reject("key " + key + ": must be non-negative");
    return static_cast<std::size_t>(v);
  }

  [[nodiscard]] bool flag(const std::string& key) const {
    const auto& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    reject("key " + key + ": not a boolean: " + v);
  }

  [[nodiscard]] std::vector<double> list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      double x = 0.0;
      const auto* end = item.data() + item.size();
      const auto res = std::from_chars(item.data(), end, x);
      if (item.empty() || res.ec != std::errc() || res.ptr != end) reject("key " + key + ": bad list entry '" + item + "'");
      out.push_back(x);
    }
    if (out.empty()) reject("key " + key + ": empty list");
    return out;
  }

  /// All keys, sorted, one `key = value` per line.
  [[nodiscard]] std::string canonical() const {
    std::string out;
    for (const auto& [k, e] : entries_) out += k + " = " + e.value + "\n";
    return out;
  }

  [[nodiscard]] std::string hash() const { return hex64(fnv1a64(canonical())); }

  [[nodiscard]] const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  std::map<std::string, Entry> entries_;

  [[nodiscard]] const Entry& entry(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) reject("unknown key '" + key + "'");
    return it->second;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }
};

}  // namespace qwave
