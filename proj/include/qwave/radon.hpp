#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qwave/core.hpp"
#include "qwave/data.hpp"

namespace qwave {

/// 1 / (2^{3/2} pi), the normalisation of the radiation profile integral.
inline const double kProfileNormalisation = 1.0 / (std::pow(2.0, 1.5) * kPi);

// ---------------------------------------------------------------------------
// Radon transform
// ---------------------------------------------------------------------------

struct RadonOptions {
  double support_radius = 6.0;
  double line_step = 0.0;  // 0 selects 0.01 * support_radius
  double unit_tol = 1e-12;
  double support_tol = 1e-12;
  bool check_support = true;
};

struct RadonSlice {
  Vec2 omega;
  std::vector<double> s_grid;
  std::vector<double> values;             // R(s, omega; v)
  std::vector<double> derivative_values;  // d/ds R = R(s, omega; omega . grad v)
};

namespace detail {

/// Trapezoid rule along {x . omega = s}, chord clipped to the support disc.
template <class Integrand>
double line_integral(Integrand&& f, Vec2 omega, double s, double radius, double step) {
  if (std::abs(s) >= radius) return 0.0;
  const double half = std::sqrt(radius * radius - s * s);
  const auto n = std::max<long>(2, static_cast<long>(std::ceil(2.0 * half / step)));
  const double h = 2.0 * half / static_cast<double>(n);
  const Vec2 perp{-omega.y, omega.x};
  const Vec2 foot = s * omega;
  double sum = 0.5 * (f(foot + (-half) * perp) + f(foot + half * perp));
  for (long k = 1; k < n; ++k) sum += f(foot + (-half + h * static_cast<double>(k)) * perp);
  return sum * h;
}

inline void check_unit(Vec2 omega, double tol) {
  if (std::abs(norm(omega) - 1.0) > tol) reject("radon_transform: direction is not a unit vector");
}

}  // namespace detail

/// Line integrals of `field` over {x . omega = s_j} and of omega . grad field.
inline RadonSlice radon_transform(const ScalarField& field, Vec2 omega, std::span<const double> s_grid,
                                  const RadonOptions& opts = {}) {
  detail::check_unit(omega, opts.unit_tol);
  if (!std::is_sorted(s_grid.begin(), s_grid.end())) reject("radon_transform: s grid must be sorted");
  const double radius = opts.support_radius;
  if (opts.check_support) {
    InitialData probe;
    probe.u1 = field;
    probe.support_radius = radius;
    probe.model = WaveModel::linear();
    if (support_leak(probe) > opts.support_tol) {
      diagnose("radon_transform: field support exceeds declared radius " + std::to_string(radius));
    }
  }
  const double step = opts.line_step > 0.0 ? opts.line_step : 0.01 * radius;
  RadonSlice slice;
  slice.omega = omega;
  slice.s_grid.assign(s_grid.begin(), s_grid.end());
  slice.values.resize(s_grid.size());
  slice.derivative_values.resize(s_grid.size());
  auto value = [&](Vec2 p) { return field(p); };
  auto along = [&](Vec2 p) { return field.along(p, omega); };
  for (std::size_t j = 0; j < s_grid.size(); ++j) {
    if (field.identically_zero) continue;
    slice.values[j] = detail::line_integral(value, omega, s_grid[j], radius, step);
    slice.derivative_values[j] = detail::line_integral(along, omega, s_grid[j], radius, step);
  }
  return slice;
}

// ---------------------------------------------------------------------------
// Directional profile F0(sigma, theta)
// ---------------------------------------------------------------------------

/// Closed-form representation of a profile; used for synthetic profiles.
struct ProfileFunction {
  std::function<double(double, double)> value;       // F0(sigma, theta)
  std::function<double(double, double)> derivative;  // dF0/dsigma; may be empty
};

struct ProfileMetadata {
  double sigma_min = 0.0;
  double support_radius = 6.0;
  double c1 = 1.0;
  double c2 = 1.0;
  double quad_step = 0.0;  // s-grid step of the regularised integral
  double line_step = 0.0;
  int gl_points = 4;
  double quad_residual = 0.0;  // coarse-vs-fine difference at check points
  std::string derivative_method = "none";
  std::string source = "data";
};

/// F0 and dF0/dsigma sampled on a (sigma, theta) lattice.
///
/// Rows index sigma, columns index theta. The theta grid is uniform on [0, 2 pi]
/// with the last column repeating the first.
class DirectionalProfile {
 public:
  std::vector<double> sigma_grid;
  std::vector<double> theta_grid;
  Matrix F0;
  Matrix dF0_dsigma;  // empty until profile_derivative()
  ProfileMetadata meta;
  std::shared_ptr<const ProfileFunction> analytic;

  [[nodiscard]] std::size_t n_sigma() const { return sigma_grid.size(); }
  [[nodiscard]] std::size_t n_theta() const { return theta_grid.size(); }
  [[nodiscard]] std::size_t n_angles() const { return theta_grid.size() - 1; }  // distinct angles
  [[nodiscard]] bool has_derivative() const { return !dF0_dsigma.empty(); }
  [[nodiscard]] double sigma_step() const { return sigma_grid[1] - sigma_grid[0]; }
  [[nodiscard]] double theta_step() const { return theta_grid[1] - theta_grid[0]; }
  [[nodiscard]] double support_radius() const { return meta.support_radius; }

  [[nodiscard]] double angular(double theta) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return meta.c1 * c * c + meta.c2 * s * s;
  }

  [[nodiscard]] bool is_zero() const { return max_abs(F0.data()) == 0.0; }

  /// F0 at an arbitrary point: closed form when available, else 6-point Lagrange interpolation.
  [[nodiscard]] double value(double sigma, double theta) const {
    if (sigma >= meta.support_radius) return 0.0;
    if (analytic) return analytic->value(sigma, theta);
    return interpolate(F0, sigma, theta, 0.5);
  }

  /// dF0/dsigma at an arbitrary point.
  [[nodiscard]] double derivative(double sigma, double theta) const {
    if (sigma >= meta.support_radius) return 0.0;
    if (analytic) {
      if (analytic->derivative) return analytic->derivative(sigma, theta);
      auto f = [&](double s) { return analytic->value(s, theta); };
      return fd1(f, sigma, 1e-4);
    }
    if (!has_derivative()) reject("profile derivative requested before profile_derivative()");
    return interpolate(dF0_dsigma, sigma, theta, 1.5);
  }

  void check_shape() const {
    if (sigma_grid.size() < 2 || theta_grid.size() < 3) reject("profile: grids too small");
    if (!is_uniform(sigma_grid)) reject("profile: sigma grid must be uniform");
    if (!is_uniform(theta_grid)) reject("profile: theta grid must be uniform");
    if (std::abs(theta_grid.front()) > 1e-12 || std::abs(theta_grid.back() - kTwoPi) > 1e-9) {
      reject("profile: theta grid must run from 0 to 2 pi inclusive");
    }
    if (sigma_grid.back() > meta.support_radius + 1e-12) reject("profile: sigma grid exceeds support radius");
  }

 private:
  // Values below sigma_min follow the far-field law |F0| ~ |sigma|^{-decay}.
  double interpolate(const Matrix& m, double sigma, double theta, double decay) const {
    const double s0 = sigma_grid.front();
    const double hs = sigma_step();
    double scale = 1.0;
    double s = sigma;
    if (sigma < s0) {
      scale = std::pow((1.0 + std::abs(s0)) / (1.0 + std::abs(sigma)), decay);
      s = s0;
    }
    const std::size_t na = n_angles();
    const double ht = kTwoPi / static_cast<double>(na);
    const double u = (s - s0) / hs;
    const auto n = static_cast<long>(sigma_grid.size());
    constexpr int kPoints = 6;
    long base = static_cast<long>(std::floor(u)) - kPoints / 2 + 1;
    base = std::clamp(base, 0L, std::max(0L, n - kPoints));
    std::array<double, kPoints> column{};
    std::array<double, kPoints> wsig{};
    const int count = static_cast<int>(std::min<long>(kPoints, n));
    for (int k = 0; k < count; ++k) {
      double w = 1.0;
      for (int q = 0; q < count; ++q) {
        if (q != k) w *= (u - static_cast<double>(base + q)) / static_cast<double>(k - q);
      }
      wsig[k] = w;
    }
    // Interpolate along theta for each of the sigma rows in the stencil.
    for (int k = 0; k < count; ++k) {
      const auto row = m.row(static_cast<std::size_t>(base + k)).first(na);
      column[k] = lagrange_periodic(row, 0.0, ht, theta, kPoints);
    }
    double out = 0.0;
    for (int k = 0; k < count; ++k) out += wsig[k] * column[k];
    return scale * out;
  }
};

/// Samples a closed-form profile on the given grids (dF0 filled from the derivative callback
/// or by differencing the closed form).
inline DirectionalProfile make_synthetic_profile(ProfileFunction fn, std::vector<double> sigma_grid,
                                                 std::vector<double> theta_grid, double c1, double c2,
                                                 double support_radius, bool fill_derivative = true) {
  DirectionalProfile p;
  p.sigma_grid = std::move(sigma_grid);
  p.theta_grid = std::move(theta_grid);
  p.meta.c1 = c1;
  p.meta.c2 = c2;
  p.meta.support_radius = support_radius;
  p.meta.sigma_min = p.sigma_grid.front();
  p.meta.source = "synthetic";
  p.check_shape();
  p.analytic = std::make_shared<const ProfileFunction>(std::move(fn));
  p.F0 = Matrix(p.n_sigma(), p.n_theta());
  for (std::size_t i = 0; i < p.n_sigma(); ++i) {
    for (std::size_t j = 0; j < p.n_theta(); ++j) p.F0(i, j) = p.analytic->value(p.sigma_grid[i], p.theta_grid[j]);
  }
  if (fill_derivative) {
    p.dF0_dsigma = Matrix(p.n_sigma(), p.n_theta());
    for (std::size_t i = 0; i < p.n_sigma(); ++i) {
      for (std::size_t j = 0; j < p.n_theta(); ++j) p.dF0_dsigma(i, j) = p.derivative(p.sigma_grid[i], p.theta_grid[j]);
    }
    p.meta.derivative_method = "closed_form";
  }
  return p;
}

/// Uniform theta grid on [0, 2 pi] with `angles` distinct samples plus the closing column.
inline std::vector<double> periodic_theta_grid(std::size_t angles) { return linspace(0.0, kTwoPi, angles + 1); }

namespace synthetic {

/// F0 = e^{-sigma^2}, independent of theta.
inline DirectionalProfile gaussian(double c1 = 1.0, double c2 = 1.0, double sigma_min = -6.0, double step = 0.05,
                                   std::size_t angles = 64, double support_radius = 6.0) {
  ProfileFunction fn{[](double s, double) { return std::exp(-s * s); },
                     [](double s, double) { return -2.0 * s * std::exp(-s * s); }};
  return make_synthetic_profile(std::move(fn), uniform_grid(sigma_min, support_radius, step),
                                periodic_theta_grid(angles), c1, c2, support_radius);
}

/// F0 = e^{-sigma^2} (1 + 0.2 cos theta); unique minimiser of dF0 c(theta) at theta = 0.
inline DirectionalProfile modulated(double c1 = 1.0, double c2 = 1.0, double sigma_min = -6.0, double step = 0.05,
                                    std::size_t angles = 64, double support_radius = 6.0) {
  ProfileFunction fn{[](double s, double t) { return std::exp(-s * s) * (1.0 + 0.2 * std::cos(t)); },
                     [](double s, double t) { return -2.0 * s * std::exp(-s * s) * (1.0 + 0.2 * std::cos(t)); }};
  return make_synthetic_profile(std::move(fn), uniform_grid(sigma_min, support_radius, step),
                                periodic_theta_grid(angles), c1, c2, support_radius);
}

}  // namespace synthetic

// ---------------------------------------------------------------------------
// Regularised profile integral
// ---------------------------------------------------------------------------

struct FriedlanderOptions {
  double s_step = 0.02;      // sampling step of the Radon slices on [-M, M]
  double line_step = 0.0;    // 0 selects 0.01 M
  int gl_points = 4;         // Gauss-Legendre points per w-panel
  std::size_t check_stride = 16;
  double check_tol = 1e-6;   // relative to max |F0|
  bool exploit_symmetry = true;  // radial data: compute one angle and copy
};

namespace detail {

/// Piecewise-cubic representation of g(s) on a uniform grid over [-M, M], zero outside.
class CellCubics {
 public:
  CellCubics(std::span<const double> g, double s0, double h) : s0_(s0), h_(h) {
    const auto n = static_cast<long>(g.size());
    auto at = [&](long k) { return (k >= 0 && k < n) ? g[static_cast<std::size_t>(k)] : 0.0; };
    coeffs_.resize(static_cast<std::size_t>(std::max<long>(n - 1, 0)));
    for (long j = 0; j + 1 < n; ++j) {
      // Cubic through (-1, p0), (0, p1), (1, p2), (2, p3) in local t.
      const double p0 = at(j - 1), p1 = at(j), p2 = at(j + 1), p3 = at(j + 2);
      auto& c = coeffs_[static_cast<std::size_t>(j)];
      c[0] = p1;
      c[1] = -p0 / 3.0 - p1 / 2.0 + p2 - p3 / 6.0;
      c[2] = p0 / 2.0 - p1 + p2 / 2.0;
      c[3] = -p0 / 6.0 + p1 / 2.0 - p2 / 2.0 + p3 / 6.0;
    }
  }

  [[nodiscard]] std::size_t cells() const { return coeffs_.size(); }
  [[nodiscard]] double left(std::size_t j) const { return s0_ + h_ * static_cast<double>(j); }
  [[nodiscard]] double upper() const { return left(coeffs_.size()); }

  [[nodiscard]] double eval(std::size_t j, double s) const {
    const double t = (s - left(j)) / h_;
    const auto& c = coeffs_[j];
    return c[0] + t * (c[1] + t * (c[2] + t * c[3]));
  }

  /// integral_sigma^upper g(s) (s - sigma)^{-1/2} ds via s = sigma + w^2.
  [[nodiscard]] double abel(double sigma, const GaussRule& rule) const {
    if (sigma >= upper() || coeffs_.empty()) return 0.0;
    std::size_t j0 = 0;
    if (sigma > s0_) j0 = std::min(coeffs_.size() - 1, static_cast<std::size_t>((sigma - s0_) / h_));
    double total = 0.0;
    for (std::size_t j = j0; j < coeffs_.size(); ++j) {
      const double a = std::max(left(j), sigma);
      const double b = left(j + 1);
      if (b <= sigma) continue;
      const double wa = std::sqrt(a - sigma);
      const double wb = std::sqrt(b - sigma);
      const double mid = 0.5 * (wa + wb), half = 0.5 * (wb - wa);
      double panel = 0.0;
      for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
        const double w = mid + half * rule.nodes[k];
        panel += rule.weights[k] * eval(j, sigma + w * w);
      }
      total += 2.0 * half * panel;
    }
    return total;
  }

 private:
  double s0_, h_;
  std::vector<std::array<double, 4>> coeffs_;
};

/// g(s) = R(s, omega; u1) - d/ds R(s, omega; u0), or its s-derivative when `derivative` is set.
inline std::vector<double> profile_density(const InitialData& data, double theta, std::span<const double> s_nodes,
                                           double line_step, bool derivative) {
  const Vec2 omega = direction(theta);
  const double M = data.support_radius;
  std::vector<double> g(s_nodes.size(), 0.0);
  auto v1 = [&](Vec2 p) { return data.u1(p); };
  auto d1 = [&](Vec2 p) { return data.u1.along(p, omega); };
  auto d0 = [&](Vec2 p) { return data.u0.along(p, omega); };
  auto dd0 = [&](Vec2 p) { return data.u0.along2(p, omega); };
  for (std::size_t j = 0; j < s_nodes.size(); ++j) {
    const double s = s_nodes[j];
    double val = 0.0;
    if (!data.u1.identically_zero) {
      val += derivative ? line_integral(d1, omega, s, M, line_step) : line_integral(v1, omega, s, M, line_step);
    }
    if (!data.u0.identically_zero) {
      val -= derivative ? line_integral(dd0, omega, s, M, line_step) : line_integral(d0, omega, s, M, line_step);
    }
    g[j] = val;
  }
  return g;
}

inline std::vector<double> every_other(std::span<const double> v) {
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); i += 2) out.push_back(v[i]);
  return out;
}

/// Fills one theta column of `target` with K * abel(g); returns the coarse-check residual.
inline double fill_column(Matrix& target, std::size_t col, std::span<const double> sigma_grid,
                          std::span<const double> g, double s0, double h, const FriedlanderOptions& opts) {
  const GaussRule rule = gauss_legendre(opts.gl_points);
  const CellCubics fine(g, s0, h);
  const auto coarse_samples = every_other(g);
  const CellCubics coarse(coarse_samples, s0, 2.0 * h);
  double residual = 0.0;
  for (std::size_t i = 0; i < sigma_grid.size(); ++i) {
    const double sigma = sigma_grid[i];
    const double v = kProfileNormalisation * fine.abel(sigma, rule);
    target(i, col) = v;
    if (opts.check_stride > 0 && i % opts.check_stride == 0 && sigma < fine.upper()) {
      residual = std::max(residual, std::abs(v - kProfileNormalisation * coarse.abel(sigma, rule)));
    }
  }
  return residual;
}

}  // namespace detail

/// F0(sigma, theta) = (2^{3/2} pi)^{-1} int_sigma^infinity [R(s; u1) - dR/ds(s; u0)] / sqrt(s - sigma) ds.
inline DirectionalProfile friedlander_profile(const InitialData& data, std::vector<double> sigma_grid,
                                              std::vector<double> theta_grid, const FriedlanderOptions& opts = {}) {
  validate(data);
  DirectionalProfile p;
  p.sigma_grid = std::move(sigma_grid);
  p.theta_grid = std::move(theta_grid);
  const double M = data.support_radius;
  p.meta.support_radius = M;
  if (!p.sigma_grid.empty() && p.sigma_grid.back() > M + 1e-12) reject("friedlander_profile: sigma grid exceeds M");
  p.check_shape();
  p.meta.c1 = data.model.c1;
  p.meta.c2 = data.model.c2;
  p.meta.sigma_min = p.sigma_grid.front();
  p.meta.line_step = opts.line_step > 0.0 ? opts.line_step : 0.01 * M;
  p.meta.gl_points = opts.gl_points;
  p.meta.source = data.name;

  // Even number of cells so the coarse check grid shares the end points.
  auto cells = static_cast<std::size_t>(std::ceil(2.0 * M / opts.s_step));
  cells += cells % 2;
  const double h = 2.0 * M / static_cast<double>(cells);
  p.meta.quad_step = h;
  const auto s_nodes = linspace(-M, M, cells + 1);

  p.F0 = Matrix(p.n_sigma(), p.n_theta());
  if (data.is_zero()) return p;

  const bool radial = opts.exploit_symmetry && is_radial(data);
  double residual = 0.0;
  const std::size_t na = p.n_angles();
  for (std::size_t j = 0; j < na; ++j) {
    if (radial && j > 0) {
      for (std::size_t i = 0; i < p.n_sigma(); ++i) p.F0(i, j) = p.F0(i, 0);
      continue;
    }
    const auto g = detail::profile_density(data, p.theta_grid[j], s_nodes, p.meta.line_step, false);
    residual = std::max(residual, detail::fill_column(p.F0, j, p.sigma_grid, g, -M, h, opts));
  }
  for (std::size_t i = 0; i < p.n_sigma(); ++i) p.F0(i, na) = p.F0(i, 0);
  p.meta.quad_residual = residual;
  const double scale = max_abs(p.F0.data());
  if (residual > opts.check_tol * std::max(scale, 1e-300)) {
    std::ostringstream os;
    os << "friedlander_profile: quadrature refinement mismatch " << residual << " exceeds tolerance "
       << opts.check_tol * scale;
    diagnose(os.str());
  }
  return p;
}

// ---------------------------------------------------------------------------
// dF0/dsigma
// ---------------------------------------------------------------------------

enum class DerivativeMethod { finite_difference, exact };

/// Fills dF0_dsigma: 4th-order differences along sigma, or the differentiated integral.
inline DirectionalProfile profile_derivative(DirectionalProfile profile,
                                             DerivativeMethod method = DerivativeMethod::finite_difference,
                                             const InitialData* data = nullptr, const FriedlanderOptions& opts = {}) {
  if (profile.n_sigma() < 5) reject("profile_derivative: need at least 5 sigma samples");
  if (!is_uniform(profile.sigma_grid)) reject("profile_derivative: sigma grid must be uniform");
  profile.dF0_dsigma = Matrix(profile.n_sigma(), profile.n_theta());
  if (method == DerivativeMethod::finite_difference) {
    const double h = profile.sigma_step();
    std::vector<double> col(profile.n_sigma());
    for (std::size_t j = 0; j < profile.n_theta(); ++j) {
      for (std::size_t i = 0; i < profile.n_sigma(); ++i) col[i] = profile.F0(i, j);
      const auto d = differentiate_uniform(col, h);
      for (std::size_t i = 0; i < profile.n_sigma(); ++i) profile.dF0_dsigma(i, j) = d[i];
    }
    profile.meta.derivative_method = "finite_difference";
    return profile;
  }
  if (profile.analytic) {
    for (std::size_t i = 0; i < profile.n_sigma(); ++i) {
      for (std::size_t j = 0; j < profile.n_theta(); ++j) {
        profile.dF0_dsigma(i, j) = profile.derivative(profile.sigma_grid[i], profile.theta_grid[j]);
      }
    }
    profile.meta.derivative_method = "closed_form";
    return profile;
  }
  if (data == nullptr) reject("profile_derivative: exact method needs the initial data or a closed form");
  const double M = data->support_radius;
  auto cells = static_cast<std::size_t>(std::ceil(2.0 * M / opts.s_step));
  cells += cells % 2;
  const double h = 2.0 * M / static_cast<double>(cells);
  const auto s_nodes = linspace(-M, M, cells + 1);
  const double line_step = opts.line_step > 0.0 ? opts.line_step : 0.01 * M;
  const bool radial = opts.exploit_symmetry && is_radial(*data);
  const std::size_t na = profile.n_angles();
  FriedlanderOptions check = opts;
  check.check_stride = 0;
  for (std::size_t j = 0; j < na && !data->is_zero(); ++j) {
    if (radial && j > 0) {
      for (std::size_t i = 0; i < profile.n_sigma(); ++i) profile.dF0_dsigma(i, j) = profile.dF0_dsigma(i, 0);
      continue;
    }
    const auto g = detail::profile_density(*data, profile.theta_grid[j], s_nodes, line_step, true);
    detail::fill_column(profile.dF0_dsigma, j, profile.sigma_grid, g, -M, h, check);
  }
  for (std::size_t i = 0; i < profile.n_sigma(); ++i) profile.dF0_dsigma(i, na) = profile.dF0_dsigma(i, 0);
  profile.meta.derivative_method = "exact";
  return profile;
}

// ---------------------------------------------------------------------------
// Far-field decay diagnostics
// ---------------------------------------------------------------------------

struct DecayFit {
  int sigma_order = 0;
  int theta_order = 0;
  double exponent = 0.0;
  double expected = 0.0;
  double r2 = 0.0;
  double residual = 0.0;
  std::size_t samples = 0;
  bool signal_too_small = false;
  std::string message;
};

/// Fits log sup_theta |d_sigma^k d_theta^l F0| against log(1 + |sigma|) on [sigma_min, sigma_min / 4].
inline std::vector<DecayFit> decay_check(const DirectionalProfile& profile,
                                         std::span<const std::pair<int, int>> orders) {
  if (profile.sigma_grid.front() > -50.0) reject("decay_check: sigma grid must extend to sigma_min <= -50");
  const double smin = profile.sigma_grid.front();
  const std::size_t ns = profile.n_sigma(), na = profile.n_angles();
  const double global = max_abs(profile.F0.data());
  const double noise_floor = std::max(1e-12 * global, 1e-300);
  const double hs = profile.sigma_step();
  const double ht = kTwoPi / static_cast<double>(na);

  std::vector<DecayFit> out;
  for (const auto& [k, l] : orders) {
    if (k < 0 || l < 0 || k + l > 2) reject("decay_check: orders must satisfy k + l <= 2");
    if (k >= 1 && !profile.has_derivative()) reject("decay_check: sigma derivatives need dF0_dsigma");
    // sigma derivative of order k
    Matrix m(ns, na);
    for (std::size_t j = 0; j < na; ++j) {
      std::vector<double> col(ns);
      for (std::size_t i = 0; i < ns; ++i) col[i] = (k == 0) ? profile.F0(i, j) : profile.dF0_dsigma(i, j);
      if (k == 2) col = differentiate_uniform(col, hs);
      for (std::size_t i = 0; i < ns; ++i) m(i, j) = col[i];
    }
    // periodic theta derivatives, 4th order
    for (int rep = 0; rep < l; ++rep) {
      Matrix d(ns, na);
      for (std::size_t i = 0; i < ns; ++i) {
        for (std::size_t j = 0; j < na; ++j) {
          auto at = [&](long q) { return m(i, static_cast<std::size_t>((q % static_cast<long>(na) + na) % na)); };
          const auto jj = static_cast<long>(j);
          d(i, j) = (at(jj - 2) - 8 * at(jj - 1) + 8 * at(jj + 1) - at(jj + 2)) / (12 * ht);
        }
      }
      m = std::move(d);
    }
    DecayFit fit;
    fit.sigma_order = k;
    fit.theta_order = l;
    fit.expected = -(0.5 + k);
    std::vector<double> x, y;
    double peak = 0.0;
    for (std::size_t i = 0; i < ns; ++i) {
      const double s = profile.sigma_grid[i];
      if (s > smin / 4.0) break;
      double sup = 0.0;
      for (std::size_t j = 0; j < na; ++j) sup = std::max(sup, std::abs(m(i, j)));
      peak = std::max(peak, sup);
      x.push_back(1.0 + std::abs(s));
      y.push_back(sup);
    }
    const double min_in_window = y.empty() ? 0.0 : *std::min_element(y.begin(), y.end());
    if (y.size() < 3 || min_in_window <= noise_floor) {
      fit.signal_too_small = true;
      fit.message = "signal too small: far-field magnitude below floating-point noise floor";
      out.push_back(fit);
      continue;
    }
    const LinearFit lf = fit_power_law(x, y);
    fit.exponent = lf.slope;
    fit.r2 = lf.r2;
    fit.residual = lf.residual_rms;
    fit.samples = lf.samples;
    out.push_back(fit);
  }
  return out;
}

}  // namespace qwave
