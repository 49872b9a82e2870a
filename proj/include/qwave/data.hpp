#pragma once

#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>

#include "qwave/core.hpp"

namespace qwave {

// ---------------------------------------------------------------------------
// Scalar fields on the plane
// ---------------------------------------------------------------------------

/// An evaluable scalar field with an optional analytic gradient.
struct ScalarField {
  std::function<double(Vec2)> value;
  std::function<Vec2(Vec2)> gradient;  // may be empty
  bool identically_zero = false;

  double operator()(Vec2 p) const { return identically_zero ? 0.0 : value(p); }

  /// Analytic gradient when available, otherwise 4th-order differences with step 1e-3.
  [[nodiscard]] Vec2 grad(Vec2 p) const {
    if (identically_zero) return {};
    if (gradient) return gradient(p);
    constexpr double h = 1e-3;
    auto fx = [&](double x) { return value({x, p.y}); };
    auto fy = [&](double y) { return value({p.x, y}); };
    return {fd1(fx, p.x, h), fd1(fy, p.y, h)};
  }

  /// Directional derivative along omega.
  [[nodiscard]] double along(Vec2 p, Vec2 omega) const { return dot(grad(p), omega); }

  /// Second directional derivative along omega, by differencing the gradient.
  [[nodiscard]] double along2(Vec2 p, Vec2 omega) const {
    if (identically_zero) return 0.0;
    constexpr double h = 1e-3;
    auto g = [&](double t) { return along(p + t * omega, omega); };
    return fd1(g, 0.0, h);
  }

  static ScalarField zero() {
    ScalarField f;
    f.value = [](Vec2) { return 0.0; };
    f.gradient = [](Vec2) { return Vec2{}; };
    f.identically_zero = true;
    return f;
  }
};

/// Scales a field by a constant.
inline ScalarField scaled(const ScalarField& f, double s) {
  if (f.identically_zero || s == 0.0) return ScalarField::zero();
  ScalarField out;
  out.value = [f, s](Vec2 p) { return s * f(p); };
  if (f.gradient) out.gradient = [f, s](Vec2 p) { return s * f.gradient(p); };
  return out;
}

/// v(x - a).
inline ScalarField translated(const ScalarField& f, Vec2 a) {
  if (f.identically_zero) return f;
  ScalarField out;
  out.value = [f, a](Vec2 p) { return f(p - a); };
  if (f.gradient) out.gradient = [f, a](Vec2 p) { return f.gradient(p - a); };
  return out;
}

/// v(R_{-alpha} x): the field rotated by angle alpha.
inline ScalarField rotated(const ScalarField& f, double alpha) {
  if (f.identically_zero) return f;
  ScalarField out;
  const double c = std::cos(alpha), s = std::sin(alpha);
  out.value = [f, c, s](Vec2 p) { return f(Vec2{c * p.x + s * p.y, -s * p.x + c * p.y}); };
  return out;
}

// ---------------------------------------------------------------------------
// Smooth compactly supported building blocks
// ---------------------------------------------------------------------------

/// Radial taper equal to 1 for r <= inner and 0 for r >= outer.
struct RadialTaper {
  double inner = 5.75;
  double outer = 6.0;

  [[nodiscard]] double value(double r) const {
    return cutoff(1.0 + (r - inner) / (outer - inner));
  }
  [[nodiscard]] double derivative(double r) const {
    return cutoff_derivative(1.0 + (r - inner) / (outer - inner)) / (outer - inner);
  }
};

/// e^{-|x|^2} times a smooth taper vanishing beyond `outer`.
inline ScalarField truncated_gaussian(double amplitude = 1.0, RadialTaper taper = {}) {
  ScalarField f;
  f.value = [=](Vec2 p) {
    const double r2 = dot(p, p);
    const double r = std::sqrt(r2);
    return r >= taper.outer ? 0.0 : amplitude * std::exp(-r2) * taper.value(r);
  };
  f.gradient = [=](Vec2 p) {
    const double r2 = dot(p, p);
    const double r = std::sqrt(r2);
    if (r >= taper.outer) return Vec2{};
    const double g = std::exp(-r2);
    // d/dr [e^{-r^2} T(r)] / r times x
    const double dr = g * (-2.0 * r * taper.value(r) + taper.derivative(r));
    if (r == 0.0) return Vec2{};
    return (amplitude * dr / r) * p;
  };
  return f;
}

/// (1 + tilt * x1) e^{-|x|^2} times the taper; breaks the theta <-> theta + pi symmetry.
inline ScalarField tilted_gaussian(double tilt, RadialTaper taper = {}) {
  ScalarField base = truncated_gaussian(1.0, taper);
  ScalarField f;
  f.value = [base, tilt](Vec2 p) { return (1.0 + tilt * p.x) * base(p); };
  f.gradient = [base, tilt](Vec2 p) {
    const double b = base(p);
    const Vec2 gb = base.gradient(p);
    const double m = 1.0 + tilt * p.x;
    return Vec2{tilt * b + m * gb.x, m * gb.y};
  };
  return f;
}

// ---------------------------------------------------------------------------
// Sampled grid fields
// ---------------------------------------------------------------------------

/// Uniform Cartesian samples with bicubic (local Lagrange) interpolation, zero outside.
class GridField {
 public:
  GridField(double x0, double y0, double h, std::size_t nx, std::size_t ny, std::vector<double> values)
      : x0_(x0), y0_(y0), h_(h), nx_(nx), ny_(ny), v_(std::move(values)) {
    if (v_.size() != nx_ * ny_) reject("GridField: sample count does not match grid shape");
  }

  [[nodiscard]] double operator()(Vec2 p) const {
    const double u = (p.x - x0_) / h_;
    const double w = (p.y - y0_) / h_;
    if (u < -1.0 || w < -1.0 || u > static_cast<double>(nx_) || w > static_cast<double>(ny_)) return 0.0;
    const auto i = static_cast<long>(std::floor(u));
    const auto j = static_cast<long>(std::floor(w));
    const double tx = u - static_cast<double>(i);
    const double ty = w - static_cast<double>(j);
    const auto wx = weights(tx);
    const auto wy = weights(ty);
    double sum = 0.0;
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) sum += wx[a] * wy[b] * at(i - 1 + a, j - 1 + b);
    }
    return sum;
  }

  [[nodiscard]] double at(long i, long j) const {
    if (i < 0 || j < 0 || i >= static_cast<long>(nx_) || j >= static_cast<long>(ny_)) return 0.0;
    return v_[static_cast<std::size_t>(j) * nx_ + static_cast<std::size_t>(i)];
  }

  [[nodiscard]] double spacing() const noexcept { return h_; }
  [[nodiscard]] double x0() const noexcept { return x0_; }
  [[nodiscard]] double y0() const noexcept { return y0_; }
  [[nodiscard]] std::size_t nx() const noexcept { return nx_; }
  [[nodiscard]] std::size_t ny() const noexcept { return ny_; }

 private:
  static std::array<double, 4> weights(double t) {
    return {-t * (t - 1.0) * (t - 2.0) / 6.0, (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0, (t + 1.0) * t * (t - 1.0) / 6.0};
  }

  double x0_, y0_, h_;
  std::size_t nx_, ny_;
  std::vector<double> v_;
};

inline ScalarField field_from_grid(std::shared_ptr<const GridField> g) {
  ScalarField f;
  f.value = [g](Vec2 p) { return (*g)(p); };
  return f;
}

// ---------------------------------------------------------------------------
// Wave-speed models
// ---------------------------------------------------------------------------

/// Coefficients of  u_tt - sum_i d_i(a_i(u) d_i u) = 0  with a_i = c_i(u)^2.
struct WaveModel {
  enum class Kind { quadratic, general, linear };

  Kind kind = Kind::quadratic;
  double c1 = 1.0;  // quadratic-model constants, c_i = 2 c_i'(0)
  double c2 = 1.0;
  std::function<double(double)> a1;  // only used for Kind::general
  std::function<double(double)> a2;
  bool equal_coefficients = false;  // a1 and a2 are the same function (general kind)
  std::string label = "quadratic";

  static WaveModel quadratic(double c1, double c2) {
    if (c1 * c1 + c2 * c2 == 0.0) reject("quadratic model requires c1^2 + c2^2 != 0");
    WaveModel m;
    m.kind = Kind::quadratic;
    m.c1 = c1;
    m.c2 = c2;
    m.label = "quadratic";
    return m;
  }

  static WaveModel linear() {
    WaveModel m;
    m.kind = Kind::linear;
    m.c1 = 0.0;
    m.c2 = 0.0;
    m.label = "linear";
    return m;
  }

  /// General c_i(u)^2 callbacks with the quadratic constants of their expansion.
  static WaveModel general(std::function<double(double)> a1, std::function<double(double)> a2, double c1,
                           double c2, std::string label, bool equal_coefficients = false) {
    WaveModel m;
    m.equal_coefficients = equal_coefficients;
    m.kind = Kind::general;
    m.a1 = std::move(a1);
    m.a2 = std::move(a2);
    m.c1 = c1;
    m.c2 = c2;
    m.label = std::move(label);
    return m;
  }

  /// Pressure-gradient model c_i(u) = e^{u/2}.
  static WaveModel pressure_gradient() {
    auto e = [](double u) { return std::exp(u); };
    return general(e, e, 1.0, 1.0, "pressure_gradient", true);
  }

  [[nodiscard]] double coeff1(double u) const {
    switch (kind) {
      case Kind::quadratic: return 1.0 + c1 * u;
      case Kind::linear: return 1.0;
      case Kind::general: return a1(u);
    }
    return 1.0;
  }
  [[nodiscard]] double coeff2(double u) const {
    switch (kind) {
      case Kind::quadratic: return 1.0 + c2 * u;
      case Kind::linear: return 1.0;
      case Kind::general: return a2(u);
    }
    return 1.0;
  }

  /// c(theta) = c1 cos^2 theta + c2 sin^2 theta.
  [[nodiscard]] double angular(double theta) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return c1 * c * c + c2 * s * s;
  }

  [[nodiscard]] bool isotropic() const {
    switch (kind) {
      case Kind::linear: return true;
      case Kind::quadratic: return c1 == c2;
      case Kind::general: return equal_coefficients;
    }
    return false;
  }
};

// ---------------------------------------------------------------------------
// Initial data
// ---------------------------------------------------------------------------

struct InitialData {
  ScalarField u0 = ScalarField::zero();
  ScalarField u1 = ScalarField::zero();
  double support_radius = 6.0;
  WaveModel model = WaveModel::quadratic(1.0, 1.0);
  std::string name = "custom";

  [[nodiscard]] bool is_zero() const { return u0.identically_zero && u1.identically_zero; }
};

/// Largest |u0|,|u1| sampled on rings just outside the declared support.
inline double support_leak(const InitialData& d, int angles = 64) {
  double leak = 0.0;
  for (double scale : {1.0 + 1e-6, 1.02, 1.1, 1.3}) {
    const double r = d.support_radius * scale;
    for (int k = 0; k < angles; ++k) {
      const Vec2 p = r * direction(kTwoPi * (k + 0.5) / angles);
      leak = std::max({leak, std::abs(d.u0(p)), std::abs(d.u1(p))});
    }
  }
  return leak;
}

inline void validate(const InitialData& d, double tol = 1e-12) {
  if (!(d.support_radius > 0.0)) reject("initial data: support radius must be positive");
  if (d.model.kind == WaveModel::Kind::quadratic && d.model.c1 * d.model.c1 + d.model.c2 * d.model.c2 == 0.0) {
    reject("initial data: quadratic model requires c1^2 + c2^2 != 0");
  }
  const double leak = support_leak(d);
  if (leak > tol) {
    std::ostringstream os;
    os << "initial data: field support exceeds declared radius " << d.support_radius << " (|v| = " << leak
       << " outside)";
    diagnose(os.str());
  }
}

/// True when u0 and u1 are (numerically) functions of |x| only.
inline bool is_radial(const InitialData& d, double tol = 1e-10) {
  if (d.is_zero()) return true;
  double scale = 0.0;
  for (int i = 0; i <= 40; ++i) {
    const double r = d.support_radius * i / 40.0;
    scale = std::max({scale, std::abs(d.u0({r, 0.0})), std::abs(d.u1({r, 0.0}))});
  }
  for (int i = 1; i <= 40; ++i) {
    const double r = d.support_radius * i / 40.0;
    const double ref0 = d.u0({r, 0.0}), ref1 = d.u1({r, 0.0});
    for (int k = 1; k < 12; ++k) {
      const Vec2 p = r * direction(kTwoPi * k / 12.0 + 0.1);
      if (std::abs(d.u0(p) - ref0) > tol * std::max(1.0, scale)) return false;
      if (std::abs(d.u1(p) - ref1) > tol * std::max(1.0, scale)) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

namespace presets {

inline InitialData zero() {
  InitialData d;
  d.name = "zero";
  return d;
}

/// u0 = 0, u1 = truncated e^{-|x|^2}, c1 = c2 = 1.
inline InitialData gaussian() {
  InitialData d;
  d.u1 = truncated_gaussian();
  d.name = "gaussian";
  return d;
}

/// u0 = truncated e^{-|x|^2}, u1 = 0, c1 = c2 = 1.
inline InitialData gaussian_displacement() {
  InitialData d;
  d.u0 = truncated_gaussian();
  d.name = "gaussian_u0";
  return d;
}

/// Anisotropic model c1 = 2, c2 = 1 with u1 = (1 + 0.3 x1) e^{-|x|^2}.
inline InitialData anisotropic() {
  InitialData d;
  d.u1 = tilted_gaussian(0.3);
  d.model = WaveModel::quadratic(2.0, 1.0);
  d.name = "anisotropic";
  return d;
}

/// Gaussian data evolved by the linear wave equation.
inline InitialData linear() {
  InitialData d = gaussian();
  d.model = WaveModel::linear();
  d.name = "linear";
  return d;
}

}  // namespace presets

// ---------------------------------------------------------------------------
// CSV grid files: columns x, y, u0, u1 on a uniform Cartesian lattice
// ---------------------------------------------------------------------------

inline InitialData load_grid_csv(const std::string& path, double support_radius, WaveModel model) {
  std::ifstream in(path);
  if (!in) reject("cannot open data file: " + path);
  struct Row {
    double x, y, u0, u1;
  };
  std::vector<Row> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (std::isalpha(static_cast<unsigned char>(line[0]))) continue;  // header
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    Row r{};
    if (!(ls >> r.x >> r.y >> r.u0 >> r.u1)) reject("malformed data row: " + line);
    rows.push_back(r);
  }
  if (rows.size() < 16) reject("data file has too few samples: " + path);
  std::vector<double> xs, ys;
  for (const auto& r : rows) {
    xs.push_back(r.x);
    ys.push_back(r.y);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end(), [](double a, double b) { return std::abs(a - b) < 1e-9; }), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end(), [](double a, double b) { return std::abs(a - b) < 1e-9; }), ys.end());
  if (xs.size() * ys.size() != rows.size() || !is_uniform(xs, 1e-6) || !is_uniform(ys, 1e-6)) {
    reject("data file must hold a complete uniform lattice: " + path);
  }
  const double h = xs[1] - xs[0];
  if (std::abs((ys[1] - ys[0]) - h) > 1e-6 * h) reject("data file lattice must have equal spacing in x and y");
  const std::size_t nx = xs.size(), ny = ys.size();
  std::vector<double> v0(nx * ny), v1(nx * ny);
  for (const auto& r : rows) {
    const auto i = static_cast<std::size_t>(std::lround((r.x - xs[0]) / h));
    const auto j = static_cast<std::size_t>(std::lround((r.y - ys[0]) / h));
    v0[j * nx + i] = r.u0;
    v1[j * nx + i] = r.u1;
  }
  InitialData d;
  auto g0 = std::make_shared<GridField>(xs[0], ys[0], h, nx, ny, std::move(v0));
  auto g1 = std::make_shared<GridField>(xs[0], ys[0], h, nx, ny, std::move(v1));
  d.u0 = field_from_grid(g0);
  d.u1 = field_from_grid(g1);
  d.support_radius = support_radius;
  d.model = std::move(model);
  d.name = "file:" + path;
  return d;
}

}  // namespace qwave
