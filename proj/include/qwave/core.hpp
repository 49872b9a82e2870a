#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qwave {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorKind {
  rejected,    // precondition or input validation failure
  diagnostic,  // a computation ran but could not certify its result
  numerical,   // NaN/overflow or loss of hyperbolicity
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void reject(const std::string& what) { throw Error(ErrorKind::rejected, what); }
[[noreturn]] inline void diagnose(const std::string& what) { throw Error(ErrorKind::diagnostic, what); }

// ---------------------------------------------------------------------------
// Small value types
// ---------------------------------------------------------------------------

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 direction(double theta) { return {std::cos(theta), std::sin(theta)}; }

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  [[nodiscard]] std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  [[nodiscard]] const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Grids and reductions
// ---------------------------------------------------------------------------

inline std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = a;
    return out;
  }
  const double h = (b - a) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = a + h * static_cast<double>(i);
  out[n - 1] = b;
  return out;
}

/// Uniform grid from a to b with spacing close to (and not above) step.
inline std::vector<double> uniform_grid(double a, double b, double step) {
  const auto n = static_cast<std::size_t>(std::ceil((b - a) / step - 1e-9)) + 1;
  return linspace(a, b, std::max<std::size_t>(n, 2));
}

/// Fixed-order pairwise summation; the result depends only on the input order.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline bool is_uniform(std::span<const double> g, double rel_tol = 1e-9) {
  if (g.size() < 2) return false;
  const double h = (g.back() - g.front()) / static_cast<double>(g.size() - 1);
  for (std::size_t i = 1; i < g.size(); ++i) {
    if (std::abs((g[i] - g[i - 1]) - h) > rel_tol * std::max(1.0, std::abs(h)) * 10.0) return false;
  }
  return h > 0.0;
}

// ---------------------------------------------------------------------------
// Smooth cutoff
// ---------------------------------------------------------------------------

namespace detail {
inline double bump_tail(double q) { return q > 0.0 ? std::exp(-1.0 / q) : 0.0; }
}  // namespace detail

/// C-infinity cutoff: 1 for s <= 1, 0 for s >= 2, monotone in between.
inline double cutoff(double s) {
  if (s <= 1.0) return 1.0;
  if (s >= 2.0) return 0.0;
  const double a = detail::bump_tail(2.0 - s);
  const double b = detail::bump_tail(s - 1.0);
  return a / (a + b);
}

/// Derivative of cutoff().
inline double cutoff_derivative(double s) {
  if (s <= 1.0 || s >= 2.0) return 0.0;
  const double p = 2.0 - s;
  const double q = s - 1.0;
  const double a = std::exp(-1.0 / p);
  const double b = std::exp(-1.0 / q);
  const double da = -a / (p * p);  // d/ds of a
  const double db = b / (q * q);
  const double den = a + b;
  return (da * den - a * (da + db)) / (den * den);
}

/// Second derivative of cutoff(), by a centered difference of the analytic first derivative.
inline double cutoff_second_derivative(double s) {
  if (s <= 1.0 || s >= 2.0) return 0.0;
  const double h = 1e-5;
  return (cutoff_derivative(s + h) - cutoff_derivative(s - h)) / (2.0 * h);
}

// ---------------------------------------------------------------------------
// Least squares
// ---------------------------------------------------------------------------

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double residual_rms = 0.0;
  std::size_t samples = 0;
};

inline LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) reject("fit_line: need at least two paired samples");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0) reject("fit_line: degenerate abscissae");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += r * r;
  }
  f.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  f.residual_rms = std::sqrt(ss_res / n);
  f.samples = x.size();
  return f;
}

/// Slope of log|y| against log x.
inline LinearFit fit_power_law(std::span<const double> x, std::span<const double> y) {
  std::vector<double> lx, ly;
  lx.reserve(x.size());
  ly.reserve(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0 && std::abs(y[i]) > 0.0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(std::abs(y[i])));
    }
  }
  return fit_line(lx, ly);
}

// ---------------------------------------------------------------------------
// Symmetric 2x2 eigenvalues
// ---------------------------------------------------------------------------

struct Sym2 {
  double a = 0.0;  // (0,0)
  double b = 0.0;  // (0,1) == (1,0)
  double c = 0.0;  // (1,1)
};

inline std::array<double, 2> eigenvalues(const Sym2& m) {
  const double tr = 0.5 * (m.a + m.c);
  const double d = std::sqrt(0.25 * (m.a - m.c) * (m.a - m.c) + m.b * m.b);
  return {tr - d, tr + d};
}

// ---------------------------------------------------------------------------
// Interpolation
// ---------------------------------------------------------------------------

/// Lagrange interpolation on a uniform grid with `order` points (even), clamped at the ends.
inline double lagrange_uniform(std::span<const double> values, double x0, double h, double x,
                               int points = 6) {
  const auto n = static_cast<long>(values.size());
  const double u = (x - x0) / h;
  long base = static_cast<long>(std::floor(u)) - points / 2 + 1;
  base = std::clamp(base, 0L, std::max(0L, n - points));
  double sum = 0.0;
  for (int k = 0; k < points && base + k < n; ++k) {
    double w = 1.0;
    for (int m = 0; m < points && base + m < n; ++m) {
      if (m == k) continue;
      w *= (u - static_cast<double>(base + m)) / static_cast<double>(k - m);
    }
    sum += w * values[static_cast<std::size_t>(base + k)];
  }
  return sum;
}

/// Periodic Lagrange interpolation; `values` holds one period sampled at x0 + k*h.
inline double lagrange_periodic(std::span<const double> values, double x0, double h, double x,
                                int points = 6) {
  const auto n = static_cast<long>(values.size());
  const double u = (x - x0) / h;
  const long base = static_cast<long>(std::floor(u)) - points / 2 + 1;
  double sum = 0.0;
  for (int k = 0; k < points; ++k) {
    double w = 1.0;
    for (int m = 0; m < points; ++m) {
      if (m == k) continue;
      w *= (u - static_cast<double>(base + m)) / static_cast<double>(k - m);
    }
    long idx = (base + k) % n;
    if (idx < 0) idx += n;
    sum += w * values[static_cast<std::size_t>(idx)];
  }
  return sum;
}

/// Catmull-Rom style cubic interpolation on a uniform grid, zero outside.
inline double cubic_uniform(std::span<const double> v, double x0, double h, double x) {
  const double u = (x - x0) / h;
  const auto i = static_cast<long>(std::floor(u));
  const double t = u - static_cast<double>(i);
  const auto n = static_cast<long>(v.size());
  auto at = [&](long k) { return (k >= 0 && k < n) ? v[static_cast<std::size_t>(k)] : 0.0; };
  const double p0 = at(i - 1), p1 = at(i), p2 = at(i + 1), p3 = at(i + 2);
  // Lagrange cubic through 4 points at -1, 0, 1, 2.
  const double l0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
  const double l1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
  const double l2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
  const double l3 = (t + 1.0) * t * (t - 1.0) / 6.0;
  return l0 * p0 + l1 * p1 + l2 * p2 + l3 * p3;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// 4th-order centered first derivative of f at x with step h.
template <class F>
double fd1(F&& f, double x, double h) {
  return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h);
}

/// 4th-order centered second derivative.
template <class F>
double fd2(F&& f, double x, double h) {
  return (-f(x - 2 * h) + 16 * f(x - h) - 30 * f(x) + 16 * f(x + h) - f(x + 2 * h)) / (12 * h * h);
}

/// 4th-order first derivative of uniformly sampled data (one-sided near the ends).
inline std::vector<double> differentiate_uniform(std::span<const double> f, double h) {
  const std::size_t n = f.size();
  if (n < 5) reject("differentiate_uniform: need at least 5 samples");
  std::vector<double> d(n);
  for (std::size_t i = 2; i + 2 < n; ++i) {
    d[i] = (f[i - 2] - 8 * f[i - 1] + 8 * f[i + 1] - f[i + 2]) / (12 * h);
  }
  d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h);
  d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h);
  d[n - 2] = (3 * f[n - 1] + 10 * f[n - 2] - 18 * f[n - 3] + 6 * f[n - 4] - f[n - 5]) / (12 * h);
  d[n - 1] = (25 * f[n - 1] - 48 * f[n - 2] + 36 * f[n - 3] - 16 * f[n - 4] + 3 * f[n - 5]) / (12 * h);
  return d;
}

// ---------------------------------------------------------------------------
// Gauss-Legendre rules on [-1, 1]
// ---------------------------------------------------------------------------

struct GaussRule {
  std::span<const double> nodes;
  std::span<const double> weights;
};

inline GaussRule gauss_legendre(int n) {
  static constexpr std::array<double, 2> n2{-0.5773502691896257645, 0.5773502691896257645};
  static constexpr std::array<double, 2> w2{1.0, 1.0};
  static constexpr std::array<double, 4> n4{-0.8611363115940525752, -0.3399810435848562648,
                                            0.3399810435848562648, 0.8611363115940525752};
  static constexpr std::array<double, 4> w4{0.3478548451374538574, 0.6521451548625461426,
                                            0.6521451548625461426, 0.3478548451374538574};
  static constexpr std::array<double, 8> n8{
      -0.9602898564975362317, -0.7966664774136267396, -0.5255324099163289858, -0.1834346424956498049,
      0.1834346424956498049,  0.5255324099163289858,  0.7966664774136267396,  0.9602898564975362317};
  static constexpr std::array<double, 8> w8{
      0.1012285362903762591, 0.2223810344533744706, 0.3137066458778872873, 0.3626837833783619830,
      0.3626837833783619830, 0.3137066458778872873, 0.2223810344533744706, 0.1012285362903762591};
  switch (n) {
    case 2: return {n2, w2};
    case 4: return {n4, w4};
    case 8: return {n8, w8};
    default: reject("gauss_legendre: supported orders are 2, 4, 8");
  }
}

// ---------------------------------------------------------------------------
// Hashing (for provenance stamps)
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

}  // namespace qwave
