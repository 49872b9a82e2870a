#include <gtest/gtest.h>

#include <cmath>

#include "qwave/radon.hpp"

using namespace qwave;

namespace {

// Composite Simpson with n (even) panels.
template <class F>
double simpson(F&& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double sum = f(a) + f(b);
  for (int k = 1; k < n; ++k) sum += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
  return sum * h / 3.0;
}

// F0 for u1 = e^{-|x|^2}, u0 = 0 using R(s) = sqrt(pi) e^{-s^2} and s = sigma + w^2.
double gaussian_profile_oracle(double sigma) {
  const double upper = std::sqrt(std::max(0.0, 8.0 - sigma));
  auto f = [&](double w) { return 2.0 * std::sqrt(kPi) * std::exp(-std::pow(sigma + w * w, 2)); };
  return simpson(f, 0.0, upper, 40000) / (std::pow(2.0, 1.5) * kPi);
}

double gaussian_profile_derivative_oracle(double sigma) {
  const double upper = std::sqrt(std::max(0.0, 8.0 - sigma));
  auto f = [&](double w) {
    const double s = sigma + w * w;
    return 2.0 * std::sqrt(kPi) * (-2.0 * s) * std::exp(-s * s);
  };
  return simpson(f, 0.0, upper, 40000) / (std::pow(2.0, 1.5) * kPi);
}

ScalarField paraboloid(double radius) {
  ScalarField f;
  f.value = [radius](Vec2 p) { return std::max(0.0, 1.0 - dot(p, p) / (radius * radius)); };
  return f;
}

const DirectionalProfile& gaussian_profile() {
  static const DirectionalProfile p = [] {
    auto data = presets::gaussian();
    return profile_derivative(friedlander_profile(data, uniform_grid(-60.0, 6.0, 0.05), periodic_theta_grid(16)));
  }();
  return p;
}

}  // namespace

TEST(RadonTransform, ZeroField) {
  const auto s = linspace(-7, 7, 29);
  const auto slice = radon_transform(ScalarField::zero(), direction(0.3), s);
  for (double v : slice.values) EXPECT_EQ(v, 0.0);
  for (double v : slice.derivative_values) EXPECT_EQ(v, 0.0);
}

TEST(RadonTransform, GaussianMatchesClosedForm) {
  const auto s = linspace(-6.5, 6.5, 131);
  for (double theta : {0.0, 0.4, 1.3, 2.9, 4.4}) {
    const auto slice = radon_transform(truncated_gaussian(), direction(theta), s);
    for (std::size_t j = 0; j < s.size(); ++j) {
      EXPECT_NEAR(slice.values[j], std::sqrt(kPi) * std::exp(-s[j] * s[j]), 1e-6);
      EXPECT_NEAR(slice.derivative_values[j], -2.0 * s[j] * std::sqrt(kPi) * std::exp(-s[j] * s[j]), 1e-6);
    }
  }
}

TEST(RadonTransform, ExactlyZeroOutsideSupport) {
  const std::vector<double> s{-9.0, -6.0, 6.0, 6.01, 8.0};
  const auto slice = radon_transform(truncated_gaussian(), direction(1.0), s);
  for (double v : slice.values) EXPECT_EQ(v, 0.0);
}

TEST(RadonTransform, TranslationShiftsOffsets) {
  const Vec2 a{0.7, -0.4};
  RadonOptions opts;
  opts.support_radius = 6.0;
  // Translate a narrow Gaussian so the support stays inside the disc.
  RadialTaper taper{4.5, 5.0};
  const auto base = truncated_gaussian(1.0, taper);
  const auto moved = translated(base, a);
  const Vec2 omega = direction(0.8);
  const auto s = linspace(-3.0, 3.0, 25);
  const auto shifted_grid = [&] {
    std::vector<double> out;
    for (double x : s) out.push_back(x - dot(a, omega));
    return out;
  }();
  const auto lhs = radon_transform(moved, omega, s, opts);
  const auto rhs = radon_transform(base, omega, shifted_grid, opts);
  for (std::size_t j = 0; j < s.size(); ++j) EXPECT_NEAR(lhs.values[j], rhs.values[j], 1e-9);
}

TEST(RadonTransform, MassConsistency) {
  const auto s = linspace(-6.0, 6.0, 601);
  const double h = s[1] - s[0];
  for (double theta : {0.0, 1.1}) {
    const auto slice = radon_transform(tilted_gaussian(0.3), direction(theta), s);
    double mass = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) mass += (j == 0 || j + 1 == s.size() ? 0.5 : 1.0) * slice.values[j];
    mass *= h;
    // integral of (1 + 0.3 x) e^{-|x|^2} over the plane is pi
    EXPECT_NEAR(mass, kPi, 1e-8);
  }
}

TEST(RadonTransform, RotationEquivariance) {
  const auto field = tilted_gaussian(0.5);
  const double alpha = 0.37;
  const auto turned = rotated(field, alpha);
  const auto s = linspace(-5.0, 5.0, 41);
  for (double theta : {0.2, 2.0, 4.0}) {
    const auto lhs = radon_transform(turned, direction(theta), s);
    const auto rhs = radon_transform(field, direction(theta - alpha), s);
    for (std::size_t j = 0; j < s.size(); ++j) EXPECT_NEAR(lhs.values[j], rhs.values[j], 1e-8);
  }
}

TEST(RadonTransform, LineQuadratureIsSecondOrder) {
  // A paraboloid cap has a kink at the rim, which exposes the trapezoid error term.
  const double M = 2.0;
  const auto field = paraboloid(M);
  const std::vector<double> s{0.0, 0.5, 1.2};
  auto max_error = [&](double step) {
    RadonOptions opts;
    opts.support_radius = M;
    opts.line_step = step;
    const auto slice = radon_transform(field, direction(0.0), s, opts);
    double err = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      const double half = std::sqrt(M * M - s[j] * s[j]);
      err = std::max(err, std::abs(slice.values[j] - 4.0 * half * half * half / (3.0 * M * M)));
    }
    return err;
  };
  const double ratio = max_error(0.02) / max_error(0.01);
  EXPECT_GT(ratio, 3.5);
  EXPECT_LT(ratio, 4.5);
}

TEST(RadonTransform, RejectsBadInput) {
  const std::vector<double> s{0.0};
  try {
    radon_transform(truncated_gaussian(), Vec2{1.0, 1.0}, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::rejected);
  }
  RadonOptions small;
  small.support_radius = 3.0;
  try {
    radon_transform(truncated_gaussian(), direction(0.0), s, small);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::diagnostic);
  }
}

TEST(FriedlanderProfile, ZeroData) {
  const auto p = friedlander_profile(presets::zero(), uniform_grid(-10.0, 6.0, 0.5), periodic_theta_grid(8));
  EXPECT_TRUE(p.is_zero());
}

TEST(FriedlanderProfile, GaussianValueAtOrigin) {
  const double closed = std::sqrt(kPi) * std::tgamma(0.25) / 2.0 / (std::pow(2.0, 1.5) * kPi);
  EXPECT_NEAR(closed, gaussian_profile_oracle(0.0), 1e-9);
  EXPECT_NEAR(closed, 0.36158, 1e-4);
  const auto& p = gaussian_profile();
  for (double theta : {0.0, 0.7, 3.0, 5.5}) EXPECT_NEAR(p.value(0.0, theta), closed, 1e-6);
}

TEST(FriedlanderProfile, MatchesOracleEverywhere) {
  const auto& p = gaussian_profile();
  for (double sigma : {-55.0, -20.0, -3.0, -0.5, 0.4, 1.5, 3.0}) {
    EXPECT_NEAR(p.value(sigma, 1.0), gaussian_profile_oracle(sigma), 1e-7) << sigma;
    EXPECT_NEAR(p.derivative(sigma, 1.0), gaussian_profile_derivative_oracle(sigma), 2e-6) << sigma;
  }
}

TEST(FriedlanderProfile, SupportPeriodicityDecay) {
  const auto& p = gaussian_profile();
  const std::size_t last = p.n_theta() - 1;
  for (std::size_t i = 0; i < p.n_sigma(); ++i) {
    EXPECT_EQ(p.F0(i, 0), p.F0(i, last));
    if (p.sigma_grid[i] >= 6.0) {
      EXPECT_EQ(p.F0(i, 0), 0.0);
    }
  }
  EXPECT_EQ(p.value(6.0, 0.3), 0.0);
  EXPECT_EQ(p.value(7.5, 0.3), 0.0);
  const std::size_t tenth = p.n_sigma() / 10;
  double left = 0.0, middle = 0.0;
  for (std::size_t i = 0; i < p.n_sigma(); ++i) {
    for (std::size_t j = 0; j < p.n_theta(); ++j) {
      if (i < tenth) left = std::max(left, std::abs(p.F0(i, j)));
      if (i >= 4 * tenth && i < 6 * tenth) middle = std::max(middle, std::abs(p.F0(i, j)));
    }
  }
  EXPECT_LT(left, middle);
}

TEST(FriedlanderProfile, AnisotropicDataIsPeriodicAndDirectional) {
  auto data = presets::anisotropic();
  const auto p = friedlander_profile(data, uniform_grid(-8.0, 6.0, 0.1), periodic_theta_grid(32));
  for (std::size_t i = 0; i < p.n_sigma(); ++i) EXPECT_EQ(p.F0(i, 0), p.F0(i, p.n_theta() - 1));
  // u1 = (1 + 0.3 x1) e^{-|x|^2}: R = sqrt(pi) e^{-s^2} (1 + 0.3 s cos theta)
  auto oracle = [](double sigma, double theta) {
    auto f = [&](double w) {
      const double s = sigma + w * w;
      return 2.0 * std::sqrt(kPi) * std::exp(-s * s) * (1.0 + 0.3 * s * std::cos(theta));
    };
    return simpson(f, 0.0, std::sqrt(8.0 - sigma), 40000) / (std::pow(2.0, 1.5) * kPi);
  };
  for (double theta : {0.0, kPi / 2, kPi}) {
    for (double sigma : {-2.0, 0.0, 1.0}) EXPECT_NEAR(p.value(sigma, theta), oracle(sigma, theta), 1e-6);
  }
}

TEST(FriedlanderProfile, ConvergesAtLeastSecondOrder) {
  const auto data = presets::gaussian();
  const auto sigma = uniform_grid(-4.0, 2.0, 0.5);
  auto err = [&](double step) {
    FriedlanderOptions o;
    o.s_step = step;
    o.check_tol = 1.0;
    const auto p = friedlander_profile(data, sigma, periodic_theta_grid(4), o);
    double e = 0.0;
    for (std::size_t i = 0; i < sigma.size(); ++i) e = std::max(e, std::abs(p.F0(i, 0) - gaussian_profile_oracle(sigma[i])));
    return e;
  };
  const double coarse = err(0.4), fine = err(0.2);
  EXPECT_GT(coarse / fine, 4.0);
}

TEST(FriedlanderProfile, RejectsSigmaBeyondSupport) {
  EXPECT_THROW(friedlander_profile(presets::gaussian(), uniform_grid(-2.0, 7.0, 0.5), periodic_theta_grid(4)), Error);
}

TEST(FriedlanderProfile, ReportsNonConvergence) {
  FriedlanderOptions o;
  o.s_step = 1.5;
  o.check_stride = 1;
  try {
    friedlander_profile(presets::gaussian(), uniform_grid(-2.0, 2.0, 0.5), periodic_theta_grid(4), o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::diagnostic);
    EXPECT_NE(std::string(e.what()).find("mismatch"), std::string::npos);
  }
}

TEST(ProfileDerivative, ConstantProfileHasZeroDerivative) {
  ProfileFunction fn{[](double, double) { return 2.5; }, {}};
  auto p = make_synthetic_profile(fn, uniform_grid(-3.0, 3.0, 0.1), periodic_theta_grid(8), 1, 1, 6.0, false);
  p.analytic.reset();
  p = profile_derivative(p);
  EXPECT_LT(max_abs(p.dF0_dsigma.data()), 1e-12);
}

TEST(ProfileDerivative, SyntheticGaussianSlope) {
  auto p = synthetic::gaussian(1.0, 1.0, -6.0, 0.05, 8);
  p.analytic.reset();
  p = profile_derivative(p);
  const double expected = -std::sqrt(2.0) * std::exp(-0.5);
  EXPECT_NEAR(expected, -0.85776, 1e-5);
  // dense finite-difference cross-check of the calculus value
  const double s0 = 1.0 / std::sqrt(2.0), d = 1e-5;
  EXPECT_NEAR((std::exp(-(s0 + d) * (s0 + d)) - std::exp(-(s0 - d) * (s0 - d))) / (2 * d), expected, 1e-8);
  EXPECT_NEAR(p.derivative(s0, 0.4), expected, 1e-5);
}

TEST(ProfileDerivative, FourthOrderRefinement) {
  auto err = [](double step) {
    auto p = synthetic::gaussian(1.0, 1.0, -6.0, step, 4);
    p.analytic.reset();
    p = profile_derivative(p);
    double e = 0.0;
    for (std::size_t i = 0; i < p.n_sigma(); ++i) {
      const double s = p.sigma_grid[i];
      e = std::max(e, std::abs(p.dF0_dsigma(i, 0) + 2.0 * s * std::exp(-s * s)));
    }
    return e;
  };
  const double ratio = err(0.1) / err(0.05);
  EXPECT_GT(ratio, 12.0);
  EXPECT_LT(ratio, 20.0);
}

TEST(ProfileDerivative, ExactRouteMatchesDifferences) {
  const auto data = presets::gaussian_displacement();
  const auto p0 = friedlander_profile(data, uniform_grid(-10.0, 6.0, 0.05), periodic_theta_grid(8));
  const auto fd = profile_derivative(p0);
  const auto exact = profile_derivative(p0, DerivativeMethod::exact, &data);
  for (std::size_t i = 0; i < p0.n_sigma(); i += 7) EXPECT_NEAR(fd.dF0_dsigma(i, 3), exact.dF0_dsigma(i, 3), 2e-5);
}

TEST(ProfileDerivative, RejectsShortGrid) {
  DirectionalProfile p;
  p.sigma_grid = {0.0, 0.1, 0.2, 0.3};
  p.theta_grid = periodic_theta_grid(4);
  p.F0 = Matrix(4, 5);
  EXPECT_THROW(profile_derivative(p), Error);
}

TEST(DecayCheck, GaussianExponents) {
  const auto& p = gaussian_profile();
  const std::vector<std::pair<int, int>> orders{{0, 0}, {1, 0}};
  const auto fits = decay_check(p, orders);
  ASSERT_EQ(fits.size(), 2u);
  EXPECT_NEAR(fits[0].exponent, -0.5, 0.1);
  EXPECT_NEAR(fits[1].exponent, -1.5, 0.15);
  EXPECT_FALSE(fits[0].signal_too_small);
}

TEST(DecayCheck, ZeroProfileSignalTooSmall) {
  auto p = friedlander_profile(presets::zero(), uniform_grid(-60.0, 6.0, 0.5), periodic_theta_grid(8));
  p = profile_derivative(p);
  const std::vector<std::pair<int, int>> orders{{0, 0}, {1, 0}};
  for (const auto& f : decay_check(p, orders)) {
    EXPECT_TRUE(f.signal_too_small);
    EXPECT_NE(f.message.find("signal too small"), std::string::npos);
  }
}

TEST(DecayCheck, NeedsFarField) {
  const auto p = synthetic::gaussian();
  const std::vector<std::pair<int, int>> orders{{0, 0}};
  EXPECT_THROW(decay_check(p, orders), Error);
}
