#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "qwave/detection.hpp"

using namespace qwave;

namespace {

// compact bump of radius 2, cheap enough for Cartesian runs
InitialData small_bump(WaveModel model, bool displacement = true) {
  InitialData d;
  const auto bump = truncated_gaussian(1.0, RadialTaper{1.5, 2.0});
  if (displacement) {
    d.u0 = bump;
  } else {
    d.u1 = bump;
  }
  d.support_radius = 2.0;
  d.model = model;
  d.name = "bump";
  return d;
}

void advance(WaveField& f, double dt, int steps) {
  for (int n = 0; n < steps; ++n) ASSERT_TRUE(step(f, dt).ok());
}

}  // namespace

TEST(WaveField, LinearEnergyIsConservedOnCartesianGrid) {
  auto f = make_initial_field(small_bump(WaveModel::linear()), 1.0, Geometry::cartesian(0.0, 0.1, 6.0));
  const double dt = 0.5 * f.h;
  const double e0 = discrete_energy(f, dt);
  advance(f, dt, 120);
  const double e1 = discrete_energy(f, dt);
  EXPECT_GT(e0, 0.0);
  EXPECT_LT(std::abs(e1 - e0) / e0, 1e-6);
}

TEST(WaveField, LinearEnergyIsConservedOnRadialGrid) {
  auto f = make_initial_field(small_bump(WaveModel::linear(), false), 1.0, Geometry::radial(0.02, 0.0, 20.0));
  const double dt = 0.5 * f.h;
  // the window grows while the wave moves out; appended rows are zero, so the energy is unchanged
  const double e0 = discrete_energy(f, dt);
  advance(f, dt, 1000);
  const double e1 = discrete_energy(f, dt);
  EXPECT_LT(std::abs(e1 - e0) / e0, 1e-6);
}

TEST(WaveField, CellsBeyondThePropagationBoundStayExactlyZero) {
  for (auto geo : {Geometry::cartesian(0.0, 0.05, 3.0), Geometry::radial(0.02, 0.0, 3.0)}) {
    const double eps = 0.5;
    auto f = make_initial_field(small_bump(WaveModel::quadratic(1.0, 1.0), false), eps, geo);
    // independent speed bound sqrt(1 + c max|u|), max|u| tracked over the run; the solver
    // trims a fixed margin of cells past this bound
    double umax = sup_u(f);
    double reach = f.support_radius;
    while (f.t < 3.0) {
      const double dt = stable_step(f, 0.9);
      ASSERT_TRUE(step(f, dt).ok());
      umax = std::max(umax, sup_u(f));
      reach += std::sqrt(1.0 + umax) * dt;
    }
    std::size_t outside = 0, nonzero = 0;
    for (std::size_t i = 0; i < f.nr; ++i) {
      for (std::size_t j = 0; j < f.nc; ++j) {
        const double r = f.layout == GeometryKind::cartesian
                             ? norm(Vec2{detail::node_x(f, i), detail::node_x(f, j)})
                             : f.radius(i);
        if (r <= reach + kMaskCells * f.h) continue;
        ++outside;
        const std::size_t k = f.index(i, j);
        if (f.u[k] != 0.0 || f.ut[k] != 0.0) ++nonzero;
      }
    }
    EXPECT_GT(outside, 0u);
    EXPECT_EQ(nonzero, 0u) << to_string(geo.kind);
    EXPECT_LT(f.masked_max, 1e-12);
  }
}

TEST(WaveField, LinearCartesianSchemeIsSecondOrder) {
  // off-centre pulse with a gentle taper, so the coarsest grid is already asymptotic
  InitialData data;
  data.u0 = translated(truncated_gaussian(1.0, RadialTaper{1.8, 2.7}), {0.3, -0.2});
  data.support_radius = 3.2;
  data.model = WaveModel::linear();
  const double T = 1.6;
  std::vector<std::vector<double>> samples;
  for (double h : {0.1, 0.05, 0.025}) {
    auto f = make_initial_field(data, 1.0, Geometry::cartesian(0.0, h, T));
    const int n = static_cast<int>(std::lround(T / (0.4 * h)));
    advance(f, T / n, n);
    std::vector<double> s;
    for (double x = -3.0; x <= 3.0 + 1e-9; x += 0.5)
      for (double y = -3.0; y <= 3.0 + 1e-9; y += 0.5) s.push_back(sample(f, {x, y}));
    samples.push_back(s);
  }
  double e1 = 0.0, e2 = 0.0;
  for (std::size_t k = 0; k < samples[0].size(); ++k) {
    e1 = std::max(e1, std::abs(samples[0][k] - samples[1][k]));
    e2 = std::max(e2, std::abs(samples[1][k] - samples[2][k]));
  }
  const double ratio = e1 / e2;
  EXPECT_GE(ratio, 3.0);
  EXPECT_LE(ratio, 5.0);
}

TEST(WaveField, RadialAndCartesianSolversAgreeOnRadialData) {
  const auto data = small_bump(WaveModel::quadratic(1.0, 1.0), false);
  const double eps = 0.3, T = 2.0, h = 0.025;
  auto cart = make_initial_field(data, eps, Geometry::cartesian(0.0, h, T));
  auto rad = make_initial_field(data, eps, Geometry::radial(h, 0.0, T));
  const int n = 200;
  advance(cart, T / n, n);
  advance(rad, T / n, n);
  double diff = 0.0;
  for (double r = 0.0; r <= 3.5; r += 0.25) {
    for (double th : {0.0, 0.7, 2.0}) diff = std::max(diff, std::abs(sample(cart, r * direction(th)) - sample(rad, {r, 0.0})));
  }
  EXPECT_LT(diff, 2e-3 * eps);
}

TEST(WaveField, AnnulusMatchesRadialAfterPolarTransfer) {
  const auto data = small_bump(WaveModel::quadratic(1.0, 1.0), false);
  const double eps = 0.3, T = 6.0;
  auto geo = Geometry::annulus(0.025, 256, 1.0, T, 0.05);
  geo.min_radius = 2.0;
  auto ann = make_initial_field(data, eps, geo);
  auto rad = make_initial_field(data, eps, Geometry::radial(0.025, 1.0, T));
  DetectionConfig cfg;
  cfg.horizon = T;
  cfg.cfl = 0.9;
  const auto rep = run_until_blowup(ann, cfg);
  ASSERT_FALSE(rep.detected);
  ASSERT_EQ(ann.layout, GeometryKind::annulus);
  while (rad.t < T - 1e-12) ASSERT_TRUE(step(rad, std::min(stable_step(rad, 0.9), T - rad.t)).ok());
  double diff = 0.0, peak = 0.0;
  for (double r = T - 0.5; r <= T + 2.0; r += 0.1) {
    const double ref = sample(rad, {r, 0.0});
    peak = std::max(peak, std::abs(ref));
    for (double th : {0.0, 1.0, 2.5, 4.0}) diff = std::max(diff, std::abs(sample(ann, r * direction(th)) - ref));
  }
  EXPECT_GT(peak, 0.0);
  EXPECT_LT(diff, 0.02 * peak);
}

TEST(WaveField, ZeroAmplitudeStaysZero) {
  auto f = make_initial_field(presets::gaussian(), 0.0, Geometry::radial(0.05, 4.0, 30.0));
  DetectionConfig cfg;
  cfg.horizon = 30.0;
  const auto rep = run_until_blowup(f, cfg);
  EXPECT_FALSE(rep.detected);
  EXPECT_FALSE(rep.numerical_failure);
  EXPECT_EQ(sup_u(f), 0.0);
  EXPECT_EQ(sup_ut(f), 0.0);
}

TEST(WaveField, RejectsBadGeometry) {
  EXPECT_THROW(make_initial_field(presets::anisotropic(), 0.1, Geometry::radial(0.02)), Error);
  auto tilted = presets::gaussian();
  tilted.u1 = tilted_gaussian(0.3);
  EXPECT_THROW(make_initial_field(tilted, 0.1, Geometry::radial(0.02)), Error);
  EXPECT_THROW(make_initial_field(presets::gaussian(), 0.1, Geometry::cartesian(5.0, 0.1, 10.0)), Error);
  EXPECT_THROW(make_initial_field(presets::gaussian(), 0.1, Geometry::radial(0.0)), Error);
  try {
    make_initial_field(presets::anisotropic(), 0.1, Geometry::radial(0.02));
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::rejected);
  }
}

TEST(WaveField, RefinementPreservesSmoothData) {
  auto f = make_initial_field(small_bump(WaveModel::quadratic(1.0, 1.0), false), 0.2, Geometry::radial(0.02, 0.0, 5.0));
  advance(f, 0.01, 100);
  std::vector<double> before;
  for (double r = 0.0; r < 3.0; r += 0.13) before.push_back(sample(f, {r, 0.0}));
  refine(f);
  EXPECT_DOUBLE_EQ(f.h, 0.01);
  std::size_t k = 0;
  for (double r = 0.0; r < 3.0; r += 0.13) EXPECT_NEAR(sample(f, {r, 0.0}), before[k++], 1e-6);
}

TEST(Detection, FitterIdentityOnExactBlowupSeries) {
  std::vector<double> t, g;
  for (int i = 0; i < 50; ++i) {
    t.push_back(0.9 * i / 49.0);
    g.push_back(1.0 / (1.0 - t.back()));
  }
  const auto fit = fit_blowup(t, g);
  ASSERT_TRUE(fit.valid);
  EXPECT_NEAR(fit.T, 1.0, 1e-12);
  EXPECT_NEAR(fit.rate_exponent, -1.0, 1e-12);
  EXPECT_NEAR(fit.r2, 1.0, 1e-12);
}

TEST(Detection, FitterRejectsNonGrowingSeries) {
  std::vector<double> t{0, 1, 2, 3}, g{4, 3, 2, 1};
  EXPECT_FALSE(fit_blowup(t, g).valid);
  std::vector<double> short_t{0, 1}, short_g{1, 2};
  EXPECT_FALSE(fit_blowup(short_t, short_g).valid);
  EXPECT_THROW(fit_blowup(t, short_g), Error);
}

TEST(Detection, LinearRunNeverTriggers) {
  auto f = make_initial_field(presets::linear(), 0.4, Geometry::radial(0.02, 6.0, 150.0));
  DetectionConfig cfg;
  cfg.horizon = 150.0;
  const auto rep = run_until_blowup(f, cfg);
  EXPECT_FALSE(rep.detected);
  EXPECT_TRUE(std::isnan(rep.first_trigger));
  EXPECT_TRUE(rep.refinement_trace.empty());
  EXPECT_TRUE(rep.bounded);
  EXPECT_NEAR(rep.t_final, 150.0, 1e-9);
}

TEST(Detection, RadialGaussianBlowsUpNearPredictedTime) {
  const double eps = 0.4, tau0 = 3.147938;
  auto f = make_initial_field(presets::gaussian(), eps, Geometry::radial(0.005, 6.0, 200.0));
  DetectionConfig cfg;
  cfg.horizon = 200.0;
  const auto rep = run_until_blowup(f, cfg);
  ASSERT_TRUE(rep.detected) << rep.reason;
  EXPECT_GT(rep.T_est, rep.last_resolved_t);
  EXPECT_LT(std::abs(eps * std::sqrt(rep.T_est) - tau0) / tau0, 0.2);
  EXPECT_GE(rep.rate_exponent, -1.3);
  EXPECT_LE(rep.rate_exponent, -0.7);
  EXPECT_TRUE(rep.bounded);
  EXPECT_FALSE(rep.refinement_trace.empty());
  // the steepest point sits just outside the light cone
  EXPECT_GT(rep.location_r - rep.t_final, 0.0);
  EXPECT_LT(rep.location_r - rep.t_final, 2.0);
}

TEST(Detection, RejectsBadConfig) {
  auto f = make_initial_field(presets::gaussian(), 0.1, Geometry::radial(0.05, 6.0, 10.0));
  DetectionConfig cfg;
  EXPECT_THROW(run_until_blowup(f, cfg), Error);  // horizon 0
  cfg.horizon = 10.0;
  cfg.cfl = 1.5;
  EXPECT_THROW(run_until_blowup(f, cfg), Error);
  cfg.cfl = 0.9;
  cfg.growth_factor = 1.0;
  EXPECT_THROW(run_until_blowup(f, cfg), Error);
}
