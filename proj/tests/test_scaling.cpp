#include <gtest/gtest.h>

#include <cmath>

#include "qwave/scaling.hpp"

using namespace qwave;

namespace {

ScalingPolicy quick_policy() {
  ScalingPolicy p;
  p.h = 0.02;
  p.fallback_horizon = 5.0;
  return p;
}

}  // namespace

TEST(ScalingStudy, ZeroDataNeverDetects) {
  const auto s = scaling_study(presets::zero(), {0.4, 0.2}, std::numeric_limits<double>::infinity(), quick_policy());
  ASSERT_EQ(s.rows.size(), 2u);
  for (const auto& r : s.rows) {
    EXPECT_FALSE(r.detected);
    EXPECT_FALSE(r.flagged);
    EXPECT_TRUE(std::isinf(r.T_pred));
    EXPECT_TRUE(std::isnan(r.gap));
  }
  EXPECT_EQ(s.verdict, "no blowup predicted");
}

TEST(ScalingStudy, LinearModelNeverDetects) {
  const auto s = scaling_study(presets::linear(), {0.4}, std::numeric_limits<double>::infinity(), quick_policy());
  EXPECT_FALSE(s.rows.front().detected);
}

TEST(ScalingStudy, RejectsUnsortedOrNonPositiveEpsilons) {
  const auto d = presets::gaussian();
  EXPECT_THROW(scaling_study(d, {0.2, 0.4}, 3.0, quick_policy()), Error);
  EXPECT_THROW(scaling_study(d, {0.4, 0.4}, 3.0, quick_policy()), Error);
  EXPECT_THROW(scaling_study(d, {0.4, -0.1}, 3.0, quick_policy()), Error);
  EXPECT_THROW(scaling_study(d, {}, 3.0, quick_policy()), Error);
  auto bad = quick_policy();
  bad.horizon_factor = 0.5;
  EXPECT_THROW(scaling_study(d, {0.4}, 3.0, bad), Error);
}

TEST(ScalingStudy, UnreachableHorizonIsFlaggedNotFatal) {
  // horizon factor barely above one with a tiny refinement budget: the row records the failure
  auto p = quick_policy();
  p.horizon_factor = 1.01;
  p.detection.max_refinements = 0;
  p.detection.hard_threshold = 1e6;
  const auto s = scaling_study(presets::gaussian(), {0.8}, 3.148, p);
  ASSERT_EQ(s.rows.size(), 1u);
  EXPECT_TRUE(s.rows.front().flagged);
  EXPECT_EQ(s.verdict, "flagged rows present");
}

TEST(ScalingStudy, GeometryFollowsPolicy) {
  auto p = quick_policy();
  EXPECT_EQ(scaling_geometry(p, 10.0).kind, GeometryKind::radial);
  p.kind = GeometryKind::annulus;
  EXPECT_EQ(scaling_geometry(p, 10.0).n_theta, p.n_theta);
  p.kind = GeometryKind::cartesian;
  EXPECT_EQ(scaling_geometry(p, 10.0).kind, GeometryKind::cartesian);
}
