#include <gtest/gtest.h>

#include <cmath>

#include "qwave/geometry.hpp"

using namespace qwave;

namespace {

std::shared_ptr<const DirectionalProfile> modulated() {
  static const auto p = std::make_shared<const DirectionalProfile>(synthetic::modulated());
  return p;
}

std::shared_ptr<const DirectionalProfile> flat_gaussian() {
  static const auto p = std::make_shared<const DirectionalProfile>(synthetic::gaussian());
  return p;
}

// tau0 of F0 = e^{-s^2}(1 + 0.2 cos theta), c = 1: min of -2 s e^{-s^2} 1.2 sits at s = 1/sqrt 2
double modulated_tau0() { return 1.0 / (1.2 * std::sqrt(2.0) * std::exp(-0.5)); }

struct ModulatedH {
  LifespanPrediction pred = predict_lifespan(*modulated());
  BlowupChart chart = glue_chart(make_chart(modulated(), pred, ChartOptions{0.3}));
  HReport h = check_condition_H(chart);
};

const ModulatedH& modulated_h() {
  static const ModulatedH m;
  return m;
}

}  // namespace

TEST(SigmaOfX, IdentityAtBaseTimeZero) {
  const auto& p = *modulated();
  for (double X : {-3.0, -0.5, 0.0, 0.7, 2.0}) EXPECT_DOUBLE_EQ(sigma_of_X(X, 0.4, 0.0, p, 1.0), X);
}

TEST(SigmaOfX, SupportEdgeIsFixed) {
  const auto& p = *modulated();
  EXPECT_NEAR(sigma_of_X(p.support_radius(), 1.0, 0.3, p, modulated_tau0()), p.support_radius(), 1e-10);
}

TEST(SigmaOfX, InvertsTheCharacteristicMap) {
  // c = 1, F0(0) = 1: the label 0 lands at X = tau1
  const auto& p = *flat_gaussian();
  EXPECT_NEAR(sigma_of_X(0.3, 0.0, 0.3, p, 1.0 / (std::sqrt(2.0) * std::exp(-0.5))), 0.0, 1e-10);
  for (double s : {-1.0, 0.5, 1.5}) {
    const double X = s + std::exp(-s * s) * 0.3;
    EXPECT_NEAR(sigma_of_X(X, 2.0, 0.3, p, 1.2), s, 1e-10) << s;
  }
}

TEST(Chart, PhiAtTimeZeroIsX) {
  const auto& c = modulated_h().chart;
  for (std::size_t i = 0; i < c.X.size(); i += 37) {
    for (std::size_t j = 0; j < c.Y.size(); j += 9) EXPECT_EQ(c.phi_at(0, i, j), c.X[i]);
  }
  EXPECT_EQ(phi0(0.4, 1.0, 0.0, c), 0.4);
}

TEST(Chart, PhiIsAffineInT) {
  const auto& c = modulated_h().chart;
  const double X = 0.9, Y = 0.2;
  const double W = c.W_at(X, Y);
  for (double T : {0.1, 0.3, 0.5}) EXPECT_NEAR(phi0(X, Y, T, c), X + T * W, 1e-14);
}

TEST(Chart, GlueUsesLocalChartEarlyAndPhi0Late) {
  auto local = [](double X, double, double T) { return X + 2.0 * T; };
  const auto c = glue_chart(make_chart(modulated(), modulated_h().pred, ChartOptions{0.3, 0.05}), local);
  EXPECT_NEAR(phi_a(0.5, 0.1, 0.0, c), 0.5, 1e-15);
  EXPECT_NEAR(phi_a(0.5, 0.1, 0.04, c), 0.5 + 0.08, 1e-14);  // T / eta <= 1: local chart only
  const double late = 0.2;                                   // T >= 2 eta
  EXPECT_NEAR(phi_a(0.5, 0.1, late, c), phi0(0.5, 0.1, late, c), 1e-15);
}

TEST(ConditionH, ModulatedPresetPassesAllSubchecks) {
  const auto& m = modulated_h();
  ASSERT_TRUE(m.h.checkable) << m.h.reason;
  ASSERT_EQ(m.h.subchecks.size(), 5u);
  for (const auto& s : m.h.subchecks) EXPECT_TRUE(s.pass) << s.name << ": " << s.detail;
  EXPECT_TRUE(m.h.all_pass);
}

TEST(ConditionH, FoldTimeIdentity) {
  const auto& m = modulated_h();
  EXPECT_NEAR(m.pred.tau0, modulated_tau0(), 1e-8);
  const double expected = -1.0 / (modulated_tau0() - 0.3);
  EXPECT_NEAR(m.h.min_dXW, expected, 1e-4 * std::abs(expected));
  EXPECT_LT(m.h.fold_identity_rel, 1e-4);
  EXPECT_LT(m.h.mixed_XT, 0.0);
}

TEST(ConditionH, FoldPointSitsOnTheMinimisingCharacteristic) {
  const auto& m = modulated_h();
  const double s0 = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(m.h.fold.X, s0 + 1.2 * std::exp(-0.5) * 0.3, 1e-6);
  EXPECT_NEAR(m.h.fold.Y, 0.0, 1e-6);
  EXPECT_NEAR(m.h.fold.T, modulated_tau0() - 0.3, 1e-8);
}

TEST(ConditionH, DegenerateMinimiserIsNotCheckable) {
  const auto p = flat_gaussian();
  const auto pred = predict_lifespan(*p);
  ASSERT_TRUE(pred.degenerate);
  const auto h = check_condition_H(glue_chart(make_chart(p, pred, ChartOptions{0.3})));
  EXPECT_FALSE(h.checkable);
  EXPECT_FALSE(h.all_pass);
  EXPECT_NE(h.reason.find("degenerate"), std::string::npos);
}

TEST(ConditionH, RejectsUnfilledChart) {
  const auto& m = modulated_h();
  EXPECT_THROW(check_condition_H(make_chart(modulated(), m.pred, ChartOptions{0.3})), Error);
}

TEST(Chart, RejectsBaseTimePastLifespan) {
  const auto& m = modulated_h();
  EXPECT_THROW(make_chart(modulated(), m.pred, ChartOptions{2.0}), Error);
  LifespanPrediction none;
  EXPECT_THROW(make_chart(modulated(), none), Error);
}

TEST(BlowupPoint, LeadingOrderTimeAndPlace) {
  LifespanPrediction p;
  p.no_blowup = false;
  p.tau0 = 1.0;
  p.sigma0 = 0.5;
  p.theta0 = kPi / 2;
  const auto b = blowup_point(p, 0.1);
  EXPECT_NEAR(b.T, 100.0, 1e-12);
  EXPECT_NEAR(b.r, 100.5, 1e-12);
  EXPECT_NEAR(b.x.x, 0.0, 1e-12);
  EXPECT_NEAR(b.x.y, 100.5, 1e-12);
  p.degenerate = true;
  EXPECT_TRUE(std::isnan(blowup_point(p, 0.1).theta));
  EXPECT_THROW(blowup_point(p, 0.0), Error);
  p.no_blowup = true;
  EXPECT_THROW(blowup_point(p, 0.1), Error);
}

namespace {

template <class G>
std::vector<HistorySample> synthetic_history(G g, double T, double dt) {
  std::vector<HistorySample> h;
  for (long k = 0; k * dt < T - 0.5 * dt; ++k) {
    HistorySample s;
    s.t = k * dt;
    s.sup_ut = g(s.t);
    s.sup_grad = 2.0 * g(s.t);
    s.dt = dt;
    h.push_back(s);
  }
  return h;
}

}  // namespace

TEST(RateFit, PureInverseLawGivesMinusOne) {
  const auto h = synthetic_history([](double t) { return 1.0 / (1.0 - t); }, 1.0, 1e-4);
  const auto r = rate_fit(h, 1.0);
  EXPECT_NEAR(r.ut.exponent, -1.0, 1e-9);
  EXPECT_NEAR(r.grad.exponent, -1.0, 1e-9);
  EXPECT_NEAR(r.lower_bound_margin, 1.0, 1e-9);
}

TEST(RateFit, OffsetLawStaysNearMinusOne) {
  const auto h = synthetic_history([](double t) { return 1.0 / (1.0 - t) + 5.0; }, 1.0, 1e-4);
  const auto r = rate_fit(h, 1.0);
  EXPECT_GE(r.ut.exponent, -1.1);
  EXPECT_LE(r.ut.exponent, -0.9);
  EXPECT_GT(r.ut_full.exponent, r.ut.exponent);  // the offset flattens the far window
}

TEST(RateFit, TooFewSamplesIsDiagnosed) {
  const auto h = synthetic_history([](double t) { return 1.0 / (1.0 - t); }, 1.0, 0.1);
  try {
    (void)rate_fit(h, 1.0, 0.001);
    FAIL() << "expected a diagnostic";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::diagnostic);
  }
  EXPECT_THROW(rate_fit(h, std::numeric_limits<double>::infinity()), Error);
}
