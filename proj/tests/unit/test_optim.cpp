#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "emplace/error.hpp"
#include "emplace/optim.hpp"
#include "emplace/rng.hpp"

using namespace emplace;
using namespace emplace::optim;

TEST(Margin, KeyValuesAndContinuity) {
  EXPECT_EQ(margin(0), 0.0);
  EXPECT_DOUBLE_EQ(margin(365), 0.5);
  EXPECT_DOUBLE_EQ(margin(730), 1.5);
  EXPECT_NEAR(margin(std::nextafter(365.0, 0.0)), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(margin(182.5), 0.125);
}

TEST(Margin, MonotoneOnDailyGrid) {
  double prev = margin(0);
  for (int d = 1; d <= 3650; ++d) {
    const double a = margin(d);
    EXPECT_GE(a, prev) << d;
    prev = a;
  }
}

TEST(Margin, FixedModeAndValidation) {
  MarginParams p;
  p.mode = MarginMode::fixed;
  for (double d : {0.0, 10.0, 365.0, 5000.0}) EXPECT_EQ(margin(d, p), 1.0);
  EXPECT_THROW(margin(-1.0), DataError);
  p.scale = 0;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(TripletLoss, HingeValues) {
  const std::vector<double> a{0, 0}, p{3, 4}, n{6, 8};
  EXPECT_DOUBLE_EQ(triplet_loss(a, p, n, 0.5), 0.0);  // 5 - 10 + 0.5 < 0
  EXPECT_DOUBLE_EQ(triplet_loss(a, n, p, 0.5), 5.5);
  EXPECT_DOUBLE_EQ(triplet_loss(a, p, n, 5.0), 0.0);  // boundary
  EXPECT_THROW(triplet_loss(a, std::vector<double>{1}, n, 1), DataError);
}

TEST(TripletLoss, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  int checked = 0;
  while (checked < 50) {
    std::vector<double> a(6), p(6), n(6);
    for (auto* v : {&a, &p, &n}) {
      for (auto& x : *v) x = rng.normal();
    }
    const double alpha = rng.uniform(0.5, 3.0);
    const auto g = triplet_loss_grad(a, p, n, alpha);
    if (!g.active || g.loss < 1e-3) continue;
    ++checked;
    EXPECT_DOUBLE_EQ(g.loss, triplet_loss(a, p, n, alpha));
    for (int which = 0; which < 3; ++which) {
      auto& vec = which == 0 ? a : which == 1 ? p : n;
      const auto& grad = which == 0 ? g.d_anc : which == 1 ? g.d_pos : g.d_neg;
      for (std::size_t i = 0; i < 6; ++i) {
        const double keep = vec[i];
        vec[i] = keep + 1e-6;
        const double up = triplet_loss(a, p, n, alpha);
        vec[i] = keep - 1e-6;
        const double down = triplet_loss(a, p, n, alpha);
        vec[i] = keep;
        EXPECT_NEAR(grad[i], (up - down) / 2e-6, 1e-6);
      }
    }
  }
}

TEST(TripletLoss, InactiveAndDegenerateGradients) {
  const std::vector<double> a{0, 0}, p{0.1, 0}, n{5, 0};
  auto g = triplet_loss_grad(a, p, n, 1.0);
  EXPECT_FALSE(g.active);
  for (double v : g.d_anc) EXPECT_EQ(v, 0.0);
  g = triplet_loss_grad(a, a, n, 10.0);
  EXPECT_TRUE(g.active);
  EXPECT_TRUE(g.zero_pos_distance);
  for (double v : g.d_pos) EXPECT_EQ(v, 0.0);
  EXPECT_DOUBLE_EQ(g.d_neg[0], -1.0);
}

TEST(Adam, FirstStepMovesByLrAgainstGradientSign) {
  Adam adam(3, {0.1, 0.9, 0.999, 1e-8, 0.0});
  std::vector<double> x{1, 2, 3};
  const std::vector<double> g{0.5, -2.0, 1e-3};
  adam.step(x, g);
  EXPECT_NEAR(x[0], 0.9, 1e-6);
  EXPECT_NEAR(x[1], 2.1, 1e-6);
  EXPECT_NEAR(x[2], 2.9, 1e-4);
  EXPECT_EQ(adam.t(), 1u);
}

TEST(Adam, MatchesReferenceRecurrence) {
  const AdamConfig cfg{0.01, 0.8, 0.99, 1e-8, 0.0};
  Adam adam(1, cfg);
  std::vector<double> x{0.3};
  double ref = 0.3, m = 0, v = 0;
  for (int t = 1; t <= 20; ++t) {
    const double g = 2 * ref - std::sin(t);
    m = 0.8 * m + 0.2 * g;
    v = 0.99 * v + 0.01 * g * g;
    ref -= 0.01 * (m / (1 - std::pow(0.8, t))) / (std::sqrt(v / (1 - std::pow(0.99, t))) + 1e-8);
    adam.step(x, std::vector<double>{2 * x[0] - std::sin(t)});
    EXPECT_NEAR(x[0], ref, 1e-14);
  }
}

TEST(Adam, ClipsByGlobalNorm) {
  Adam clipped(2, {0.1, 0.9, 0.999, 1e-8, 0.5});
  Adam reference(2, {0.1, 0.9, 0.999, 1e-8, 0.0});
  std::vector<double> x{0, 0}, y{0, 0};
  const auto info = clipped.step(x, std::vector<double>{3, 4});
  EXPECT_TRUE(info.clipped);
  EXPECT_DOUBLE_EQ(info.grad_norm, 5.0);
  reference.step(y, std::vector<double>{0.3, 0.4});
  EXPECT_NEAR(clipped.m()[0], 0.1 * 0.3, 1e-15);
  EXPECT_NEAR(x[0], y[0], 1e-15);
  EXPECT_FALSE(clipped.step(x, std::vector<double>{0.1, 0.1}).clipped);
}

TEST(Adam, ZeroLearningRateLeavesParametersBitwise) {
  Adam adam(4, {0.0, 0.9, 0.999, 1e-8, 0.5});
  std::vector<double> x{1.0 / 3, -0.0, 1e300, -7.25};
  const auto before = x;
  Rng rng(2);
  for (int i = 0; i < 10; ++i) adam.step(x, std::vector<double>{rng.normal(), rng.normal(), rng.normal(), rng.normal()});
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(std::signbit(x[i]), std::signbit(before[i]));
    EXPECT_EQ(x[i], before[i]);
  }
}

TEST(Adam, RefusesNonFiniteGradient) {
  Adam adam(2);
  std::vector<double> x{1, 2};
  EXPECT_THROW(adam.step(x, std::vector<double>{1, NAN}), NumericalError);
  EXPECT_EQ(adam.t(), 0u);
  EXPECT_EQ(x[1], 2.0);
  EXPECT_EQ(adam.m()[0], 0.0);
  EXPECT_THROW(Adam(1, {-1.0}), ConfigError);
}
