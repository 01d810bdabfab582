#include <gtest/gtest.h>

#include <random>

#include "pmsop/moreau.hpp"
#include "support/instances.hpp"
#include "support/oracles.hpp"

namespace pmsop {
namespace {

ScalarPLConvex random_pl(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nb(0, 4);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const int m = nb(rng);
  std::vector<double> b(m), s(m + 1);
  for (auto& v : b) v = 2.0 * unit(rng);
  std::sort(b.begin(), b.end());
  for (auto& v : s) v = unit(rng);
  std::sort(s.begin(), s.end());
  return {b, s, unit(rng)};
}

TEST(Prox, ZeroFunctionIsIdentity) {
  const ScalarPLConvex zero;
  for (double p : {-3.0, 0.0, 0.7}) {
    EXPECT_EQ(prox_pl(zero, 0.1, p), p);
    EXPECT_EQ(envelope_value(zero, 0.1, p), 0.0);
    EXPECT_EQ(envelope_grad(zero, 0.1, p), 0.0);
  }
}

TEST(Prox, AbsoluteValueAgainstGridOracle) {
  const auto f = ScalarPLConvex::abs_kink(0.0, 0.4);
  for (double p : {0.01, 1.0}) {
    const auto [v, arg] =
        testing::grid_minimize([&](double q) { return f(q) + (p - q) * (p - q) / 0.2; }, -2.0, 2.0, 1e-6);
    EXPECT_NEAR(prox_pl(f, 0.1, p), arg, 2e-6);
    EXPECT_NEAR(envelope_value(f, 0.1, p), v, 1e-10);
  }
  EXPECT_NEAR(prox_pl(f, 0.1, 0.01), 0.0, 1e-15);
  EXPECT_NEAR(prox_pl(f, 0.1, 1.0), 0.96, 1e-15);
  EXPECT_NEAR(envelope_value(f, 0.1, 0.01), 5e-4, 1e-15);
  EXPECT_NEAR(envelope_value(f, 0.1, 1.0), 0.392, 1e-15);
  EXPECT_NEAR(envelope_grad(f, 0.1, 0.01), 0.1, 1e-14);
  EXPECT_NEAR(envelope_grad(f, 0.1, 1.0), 0.4, 1e-14);
  EXPECT_THROW(prox_pl(f, 0.0, 1.0), std::invalid_argument);
}

TEST(Prox, RandomFunctionsAgainstGridOracle) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(-1.0, 1.0), mus(0.05, 1.0);
  for (int k = 0; k < 100; ++k) {
    const auto f = random_pl(rng);
    const double mu = mus(rng), p = 2.0 * unit(rng);
    const auto obj = [&](double q) { return f(q) + (p - q) * (p - q) / (2 * mu); };
    auto [v, arg] = testing::grid_minimize(obj, -5.0, 5.0, 1e-5);
    // Kinks are off-grid minimizer candidates.
    for (double b : f.breakpoints())
      if (obj(b) < v) {
        v = obj(b);
        arg = b;
      }
    EXPECT_NEAR(envelope_value(f, mu, p), v, 1e-9);
    EXPECT_NEAR(prox_pl(f, mu, p), arg, 2e-5);
  }
}

TEST(Envelope, BelowFunctionAndMonotoneInMu) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const auto f = random_pl(rng);
    const double p = 2.0 * unit(rng);
    double prev = -1e300;
    for (int n = 0; n <= 20; ++n) {
      const double v = envelope_value(f, std::ldexp(1.0, -n), p);
      EXPECT_LE(v, f(p) + 1e-14);
      EXPECT_GE(v, prev - 1e-14);
      prev = v;
    }
    EXPECT_NEAR(prev, f(p), 1e-5);
  }
}

TEST(Envelope, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> unit(-1.0, 1.0), mus(0.05, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const auto f = random_pl(rng);
    const double mu = mus(rng), p = 2.0 * unit(rng), h = 1e-6;
    const double fd = (envelope_value(f, mu, p + h) - envelope_value(f, mu, p - h)) / (2 * h);
    const double g = envelope_grad(f, mu, p);
    EXPECT_NEAR(g, fd, 1e-8);
    EXPECT_LE(std::abs(g), f.max_abs_slope() * (1 + 1e-12));
  }
}

TEST(Envelope, SeparableReductionMatchesTwoDimensionalOracle) {
  // g(p1, p2) = a|p1 - d| ignores p2; its 2-D envelope at (p1, p2) equals the scalar one.
  const double a = 0.4, d = 0.3, mu = 0.1;
  const auto f = ScalarPLConvex::abs_kink(d, a);
  for (double p1 : {0.0, 0.28, 0.9}) {
    const double p2 = 0.6;
    double best = 1e300;
    for (int i = -400; i <= 400; ++i)
      for (int j = -50; j <= 50; ++j) {
        const double q1 = p1 + i * 1e-3, q2 = p2 + j * 1e-3;
        best = std::min(best, a * std::abs(q1 - d) + ((p1 - q1) * (p1 - q1) + (p2 - q2) * (p2 - q2)) / (2 * mu));
      }
    EXPECT_NEAR(envelope_value(f, mu, p1), best, 1e-5);
  }
}

TEST(RegularizedStageCost, HandValues) {
  Instance inst;
  inst.horizon = 1;
  inst.tariff.price = {0.4, 0.4};
  inst.ar1.alpha = {0.0};
  inst.ar1.beta = {0.8};
  inst.default_parameter_box();
  // a = 2 * 0.4 * 0.5 = 0.4, energy = -0.4 * 0.5 * 0.8 = -0.16.
  const auto at_kink = regularized_stage_cost(inst, 0, {0.5, 0.0}, 0.0, 0.0, {0.8}, 0.1);
  EXPECT_NEAR(at_kink.value, -0.16, 1e-15);
  EXPECT_EQ(at_kink.grad_t, 0.0);
  const auto off = regularized_stage_cost(inst, 0, {0.5, 0.0}, 0.0, 0.0, {0.5}, 0.1);
  EXPECT_NEAR(off.value, -0.16 + 0.112, 1e-15);
  EXPECT_NEAR(off.grad_t, -0.4, 1e-15);
  inst.tariff.penalty = 0.0;
  const auto free = regularized_stage_cost(inst, 0, {0.5, 0.0}, 0.0, 0.0, {0.5}, 0.1);
  EXPECT_NEAR(free.value, stage_cost(inst, 0, {0.5, 0.0}, 0.0, 0.0, {0.5}), 1e-15);
  EXPECT_EQ(free.grad_t, 0.0);
}

TEST(RegularizedStageCost, HuberFormMatchesGenericEnvelope) {
  const Instance inst = testing::small_instance();
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < 500; ++k) {
    const int t = k % inst.horizon;
    const double d = 1.5 * unit(rng) - 0.25, p = unit(rng), mu = 0.01 + unit(rng);
    const auto huber = regularized_stage_cost_from_delivery(inst, t, d, p, mu);
    const auto generic = moreau_envelope(stage_cost_section(inst, t, d), mu, p);
    EXPECT_NEAR(huber.value, generic.value, 1e-14);
    EXPECT_NEAR(huber.grad_t, generic.gradient, 1e-12);
  }
}

}  // namespace
}  // namespace pmsop
