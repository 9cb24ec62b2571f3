#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "zidyad/quadrature.hpp"

using zidyad::gauss_hermite;

TEST(GaussHermite, OrderTwoClosedForm) {
  const auto& r = gauss_hermite(2);
  ASSERT_EQ(r.nodes.size(), 2u);
  EXPECT_NEAR(r.nodes[0], -std::sqrt(0.5), 1e-14);
  EXPECT_NEAR(r.nodes[1], std::sqrt(0.5), 1e-14);
  EXPECT_NEAR(r.weights[0], std::sqrt(std::numbers::pi) / 2, 1e-14);
  EXPECT_NEAR(r.log_weights[1], std::log(r.weights[1]), 1e-14);
}

// int x^(2k) e^{-x^2} dx = Gamma(k + 1/2); exact for 2k <= 2 * order - 1.
TEST(GaussHermite, IntegratesEvenMoments) {
  for (std::size_t order : {5u, 11u, 21u, 40u}) {
    const auto& r = gauss_hermite(order);
    for (int k = 0; 2 * k <= static_cast<int>(2 * order - 1) && k <= 12; ++k) {
      double s = 0;
      for (std::size_t i = 0; i < order; ++i) s += r.weights[i] * std::pow(r.nodes[i], 2 * k);
      const double exact = std::tgamma(k + 0.5);
      EXPECT_NEAR(s / exact, 1.0, 1e-11) << "order " << order << " k " << k;
    }
  }
}

TEST(GaussHermite, SymmetricAndAscending) {
  const auto& r = gauss_hermite(21);
  for (std::size_t i = 0; i < 21; ++i) {
    EXPECT_NEAR(r.nodes[i], -r.nodes[20 - i], 1e-13);
    EXPECT_NEAR(r.weights[i], r.weights[20 - i], 1e-13 * r.weights[i] + 1e-300);
    if (i) EXPECT_LT(r.nodes[i - 1], r.nodes[i]);
  }
  EXPECT_NEAR(r.nodes[10], 0.0, 1e-15);
}

TEST(GaussHermite, CachedMatchesFresh) {
  const auto fresh = zidyad::compute_gauss_hermite(17);
  const auto& cached = gauss_hermite(17);
  EXPECT_EQ(fresh.nodes, cached.nodes);
  EXPECT_EQ(fresh.weights, cached.weights);
}

TEST(GaussHermite, GaussianExpectation) {
  // E[cos(Z)] for Z ~ N(0, 1) = exp(-1/2).
  const auto& r = gauss_hermite(30);
  double s = 0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * std::cos(std::sqrt(2.0) * r.nodes[i]);
  EXPECT_NEAR(s / std::sqrt(std::numbers::pi), std::exp(-0.5), 1e-13);
}

TEST(GaussHermite, RejectsOrderZero) { EXPECT_ANY_THROW(gauss_hermite(0)); }
