#include <cmath>

#include <gtest/gtest.h>

#include "support.hpp"
#include "zidyad/error.hpp"
#include "zidyad/model.hpp"
#include "zidyad/simulate.hpp"

using namespace zidyad;

TEST(Simulate, ForcedZeroCellGivesAllZeroRows) {
  auto s = zt::small_spec(2000, 1);
  s.psi.gamma_01 << -900, 0;
  s.psi.gamma_10 << -900, 0;
  s.psi.gamma_11 << -900, 0;
  const auto r = simulate(s);
  for (auto v : r.data.y_g.values) ASSERT_EQ(v, 0);
  for (auto v : r.data.y_r.values) ASSERT_EQ(v, 0);
  for (std::size_t i = 0; i < 2000; ++i) EXPECT_EQ(r.truth.cell(i), 0);
}

TEST(Simulate, ConstantMeasurementIsFairCoin) {
  auto s = zt::small_spec(20000, 2);
  for (auto* v : {&s.phi.items_g, &s.phi.items_r})
    for (auto& it : *v) {
      if (it.fixed_anchor) continue;
      it.tau = 0.0;
      it.lambda = 0.0;
      it.free = {0};
      it.delta = {0.0};
      it.zeta = {0.0};
    }
  const auto r = simulate(s);
  double ones = 0, seen = 0;
  for (std::size_t i = 0; i < r.data.n(); ++i) {
    if (!r.truth.xi_g[i]) continue;
    for (std::size_t j = 1; j < r.data.y_g.cols; ++j) {
      if (r.data.y_g(i, j) == kMissing) continue;
      ones += r.data.y_g(i, j);
      seen += 1;
    }
  }
  EXPECT_NEAR(ones / seen, 0.5, 3 * std::sqrt(0.25 / seen));
}

TEST(Simulate, ResidualCorrelationMatchesRho) {
  const std::size_t n = 40000;
  const auto s = zt::small_spec(n, 3);
  const auto r = simulate(s);
  double sgg = 0, srr = 0, sgr = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = r.data.X(static_cast<Eigen::Index>(i), 1);
    const double eg = r.truth.eta_g[i] - (s.psi.beta_g[0] + s.psi.beta_g[1] * z);
    const double er = r.truth.eta_r[i] - (s.psi.beta_r[0] + s.psi.beta_r[1] * z);
    sgg += eg * eg;
    srr += er * er;
    sgr += eg * er;
  }
  EXPECT_NEAR(sgr / std::sqrt(sgg * srr), s.psi.rho_gr, 3 / std::sqrt(double(n)));
}

TEST(Simulate, DeterministicAcrossThreads) {
  auto s = zt::small_spec(3000, 4);
  s.missing_g = std::vector<double>(5, 0.1);
  s.threads = 1;
  const auto a = simulate(s);
  s.threads = 4;
  const auto b = simulate(s);
  EXPECT_EQ(a.data.y_g.values, b.data.y_g.values);
  EXPECT_EQ(a.data.y_r.values, b.data.y_r.values);
  EXPECT_EQ(a.truth.eta_r, b.truth.eta_r);
  EXPECT_TRUE(a.data.X == b.data.X);
  s.seed = 5;
  EXPECT_NE(simulate(s).data.y_g.values, a.data.y_g.values);
}

TEST(Simulate, MissingnessRatesAndInvariants) {
  auto s = zt::small_spec(20000, 6);
  s.missing_g = {0.2, 0.2, 0.2, 0.2, 0.2};
  s.missing_r = {0.0, 0.5, 0.0, 0.0, 0.0};
  s.linked = LinkedMissingness{1, 0.0, 0.3};
  const auto r = simulate(s);
  EXPECT_NO_THROW(r.data.validate());
  double miss_g = 0, miss_r1 = 0, miss_r0_z1 = 0, z1 = 0;
  for (std::size_t i = 0; i < r.data.n(); ++i) {
    miss_g += r.data.y_g(i, 0) == kMissing;
    miss_r1 += r.data.y_r(i, 1) == kMissing;
    if (r.data.X(static_cast<Eigen::Index>(i), 1) == 1.0) {
      z1 += 1;
      miss_r0_z1 += r.data.y_r(i, 0) == kMissing;
    }
  }
  const double n = 20000;
  EXPECT_NEAR(miss_g / n, 0.2, 4 * std::sqrt(0.16 / n) + 0.002);
  EXPECT_NEAR(miss_r1 / n, 0.5 + 0.5 * 0.3 * 0.45, 0.03);
  EXPECT_NEAR(miss_r0_z1 / z1, 0.3, 0.03);
}

TEST(Simulate, FlagsMatchTruthClasses) {
  const auto r = simulate(zt::small_spec(5000, 7));
  for (std::size_t i = 0; i < r.data.n(); ++i) {
    if (r.data.g_flag[i]) EXPECT_EQ(r.truth.xi_g[i], 1);
    if (r.data.r_flag[i]) EXPECT_EQ(r.truth.xi_r[i], 1);
  }
}

TEST(Simulate, AllZeroFrequencyMatchesOracle) {
  const std::size_t n = 20000;
  const auto s = zt::small_spec(n, 8, 3);
  const auto r = simulate(s);
  // Model-implied probability for each covariate value, from an all-zero row.
  double expected = 0, var = 0, observed = 0;
  for (double zv : {0.0, 1.0}) {
    const auto one = zt::dataset_with_z({zv}, 3, 3, {0, 0, 0}, {0, 0, 0});
    const double p = std::exp(dyad_loglik_oracle(one, 0, s.phi, s.psi, 40));
    for (std::size_t i = 0; i < n; ++i) {
      if (r.data.X(static_cast<Eigen::Index>(i), 1) != zv) continue;
      expected += p;
      var += p * (1 - p);
      observed += (!r.data.g_flag[i] && !r.data.r_flag[i]) ? 1 : 0;
    }
  }
  EXPECT_NEAR(observed, expected, 2 * std::sqrt(var));
}

TEST(Simulate, SpecValidation) {
  auto s = zt::small_spec(10, 9);
  s.covariates[0].kind = CovariateGenerator::Kind::binary;
  EXPECT_THROW(simulate(s), Error);
  s = zt::small_spec(10, 9);
  s.missing_g = {0.1};
  EXPECT_THROW(simulate(s), Error);
  s = zt::small_spec(10, 9);
  s.covariates[1].probability = 1.5;
  EXPECT_THROW(simulate(s), Error);
  EXPECT_EQ(parse_covariate_kind("continuous"), CovariateGenerator::Kind::continuous);
  EXPECT_EQ(to_string(CovariateGenerator::Kind::binary), "binary");
  EXPECT_THROW(parse_covariate_kind("weird"), Error);
}
