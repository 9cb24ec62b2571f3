#pragma once

// Shared helpers for the unit tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "zidyad/types.hpp"

namespace zt {

inline zidyad::ItemMatrix item_matrix(std::size_t rows, std::size_t cols, std::vector<std::int8_t> values,
                                      const std::string& prefix) {
  zidyad::ItemMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.values = std::move(values);
  for (std::size_t j = 0; j < cols; ++j) m.names.push_back(prefix + std::to_string(j + 1));
  return m;
}

// Dataset with X = (1, z) for a single binary Z column.
inline zidyad::Dataset dataset_with_z(const std::vector<double>& z, std::size_t m_g, std::size_t m_r,
                                      std::vector<std::int8_t> yg, std::vector<std::int8_t> yr) {
  const std::size_t n = z.size();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    X(static_cast<Eigen::Index>(i), 0) = 1.0;
    X(static_cast<Eigen::Index>(i), 1) = z[i];
  }
  return zidyad::make_dataset({"intercept", "z"}, X, {1}, item_matrix(n, m_g, std::move(yg), "g"),
                              item_matrix(n, m_r, std::move(yr), "r"));
}

inline double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// P(row | class 1, eta) evaluated directly in linear space.
inline double row_prob(const std::vector<std::int8_t>& row, double eta, const std::vector<double>& a,
                       const std::vector<double>& b) {
  double p = 1.0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j] < 0) continue;
    const double pj = logistic(a[j] + b[j] * eta);
    p *= row[j] == 1 ? pj : 1.0 - pj;
  }
  return p;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("zidyad_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace zt

namespace zt {

// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
template <class Cdf>
double ks_statistic(std::vector<double> xs, Cdf cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, f - i / n, (i + 1) / n - f});
  }
  return d;
}

// Asymptotic Kolmogorov survival function with the Stephens correction.
inline double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace zt

#include "zidyad/simulate.hpp"

namespace zt {

// Covariates (intercept, binary z); z is the non-equivalence column. Item 3
// of each block is non-equivalent. With a binary z the first-step nuisance
// model is exact.
inline zidyad::SimSpec small_spec(std::size_t n, std::uint64_t seed, std::size_t items = 5) {
  using namespace zidyad;
  SimSpec s;
  s.n = n;
  s.seed = seed;
  s.covariates = {{"intercept", CovariateGenerator::Kind::constant, 0.5}, {"z", CovariateGenerator::Kind::binary, 0.45}};
  s.z_cols = {1};
  s.phi.z_names = {"z"};
  const double taus[] = {0.0, 0.5, -0.4, 0.9, -0.8, 0.3, -0.2, 0.6};
  const double lams[] = {1.0, 1.3, 0.8, 1.6, 1.1, 0.9, 1.4, 1.2};
  for (int b = 0; b < 2; ++b) {
    auto& v = b == 0 ? s.phi.items_g : s.phi.items_r;
    const std::string p = b == 0 ? "g" : "r";
    for (std::size_t j = 0; j < items; ++j) {
      auto it = j == 0 ? make_anchor(p + "1", 1) : make_item(p + std::to_string(j + 1), 1, taus[j] - 0.1 * b, lams[j]);
      if (j == 2) {
        it.free = {1};
        it.delta = {0.6};
        it.zeta = {-0.4};
      }
      v.push_back(it);
    }
  }
  auto& psi = s.psi = StructuralParams::zeros(2);
  psi.beta_g << 0.2, 0.4;
  psi.beta_r << -0.1, -0.3;
  psi.sigma2_g = 1.2;
  psi.sigma2_r = 0.9;
  psi.rho_gr = 0.5;
  psi.gamma_01 << -0.8, 0.3;
  psi.gamma_10 << 0.2, -0.5;
  psi.gamma_11 << 1.0, 0.4;
  return s;
}

// Pattern (anchor and free flags) of a block with zeroed values.
inline std::vector<zidyad::ItemMeasurement> pattern_of(const std::vector<zidyad::ItemMeasurement>& items) {
  auto p = items;
  for (auto& it : p) {
    if (!it.fixed_anchor) {
      it.tau = 0.0;
      it.lambda = 1.0;
    }
    std::fill(it.delta.begin(), it.delta.end(), 0.0);
    std::fill(it.zeta.begin(), it.zeta.end(), 0.0);
  }
  return p;
}

}  // namespace zt
