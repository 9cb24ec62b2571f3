#include "zidyad/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "zidyad/error.hpp"
#include "zidyad/kernels.hpp"
#include "zidyad/quadrature.hpp"

namespace zidyad {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double dot(const Eigen::VectorXd& coef, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t r = 0; r < x.size(); ++r) s += coef[static_cast<Eigen::Index>(r)] * x[r];
  return s;
}

void check_x(std::span<const double> x, const StructuralParams& psi) {
  if (x.size() != psi.q()) throw Error(ErrorCategory::numeric, "covariate vector length does not match parameters");
}

// Observed (intercept, slope, response) triples of one block row.
struct RowTerms {
  std::vector<double> a, b, y;

  RowTerms(std::span<const std::int8_t> row, std::span<const double> z, std::span<const ItemMeasurement> items) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] == kMissing) continue;
      a.push_back(items[j].intercept(z));
      b.push_back(items[j].slope(z));
      y.push_back(row[j]);
    }
  }

  double loglik(double eta) const {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double t = a[j] + b[j] * eta;
      s += y[j] > 0.5 ? log_logistic(t) : log_logistic(-t);
    }
    return s;
  }
};

}  // namespace

double logistic(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double softplus(double t) noexcept { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double log_logistic(double t) noexcept { return -softplus(-t); }

double log_sum_exp(std::span<const double> v) noexcept {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double item_prob(const ItemMeasurement& item, double eta, std::span<const double> z) {
  if (z.size() != item.delta.size() || z.size() != item.zeta.size())
    throw Error(ErrorCategory::numeric, "item '" + item.name + "': z has wrong dimension");
  return logistic(item.intercept(z) + item.slope(z) * eta);
}

double block_loglik_class1(std::span<const std::int8_t> row, double eta, std::span<const double> z,
                           std::span<const ItemMeasurement> items) {
  if (row.size() != items.size()) throw Error(ErrorCategory::numeric, "row length does not match item list");
  double s = 0.0;
  bool any = false;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j] == kMissing) continue;
    any = true;
    if (z.size() != items[j].delta.size() || z.size() != items[j].zeta.size())
      throw Error(ErrorCategory::numeric, "item '" + items[j].name + "': z has wrong dimension");
    const double t = items[j].intercept(z) + items[j].slope(z) * eta;
    s += row[j] == 1 ? log_logistic(t) : log_logistic(-t);
  }
  if (!any) throw Error(ErrorCategory::data, "all items missing in row");
  return s;
}

double zero_pattern_prob(std::span<const std::int8_t> row) noexcept {
  for (auto v : row)
    if (v == 1) return 0.0;
  return 1.0;
}

double block_loglik(int xi, std::span<const std::int8_t> row, double eta, std::span<const double> z,
                    std::span<const ItemMeasurement> items) {
  if (xi == 0) return zero_pattern_prob(row) > 0.0 ? 0.0 : kNegInf;
  return block_loglik_class1(row, eta, z, items);
}

std::array<double, 4> log_xi_probs(std::span<const double> x, const StructuralParams& psi) {
  check_x(x, psi);
  const std::array<double, 4> lp{0.0, dot(psi.gamma_01, x), dot(psi.gamma_10, x), dot(psi.gamma_11, x)};
  const double lse = log_sum_exp(lp);
  return {lp[0] - lse, lp[1] - lse, lp[2] - lse, lp[3] - lse};
}

std::array<double, 4> xi_probs(std::span<const double> x, const StructuralParams& psi) {
  check_x(x, psi);
  std::array<double, 4> lp{0.0, dot(psi.gamma_01, x), dot(psi.gamma_10, x), dot(psi.gamma_11, x)};
  const double m = *std::max_element(lp.begin(), lp.end());
  double s = 0.0;
  for (auto& v : lp) {
    v = std::exp(v - m);
    s += v;
  }
  for (auto& v : lp) v /= s;
  return lp;
}

double eta_log_density(double eta_g, double eta_r, std::span<const double> x, const StructuralParams& psi) {
  check_x(x, psi);
  if (!(psi.sigma2_g > 0.0 && psi.sigma2_r > 0.0 && std::abs(psi.rho_gr) < 1.0))
    throw Error(ErrorCategory::numeric, "structural covariance is not positive definite");
  const double sg = std::sqrt(psi.sigma2_g), sr = std::sqrt(psi.sigma2_r);
  const double ug = (eta_g - dot(psi.beta_g, x)) / sg;
  const double ur = (eta_r - dot(psi.beta_r, x)) / sr;
  const double one_m_r2 = 1.0 - psi.rho_gr * psi.rho_gr;
  const double quad = (ug * ug - 2.0 * psi.rho_gr * ug * ur + ur * ur) / one_m_r2;
  return -std::log(2.0 * std::numbers::pi) - std::log(sg * sr) - 0.5 * std::log(one_m_r2) - 0.5 * quad;
}

NormalMoments marginal_normal(Block which, std::span<const double> x, const StructuralParams& psi) {
  check_x(x, psi);
  return which == Block::G ? NormalMoments{dot(psi.beta_g, x), psi.sigma2_g}
                           : NormalMoments{dot(psi.beta_r, x), psi.sigma2_r};
}

NormalMoments conditional_normal(Block which, double other_eta, std::span<const double> x,
                                 const StructuralParams& psi) {
  check_x(x, psi);
  if (!(psi.sigma2_g > 0.0 && psi.sigma2_r > 0.0 && std::abs(psi.rho_gr) < 1.0))
    throw Error(ErrorCategory::numeric, "structural covariance is not positive definite");
  const double mg = dot(psi.beta_g, x), mr = dot(psi.beta_r, x);
  const double sg = std::sqrt(psi.sigma2_g), sr = std::sqrt(psi.sigma2_r);
  const double r = psi.rho_gr;
  if (which == Block::G) return {mg + r * (sg / sr) * (other_eta - mr), psi.sigma2_g * (1.0 - r * r)};
  return {mr + r * (sr / sg) * (other_eta - mg), psi.sigma2_r * (1.0 - r * r)};
}

double dyad_loglik_oracle(const Dataset& data, std::size_t i, const MeasurementParams& phi,
                          const StructuralParams& psi, std::size_t quad_order) {
  if (quad_order < 5) throw Error(ErrorCategory::config, "quadrature order must be at least 5");
  const GaussHermiteRule& gh = gauss_hermite(quad_order);
  const std::size_t K = quad_order;

  const std::vector<double> z = data.z_row(i);
  std::vector<double> x(data.q());
  for (std::size_t r = 0; r < data.q(); ++r) x[r] = data.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r));

  const RowTerms tg(data.y_g.row(i), z, phi.items_g);
  const RowTerms tr(data.y_r.row(i), z, phi.items_r);
  const bool g = data.g_flag[i], rflag = data.r_flag[i];

  const auto lpi = log_xi_probs(x, psi);
  const double mg = dot(psi.beta_g, x), mr = dot(psi.beta_r, x);
  const double sg = std::sqrt(psi.sigma2_g), sr = std::sqrt(psi.sigma2_r);
  const double l10 = psi.rho_gr * sr;
  const double l11 = sr * std::sqrt(1.0 - psi.rho_gr * psi.rho_gr);
  const double sqrt2 = std::numbers::sqrt2;
  const double log_sqrt_pi = 0.5 * std::log(std::numbers::pi);

  std::vector<double> terms;
  terms.reserve(K * K + 2 * K + 1);

  // (xi_G, xi_R) = (1, 1): tensor rule in the Cholesky-standardized coordinates.
  std::vector<double> lg(K);
  for (std::size_t k = 0; k < K; ++k) lg[k] = tg.loglik(mg + sqrt2 * sg * gh.nodes[k]);
  std::vector<double> cell;
  cell.reserve(K * K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t l = 0; l < K; ++l) {
      const double eta_r = mr + sqrt2 * (l10 * gh.nodes[k] + l11 * gh.nodes[l]);
      cell.push_back(gh.log_weights[k] + gh.log_weights[l] + lg[k] + tr.loglik(eta_r));
    }
  }
  terms.push_back(lpi[3] + log_sum_exp(cell) - 2.0 * log_sqrt_pi);

  // (1, 0): only when the R block is all zero.
  if (!rflag) {
    cell.clear();
    for (std::size_t k = 0; k < K; ++k) cell.push_back(gh.log_weights[k] + lg[k]);
    terms.push_back(lpi[2] + log_sum_exp(cell) - log_sqrt_pi);
  }
  // (0, 1): only when the G block is all zero.
  if (!g) {
    cell.clear();
    for (std::size_t l = 0; l < K; ++l) cell.push_back(gh.log_weights[l] + tr.loglik(mr + sqrt2 * sr * gh.nodes[l]));
    terms.push_back(lpi[1] + log_sum_exp(cell) - log_sqrt_pi);
  }
  if (!g && !rflag) terms.push_back(lpi[0]);
  return log_sum_exp(terms);
}

double full_loglik_oracle(const Dataset& data, const MeasurementParams& phi, const StructuralParams& psi,
                          std::size_t quad_order) {
  if (quad_order < 5) throw Error(ErrorCategory::config, "quadrature order must be at least 5");
  if (phi.items_g.size() != data.y_g.cols || phi.items_r.size() != data.y_r.cols)
    throw Error(ErrorCategory::schema, "measurement parameters do not match the item blocks");
  psi.validate();
  const std::size_t n = data.n();
  std::vector<double> contrib(n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) contrib[i] = dyad_loglik_oracle(data, i, phi, psi, quad_order);
  double s = 0.0;
  for (double c : contrib) s += c;
  return s;
}

BlockDesign::BlockDesign(const Dataset& data, Block block, std::span<const ItemMeasurement> items) {
  const ItemMatrix& y = data.items(block);
  if (items.size() != y.cols) throw Error(ErrorCategory::schema, "measurement parameters do not match the item block");
  const std::size_t n = data.n();
  offset_.assign(n + 1, 0);
  y_intercept_.assign(n, 0.0);
  y_slope_.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = data.z_row(i);
    const auto row = y.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] == kMissing) continue;
      const double a = items[j].intercept(z), b = items[j].slope(z);
      intercept_.push_back(a);
      slope_.push_back(b);
      y_.push_back(row[j]);
      if (row[j] == 1) {
        y_intercept_[i] += a;
        y_slope_[i] += b;
      }
    }
    offset_[i + 1] = intercept_.size();
  }
}

double BlockDesign::loglik(std::size_t i, double eta) const {
  const std::size_t m = observed(i);
  if (m == 0) return 0.0;
  const double* a = intercept_.data() + offset_[i];
  const double* b = slope_.data() + offset_[i];
  return y_intercept_[i] + eta * y_slope_[i] - kernels::active().softplus_sum(a, b, m, eta);
}

BlockDesign::Derivatives BlockDesign::loglik_derivatives(std::size_t i, double eta) const {
  const std::size_t m = observed(i);
  if (m == 0) return {0.0, 0.0, 0.0};
  const double* a = intercept_.data() + offset_[i];
  const double* b = slope_.data() + offset_[i];
  const kernels::LogitMoments mo = kernels::active().logit_moments(a, b, m, eta);
  return {y_intercept_[i] + eta * y_slope_[i] - mo.softplus, y_slope_[i] - mo.first, -mo.second};
}

}  // namespace zidyad
