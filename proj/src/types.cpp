#include "zidyad/types.hpp"

#include <cmath>
#include <string>

#include "zidyad/error.hpp"

namespace zidyad {

namespace {

[[noreturn]] void data_error(const std::string& msg) { throw Error(ErrorCategory::data, msg); }

}  // namespace

bool ItemMatrix::any_one(std::size_t i) const {
  for (auto v : row(i))
    if (v == 1) return true;
  return false;
}

bool ItemMatrix::all_missing(std::size_t i) const {
  for (auto v : row(i))
    if (v != kMissing) return false;
  return true;
}

std::vector<double> Dataset::z_row(std::size_t i) const {
  std::vector<double> z(z_cols.size());
  for (std::size_t c = 0; c < z_cols.size(); ++c) z[c] = X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(z_cols[c]));
  return z;
}

std::vector<std::string> Dataset::z_names() const {
  std::vector<std::string> names;
  for (auto c : z_cols) names.push_back(covariate_names[c]);
  return names;
}

void Dataset::validate() const {
  const std::size_t nn = n();
  if (nn == 0) data_error("dataset has no dyads");
  if (q() == 0) data_error("dataset has no covariates");
  if (covariate_names.size() != q()) data_error("covariate name count does not match X");
  for (std::size_t i = 0; i < nn; ++i) {
    if (X(static_cast<Eigen::Index>(i), 0) != 1.0)
      data_error("first covariate column must be the constant intercept (row " + std::to_string(i + 1) + ")");
  }
  if (!X.allFinite()) data_error("covariates contain missing or non-finite values");
  for (auto c : z_cols) {
    if (c == 0 || c >= q()) data_error("non-equivalence column index out of range");
  }
  for (const ItemMatrix* m : {&y_g, &y_r}) {
    if (m->rows != nn || m->values.size() != m->rows * m->cols) data_error("item block shape mismatch");
    if (m->cols == 0) data_error("item block has no items");
    for (auto v : m->values)
      if (v != 0 && v != 1 && v != kMissing) data_error("non-binary item");
  }
  if (g_flag.size() != nn || r_flag.size() != nn) data_error("flag vectors have wrong length");
  for (std::size_t i = 0; i < nn; ++i) {
    if (y_g.all_missing(i) && y_r.all_missing(i))
      data_error("dyad " + std::to_string(i + 1) + " has all items missing in both blocks");
    if (static_cast<bool>(g_flag[i]) != y_g.any_one(i) || static_cast<bool>(r_flag[i]) != y_r.any_one(i))
      data_error("any-nonzero flag inconsistent with items at dyad " + std::to_string(i + 1));
  }
}

Dataset make_dataset(std::vector<std::string> covariate_names, Eigen::MatrixXd X,
                     std::vector<std::size_t> z_cols, ItemMatrix y_g, ItemMatrix y_r) {
  Dataset d;
  d.covariate_names = std::move(covariate_names);
  d.X = std::move(X);
  d.z_cols = std::move(z_cols);
  d.y_g = std::move(y_g);
  d.y_r = std::move(y_r);
  const std::size_t n = d.n();
  d.g_flag.resize(n);
  d.r_flag.resize(n);
  if (d.y_g.rows == n && d.y_r.rows == n) {
    for (std::size_t i = 0; i < n; ++i) {
      d.g_flag[i] = d.y_g.any_one(i);
      d.r_flag[i] = d.y_r.any_one(i);
    }
  }
  d.validate();
  return d;
}

double ItemMeasurement::intercept(std::span<const double> z) const {
  double a = tau;
  for (std::size_t c = 0; c < z.size(); ++c) a += delta[c] * z[c];
  return a;
}

double ItemMeasurement::slope(std::span<const double> z) const {
  double b = lambda;
  for (std::size_t c = 0; c < z.size(); ++c) b += zeta[c] * z[c];
  return b;
}

ItemMeasurement make_item(std::string name, std::size_t nz, double tau, double lambda) {
  ItemMeasurement it;
  it.name = std::move(name);
  it.tau = tau;
  it.lambda = lambda;
  it.delta.assign(nz, 0.0);
  it.zeta.assign(nz, 0.0);
  it.free.assign(nz, 0);
  return it;
}

ItemMeasurement make_anchor(std::string name, std::size_t nz) {
  ItemMeasurement it = make_item(std::move(name), nz, 0.0, 1.0);
  it.fixed_anchor = true;
  return it;
}

void MeasurementParams::validate_block(const std::vector<ItemMeasurement>& items, std::size_t nz) {
  if (items.empty()) data_error("measurement block has no items");
  int anchors = 0;
  for (const auto& it : items) {
    if (it.delta.size() != nz || it.zeta.size() != nz || it.free.size() != nz)
      throw Error(ErrorCategory::numeric, "item '" + it.name + "': non-equivalence vectors have wrong length");
    if (!std::isfinite(it.tau) || !std::isfinite(it.lambda))
      data_error("item '" + it.name + "': non-finite parameter");
    for (std::size_t c = 0; c < nz; ++c) {
      if (!it.free[c] && (it.delta[c] != 0.0 || it.zeta[c] != 0.0))
        data_error("item '" + it.name + "': delta/zeta must be both zero or both free");
    }
    if (it.fixed_anchor) {
      ++anchors;
      if (it.tau != 0.0 || it.lambda != 1.0) data_error("anchor item '" + it.name + "' must have tau 0, lambda 1");
    }
  }
  if (anchors != 1) data_error("each block needs exactly one anchor item");
}

void MeasurementParams::validate() const {
  validate_block(items_g, z_names.size());
  validate_block(items_r, z_names.size());
}

StructuralParams StructuralParams::zeros(std::size_t q) {
  StructuralParams p;
  const auto qq = static_cast<Eigen::Index>(q);
  p.beta_g = Eigen::VectorXd::Zero(qq);
  p.beta_r = Eigen::VectorXd::Zero(qq);
  p.gamma_01 = Eigen::VectorXd::Zero(qq);
  p.gamma_10 = Eigen::VectorXd::Zero(qq);
  p.gamma_11 = Eigen::VectorXd::Zero(qq);
  return p;
}

Eigen::Matrix2d StructuralParams::covariance() const {
  const double cov = rho_gr * std::sqrt(sigma2_g * sigma2_r);
  Eigen::Matrix2d s;
  s << sigma2_g, cov, cov, sigma2_r;
  return s;
}

void StructuralParams::set_covariance(const Eigen::Matrix2d& s) {
  sigma2_g = s(0, 0);
  sigma2_r = s(1, 1);
  rho_gr = 0.5 * (s(0, 1) + s(1, 0)) / std::sqrt(sigma2_g * sigma2_r);
}

const Eigen::VectorXd& StructuralParams::gamma(int cell) const {
  switch (cell) {
    case 1: return gamma_01;
    case 2: return gamma_10;
    case 3: return gamma_11;
  }
  throw Error(ErrorCategory::numeric, "gamma cell must be 1, 2 or 3");
}

Eigen::VectorXd& StructuralParams::gamma(int cell) {
  return const_cast<Eigen::VectorXd&>(static_cast<const StructuralParams&>(*this).gamma(cell));
}

void StructuralParams::validate() const {
  const auto q = beta_g.size();
  if (q == 0 || beta_r.size() != q || gamma_01.size() != q || gamma_10.size() != q || gamma_11.size() != q)
    throw Error(ErrorCategory::numeric, "structural parameter vectors have inconsistent lengths");
  if (!(sigma2_g > 0.0) || !(sigma2_r > 0.0) || !(rho_gr > -1.0 && rho_gr < 1.0))
    throw Error(ErrorCategory::numeric, "structural covariance is not positive definite");
  for (double v : flatten())
    if (!std::isfinite(v)) throw Error(ErrorCategory::numeric, "structural parameters are not finite");
}

std::size_t structural_size(std::size_t q) { return 5 * q + 3; }

std::vector<double> StructuralParams::flatten() const {
  std::vector<double> v;
  v.reserve(structural_size(q()));
  v.insert(v.end(), beta_g.data(), beta_g.data() + beta_g.size());
  v.insert(v.end(), beta_r.data(), beta_r.data() + beta_r.size());
  v.push_back(sigma2_g);
  v.push_back(sigma2_r);
  v.push_back(rho_gr);
  for (const auto* g : {&gamma_01, &gamma_10, &gamma_11}) v.insert(v.end(), g->data(), g->data() + g->size());
  return v;
}

StructuralParams StructuralParams::unflatten(std::span<const double> v, std::size_t q) {
  if (v.size() != structural_size(q)) throw Error(ErrorCategory::numeric, "flattened structural vector has wrong length");
  StructuralParams p = zeros(q);
  std::size_t k = 0;
  for (std::size_t r = 0; r < q; ++r) p.beta_g[static_cast<Eigen::Index>(r)] = v[k++];
  for (std::size_t r = 0; r < q; ++r) p.beta_r[static_cast<Eigen::Index>(r)] = v[k++];
  p.sigma2_g = v[k++];
  p.sigma2_r = v[k++];
  p.rho_gr = v[k++];
  for (auto* g : {&p.gamma_01, &p.gamma_10, &p.gamma_11})
    for (std::size_t r = 0; r < q; ++r) (*g)[static_cast<Eigen::Index>(r)] = v[k++];
  return p;
}

std::vector<std::string> structural_names(const std::vector<std::string>& cov) {
  std::vector<std::string> names;
  for (const char* block : {"beta_G", "beta_R"})
    for (const auto& c : cov) names.push_back(std::string(block) + "[" + c + "]");
  names.insert(names.end(), {"sigma2_G", "sigma2_R", "rho_GR"});
  for (const char* cell : {"gamma_01", "gamma_10", "gamma_11"})
    for (const auto& c : cov) names.push_back(std::string(cell) + "[" + c + "]");
  return names;
}

void PriorSpec::validate() const {
  if (!(sigma2_beta > 0.0) || !(sigma2_gamma > 0.0))
    throw Error(ErrorCategory::config, "prior variances must be positive");
  if (!(wishart_df > 1.0)) throw Error(ErrorCategory::config, "inverse-Wishart degrees of freedom must exceed 1");
  Eigen::LLT<Eigen::Matrix2d> llt(wishart_scale);
  if (llt.info() != Eigen::Success || (wishart_scale - wishart_scale.transpose()).norm() > 1e-12)
    throw Error(ErrorCategory::config, "inverse-Wishart scale must be symmetric positive definite");
}

}  // namespace zidyad
