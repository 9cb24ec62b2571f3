#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace zidyad {

/// The two item blocks of a dyad: help given (G) and help received (R).
enum class Block { G, R };

inline constexpr std::int8_t kMissing = -1;

/// Binary responses with missingness, row-major, one row per dyad.
struct ItemMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int8_t> values;  // 0, 1 or kMissing
  std::vector<std::string> names;

  std::int8_t operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  std::int8_t& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  std::span<const std::int8_t> row(std::size_t i) const {
    return {values.data() + i * cols, cols};
  }

  bool any_one(std::size_t i) const;
  bool all_missing(std::size_t i) const;
};

/// Covariates plus two item blocks. Construct through make_dataset so the
/// any-nonzero flags are derived and invariants checked.
struct Dataset {
  std::vector<std::string> covariate_names;  // size q; column 0 is the intercept
  Eigen::MatrixXd X;                         // n x q, column-major
  std::vector<std::size_t> z_cols;           // columns of X used for non-equivalence
  ItemMatrix y_g;
  ItemMatrix y_r;
  std::vector<std::uint8_t> g_flag;
  std::vector<std::uint8_t> r_flag;

  std::size_t n() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t q() const { return static_cast<std::size_t>(X.cols()); }
  const ItemMatrix& items(Block b) const { return b == Block::G ? y_g : y_r; }
  const std::vector<std::uint8_t>& flags(Block b) const { return b == Block::G ? g_flag : r_flag; }
  std::vector<double> z_row(std::size_t i) const;
  std::vector<std::string> z_names() const;

  /// Throws Error(data) on any violated invariant.
  void validate() const;
};

Dataset make_dataset(std::vector<std::string> covariate_names, Eigen::MatrixXd X,
                     std::vector<std::size_t> z_cols, ItemMatrix y_g, ItemMatrix y_r);

/// Logistic measurement of one item, possibly non-equivalent over the Z columns.
struct ItemMeasurement {
  std::string name;
  double tau = 0.0;
  double lambda = 1.0;
  std::vector<double> delta;       // one per Z column
  std::vector<double> zeta;        // one per Z column
  std::vector<std::uint8_t> free;  // (delta, zeta) free jointly for this Z column
  bool fixed_anchor = false;

  double intercept(std::span<const double> z) const;
  double slope(std::span<const double> z) const;
};

struct MeasurementParams {
  std::vector<std::string> z_names;
  std::vector<ItemMeasurement> items_g;
  std::vector<ItemMeasurement> items_r;

  const std::vector<ItemMeasurement>& items(Block b) const { return b == Block::G ? items_g : items_r; }
  std::vector<ItemMeasurement>& items(Block b) { return b == Block::G ? items_g : items_r; }

  /// Anchor, coupling and dimension invariants for one block.
  static void validate_block(const std::vector<ItemMeasurement>& items, std::size_t nz);
  void validate() const;
};

ItemMeasurement make_item(std::string name, std::size_t nz, double tau = 0.0, double lambda = 1.0);
ItemMeasurement make_anchor(std::string name, std::size_t nz);

struct StructuralParams {
  Eigen::VectorXd beta_g;
  Eigen::VectorXd beta_r;
  double sigma2_g = 1.0;
  double sigma2_r = 1.0;
  double rho_gr = 0.0;
  Eigen::VectorXd gamma_01;
  Eigen::VectorXd gamma_10;
  Eigen::VectorXd gamma_11;

  static StructuralParams zeros(std::size_t q);

  std::size_t q() const { return static_cast<std::size_t>(beta_g.size()); }
  Eigen::Matrix2d covariance() const;
  void set_covariance(const Eigen::Matrix2d& sigma);
  /// gamma for cell index 1 = (0,1), 2 = (1,0), 3 = (1,1).
  const Eigen::VectorXd& gamma(int cell) const;
  Eigen::VectorXd& gamma(int cell);

  void validate() const;

  /// Fixed ordering: beta_G, beta_R, sigma2_G, sigma2_R, rho_GR, gamma_01, gamma_10, gamma_11.
  std::vector<double> flatten() const;
  static StructuralParams unflatten(std::span<const double> v, std::size_t q);
};

std::size_t structural_size(std::size_t q);
std::vector<std::string> structural_names(const std::vector<std::string>& covariate_names);

struct LatentState {
  std::vector<std::uint8_t> xi_g;
  std::vector<std::uint8_t> xi_r;
  std::vector<double> eta_g;
  std::vector<double> eta_r;

  std::size_t size() const { return eta_g.size(); }
  /// Cell index j*2 + k for (xi_G, xi_R) = (j, k).
  int cell(std::size_t i) const { return xi_g[i] * 2 + xi_r[i]; }
};

struct PriorSpec {
  double sigma2_beta = 100.0;
  double sigma2_gamma = 100.0;
  Eigen::Matrix2d wishart_scale = Eigen::Matrix2d::Identity();
  double wishart_df = 2.0;

  void validate() const;
};

}  // namespace zidyad
