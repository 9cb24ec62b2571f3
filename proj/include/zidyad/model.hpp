#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "zidyad/types.hpp"

namespace zidyad {

inline constexpr std::size_t kDefaultQuadOrder = 21;

double logistic(double t) noexcept;
double log_logistic(double t) noexcept;  // log sigmoid(t), stable
double softplus(double t) noexcept;      // log(1 + e^t), stable
double log_sum_exp(std::span<const double> v) noexcept;

/// P(Y = 1 | xi = 1, eta, z) for one item.
double item_prob(const ItemMeasurement& item, double eta, std::span<const double> z);

/// Class-1 log-likelihood of one block row: sum over observed items of the
/// Bernoulli log-probability. Missing items contribute nothing.
double block_loglik_class1(std::span<const std::int8_t> row, double eta, std::span<const double> z,
                           std::span<const ItemMeasurement> items);

/// Probability of a row under the degenerate class 0: 1 if every observed
/// item is zero, else 0.
double zero_pattern_prob(std::span<const std::int8_t> row) noexcept;

/// log p(row | xi, eta, z): xi = 0 uses the degenerate class, xi = 1 the IRT model.
double block_loglik(int xi, std::span<const std::int8_t> row, double eta, std::span<const double> z,
                    std::span<const ItemMeasurement> items);

/// Cell probabilities in order (0,0), (0,1), (1,0), (1,1).
std::array<double, 4> xi_probs(std::span<const double> x, const StructuralParams& psi);
std::array<double, 4> log_xi_probs(std::span<const double> x, const StructuralParams& psi);

struct NormalMoments {
  double mean = 0.0;
  double variance = 1.0;
};

/// Bivariate normal log-density of (eta_G, eta_R) given x.
double eta_log_density(double eta_g, double eta_r, std::span<const double> x, const StructuralParams& psi);

/// Conditional of one trait given the other: which == G gives eta_G | eta_R.
NormalMoments conditional_normal(Block which, double other_eta, std::span<const double> x,
                                 const StructuralParams& psi);

/// Marginal moments of one trait given x.
NormalMoments marginal_normal(Block which, std::span<const double> x, const StructuralParams& psi);

/// Full marginal log-likelihood by tensor-product Gauss-Hermite quadrature,
/// standardized by the structural mean and covariance of each dyad.
double full_loglik_oracle(const Dataset& data, const MeasurementParams& phi, const StructuralParams& psi,
                          std::size_t quad_order = kDefaultQuadOrder);

/// Contribution of a single dyad to full_loglik_oracle.
double dyad_loglik_oracle(const Dataset& data, std::size_t i, const MeasurementParams& phi,
                          const StructuralParams& psi, std::size_t quad_order = kDefaultQuadOrder);

/// Observed items of every dyad with intercepts and slopes evaluated at the
/// dyad's Z values; the class-1 log-likelihood at eta is
///   sum(y * a) + eta * sum(y * b) - sum softplus(a + eta * b).
class BlockDesign {
 public:
  BlockDesign() = default;
  BlockDesign(const Dataset& data, Block block, std::span<const ItemMeasurement> items);

  std::size_t dyads() const { return offset_.empty() ? 0 : offset_.size() - 1; }
  std::size_t observed(std::size_t i) const { return offset_[i + 1] - offset_[i]; }
  std::span<const double> intercepts(std::size_t i) const {
    return {intercept_.data() + offset_[i], observed(i)};
  }
  std::span<const double> slopes(std::size_t i) const { return {slope_.data() + offset_[i], observed(i)}; }
  std::span<const double> responses(std::size_t i) const { return {y_.data() + offset_[i], observed(i)}; }
  double y_intercept(std::size_t i) const { return y_intercept_[i]; }
  double y_slope(std::size_t i) const { return y_slope_[i]; }

  double loglik(std::size_t i, double eta) const;

  struct Derivatives {
    double value;
    double first;
    double second;
  };
  Derivatives loglik_derivatives(std::size_t i, double eta) const;

 private:
  std::vector<std::size_t> offset_;
  std::vector<double> intercept_;
  std::vector<double> slope_;
  std::vector<double> y_;
  std::vector<double> y_intercept_;
  std::vector<double> y_slope_;
};

}  // namespace zidyad
