#pragma once

// First step: maximum likelihood for one item block at a time. Each block is
// fitted with its own nuisance structure over (1, Z): a logistic model for
// P(xi = 1 | Z) and a normal linear model for eta | Z. The nuisance estimates
// are reported but not used downstream.

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zidyad/model.hpp"
#include "zidyad/types.hpp"

namespace zidyad {

struct FirstStepNuisance {
  Eigen::VectorXd logistic_coeffs;  // over (1, Z)
  Eigen::VectorXd linear_coeffs;    // over (1, Z)
  double variance = 1.0;
};

struct FitOptions {
  std::size_t quad_order = kDefaultQuadOrder;
  int max_iter = 500;
  // On the per-dyad average log-likelihood scale (sup norm).
  double grad_tol = 1e-6;
  int max_recenter = 5;
  double recenter_tol = 1e-6;
  int threads = 1;
  bool standard_errors = true;
};

struct FitReport {
  Block block = Block::G;
  std::vector<ItemMeasurement> items;
  FirstStepNuisance nuisance;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  int recentering_rounds = 0;
  double gradient_norm = 0.0;
  // Free parameters in optimizer order with asymptotic standard errors
  // (NaN when not computed or the information matrix is singular).
  std::vector<std::string> parameter_names;
  Eigen::VectorXd estimates;
  Eigen::VectorXd standard_errors;
  // Log-likelihood after each accepted optimizer step (non-decreasing within a phase).
  std::vector<double> trace;
};

/// Fits one block. `pattern` gives, per item, the anchor flag and which Z
/// columns carry free (delta, zeta); its numeric values are ignored.
FitReport fit_block(const Dataset& data, Block block, const std::vector<ItemMeasurement>& pattern,
                    const FitOptions& opts = {});

/// Both blocks; returns the combined measurement parameters.
MeasurementParams fit_measurement(const Dataset& data, const MeasurementParams& pattern, const FitOptions& opts,
                                  FitReport* report_g = nullptr, FitReport* report_r = nullptr);

/// Single-block zero-inflated marginal log-likelihood at given parameters,
/// with Gauss-Hermite nodes centered at each dyad's conditional mode.
double block_marginal_loglik(const Dataset& data, Block block, const std::vector<ItemMeasurement>& items,
                             const FirstStepNuisance& nuisance, std::size_t quad_order = kDefaultQuadOrder);

/// Model-implied probability that every observed item of dyad i is zero.
double block_all_zero_prob(const Dataset& data, Block block, std::size_t i,
                           const std::vector<ItemMeasurement>& items, const FirstStepNuisance& nuisance,
                           std::size_t quad_order = kDefaultQuadOrder);

/// Throws Error(config) unless every Z column leaves at least two items with
/// (delta, zeta) fixed at zero and the anchor has no free terms.
void check_identification(const std::vector<ItemMeasurement>& pattern, std::size_t nz);

}  // namespace zidyad
