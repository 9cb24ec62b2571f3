#pragma once

// Second-step data-augmentation sampler: with the measurement parameters
// fixed, alternate imputation of (xi, eta) with draws of the structural
// parameters from their conditional posteriors.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zidyad/ars.hpp"
#include "zidyad/model.hpp"
#include "zidyad/rng.hpp"
#include "zidyad/types.hpp"

namespace zidyad {

struct ChainConfig {
  std::size_t iterations = 110000;
  std::size_t burn_in = 10000;
  std::size_t thin = 1;
  std::size_t n_chains = 2;
  std::uint64_t seed = 0;
  int threads = 1;
  PriorSpec prior;
  std::optional<StructuralParams> init_psi;
  std::optional<LatentState> init_state;
  // false switches the measurement likelihood off (the sampler then targets the prior).
  bool use_likelihood = true;
  int ars_max_iter = ars::kDefaultMaxIter;

  void validate() const;
};

/// Identifies the random streams of one sweep.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint32_t chain = 0;
  std::uint32_t iteration = 0;

  Rng stream(std::uint32_t index, StreamPurpose purpose) const { return Rng(seed, chain, iteration, index, purpose); }
};

/// Per-dataset quantities shared by every sweep (read-only once built).
class SamplerContext {
 public:
  SamplerContext(const Dataset& data, const MeasurementParams& phi);

  const Dataset& data() const { return *data_; }
  const BlockDesign& design(Block b) const { return b == Block::G ? g_ : r_; }
  const Eigen::MatrixXd& xtx() const { return xtx_; }
  std::span<const double> x_row(std::size_t i) const { return {x_rows_.data() + i * q_, q_}; }

 private:
  const Dataset* data_;
  BlockDesign g_, r_;
  Eigen::MatrixXd xtx_;
  std::vector<double> x_rows_;  // row-major copy of X
  std::size_t q_;
};

/// Draw (xi_G, xi_R) for every dyad from the four-cell conditional given eta.
void impute_xi(LatentState& state, const SamplerContext& ctx, const StructuralParams& psi, const StreamKey& key,
               int threads = 1, bool use_likelihood = true);

/// Draw eta_G | eta_R then eta_R | eta_G for every dyad; ARS whenever the
/// block's class is 1 and it has observed items, else the conditional normal.
void impute_eta(LatentState& state, const SamplerContext& ctx, const StructuralParams& psi, const StreamKey& key,
                int threads = 1, bool use_likelihood = true, int ars_max_iter = ars::kDefaultMaxIter,
                ars::Stats* stats = nullptr);

/// Throws if some dyad with an observed 1 sits in class 0.
void check_class_gating(const LatentState& state, const Dataset& data);

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// Conditional posterior of vec(B) = (beta_G, beta_R) given eta (n x 2) and Sigma.
GaussianMoments beta_posterior(const Eigen::MatrixXd& eta, const Eigen::MatrixXd& X, const Eigen::MatrixXd& xtx,
                               const Eigen::Matrix2d& sigma, const PriorSpec& prior);

Eigen::VectorXd draw_beta(const Eigen::MatrixXd& eta, const Eigen::MatrixXd& X, const Eigen::Matrix2d& sigma,
                          const PriorSpec& prior, Rng& rng);
Eigen::VectorXd draw_beta(const Eigen::MatrixXd& eta, const Eigen::MatrixXd& X, const Eigen::MatrixXd& xtx,
                          const Eigen::Matrix2d& sigma, const PriorSpec& prior, Rng& rng);

/// Sigma ~ InvWishart(scale + E'E, n + df), E = eta - X B.
Eigen::Matrix2d draw_sigma(const Eigen::MatrixXd& eta, const Eigen::MatrixXd& X, const Eigen::VectorXd& beta,
                           const PriorSpec& prior, Rng& rng);

/// Draw from InvWishart(scale, df) for 2x2 matrices (mean scale / (df - 3)).
Eigen::Matrix2d draw_inverse_wishart(const Eigen::Matrix2d& scale, double df, Rng& rng);

/// One coordinate-wise Gibbs sweep over (gamma_01, gamma_10, gamma_11),
/// r-major, each coordinate drawn by ARS. cells[i] = 2 * xi_G + xi_R.
Eigen::VectorXd draw_gamma(std::span<const int> cells, const Eigen::MatrixXd& X, const Eigen::VectorXd& gamma,
                           const PriorSpec& prior, Rng& rng, int ars_max_iter = ars::kDefaultMaxIter,
                           ars::Stats* stats = nullptr);

struct ChainDraws {
  std::uint32_t chain = 0;
  std::vector<std::size_t> iteration;
  std::vector<double> values;  // draws x structural_size(q), row-major
  ars::Stats eta_stats;
  ars::Stats gamma_stats;
  double seconds = 0.0;

  std::size_t size() const { return iteration.size(); }
};

struct PosteriorDraws {
  std::vector<std::string> covariate_names;
  std::vector<ChainDraws> chains;
  std::uint64_t seed = 0;
  std::string generator = "philox4x32-10";
  std::string isa;

  std::size_t q() const { return covariate_names.size(); }
  std::size_t n_params() const { return structural_size(q()); }
  std::size_t total_draws() const;
  double value(std::size_t chain, std::size_t draw, std::size_t param) const {
    return chains[chain].values[draw * n_params() + param];
  }
  std::vector<double> parameter(std::size_t chain, std::size_t param) const;
  StructuralParams draw(std::size_t chain, std::size_t d) const;
  void validate() const;
};

/// Default starting state: xi = 1, eta = 0, beta = gamma = 0, Sigma = I.
LatentState default_state(std::size_t n);

/// One full sweep: xi, eta, then (beta, Sigma) and gamma. Updates state and psi in place.
void gibbs_sweep(LatentState& state, StructuralParams& psi, const SamplerContext& ctx, const ChainConfig& config,
                 const StreamKey& key, int threads = 1, ars::Stats* eta_stats = nullptr,
                 ars::Stats* gamma_stats = nullptr);

ChainDraws run_chain(const SamplerContext& ctx, const ChainConfig& config, std::uint32_t chain, int threads);

/// All chains; bitwise reproducible for a fixed seed.
PosteriorDraws run_chains(const Dataset& data, const MeasurementParams& phi, const ChainConfig& config);

}  // namespace zidyad
