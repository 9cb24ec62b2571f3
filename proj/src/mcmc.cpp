#include "zidyad/mcmc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>

#include <omp.h>

#include "zidyad/error.hpp"
#include "zidyad/kernels.hpp"

namespace zidyad {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Runs body(i) for i in [0, n) under OpenMP; the exception from the lowest
// failing index is rethrown after the loop so failures are deterministic.
template <class Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
  std::exception_ptr first;
  std::size_t first_index = n;
  std::mutex mutex;
#pragma omp parallel for schedule(static) num_threads(std::max(1, threads))
  for (std::size_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard lock(mutex);
      if (i < first_index) {
        first_index = i;
        first = std::current_exception();
      }
    }
  }
  if (first) std::rethrow_exception(first);
}

int sample_cell(const std::array<double, 4>& logw, double u) {
  const double m = *std::max_element(logw.begin(), logw.end());
  if (m == kNegInf) throw Error(ErrorCategory::numeric, "all four latent-class cells have zero probability");
  std::array<double, 4> w;
  double s = 0.0;
  for (int c = 0; c < 4; ++c) {
    w[c] = std::exp(logw[c] - m);
    s += w[c];
  }
  double cum = 0.0;
  const double target = u * s;
  int last = 0;
  for (int c = 0; c < 4; ++c) {
    if (w[c] <= 0.0) continue;
    last = c;
    cum += w[c];
    if (target < cum) return c;
  }
  return last;
}

}  // namespace

void ChainConfig::validate() const {
  if (iterations == 0) throw Error(ErrorCategory::config, "iterations must be positive");
  if (burn_in >= iterations) throw Error(ErrorCategory::config, "burn-in must be smaller than iterations");
  if (thin < 1) throw Error(ErrorCategory::config, "thin must be at least 1");
  if (n_chains < 1) throw Error(ErrorCategory::config, "at least one chain is required");
  if (threads < 1) throw Error(ErrorCategory::config, "threads must be at least 1");
  if (ars_max_iter < 1) throw Error(ErrorCategory::config, "ARS iteration budget must be positive");
  prior.validate();
}

SamplerContext::SamplerContext(const Dataset& data, const MeasurementParams& phi)
    : data_(&data),
      g_(data, Block::G, phi.items_g),
      r_(data, Block::R, phi.items_r),
      xtx_(data.X.transpose() * data.X),
      q_(data.q()) {
  if (phi.z_names != data.z_names())
    throw Error(ErrorCategory::schema, "measurement parameters use different non-equivalence columns than the dataset");
  const std::size_t n = data.n();
  x_rows_.resize(n * q_);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < q_; ++r)
      x_rows_[i * q_ + r] = data.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r));
}

void impute_xi(LatentState& state, const SamplerContext& ctx, const StructuralParams& psi, const StreamKey& key,
               int threads, bool use_likelihood) {
  const Dataset& data = ctx.data();
  const std::size_t n = data.n();
  const Eigen::MatrixXd& X = data.X;
  Eigen::MatrixXd lp(static_cast<Eigen::Index>(n), 3);
  lp.col(0) = X * psi.gamma_01;
  lp.col(1) = X * psi.gamma_10;
  lp.col(2) = X * psi.gamma_11;
  const BlockDesign& dg = ctx.design(Block::G);
  const BlockDesign& dr = ctx.design(Block::R);

  parallel_for(n, threads, [&](std::size_t i) {
    const auto ii = static_cast<Eigen::Index>(i);
    std::array<double, 4> prior{0.0, lp(ii, 0), lp(ii, 1), lp(ii, 2)};
    double lg0 = 0.0, lg1 = 0.0, lr0 = 0.0, lr1 = 0.0;
    if (use_likelihood) {
      lg0 = data.g_flag[i] ? kNegInf : 0.0;
      lr0 = data.r_flag[i] ? kNegInf : 0.0;
      lg1 = dg.loglik(i, state.eta_g[i]);
      lr1 = dr.loglik(i, state.eta_r[i]);
    }
    const std::array<double, 4> logw{lg0 + lr0 + prior[0], lg0 + lr1 + prior[1], lg1 + lr0 + prior[2],
                                     lg1 + lr1 + prior[3]};
    Rng rng = key.stream(static_cast<std::uint32_t>(i), StreamPurpose::impute_xi);
    const int c = sample_cell(logw, rng.uniform());
    state.xi_g[i] = static_cast<std::uint8_t>(c >> 1);
    state.xi_r[i] = static_cast<std::uint8_t>(c & 1);
  });
}

void impute_eta(LatentState& state, const SamplerContext& ctx, const StructuralParams& psi, const StreamKey& key,
                int threads, bool use_likelihood, int ars_max_iter, ars::Stats* stats) {
  const Dataset& data = ctx.data();
  const std::size_t n = data.n();
  const Eigen::VectorXd mu_g = data.X * psi.beta_g;
  const Eigen::VectorXd mu_r = data.X * psi.beta_r;
  const double sg = std::sqrt(psi.sigma2_g), sr = std::sqrt(psi.sigma2_r), rho = psi.rho_gr;
  if (!(sg > 0.0 && sr > 0.0 && std::abs(rho) < 1.0))
    throw Error(ErrorCategory::numeric, "structural covariance is not positive definite");
  const double var_g = psi.sigma2_g * (1.0 - rho * rho);
  const double var_r = psi.sigma2_r * (1.0 - rho * rho);
  const double sd_g = std::sqrt(var_g), sd_r = std::sqrt(var_r);
  const BlockDesign& dg = ctx.design(Block::G);
  const BlockDesign& dr = ctx.design(Block::R);
  ars::Stats total;
  std::mutex stats_mutex;

  const auto draw = [&](const BlockDesign& design, std::size_t i, bool class1, double mean, double var, double sd,
                        Rng& rng, ars::Stats& local) {
    if (!use_likelihood || !class1 || design.observed(i) == 0) return mean + sd * rng.normal();
    const double prec = 1.0 / var;
    const auto target = [&](double eta) {
      const BlockDesign::Derivatives d = design.loglik_derivatives(i, eta);
      const double dev = eta - mean;
      return ars::Eval{d.value - 0.5 * prec * dev * dev, d.first - prec * dev, d.second - prec};
    };
    return ars::sample_auto(target, mean, sd, rng, ars_max_iter, &local);
  };

  std::exception_ptr first;
  std::size_t first_index = n;
#pragma omp parallel num_threads(std::max(1, threads))
  {
    ars::Stats local;
#pragma omp for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
      try {
        const auto ii = static_cast<Eigen::Index>(i);
        Rng rng = key.stream(static_cast<std::uint32_t>(i), StreamPurpose::impute_eta);
        const double mg = mu_g[ii] + rho * (sg / sr) * (state.eta_r[i] - mu_r[ii]);
        state.eta_g[i] = draw(dg, i, state.xi_g[i] == 1, mg, var_g, sd_g, rng, local);
        const double mr = mu_r[ii] + rho * (sr / sg) * (state.eta_g[i] - mu_g[ii]);
        state.eta_r[i] = draw(dr, i, state.xi_r[i] == 1, mr, var_r, sd_r, rng, local);
      } catch (...) {
        std::lock_guard lock(stats_mutex);
        if (i < first_index) {
          first_index = i;
          first = std::current_exception();
        }
      }
    }
    std::lock_guard lock(stats_mutex);
    total += local;
  }
  if (first) std::rethrow_exception(first);
  if (stats) *stats += total;
}

void check_class_gating(const LatentState& state, const Dataset& data) {
  for (std::size_t i = 0; i < data.n(); ++i) {
    if ((data.g_flag[i] && state.xi_g[i] != 1) || (data.r_flag[i] && state.xi_r[i] != 1))
      throw Error(ErrorCategory::numeric,
                  "class-0 gating violated at dyad " + std::to_string(i + 1) + " (observed nonzero response in class 0)");
  }
}

GaussianMoments beta_posterior(const Eigen::MatrixXd& eta, const Eigen::MatrixXd& X, const Eigen::MatrixXd& xtx,
                               const Eigen::Matrix2d& sigma, const PriorSpec& prior) {
  const Eigen::Index q = X.cols();
  if (eta.rows() != X.rows() || eta.cols() != 2) throw Error(ErrorCategory::numeric, "eta must be n x 2");
  Eigen::LLT<Eigen::Matrix2d> sllt(sigma);
  if (sllt.info() != Eigen::Success) throw Error(ErrorCategory::numeric, "Sigma is not positive definite");
  const Eigen::Matrix2d sinv = sllt.solve(Eigen::Matrix2d::Identity());
  Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(2 * q, 2 * q) / prior.sigma2_beta;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) prec.block(a * q, b * q, q, q) += sinv(a, b) * xtx;
  const Eigen::MatrixXd rhs_mat = X.transpose() * eta * sinv;  // q x 2
  Eigen::VectorXd rhs(2 * q);
  rhs << rhs_mat.col(0), rhs_mat.col(1);
  Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) throw Error(ErrorCategory::numeric, "beta posterior precision is not positive definite");
  GaussianMoments m;
  m.mean = llt.solve(rhs);
  m.covariance = llt.solve(Eigen::MatrixXd::Identity(2 * q, 2 * q));
  return m;
}

Eigen::VectorXd draw_beta(const Eigen::MatrixXd& eta, const Eigen::MatrixXd& X, const Eigen::MatrixXd& xtx,
                          const Eigen::Matrix2d& sigma, const PriorSpec& prior, Rng& rng) {
  const Eigen::Index q = X.cols();
  if (eta.rows() != X.rows() || eta.cols() != 2) throw Error(ErrorCategory::numeric, "eta must be n x 2");
  Eigen::LLT<Eigen::Matrix2d> sllt(sigma);
  if (sllt.info() != Eigen::Success) throw Error(ErrorCategory::numeric, "Sigma is not positive definite");
  const Eigen::Matrix2d sinv = sllt.solve(Eigen::Matrix2d::Identity());
  Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(2 * q, 2 * q) / prior.sigma2_beta;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) prec.block(a * q, b * q, q, q) += sinv(a, b) * xtx;
  const Eigen::MatrixXd rhs_mat = X.transpose() * eta * sinv;
  Eigen::VectorXd rhs(2 * q);
  rhs << rhs_mat.col(0), rhs_mat.col(1);
  Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) throw Error(ErrorCategory::numeric, "beta posterior precision is not positive definite");
  const Eigen::VectorXd mean = llt.solve(rhs);
  Eigen::VectorXd z(2 * q);
  for (Eigen::Index k = 0; k < 2 * q; ++k) z[k] = rng.normal();
  // prec = L L', so L'^{-1} z has covariance prec^{-1}.
  return mean + llt.matrixU().solve(z);
}

Eigen::VectorXd draw_beta(const Eigen::MatrixXd& eta, const Eigen::MatrixXd& X, const Eigen::Matrix2d& sigma,
                          const PriorSpec& prior, Rng& rng) {
  const Eigen::MatrixXd xtx = X.transpose() * X;
  return draw_beta(eta, X, xtx, sigma, prior, rng);
}

Eigen::Matrix2d draw_inverse_wishart(const Eigen::Matrix2d& scale, double df, Rng& rng) {
  Eigen::LLT<Eigen::Matrix2d> sllt(scale);
  if (sllt.info() != Eigen::Success) throw Error(ErrorCategory::numeric, "inverse-Wishart scale is not positive definite");
  const Eigen::Matrix2d scale_inv = sllt.solve(Eigen::Matrix2d::Identity());
  const Eigen::Matrix2d L = Eigen::LLT<Eigen::Matrix2d>(scale_inv).matrixL();
  // Bartlett factor of a Wishart(scale^{-1}, df) draw.
  Eigen::Matrix2d A = Eigen::Matrix2d::Zero();
  A(0, 0) = std::sqrt(rng.chi_squared(df));
  A(1, 1) = std::sqrt(rng.chi_squared(df - 1.0));
  A(1, 0) = rng.normal();
  const Eigen::Matrix2d M = L * A;  // W = M M'
  const Eigen::Matrix2d Minv = M.triangularView<Eigen::Lower>().solve(Eigen::Matrix2d::Identity());
  Eigen::Matrix2d sigma = Minv.transpose() * Minv;
  sigma(0, 1) = sigma(1, 0) = 0.5 * (sigma(0, 1) + sigma(1, 0));
  return sigma;
}

Eigen::Matrix2d draw_sigma(const Eigen::MatrixXd& eta, const Eigen::MatrixXd& X, const Eigen::VectorXd& beta,
                           const PriorSpec& prior, Rng& rng) {
  const Eigen::Index q = X.cols();
  if (beta.size() != 2 * q) throw Error(ErrorCategory::numeric, "beta must have length 2q");
  Eigen::MatrixXd B(q, 2);
  B.col(0) = beta.head(q);
  B.col(1) = beta.tail(q);
  const Eigen::MatrixXd E = eta - X * B;
  const Eigen::Matrix2d S = prior.wishart_scale + E.transpose() * E;
  return draw_inverse_wishart(S, static_cast<double>(X.rows()) + prior.wishart_df, rng);
}

Eigen::VectorXd draw_gamma(std::span<const int> cells, const Eigen::MatrixXd& X, const Eigen::VectorXd& gamma,
                           const PriorSpec& prior, Rng& rng, int ars_max_iter, ars::Stats* stats) {
  const Eigen::Index n = X.rows(), q = X.cols();
  if (static_cast<Eigen::Index>(cells.size()) != n) throw Error(ErrorCategory::numeric, "cell labels must have length n");
  if (gamma.size() != 3 * q) throw Error(ErrorCategory::numeric, "gamma must have length 3q");
  Eigen::VectorXd g = gamma;
  std::array<Eigen::VectorXd, 4> lp;
  lp[0] = Eigen::VectorXd::Zero(n);
  for (int c = 1; c < 4; ++c) lp[c] = X * g.segment((c - 1) * q, q);
  const double* lp_ptr[4] = {lp[0].data(), lp[1].data(), lp[2].data(), lp[3].data()};
  const kernels::KernelTable& k = kernels::active();
  std::vector<double> offset(static_cast<std::size_t>(n));
  const double prior_prec = 1.0 / prior.sigma2_gamma;
  const double prior_sd = std::sqrt(prior.sigma2_gamma);

  for (Eigen::Index r = 0; r < q; ++r) {
    const double* x = X.col(r).data();
    for (int c = 1; c < 4; ++c) {
      double count = 0.0;  // sum of x_ir over dyads in cell c
      for (Eigen::Index i = 0; i < n; ++i)
        if (cells[static_cast<std::size_t>(i)] == c) count += x[i];
      const Eigen::Index idx = (c - 1) * q + r;
      const double old = g[idx];
      k.mnl_offsets(lp_ptr, c, x, old, static_cast<std::size_t>(n), offset.data());
      const auto target = [&](double v) {
        const kernels::LogitMoments m = k.logit_moments(offset.data(), x, static_cast<std::size_t>(n), v);
        return ars::Eval{v * count - m.softplus - 0.5 * prior_prec * v * v, count - m.first - prior_prec * v,
                         -m.second - prior_prec};
      };
      const double v = ars::sample_auto(target, old, prior_sd, rng, ars_max_iter, stats);
      g[idx] = v;
      lp[c] += (v - old) * X.col(r);
    }
  }
  return g;
}

std::size_t PosteriorDraws::total_draws() const {
  std::size_t t = 0;
  for (const auto& c : chains) t += c.size();
  return t;
}

std::vector<double> PosteriorDraws::parameter(std::size_t chain, std::size_t param) const {
  const auto& c = chains[chain];
  std::vector<double> v(c.size());
  for (std::size_t d = 0; d < c.size(); ++d) v[d] = c.values[d * n_params() + param];
  return v;
}

StructuralParams PosteriorDraws::draw(std::size_t chain, std::size_t d) const {
  const auto& c = chains[chain];
  return StructuralParams::unflatten({c.values.data() + d * n_params(), n_params()}, q());
}

void PosteriorDraws::validate() const {
  const std::size_t p = n_params();
  for (const auto& c : chains) {
    if (c.values.size() != c.size() * p) throw Error(ErrorCategory::numeric, "draw storage has wrong size");
    for (double v : c.values)
      if (!std::isfinite(v)) throw Error(ErrorCategory::numeric, "non-finite posterior draw");
    for (std::size_t d = 0; d < c.size(); ++d) draw(static_cast<std::size_t>(&c - chains.data()), d).validate();
  }
}

LatentState default_state(std::size_t n) {
  LatentState s;
  s.xi_g.assign(n, 1);
  s.xi_r.assign(n, 1);
  s.eta_g.assign(n, 0.0);
  s.eta_r.assign(n, 0.0);
  return s;
}

void gibbs_sweep(LatentState& state, StructuralParams& psi, const SamplerContext& ctx, const ChainConfig& config,
                 const StreamKey& key, int threads, ars::Stats* eta_stats, ars::Stats* gamma_stats) {
  const Dataset& data = ctx.data();
  const std::size_t n = data.n(), q = data.q();
  Eigen::MatrixXd eta(static_cast<Eigen::Index>(n), 2);
  std::vector<int> cells(n);
  impute_xi(state, ctx, psi, key, threads, config.use_likelihood);
  if (config.use_likelihood) check_class_gating(state, data);
  impute_eta(state, ctx, psi, key, threads, config.use_likelihood, config.ars_max_iter, eta_stats);

  for (std::size_t i = 0; i < n; ++i) {
    eta(static_cast<Eigen::Index>(i), 0) = state.eta_g[i];
    eta(static_cast<Eigen::Index>(i), 1) = state.eta_r[i];
    cells[i] = state.cell(i);
  }
  Eigen::VectorXd gamma_old(3 * static_cast<Eigen::Index>(q));
  gamma_old << psi.gamma_01, psi.gamma_10, psi.gamma_11;

  // psi_eta and psi_xi are conditionally independent given the latent state.
  Eigen::VectorXd beta, gamma;
  Eigen::Matrix2d sigma;
  std::exception_ptr err_eta, err_xi;
#pragma omp parallel sections num_threads(threads > 1 ? 2 : 1)
  {
#pragma omp section
    {
      try {
        Rng rb = key.stream(0, StreamPurpose::beta);
        beta = draw_beta(eta, data.X, ctx.xtx(), psi.covariance(), config.prior, rb);
        Rng rs = key.stream(0, StreamPurpose::sigma);
        sigma = draw_sigma(eta, data.X, beta, config.prior, rs);
      } catch (...) {
        err_eta = std::current_exception();
      }
    }
#pragma omp section
    {
      try {
        Rng rg = key.stream(0, StreamPurpose::gamma);
        gamma = draw_gamma(cells, data.X, gamma_old, config.prior, rg, config.ars_max_iter, gamma_stats);
      } catch (...) {
        err_xi = std::current_exception();
      }
    }
  }
  if (err_eta) std::rethrow_exception(err_eta);
  if (err_xi) std::rethrow_exception(err_xi);

  const auto qq = static_cast<Eigen::Index>(q);
  psi.beta_g = beta.head(qq);
  psi.beta_r = beta.tail(qq);
  psi.set_covariance(sigma);
  psi.gamma_01 = gamma.segment(0, qq);
  psi.gamma_10 = gamma.segment(qq, qq);
  psi.gamma_11 = gamma.segment(2 * qq, qq);
  psi.validate();
}

ChainDraws run_chain(const SamplerContext& ctx, const ChainConfig& config, std::uint32_t chain, int threads) {
  const Dataset& data = ctx.data();
  const std::size_t n = data.n(), q = data.q();
  const auto start = std::chrono::steady_clock::now();

  StructuralParams psi = config.init_psi ? *config.init_psi : StructuralParams::zeros(q);
  psi.validate();
  if (psi.q() != q) throw Error(ErrorCategory::config, "initial structural parameters have the wrong dimension");
  LatentState state = config.init_state ? *config.init_state : default_state(n);
  if (state.size() != n || state.xi_g.size() != n || state.xi_r.size() != n || state.eta_r.size() != n)
    throw Error(ErrorCategory::config, "initial latent state has the wrong size");

  ChainDraws out;
  out.chain = chain;
  const std::size_t kept = (config.iterations - config.burn_in) / config.thin;
  out.iteration.reserve(kept);
  out.values.reserve(kept * structural_size(q));

  for (std::size_t t = 1; t <= config.iterations; ++t) {
    const StreamKey key{config.seed, chain, static_cast<std::uint32_t>(t)};
    try {
      gibbs_sweep(state, psi, ctx, config, key, threads, &out.eta_stats, &out.gamma_stats);
    } catch (const Error& e) {
      throw Error(e.category(), "chain " + std::to_string(chain) + ", iteration " + std::to_string(t) + ": " + e.what());
    }

    if (t > config.burn_in && (t - config.burn_in) % config.thin == 0) {
      out.iteration.push_back(t);
      const auto v = psi.flatten();
      out.values.insert(out.values.end(), v.begin(), v.end());
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

PosteriorDraws run_chains(const Dataset& data, const MeasurementParams& phi, const ChainConfig& config) {
  config.validate();
  data.validate();
  phi.validate();
  const SamplerContext ctx(data, phi);

  PosteriorDraws draws;
  draws.covariate_names = data.covariate_names;
  draws.seed = config.seed;
  draws.isa = std::string(kernels::to_string(kernels::active_isa()));
  draws.chains.resize(config.n_chains);

  const int outer = static_cast<int>(std::min<std::size_t>(config.n_chains, static_cast<std::size_t>(config.threads)));
  const int inner = std::max(1, config.threads / std::max(1, outer));
  if (outer > 1) omp_set_max_active_levels(2);

  std::exception_ptr first;
  std::size_t first_chain = config.n_chains;
  std::mutex mutex;
#pragma omp parallel for schedule(static, 1) num_threads(outer)
  for (std::size_t c = 0; c < config.n_chains; ++c) {
    try {
      draws.chains[c] = run_chain(ctx, config, static_cast<std::uint32_t>(c), inner);
    } catch (...) {
      std::lock_guard lock(mutex);
      if (c < first_chain) {
        first_chain = c;
        first = std::current_exception();
      }
    }
  }
  if (first) std::rethrow_exception(first);
  draws.validate();
  return draws;
}

}  // namespace zidyad
