#include "zidyad/measurement_fit.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>

#include "zidyad/error.hpp"
#include "zidyad/kernels.hpp"
#include "zidyad/quadrature.hpp"

namespace zidyad {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// Position of each free parameter in theta; -1 marks a fixed value.
struct Layout {
  struct ItemIndex {
    int tau = -1;
    int lambda = -1;
    std::vector<int> delta, zeta;
  };
  std::size_t nz = 0;
  std::vector<ItemIndex> items;
  int a0 = 0, b0 = 0, log_sd = 0;
  std::size_t size = 0;
  std::vector<std::string> names;

  Layout(const std::vector<ItemMeasurement>& pattern, const std::vector<std::string>& z_names) : nz(z_names.size()) {
    int k = 0;
    for (const auto& it : pattern) {
      ItemIndex ix;
      ix.delta.assign(nz, -1);
      ix.zeta.assign(nz, -1);
      if (!it.fixed_anchor) {
        ix.tau = k++;
        names.push_back("tau[" + it.name + "]");
        ix.lambda = k++;
        names.push_back("lambda[" + it.name + "]");
      }
      for (std::size_t c = 0; c < nz; ++c) {
        if (!it.free[c]) continue;
        ix.delta[c] = k++;
        names.push_back("delta[" + it.name + "," + z_names[c] + "]");
        ix.zeta[c] = k++;
        names.push_back("zeta[" + it.name + "," + z_names[c] + "]");
      }
      items.push_back(std::move(ix));
    }
    a0 = k;
    names.push_back("class1_logit[(intercept)]");
    for (const auto& z : z_names) names.push_back("class1_logit[" + z + "]");
    k += static_cast<int>(nz + 1);
    b0 = k;
    names.push_back("trait_mean[(intercept)]");
    for (const auto& z : z_names) names.push_back("trait_mean[" + z + "]");
    k += static_cast<int>(nz + 1);
    log_sd = k++;
    names.push_back("trait_log_sd");
    size = static_cast<std::size_t>(k);
  }

  void unpack(const Eigen::VectorXd& theta, std::vector<ItemMeasurement>& items_out, FirstStepNuisance& nu) const {
    for (std::size_t j = 0; j < items.size(); ++j) {
      auto& it = items_out[j];
      const auto& ix = items[j];
      if (ix.tau >= 0) it.tau = theta[ix.tau];
      if (ix.lambda >= 0) it.lambda = theta[ix.lambda];
      for (std::size_t c = 0; c < nz; ++c) {
        it.delta[c] = ix.delta[c] >= 0 ? theta[ix.delta[c]] : 0.0;
        it.zeta[c] = ix.zeta[c] >= 0 ? theta[ix.zeta[c]] : 0.0;
      }
    }
    const auto m = static_cast<Eigen::Index>(nz + 1);
    nu.logistic_coeffs = theta.segment(a0, m);
    nu.linear_coeffs = theta.segment(b0, m);
    nu.variance = std::exp(2.0 * theta[log_sd]);
  }

  Eigen::VectorXd pack(const std::vector<ItemMeasurement>& its, const FirstStepNuisance& nu) const {
    Eigen::VectorXd theta(static_cast<Eigen::Index>(size));
    for (std::size_t j = 0; j < items.size(); ++j) {
      const auto& ix = items[j];
      if (ix.tau >= 0) theta[ix.tau] = its[j].tau;
      if (ix.lambda >= 0) theta[ix.lambda] = its[j].lambda;
      for (std::size_t c = 0; c < nz; ++c) {
        if (ix.delta[c] >= 0) theta[ix.delta[c]] = its[j].delta[c];
        if (ix.zeta[c] >= 0) theta[ix.zeta[c]] = its[j].zeta[c];
      }
    }
    const auto m = static_cast<Eigen::Index>(nz + 1);
    theta.segment(a0, m) = nu.logistic_coeffs;
    theta.segment(b0, m) = nu.linear_coeffs;
    theta[log_sd] = 0.5 * std::log(nu.variance);
    return theta;
  }
};

// Dyads with at least one observed item in the block, in CSR form.
struct BlockRows {
  std::size_t nz = 0;
  std::vector<std::size_t> dyad;
  std::vector<std::size_t> offset{0};
  std::vector<int> item;
  std::vector<double> y;
  std::vector<double> z;  // nz per row
  std::vector<std::uint8_t> flag;

  BlockRows(const Dataset& data, Block block) : nz(data.z_cols.size()) {
    const ItemMatrix& m = data.items(block);
    const auto& flags = data.flags(block);
    for (std::size_t i = 0; i < data.n(); ++i) {
      if (m.all_missing(i)) continue;
      dyad.push_back(i);
      for (std::size_t j = 0; j < m.cols; ++j) {
        const auto v = m(i, j);
        if (v == kMissing) continue;
        item.push_back(static_cast<int>(j));
        y.push_back(static_cast<double>(v));
      }
      offset.push_back(item.size());
      const auto zr = data.z_row(i);
      z.insert(z.end(), zr.begin(), zr.end());
      flag.push_back(flags[i]);
    }
  }
  std::size_t rows() const { return dyad.size(); }
  std::span<const double> z_row(std::size_t r) const { return {z.data() + r * nz, nz}; }
};

struct Center {
  double mode = 0.0;
  double scale = 1.0;
};

struct DyadModel {
  std::vector<double> a, b, y;  // per observed item
  double pi_logit = 0.0;
  double mu = 0.0;
  double sd = 1.0;
};

void build_dyad(const BlockRows& rows, std::size_t r, const std::vector<ItemMeasurement>& items,
                const FirstStepNuisance& nu, DyadModel& dm) {
  const auto z = rows.z_row(r);
  const std::size_t lo = rows.offset[r], hi = rows.offset[r + 1];
  dm.a.resize(hi - lo);
  dm.b.resize(hi - lo);
  dm.y.assign(rows.y.begin() + static_cast<std::ptrdiff_t>(lo), rows.y.begin() + static_cast<std::ptrdiff_t>(hi));
  for (std::size_t k = lo; k < hi; ++k) {
    const auto& it = items[static_cast<std::size_t>(rows.item[k])];
    dm.a[k - lo] = it.intercept(z);
    dm.b[k - lo] = it.slope(z);
  }
  double pl = nu.logistic_coeffs[0], mu = nu.linear_coeffs[0];
  for (std::size_t c = 0; c < z.size(); ++c) {
    pl += nu.logistic_coeffs[static_cast<Eigen::Index>(c + 1)] * z[c];
    mu += nu.linear_coeffs[static_cast<Eigen::Index>(c + 1)] * z[c];
  }
  dm.pi_logit = pl;
  dm.mu = mu;
  dm.sd = std::sqrt(nu.variance);
}

// Conditional mode of eta and the curvature-based scale, by safeguarded Newton.
Center find_center(const DyadModel& dm) {
  const double prec = 1.0 / (dm.sd * dm.sd);
  const auto eval = [&](double eta, double& d1, double& d2) {
    double v = -0.5 * prec * (eta - dm.mu) * (eta - dm.mu);
    d1 = -prec * (eta - dm.mu);
    d2 = -prec;
    for (std::size_t j = 0; j < dm.a.size(); ++j) {
      const double t = dm.a[j] + dm.b[j] * eta;
      const double s = logistic(t);
      v += dm.y[j] * t - softplus(t);
      d1 += (dm.y[j] - s) * dm.b[j];
      d2 -= s * (1.0 - s) * dm.b[j] * dm.b[j];
    }
    return v;
  };
  double x = dm.mu, d1, d2;
  double v = eval(x, d1, d2);
  for (int it = 0; it < 100; ++it) {
    double step = -d1 / d2;
    if (std::abs(step) < 1e-10 * (1.0 + std::abs(x))) break;
    double n1, n2;
    double nv = eval(x + step, n1, n2);
    int halvings = 0;
    while (nv < v && halvings < 40) {
      step *= 0.5;
      nv = eval(x + step, n1, n2);
      ++halvings;
    }
    x += step;
    v = nv;
    d1 = n1;
    d2 = n2;
  }
  return {x, 1.0 / std::sqrt(-d2)};
}

struct Scratch {
  DyadModel dm;
  std::vector<double> eta, g, t, sp, sig;
};

// Log-likelihood of one dyad; if grad is non-null writes d/dtheta (size layout.size).
double dyad_loglik(const BlockRows& rows, std::size_t r, const Layout& layout,
                   const std::vector<ItemMeasurement>& items, const FirstStepNuisance& nu, const Center& center,
                   const GaussHermiteRule& rule, Scratch& s, double* grad) {
  build_dyad(rows, r, items, nu, s.dm);
  const DyadModel& dm = s.dm;
  const std::size_t K = rule.nodes.size(), m = dm.a.size();
  const double h = std::sqrt(2.0) * center.scale;
  const double var = dm.sd * dm.sd;
  s.eta.resize(K);
  s.g.resize(K);
  s.t.resize(K * m);
  s.sp.resize(K * m);
  s.sig.resize(K * m);
  for (std::size_t k = 0; k < K; ++k) {
    const double x = rule.nodes[k];
    s.eta[k] = center.mode + h * x;
    for (std::size_t j = 0; j < m; ++j) s.t[k * m + j] = dm.a[j] + dm.b[j] * s.eta[k];
  }
  kernels::active().softplus_sigmoid(s.t.data(), K * m, s.sp.data(), s.sig.data());
  const double log_h = std::log(h);
  double gmax = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    const double x = rule.nodes[k];
    const double dev = s.eta[k] - dm.mu;
    double v = rule.log_weights[k] + x * x + log_h - kLogSqrt2Pi - std::log(dm.sd) - 0.5 * dev * dev / var;
    for (std::size_t j = 0; j < m; ++j) v += dm.y[j] * s.t[k * m + j] - s.sp[k * m + j];
    s.g[k] = v;
    gmax = std::max(gmax, v);
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) sum += std::exp(s.g[k] - gmax);
  const double log_l1 = gmax + std::log(sum);

  const double log_pi = log_logistic(dm.pi_logit);
  const double log_1mpi = log_logistic(-dm.pi_logit);
  const bool flagged = rows.flag[r] != 0;
  double ll, p1;
  if (flagged) {
    ll = log_pi + log_l1;
    p1 = 1.0;
  } else {
    const double a = log_1mpi, b = log_pi + log_l1;
    const double mx = std::max(a, b);
    ll = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
    p1 = std::exp(b - ll);
  }
  if (!grad) return ll;

  std::fill(grad, grad + layout.size, 0.0);
  const auto z = rows.z_row(r);
  const double pi = std::exp(log_pi);
  const double d_logit = flagged ? 1.0 - pi : p1 * (1.0 - pi) - (1.0 - p1) * pi;
  grad[layout.a0] = d_logit;
  for (std::size_t c = 0; c < z.size(); ++c) grad[layout.a0 + 1 + static_cast<int>(c)] = d_logit * z[c];

  // Posterior-weighted expectations over the nodes.
  double e_dev = 0.0, e_dev2 = 0.0;
  std::vector<double>& da = s.t;  // reuse: per item sums
  std::fill(da.begin(), da.begin() + static_cast<std::ptrdiff_t>(2 * m), 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const double w = std::exp(s.g[k] - log_l1);
    const double dev = s.eta[k] - dm.mu;
    e_dev += w * dev;
    e_dev2 += w * dev * dev;
    for (std::size_t j = 0; j < m; ++j) {
      const double res = w * (dm.y[j] - s.sig[k * m + j]);
      da[j] += res;
      da[m + j] += res * s.eta[k];
    }
  }
  const double db_mean = p1 * e_dev / var;
  grad[layout.b0] = db_mean;
  for (std::size_t c = 0; c < z.size(); ++c) grad[layout.b0 + 1 + static_cast<int>(c)] = db_mean * z[c];
  grad[layout.log_sd] = p1 * (e_dev2 / var - 1.0);

  const std::size_t lo = rows.offset[r];
  for (std::size_t j = 0; j < m; ++j) {
    const auto& ix = layout.items[static_cast<std::size_t>(rows.item[lo + j])];
    const double ga = p1 * da[j], gb = p1 * da[m + j];
    if (ix.tau >= 0) grad[ix.tau] += ga;
    if (ix.lambda >= 0) grad[ix.lambda] += gb;
    for (std::size_t c = 0; c < z.size(); ++c) {
      if (ix.delta[c] >= 0) grad[ix.delta[c]] += ga * z[c];
      if (ix.zeta[c] >= 0) grad[ix.zeta[c]] += gb * z[c];
    }
  }
  return ll;
}

template <class Body>
void for_rows(std::size_t n, int threads, Body&& body) {
  std::exception_ptr first;
  std::size_t first_index = n;
  std::mutex mutex;
#pragma omp parallel num_threads(std::max(1, threads))
  {
    Scratch s;
#pragma omp for schedule(static)
    for (std::size_t r = 0; r < n; ++r) {
      try {
        body(r, s);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (r < first_index) {
          first_index = r;
          first = std::current_exception();
        }
      }
    }
  }
  if (first) std::rethrow_exception(first);
}

class Objective {
 public:
  Objective(const BlockRows& rows, const Layout& layout, std::vector<ItemMeasurement> items, const FitOptions& opts)
      : rows_(rows), layout_(layout), items_(std::move(items)), rule_(gauss_hermite(opts.quad_order)),
        threads_(opts.threads), centers_(rows.rows()) {}

  void recenter(const Eigen::VectorXd& theta) {
    FirstStepNuisance nu;
    layout_.unpack(theta, items_, nu);
    for_rows(rows_.rows(), threads_, [&](std::size_t r, Scratch& s) {
      build_dyad(rows_, r, items_, nu, s.dm);
      centers_[r] = find_center(s.dm);
    });
  }
  const std::vector<Center>& centers() const { return centers_; }

  // Total log-likelihood and gradient with the current centers.
  double eval(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
    FirstStepNuisance nu;
    std::vector<ItemMeasurement> items = items_;
    layout_.unpack(theta, items, nu);
    const std::size_t n = rows_.rows(), p = layout_.size;
    ll_.resize(n);
    if (grad) g_.resize(n * p);
    for_rows(n, threads_, [&](std::size_t r, Scratch& s) {
      ll_[r] = dyad_loglik(rows_, r, layout_, items, nu, centers_[r], rule_, s, grad ? g_.data() + r * p : nullptr);
    });
    // Fixed-order reduction keeps results independent of the thread count.
    double total = 0.0;
    for (double v : ll_) total += v;
    if (grad) {
      grad->setZero(static_cast<Eigen::Index>(p));
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < p; ++k) (*grad)[static_cast<Eigen::Index>(k)] += g_[r * p + k];
    }
    return total;
  }

  std::vector<ItemMeasurement> items(const Eigen::VectorXd& theta, FirstStepNuisance& nu) const {
    std::vector<ItemMeasurement> out = items_;
    layout_.unpack(theta, out, nu);
    return out;
  }

 private:
  const BlockRows& rows_;
  const Layout& layout_;
  std::vector<ItemMeasurement> items_;
  const GaussHermiteRule& rule_;
  int threads_;
  std::vector<Center> centers_;
  std::vector<double> ll_, g_;
};

double logit_clamped(double p) {
  p = std::clamp(p, 0.02, 0.98);
  return std::log(p / (1.0 - p));
}

struct BfgsResult {
  Eigen::VectorXd theta;
  double value = 0.0;  // mean log-likelihood
  Eigen::VectorXd grad;
  int iterations = 0;
  bool converged = false;
};

// Maximizes the mean log-likelihood by BFGS with a backtracking Armijo search;
// every accepted step increases the objective.
BfgsResult bfgs(Objective& obj, Eigen::VectorXd theta, double scale, const FitOptions& opts, int budget,
                std::vector<double>& trace) {
  const auto p = theta.size();
  Eigen::VectorXd g;
  double f = obj.eval(theta, &g) * scale;
  g *= scale;
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(p, p);  // inverse Hessian of -f
  BfgsResult res;
  bool reset = false;
  int it = 0;
  for (; it < budget; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd dir = H * g;
    if (dir.dot(g) <= 0.0) {
      H.setIdentity();
      dir = g;
    }
    const double max_step = dir.lpNorm<Eigen::Infinity>();
    double step = max_step > 2.0 ? 2.0 / max_step : 1.0;
    Eigen::VectorXd gn;
    double fn = f;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      const Eigen::VectorXd cand = theta + step * dir;
      const double v = obj.eval(cand, &gn) * scale;
      if (std::isfinite(v) && v >= f + 1e-4 * step * dir.dot(g)) {
        fn = v;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!reset) {
        H.setIdentity();
        reset = true;
        continue;
      }
      // No ascent direction left at machine precision: a stationary point.
      res.converged = g.lpNorm<Eigen::Infinity>() < 100.0 * opts.grad_tol;
      break;
    }
    reset = false;
    gn *= scale;
    const Eigen::VectorXd sv = step * dir;
    const Eigen::VectorXd yv = g - gn;  // gradient change of -f
    const double sy = sv.dot(yv);
    if (sy > 1e-12 * sv.norm() * yv.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);
      H = (I - rho * sv * yv.transpose()) * H * (I - rho * yv * sv.transpose()) + rho * sv * sv.transpose();
    }
    theta += sv;
    f = fn;
    g = gn;
    trace.push_back(f / scale);
  }
  res.theta = theta;
  res.value = f;
  res.grad = g;
  res.iterations = it;
  return res;
}

}  // namespace

void check_identification(const std::vector<ItemMeasurement>& pattern, std::size_t nz) {
  for (const auto& it : pattern) {
    if (it.free.size() != nz) throw Error(ErrorCategory::config, "item '" + it.name + "': pattern has wrong length");
    if (it.fixed_anchor)
      for (auto f : it.free)
        if (f) throw Error(ErrorCategory::config, "anchor item '" + it.name + "' cannot carry non-equivalence terms");
  }
  for (std::size_t c = 0; c < nz; ++c) {
    int equivalent = 0;
    for (const auto& it : pattern) equivalent += it.free[c] ? 0 : 1;
    if (equivalent < 2)
      throw Error(ErrorCategory::config, "identification: non-equivalence column " + std::to_string(c + 1) +
                                             " leaves fewer than two equivalent items");
  }
}

FitReport fit_block(const Dataset& data, Block block, const std::vector<ItemMeasurement>& pattern,
                    const FitOptions& opts) {
  data.validate();
  const ItemMatrix& m = data.items(block);
  const std::size_t nz = data.z_cols.size();
  if (pattern.size() != m.cols) throw Error(ErrorCategory::schema, "pattern item count does not match the block");
  MeasurementParams::validate_block(pattern, nz);
  check_identification(pattern, nz);
  if (opts.quad_order < 5) throw Error(ErrorCategory::config, "quadrature order must be at least 5");

  const BlockRows rows(data, block);
  std::size_t n_flag = 0;
  for (auto f : rows.flag) n_flag += f;
  if (n_flag == 0) throw Error(ErrorCategory::data, "no dyad has a nonzero response in the block (class 1 is empty)");

  const Layout layout(pattern, data.z_names());

  // Starting values.
  std::vector<ItemMeasurement> start = pattern;
  for (std::size_t j = 0; j < m.cols; ++j) {
    auto& it = start[j];
    std::fill(it.delta.begin(), it.delta.end(), 0.0);
    std::fill(it.zeta.begin(), it.zeta.end(), 0.0);
    if (it.fixed_anchor) {
      it.tau = 0.0;
      it.lambda = 1.0;
      continue;
    }
    double ones = 0.0, seen = 0.0;
    for (std::size_t r = 0; r < rows.rows(); ++r) {
      if (!rows.flag[r]) continue;
      const auto v = m(rows.dyad[r], j);
      if (v == kMissing) continue;
      ones += v;
      seen += 1.0;
    }
    it.tau = seen > 0 ? logit_clamped(ones / seen) : 0.0;
    it.lambda = 1.0;
  }
  FirstStepNuisance nu;
  nu.logistic_coeffs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nz + 1));
  nu.linear_coeffs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nz + 1));
  nu.logistic_coeffs[0] = logit_clamped(static_cast<double>(n_flag) / static_cast<double>(rows.rows()));
  nu.variance = 1.0;

  Objective obj(rows, layout, start, opts);
  Eigen::VectorXd theta = layout.pack(start, nu);
  const double scale = 1.0 / static_cast<double>(rows.rows());

  FitReport rep;
  rep.block = block;
  rep.parameter_names = layout.names;
  int used = 0;
  BfgsResult res;
  for (int round = 0; round < opts.max_recenter; ++round) {
    obj.recenter(theta);
    const std::vector<Center> before = obj.centers();
    res = bfgs(obj, theta, scale, opts, opts.max_iter - used, rep.trace);
    used += res.iterations;
    theta = res.theta;
    rep.recentering_rounds = round + 1;
    obj.recenter(theta);
    double shift = 0.0;
    for (std::size_t r = 0; r < before.size(); ++r)
      shift = std::max(shift, std::abs(obj.centers()[r].mode - before[r].mode));
    if (shift < opts.recenter_tol || used >= opts.max_iter) break;
  }
  // Final pass with settled centers.
  res = bfgs(obj, theta, scale, opts, std::max(1, opts.max_iter - used), rep.trace);
  used += res.iterations;
  theta = res.theta;

  rep.iterations = used;
  rep.converged = res.converged;
  rep.gradient_norm = res.grad.lpNorm<Eigen::Infinity>();
  rep.loglik = res.value / scale;
  rep.estimates = theta;
  rep.items = obj.items(theta, rep.nuisance);
  for (auto& it : rep.items)
    if (it.fixed_anchor) {
      it.tau = 0.0;
      it.lambda = 1.0;
    }
  if (!rep.converged)
    throw Error(ErrorCategory::convergence, "measurement fit did not converge within " +
                                                std::to_string(opts.max_iter) + " iterations (gradient norm " +
                                                std::to_string(rep.gradient_norm) + ")");

  const auto p = static_cast<Eigen::Index>(layout.size);
  rep.standard_errors = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
  if (opts.standard_errors) {
    // Central differences of the analytic gradient.
    Eigen::MatrixXd H(p, p);
    Eigen::VectorXd gp, gm;
    for (Eigen::Index k = 0; k < p; ++k) {
      const double hstep = 1e-5 * (1.0 + std::abs(theta[k]));
      Eigen::VectorXd t = theta;
      t[k] += hstep;
      obj.eval(t, &gp);
      t[k] = theta[k] - hstep;
      obj.eval(t, &gm);
      H.col(k) = (gp - gm) / (2.0 * hstep);
    }
    const Eigen::MatrixXd info = -0.5 * (H + H.transpose());
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
      const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
      for (Eigen::Index k = 0; k < p; ++k)
        if (cov(k, k) > 0.0) rep.standard_errors[k] = std::sqrt(cov(k, k));
    }
  }
  return rep;
}

MeasurementParams fit_measurement(const Dataset& data, const MeasurementParams& pattern, const FitOptions& opts,
                                  FitReport* report_g, FitReport* report_r) {
  if (pattern.z_names != data.z_names())
    throw Error(ErrorCategory::schema, "measurement pattern uses different non-equivalence columns than the dataset");
  MeasurementParams out;
  out.z_names = pattern.z_names;
  FitReport g = fit_block(data, Block::G, pattern.items_g, opts);
  FitReport r = fit_block(data, Block::R, pattern.items_r, opts);
  out.items_g = g.items;
  out.items_r = r.items;
  if (report_g) *report_g = std::move(g);
  if (report_r) *report_r = std::move(r);
  out.validate();
  return out;
}

double block_marginal_loglik(const Dataset& data, Block block, const std::vector<ItemMeasurement>& items,
                             const FirstStepNuisance& nuisance, std::size_t quad_order) {
  const BlockRows rows(data, block);
  const std::vector<std::string> z_names = data.z_names();
  std::vector<ItemMeasurement> pattern = items;
  const Layout layout(pattern, z_names);
  const GaussHermiteRule& rule = gauss_hermite(quad_order);
  Scratch s;
  double total = 0.0;
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    build_dyad(rows, r, items, nuisance, s.dm);
    const Center c = find_center(s.dm);
    total += dyad_loglik(rows, r, layout, items, nuisance, c, rule, s, nullptr);
  }
  return total;
}

double block_all_zero_prob(const Dataset& data, Block block, std::size_t i, const std::vector<ItemMeasurement>& items,
                           const FirstStepNuisance& nuisance, std::size_t quad_order) {
  const ItemMatrix& m = data.items(block);
  if (i >= data.n()) throw Error(ErrorCategory::numeric, "dyad index out of range");
  if (m.all_missing(i)) return 1.0;
  const auto z = data.z_row(i);
  double pl = nuisance.logistic_coeffs[0], mu = nuisance.linear_coeffs[0];
  for (std::size_t c = 0; c < z.size(); ++c) {
    pl += nuisance.logistic_coeffs[static_cast<Eigen::Index>(c + 1)] * z[c];
    mu += nuisance.linear_coeffs[static_cast<Eigen::Index>(c + 1)] * z[c];
  }
  const double sd = std::sqrt(nuisance.variance);
  const GaussHermiteRule& rule = gauss_hermite(quad_order);
  // E[prod_j (1 - p_j(eta))] over eta ~ N(mu, sd^2).
  std::vector<double> terms(rule.nodes.size());
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double eta = mu + std::sqrt(2.0) * sd * rule.nodes[k];
    double v = rule.log_weights[k] - 0.5 * std::log(M_PI);
    for (std::size_t j = 0; j < m.cols; ++j) {
      if (m(i, j) == kMissing) continue;
      v += log_logistic(-(items[j].intercept(z) + items[j].slope(z) * eta));
    }
    terms[k] = v;
  }
  const double p0 = std::exp(log_sum_exp(terms));
  const double pi = logistic(pl);
  return (1.0 - pi) + pi * p0;
}

}  // namespace zidyad
