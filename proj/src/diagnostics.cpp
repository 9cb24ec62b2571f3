#include "zidyad/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "zidyad/error.hpp"
#include "zidyad/model.hpp"

namespace zidyad {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Biased autocovariance at lag t.
double autocov(std::span<const double> v, double mean, std::size_t t) {
  const std::size_t n = v.size();
  double s = 0.0;
  for (std::size_t i = 0; i + t < n; ++i) s += (v[i] - mean) * (v[i + t] - mean);
  return s / static_cast<double>(n);
}

int stars_for(const std::array<double, 3>& lo, const std::array<double, 3>& hi) {
  int s = 0;
  for (int k = 0; k < 3; ++k)
    if (lo[static_cast<std::size_t>(k)] > 0.0 || hi[static_cast<std::size_t>(k)] < 0.0) s = k + 1;
  return s;
}

void intervals(std::vector<double> pooled, std::array<double, 3>& lo, std::array<double, 3>& hi) {
  std::sort(pooled.begin(), pooled.end());
  for (std::size_t k = 0; k < kIntervalLevels.size(); ++k) {
    const double a = 0.5 * (1.0 - kIntervalLevels[k]);
    lo[k] = quantile_sorted(pooled, a);
    hi[k] = quantile_sorted(pooled, 1.0 - a);
  }
}

double sd_of(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

Convergence rhat_ess(std::span<const std::vector<double>> chains) {
  if (chains.size() < 2) throw Error(ErrorCategory::data, "R-hat needs at least two chains");
  const std::size_t n_full = chains[0].size();
  for (const auto& c : chains) {
    if (c.size() != n_full) throw Error(ErrorCategory::data, "chains have different lengths");
    if (c.size() < 100) throw Error(ErrorCategory::data, "R-hat needs at least 100 draws per chain");
  }
  // Split each chain into halves (odd lengths drop the middle draw).
  const std::size_t n = n_full / 2;
  std::vector<std::span<const double>> split;
  for (const auto& c : chains) {
    split.emplace_back(c.data(), n);
    split.emplace_back(c.data() + (n_full - n), n);
  }
  const std::size_t m = split.size();
  std::vector<double> means(m), vars(m);
  for (std::size_t k = 0; k < m; ++k) {
    means[k] = mean_of(split[k]);
    vars[k] = autocov(split[k], means[k], 0) * static_cast<double>(n) / static_cast<double>(n - 1);
    if (!(vars[k] > 0.0)) return {kInf, 0.0};
  }
  const double w = mean_of(vars);
  const double grand = mean_of(means);
  double b_over_n = 0.0;
  for (double mu : means) b_over_n += (mu - grand) * (mu - grand);
  b_over_n /= static_cast<double>(m - 1);
  const double nd = static_cast<double>(n);
  const double var_plus = (nd - 1.0) / nd * w + b_over_n;
  Convergence out;
  out.rhat = std::sqrt(var_plus / w);

  // Geyer initial positive then monotone sequence on paired autocorrelations.
  const auto rho = [&](std::size_t t) {
    double s = 0.0;
    for (std::size_t k = 0; k < m; ++k) s += autocov(split[k], means[k], t);
    return 1.0 - (w - s / static_cast<double>(m)) / var_plus;
  };
  double tau = -1.0;
  double prev_pair = kInf;
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = (t == 0 ? 1.0 : rho(t)) + rho(t + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(m) * nd));
  out.ess = std::min(static_cast<double>(m) * nd / tau, static_cast<double>(m) * nd * std::log10(static_cast<double>(m) * nd));
  return out;
}

Convergence rhat_ess(const PosteriorDraws& draws, std::size_t param) {
  std::vector<std::vector<double>> chains;
  for (std::size_t c = 0; c < draws.chains.size(); ++c) chains.push_back(draws.parameter(c, param));
  return rhat_ess(chains);
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCategory::data, "quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

ParameterSummary summarize_values(std::string name, std::span<const std::vector<double>> chains) {
  ParameterSummary s;
  s.name = std::move(name);
  std::vector<double> pooled;
  for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
  if (pooled.empty()) throw Error(ErrorCategory::data, "no draws to summarize");
  s.mean = mean_of(pooled);
  s.sd = sd_of(pooled, s.mean);
  intervals(pooled, s.lower, s.upper);
  s.stars = stars_for(s.lower, s.upper);
  bool diag = chains.size() >= 2;
  for (const auto& c : chains) diag = diag && c.size() >= 100 && c.size() == chains[0].size();
  if (diag) {
    const Convergence cv = rhat_ess(chains);
    s.rhat = cv.rhat;
    s.ess = cv.ess;
  } else {
    s.rhat = kNaN;
    s.ess = kNaN;
  }
  return s;
}

SummaryTable summarize(const PosteriorDraws& draws) {
  if (draws.total_draws() == 0) throw Error(ErrorCategory::data, "no draws to summarize");
  const auto names = structural_names(draws.covariate_names);
  SummaryTable t;
  t.total_draws = draws.total_draws();
  t.chains = draws.chains.size();
  for (std::size_t p = 0; p < draws.n_params(); ++p) {
    std::vector<std::vector<double>> chains;
    for (std::size_t c = 0; c < draws.chains.size(); ++c) chains.push_back(draws.parameter(c, p));
    t.rows.push_back(summarize_values(names[p], chains));
  }
  return t;
}

PiRow pi_row(const std::array<double, 4>& cells, std::string label) {
  PiRow r;
  r.label = std::move(label);
  r.cells = cells;
  r.odds_ratio = (cells[0] * cells[3]) / (cells[1] * cells[2]);
  r.marginal_g = cells[2] + cells[3];
  r.marginal_r = cells[1] + cells[3];
  return r;
}

PiTable pi_table_from_cells(const std::vector<PiSetting>& settings,
                            const std::vector<std::vector<std::array<double, 4>>>& cells) {
  if (cells.size() != settings.size()) throw Error(ErrorCategory::numeric, "one cell series per setting is required");
  PiTable t;
  t.draws = cells.empty() ? 0 : cells[0].size();
  if (t.draws == 0) throw Error(ErrorCategory::data, "no draws for the probability table");
  const double nd = static_cast<double>(t.draws);
  for (std::size_t s = 0; s < settings.size(); ++s) {
    const auto& cs = cells[s];
    if (cs.size() != t.draws) throw Error(ErrorCategory::numeric, "settings have different draw counts");
    std::array<double, 4> avg{};
    for (const auto& c : cs)
      for (int k = 0; k < 4; ++k) avg[static_cast<std::size_t>(k)] += c[static_cast<std::size_t>(k)];
    for (auto& v : avg) v /= nd;
    PiRow row = pi_row(avg, settings[s].label);
    std::vector<double> mg(t.draws), mr(t.draws), ors(t.draws);
    std::array<std::vector<double>, 4> per_cell;
    for (auto& v : per_cell) v.resize(t.draws);
    for (std::size_t d = 0; d < t.draws; ++d) {
      const auto& c = cs[d];
      mg[d] = c[2] + c[3];
      mr[d] = c[1] + c[3];
      ors[d] = (c[0] * c[3]) / (c[1] * c[2]);
      for (std::size_t k = 0; k < 4; ++k) per_cell[k][d] = c[k];
    }
    for (std::size_t k = 0; k < 4; ++k) row.cells_sd[k] = sd_of(per_cell[k], avg[k]);
    row.marginal_g_sd = sd_of(mg, mean_of(mg));
    row.marginal_r_sd = sd_of(mr, mean_of(mr));
    row.draw_or_mean = mean_of(ors);
    row.draw_or_sd = sd_of(ors, row.draw_or_mean);
    t.rows.push_back(std::move(row));
  }

  // Group settings and contrast each with its group's reference.
  std::vector<std::string> group(settings.size());
  for (std::size_t s = 0; s < settings.size(); ++s) {
    group[s] = settings[s].group;
    if (group[s].empty()) {
      for (const auto& o : settings[s].overrides) group[s] += (group[s].empty() ? "" : ",") + o.column;
    }
  }
  std::map<std::string, std::size_t> reference;
  for (std::size_t s = 0; s < settings.size(); ++s) {
    if (group[s].empty()) continue;
    if (settings[s].reference) {
      const auto it = reference.find(group[s]);
      if (it != reference.end() && settings[it->second].reference)
        throw Error(ErrorCategory::config, "group '" + group[s] + "' has more than one reference setting");
      reference[group[s]] = s;
    } else if (!reference.count(group[s])) {
      reference[group[s]] = s;
    }
  }
  for (std::size_t s = 0; s < settings.size(); ++s) {
    if (group[s].empty()) continue;
    const std::size_t ref = reference.at(group[s]);
    if (ref == s) continue;
    PiContrast c;
    c.label = settings[s].label;
    c.reference = settings[ref].label;
    std::vector<double> dg(t.draws), dr(t.draws);
    for (std::size_t d = 0; d < t.draws; ++d) {
      dg[d] = (cells[s][d][2] + cells[s][d][3]) - (cells[ref][d][2] + cells[ref][d][3]);
      dr[d] = (cells[s][d][1] + cells[s][d][3]) - (cells[ref][d][1] + cells[ref][d][3]);
    }
    c.diff_g = mean_of(dg);
    c.diff_r = mean_of(dr);
    c.diff_g_sd = sd_of(dg, c.diff_g);
    c.diff_r_sd = sd_of(dr, c.diff_r);
    std::array<double, 3> lo, hi;
    intervals(dg, lo, hi);
    c.stars_g = stars_for(lo, hi);
    intervals(dr, lo, hi);
    c.stars_r = stars_for(lo, hi);
    t.contrasts.push_back(std::move(c));
  }
  return t;
}

std::vector<std::vector<std::array<double, 4>>> pi_cells(const PosteriorDraws& draws, const Dataset& data,
                                                         const std::vector<PiSetting>& settings, int threads) {
  const std::size_t q = data.q(), n = data.n();
  if (draws.covariate_names != data.covariate_names)
    throw Error(ErrorCategory::schema, "draws and dataset have different covariates");
  // Resolve overrides to column indices.
  std::vector<std::vector<std::pair<std::size_t, double>>> resolved(settings.size());
  for (std::size_t s = 0; s < settings.size(); ++s) {
    for (const auto& o : settings[s].overrides) {
      const auto it = std::find(data.covariate_names.begin(), data.covariate_names.end(), o.column);
      if (it == data.covariate_names.end())
        throw Error(ErrorCategory::schema, "override refers to unknown covariate '" + o.column + "'");
      if (it == data.covariate_names.begin())
        throw Error(ErrorCategory::schema, "the intercept column cannot be overridden");
      if (!std::isfinite(o.value)) throw Error(ErrorCategory::config, "override value must be finite");
      resolved[s].emplace_back(static_cast<std::size_t>(it - data.covariate_names.begin()), o.value);
    }
  }
  // Flatten the pooled draws.
  std::vector<std::pair<std::size_t, std::size_t>> index;
  for (std::size_t c = 0; c < draws.chains.size(); ++c)
    for (std::size_t d = 0; d < draws.chains[c].size(); ++d) index.emplace_back(c, d);
  const std::size_t nd = index.size();
  std::vector<std::vector<std::array<double, 4>>> out(settings.size(), std::vector<std::array<double, 4>>(nd));

  Eigen::MatrixXd Xs = data.X;
  for (std::size_t s = 0; s < settings.size(); ++s) {
    Xs = data.X;
    for (const auto& [col, v] : resolved[s]) Xs.col(static_cast<Eigen::Index>(col)).setConstant(v);
#pragma omp parallel for schedule(static) num_threads(std::max(1, threads))
    for (std::size_t k = 0; k < nd; ++k) {
      const StructuralParams psi = draws.draw(index[k].first, index[k].second);
      Eigen::MatrixXd G(static_cast<Eigen::Index>(q), 3);
      G << psi.gamma_01, psi.gamma_10, psi.gamma_11;
      const Eigen::MatrixXd lp = Xs * G;
      std::array<double, 4> acc{};
      for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double l1 = lp(ii, 0), l2 = lp(ii, 1), l3 = lp(ii, 2);
        const double mx = std::max({0.0, l1, l2, l3});
        const double e0 = std::exp(-mx), e1 = std::exp(l1 - mx), e2 = std::exp(l2 - mx), e3 = std::exp(l3 - mx);
        const double inv = 1.0 / (e0 + e1 + e2 + e3);
        acc[0] += e0 * inv;
        acc[1] += e1 * inv;
        acc[2] += e2 * inv;
        acc[3] += e3 * inv;
      }
      for (auto& v : acc) v /= static_cast<double>(n);
      out[s][k] = acc;
    }
  }
  return out;
}

PiTable pi_table(const PosteriorDraws& draws, const Dataset& data, const std::vector<PiSetting>& settings,
                 int threads) {
  return pi_table_from_cells(settings, pi_cells(draws, data, settings, threads));
}

std::string stars_string(int stars) { return std::string(static_cast<std::size_t>(std::max(0, stars)), '*'); }

namespace {

std::string num(double v, int prec = 6) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

std::string fixed(double v, int prec) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

std::string signed_fixed(double v, int prec) {
  std::string s = fixed(v, prec);
  return v >= 0.0 ? "+" + s : s;
}

}  // namespace

void write_summary_csv(std::ostream& os, const SummaryTable& t) {
  os << "parameter,mean,sd";
  for (double lvl : kIntervalLevels) {
    const int pct = static_cast<int>(std::lround(lvl * 100));
    os << ",lower" << pct << ",upper" << pct;
  }
  os << ",rhat,ess,stars\n";
  for (const auto& r : t.rows) {
    os << r.name << ',' << num(r.mean, 10) << ',' << num(r.sd, 10);
    for (std::size_t k = 0; k < 3; ++k) os << ',' << num(r.lower[k], 10) << ',' << num(r.upper[k], 10);
    os << ',' << num(r.rhat, 6) << ',' << num(r.ess, 6) << ',' << stars_string(r.stars) << '\n';
  }
}

void write_summary_text(std::ostream& os, const SummaryTable& t) {
  std::size_t w = 9;
  for (const auto& r : t.rows) w = std::max(w, r.name.size());
  os << t.chains << " chain(s), " << t.total_draws << " draws\n";
  os << std::left << std::setw(static_cast<int>(w)) << "parameter" << std::right << std::setw(13) << "mean"
     << std::setw(10) << "(sd)" << std::setw(22) << "95% interval" << std::setw(9) << "rhat" << std::setw(9) << "ess"
     << '\n';
  for (const auto& r : t.rows) {
    os << std::left << std::setw(static_cast<int>(w)) << r.name << std::right << std::setw(9) << fixed(r.mean, 3)
       << std::left << std::setw(4) << stars_string(r.stars) << std::right << std::setw(10)
       << ("(" + fixed(r.sd, 3) + ")") << std::setw(22) << ("[" + fixed(r.lower[1], 3) + ", " + fixed(r.upper[1], 3) + "]")
       << std::setw(9) << fixed(r.rhat, 3) << std::setw(9) << fixed(r.ess, 0) << '\n';
  }
  os << "Intervals exclude zero at 90% (*), 95% (**) or 99% (***).\n";
}

void write_pi_table_csv(std::ostream& os, const PiTable& t) {
  os << "setting,p00,p01,p10,p11,odds_ratio,p_g1,p_r1,p_g1_sd,p_r1_sd,draw_or_mean,draw_or_sd\n";
  for (const auto& r : t.rows) {
    os << r.label;
    for (double c : r.cells) os << ',' << num(c, 10);
    os << ',' << num(r.odds_ratio, 10) << ',' << num(r.marginal_g, 10) << ',' << num(r.marginal_r, 10) << ','
       << num(r.marginal_g_sd, 10) << ',' << num(r.marginal_r_sd, 10) << ',' << num(r.draw_or_mean, 10) << ','
       << num(r.draw_or_sd, 10) << '\n';
  }
  if (!t.contrasts.empty()) {
    os << "\ncontrast,reference,diff_g1,diff_g1_sd,stars_g1,diff_r1,diff_r1_sd,stars_r1\n";
    for (const auto& c : t.contrasts)
      os << c.label << ',' << c.reference << ',' << num(c.diff_g, 10) << ',' << num(c.diff_g_sd, 10) << ','
         << stars_string(c.stars_g) << ',' << num(c.diff_r, 10) << ',' << num(c.diff_r_sd, 10) << ','
         << stars_string(c.stars_r) << '\n';
  }
}

void write_pi_table_text(std::ostream& os, const PiTable& t) {
  std::size_t w = 7;
  for (const auto& r : t.rows) w = std::max(w, r.label.size());
  std::map<std::string, const PiContrast*> by_label;
  for (const auto& c : t.contrasts) by_label[c.label] = &c;
  os << std::left << std::setw(static_cast<int>(w)) << "setting" << std::right << std::setw(7) << "(0,0)"
     << std::setw(7) << "(0,1)" << std::setw(7) << "(1,0)" << std::setw(7) << "(1,1)" << std::setw(8) << "OR"
     << std::setw(8) << "p(G=1)" << std::setw(16) << "diff (sd)" << std::setw(8) << "p(R=1)" << std::setw(16)
     << "diff (sd)" << '\n';
  for (const auto& r : t.rows) {
    os << std::left << std::setw(static_cast<int>(w)) << r.label << std::right;
    for (double c : r.cells) os << std::setw(7) << fixed(c, 2);
    os << std::setw(8) << fixed(r.odds_ratio, 1) << std::setw(8) << fixed(r.marginal_g, 2);
    const auto it = by_label.find(r.label);
    if (it != by_label.end()) {
      const PiContrast& c = *it->second;
      os << std::setw(16) << (signed_fixed(c.diff_g, 2) + stars_string(c.stars_g) + " (" + fixed(c.diff_g_sd, 2) + ")");
      os << std::setw(8) << fixed(r.marginal_r, 2);
      os << std::setw(16) << (signed_fixed(c.diff_r, 2) + stars_string(c.stars_r) + " (" + fixed(c.diff_r_sd, 2) + ")");
    } else {
      os << std::setw(16) << "" << std::setw(8) << fixed(r.marginal_r, 2);
    }
    os << '\n';
  }
  os << t.draws << " posterior draws; OR from the averaged cells.\n";
}

}  // namespace zidyad
