#include "zidyad/simulate.hpp"

#include <cmath>
#include <exception>
#include <mutex>

#include "zidyad/error.hpp"
#include "zidyad/model.hpp"
#include "zidyad/rng.hpp"

namespace zidyad {

std::string_view to_string(CovariateGenerator::Kind k) noexcept {
  switch (k) {
    case CovariateGenerator::Kind::constant: return "constant";
    case CovariateGenerator::Kind::binary: return "binary";
    case CovariateGenerator::Kind::continuous: return "continuous";
  }
  return "unknown";
}

CovariateGenerator::Kind parse_covariate_kind(const std::string& s) {
  if (s == "constant") return CovariateGenerator::Kind::constant;
  if (s == "binary") return CovariateGenerator::Kind::binary;
  if (s == "continuous") return CovariateGenerator::Kind::continuous;
  throw Error(ErrorCategory::config, "unknown covariate generator '" + s + "'");
}

void SimSpec::validate() const {
  const auto bad = [](const std::string& m) { throw Error(ErrorCategory::config, m); };
  if (n == 0) bad("simulation needs at least one dyad");
  if (covariates.empty() || covariates[0].kind != CovariateGenerator::Kind::constant)
    bad("the first covariate must be the constant intercept");
  for (const auto& c : covariates)
    if (c.kind == CovariateGenerator::Kind::binary && !(c.probability >= 0.0 && c.probability <= 1.0))
      bad("binary covariate '" + c.name + "' has a probability outside [0, 1]");
  for (auto c : z_cols)
    if (c == 0 || c >= covariates.size()) bad("non-equivalence column index out of range");
  if (phi.z_names.size() != z_cols.size()) bad("measurement parameters do not match the non-equivalence columns");
  phi.validate();
  psi.validate();
  if (psi.q() != covariates.size()) bad("structural parameters do not match the covariate count");
  for (const auto* m : {&missing_g, &missing_r})
    for (double p : *m)
      if (!(p >= 0.0 && p <= 1.0)) bad("missing probability outside [0, 1]");
  if (!missing_g.empty() && missing_g.size() != phi.items_g.size()) bad("missing_g length differs from item count");
  if (!missing_r.empty() && missing_r.size() != phi.items_r.size()) bad("missing_r length differs from item count");
  if (linked) {
    if (linked->column >= covariates.size()) bad("linked missingness column out of range");
    for (double p : {linked->extra_g, linked->extra_r})
      if (!(p >= 0.0 && p <= 1.0)) bad("linked missing probability outside [0, 1]");
  }
}

SimResult simulate(const SimSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n, q = spec.covariates.size();
  const std::size_t pg = spec.phi.items_g.size(), pr = spec.phi.items_r.size();
  const StructuralParams& psi = spec.psi;

  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q));
  ItemMatrix yg, yr;
  yg.rows = yr.rows = n;
  yg.cols = pg;
  yr.cols = pr;
  yg.values.assign(n * pg, 0);
  yr.values.assign(n * pr, 0);
  for (const auto& it : spec.phi.items_g) yg.names.push_back(it.name);
  for (const auto& it : spec.phi.items_r) yr.names.push_back(it.name);

  SimResult out;
  LatentState& truth = out.truth;
  truth.xi_g.resize(n);
  truth.xi_r.resize(n);
  truth.eta_g.resize(n);
  truth.eta_r.resize(n);
  std::vector<std::uint8_t> redrawn(n, 0);

  const double sg = std::sqrt(psi.sigma2_g), sr = std::sqrt(psi.sigma2_r);
  const double rho = psi.rho_gr;

  std::exception_ptr first;
  std::size_t first_index = n;
  std::mutex mutex;
#pragma omp parallel for schedule(static) num_threads(std::max(1, spec.threads))
  for (std::size_t i = 0; i < n; ++i) {
    try {
      Rng rng(spec.seed, 0, 0, static_cast<std::uint32_t>(i), StreamPurpose::simulate);
      const auto ii = static_cast<Eigen::Index>(i);
      std::vector<double> x(q);
      for (std::size_t r = 0; r < q; ++r) {
        const auto& g = spec.covariates[r];
        switch (g.kind) {
          case CovariateGenerator::Kind::constant: x[r] = 1.0; break;
          case CovariateGenerator::Kind::binary: x[r] = rng.uniform() < g.probability ? 1.0 : 0.0; break;
          case CovariateGenerator::Kind::continuous: x[r] = rng.normal(); break;
        }
        X(ii, static_cast<Eigen::Index>(r)) = x[r];
      }
      // Class pair.
      const auto probs = xi_probs(x, psi);
      const double u = rng.uniform();
      int cell = 3;
      double cum = 0.0;
      for (int c = 0; c < 4; ++c) {
        cum += probs[static_cast<std::size_t>(c)];
        if (u < cum) {
          cell = c;
          break;
        }
      }
      truth.xi_g[i] = static_cast<std::uint8_t>(cell >> 1);
      truth.xi_r[i] = static_cast<std::uint8_t>(cell & 1);
      // Traits, independent of the classes given x.
      double mg = 0.0, mr = 0.0;
      for (std::size_t r = 0; r < q; ++r) {
        mg += psi.beta_g[static_cast<Eigen::Index>(r)] * x[r];
        mr += psi.beta_r[static_cast<Eigen::Index>(r)] * x[r];
      }
      const double e1 = rng.normal(), e2 = rng.normal();
      truth.eta_g[i] = mg + sg * e1;
      truth.eta_r[i] = mr + sr * (rho * e1 + std::sqrt(1.0 - rho * rho) * e2);

      std::vector<double> z(spec.z_cols.size());
      for (std::size_t c = 0; c < z.size(); ++c) z[c] = x[spec.z_cols[c]];
      const auto fill = [&](const std::vector<ItemMeasurement>& items, int xi, double eta, ItemMatrix& m) {
        for (std::size_t j = 0; j < items.size(); ++j) {
          const double p = item_prob(items[j], eta, z);
          const double uu = rng.uniform();
          m(i, j) = static_cast<std::int8_t>(xi == 1 && uu < p ? 1 : 0);
        }
      };
      fill(spec.phi.items_g, truth.xi_g[i], truth.eta_g[i], yg);
      fill(spec.phi.items_r, truth.xi_r[i], truth.eta_r[i], yr);

      // Missingness mask; redrawn while both blocks would be empty.
      const bool linked_on = spec.linked && x[spec.linked->column] != 0.0;
      const std::vector<std::int8_t> full_g(yg.values.begin() + static_cast<std::ptrdiff_t>(i * pg),
                                            yg.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * pg));
      const std::vector<std::int8_t> full_r(yr.values.begin() + static_cast<std::ptrdiff_t>(i * pr),
                                            yr.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * pr));
      const bool any_missing = !spec.missing_g.empty() || !spec.missing_r.empty() || linked_on;
      for (int attempt = 0; any_missing; ++attempt) {
        if (attempt == 1000) throw Error(ErrorCategory::config, "missingness rule leaves dyads with no observed items");
        bool observed = false;
        for (std::size_t j = 0; j < pg; ++j) {
          double p = spec.missing_g.empty() ? 0.0 : spec.missing_g[j];
          if (linked_on) p = p + (1.0 - p) * spec.linked->extra_g;
          const bool miss = rng.uniform() < p;
          yg(i, j) = miss ? kMissing : full_g[j];
          observed |= !miss;
        }
        for (std::size_t j = 0; j < pr; ++j) {
          double p = spec.missing_r.empty() ? 0.0 : spec.missing_r[j];
          if (linked_on) p = p + (1.0 - p) * spec.linked->extra_r;
          const bool miss = rng.uniform() < p;
          yr(i, j) = miss ? kMissing : full_r[j];
          observed |= !miss;
        }
        if (observed) break;
        redrawn[i] = 1;
      }
    } catch (...) {
      std::lock_guard lock(mutex);
      if (i < first_index) {
        first_index = i;
        first = std::current_exception();
      }
    }
  }
  if (first) std::rethrow_exception(first);
  for (auto r : redrawn) out.mask_redraws += r;

  std::vector<std::string> names;
  for (const auto& c : spec.covariates) names.push_back(c.name);
  out.data = make_dataset(std::move(names), std::move(X), spec.z_cols, std::move(yg), std::move(yr));
  return out;
}

}  // namespace zidyad
