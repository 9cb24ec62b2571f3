#pragma once

// Convergence diagnostics, posterior summaries and fitted class-probability
// tables computed from stored draws.

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "zidyad/mcmc.hpp"
#include "zidyad/types.hpp"

namespace zidyad {

struct Convergence {
  double rhat = 0.0;  // +inf when some split chain has zero variance
  double ess = 0.0;
};

/// Split-chain R-hat and multi-chain ESS (Geyer initial monotone sequence).
/// Requires at least 2 chains of at least 100 draws of equal length.
Convergence rhat_ess(std::span<const std::vector<double>> chains);
Convergence rhat_ess(const PosteriorDraws& draws, std::size_t param);

inline constexpr std::array<double, 3> kIntervalLevels{0.90, 0.95, 0.99};

/// Type-7 quantile of sorted data.
double quantile_sorted(std::span<const double> sorted, double p);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  std::array<double, 3> lower{};
  std::array<double, 3> upper{};
  double rhat = 0.0;  // NaN when the draws are too few for diagnostics
  double ess = 0.0;
  int stars = 0;  // highest level whose interval excludes zero: 1, 2, 3 for 90, 95, 99%
};

struct SummaryTable {
  std::vector<ParameterSummary> rows;
  std::size_t total_draws = 0;
  std::size_t chains = 0;
};

/// Summary of pooled draws of one quantity.
ParameterSummary summarize_values(std::string name, std::span<const std::vector<double>> chains);
SummaryTable summarize(const PosteriorDraws& draws);

struct CovariateOverride {
  std::string column;
  double value = 0.0;
};

struct PiSetting {
  std::string label;
  std::vector<CovariateOverride> overrides;  // empty: sample values
  // Settings sharing a group are contrasted with the group's reference
  // (the first one unless another is marked). Empty group: the override
  // column names joined by commas.
  std::string group;
  bool reference = false;
};

struct PiRow {
  std::string label;
  std::array<double, 4> cells{};     // averaged over dyads and draws: 00, 01, 10, 11
  std::array<double, 4> cells_sd{};  // across draws
  double odds_ratio = 0.0;           // from the averaged cells
  double marginal_g = 0.0;           // cells 10 + 11
  double marginal_r = 0.0;           // cells 01 + 11
  double marginal_g_sd = 0.0;
  double marginal_r_sd = 0.0;
  double draw_or_mean = 0.0;  // mean and SD of the per-draw odds ratios
  double draw_or_sd = 0.0;
};

struct PiContrast {
  std::string label;
  std::string reference;
  double diff_g = 0.0;
  double diff_g_sd = 0.0;
  int stars_g = 0;
  double diff_r = 0.0;
  double diff_r_sd = 0.0;
  int stars_r = 0;
};

struct PiTable {
  std::vector<PiRow> rows;
  std::vector<PiContrast> contrasts;
  std::size_t draws = 0;
};

/// Odds ratio and marginals of a single cell vector.
PiRow pi_row(const std::array<double, 4>& cells, std::string label = {});

/// Assembles the table from dyad-averaged cells per setting and draw
/// (cells[s][d]).
PiTable pi_table_from_cells(const std::vector<PiSetting>& settings,
                            const std::vector<std::vector<std::array<double, 4>>>& cells);

/// Dyad-averaged cell probabilities for every setting and pooled draw.
std::vector<std::vector<std::array<double, 4>>> pi_cells(const PosteriorDraws& draws, const Dataset& data,
                                                         const std::vector<PiSetting>& settings, int threads = 1);

PiTable pi_table(const PosteriorDraws& draws, const Dataset& data, const std::vector<PiSetting>& settings,
                 int threads = 1);

std::string stars_string(int stars);

void write_summary_csv(std::ostream& os, const SummaryTable& t);
void write_summary_text(std::ostream& os, const SummaryTable& t);
void write_pi_table_csv(std::ostream& os, const PiTable& t);
void write_pi_table_text(std::ostream& os, const PiTable& t);

}  // namespace zidyad
