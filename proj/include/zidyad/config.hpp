#pragma once

// INI-style run configuration. Sections:
//   [dataset]     path, covariates, z_columns, items_g, items_r, missing_token, add_intercept
//   [measurement] anchor_g, anchor_r, free_g, free_r, quad_order, max_iter, grad_tol, threads
//   [prior]       sigma2_beta, sigma2_gamma, wishart_scale, wishart_df
//   [chain]       iterations, burn_in, thin, chains, seed, threads, ars_max_iter
//   [simulate]    n, seed, threads, covariates, z_columns, measurement, structural,
//                 missing_g, missing_r, linked_column, linked_extra_g, linked_extra_r
//   [pi_table]    sample, setting1, setting2, ...

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "zidyad/diagnostics.hpp"
#include "zidyad/io.hpp"
#include "zidyad/measurement_fit.hpp"
#include "zidyad/mcmc.hpp"
#include "zidyad/simulate.hpp"

namespace zidyad {

struct SimulateConfig {
  std::size_t n = 0;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::vector<CovariateGenerator> covariates;  // excluding the intercept
  std::vector<std::string> z_columns;
  std::string measurement_path;
  std::string structural_path;
  std::vector<double> missing_g, missing_r;
  std::optional<LinkedMissingness> linked;
  std::string linked_column;
};

struct Config {
  std::string source;        // file path, or empty
  std::string canonical;     // sorted section.key=value lines
  std::string dataset_path;  // relative paths resolve against the config file
  DatasetSchema schema;
  bool has_dataset = false;

  // Measurement pattern: anchor per block, free (item, Z column) pairs.
  std::string anchor_g, anchor_r;
  std::vector<std::pair<std::string, std::string>> free_g, free_r;
  FitOptions fit;

  PriorSpec prior;
  ChainConfig chain;
  std::optional<std::uint64_t> seed;

  SimulateConfig simulate;
  bool has_simulate = false;

  bool pi_sample_row = true;
  std::vector<PiSetting> pi_settings;

  /// SHA-256 of the canonical form.
  std::string hash() const;
  /// Pattern for fit-measurement from the dataset item names.
  MeasurementParams measurement_pattern(const Dataset& data) const;
};

Config parse_config(const std::string& text, const std::string& source = {});
Config load_config(const std::string& path);

/// "label: col=value, col=value [; group=name] [; reference]".
PiSetting parse_pi_setting(const std::string& spec);

}  // namespace zidyad
