#pragma once

// File formats: CSV datasets, text parameter files and the columnar draws file.

#include <fstream>
#include <iosfwd>
#include <string>
#include <vector>

#include "zidyad/mcmc.hpp"
#include "zidyad/types.hpp"

namespace zidyad {

struct DatasetSchema {
  std::vector<std::string> covariates;  // CSV columns, intercept excluded when add_intercept
  std::vector<std::string> z_columns;   // subset of covariates
  std::vector<std::string> items_g;
  std::vector<std::string> items_r;
  std::string missing_token = "NA";
  bool add_intercept = true;  // prepend a constant column named "intercept"
};

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& what);

Dataset read_dataset(std::istream& is, const DatasetSchema& schema, const std::string& source = "<stream>");
Dataset load_dataset(const std::string& path, const DatasetSchema& schema);

/// Writes every covariate except the leading intercept, then the items.
/// A non-empty run id is written as a leading "# run <id>" line (skipped on read).
void write_dataset(std::ostream& os, const Dataset& data, const std::string& missing_token = "NA",
                   const std::string& run_id = {});
void save_dataset(const std::string& path, const Dataset& data, const std::string& missing_token = "NA",
                  const std::string& run_id = {});
/// Schema that reads back a file produced by write_dataset.
DatasetSchema schema_for(const Dataset& data, const std::string& missing_token = "NA");

void write_latent_state(std::ostream& os, const LatentState& s);
LatentState read_latent_state(std::istream& is);

void write_measurement(std::ostream& os, const MeasurementParams& phi, const std::string& run_id = {});
MeasurementParams read_measurement(std::istream& is);
MeasurementParams load_measurement(const std::string& path);

void write_structural(std::ostream& os, const StructuralParams& psi, const std::vector<std::string>& covariates,
                      const std::string& run_id = {});
StructuralParams read_structural(std::istream& is, const std::vector<std::string>& covariates);
StructuralParams load_structural(const std::string& path, const std::vector<std::string>& covariates);

struct DrawsHeader {
  std::string run_id;
};

void write_draws(std::ostream& os, const PosteriorDraws& draws, const std::string& run_id = {});
PosteriorDraws read_draws(std::istream& is, DrawsHeader* header = nullptr);
PosteriorDraws load_draws(const std::string& path, DrawsHeader* header = nullptr);

/// Opens with exceptions mapped to Error(io).
std::ifstream open_input(const std::string& path);
std::ofstream open_output(const std::string& path);

std::vector<std::string> split_list(const std::string& s, char sep = ',');
std::string trim(const std::string& s);

}  // namespace zidyad
