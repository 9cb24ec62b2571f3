#pragma once

// Forward simulation from fully specified (phi, psi).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "zidyad/types.hpp"

namespace zidyad {

struct CovariateGenerator {
  enum class Kind { constant, binary, continuous };
  std::string name;
  Kind kind = Kind::constant;
  double probability = 0.5;  // binary only
};

/// Extra missingness for dyads whose covariate `column` is nonzero.
struct LinkedMissingness {
  std::size_t column = 0;
  double extra_g = 0.0;
  double extra_r = 0.0;
};

struct SimSpec {
  std::size_t n = 0;
  std::vector<CovariateGenerator> covariates;  // first must be the constant intercept
  std::vector<std::size_t> z_cols;
  MeasurementParams phi;
  StructuralParams psi;
  std::vector<double> missing_g;  // per-item missing probability (empty = none)
  std::vector<double> missing_r;
  std::optional<LinkedMissingness> linked;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

struct SimResult {
  Dataset data;
  LatentState truth;
  std::size_t mask_redraws = 0;  // dyads whose mask left both blocks empty
};

/// Deterministic for a fixed seed regardless of `threads`.
SimResult simulate(const SimSpec& spec);

std::string_view to_string(CovariateGenerator::Kind k) noexcept;
CovariateGenerator::Kind parse_covariate_kind(const std::string& s);

}  // namespace zidyad
