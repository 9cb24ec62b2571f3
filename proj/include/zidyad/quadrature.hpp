#pragma once

#include <cstddef>
#include <vector>

namespace zidyad {

/// Gauss-Hermite rule for the weight exp(-x^2): sum_k w_k f(x_k) ~ int f(x) e^{-x^2} dx.
struct GaussHermiteRule {
  std::vector<double> nodes;    // ascending
  std::vector<double> weights;
  std::vector<double> log_weights;
};

/// Cached per order; order >= 1. Thread-safe.
const GaussHermiteRule& gauss_hermite(std::size_t order);

/// Computed afresh (Newton iteration on the orthonormal Hermite recurrence).
GaussHermiteRule compute_gauss_hermite(std::size_t order);

}  // namespace zidyad
