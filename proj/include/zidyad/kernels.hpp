#pragma once

// Data-parallel inner loops. Each kernel has a scalar reference version and,
// on x86-64, an AVX2+FMA version; the active variant is chosen once at runtime
// from CPU features (override with ZIDYAD_SIMD=scalar).

#include <span>
#include <string_view>

namespace zidyad::kernels {

/// Sums over i of softplus(t_i), slope_i * sigmoid(t_i) and
/// slope_i^2 * sigmoid(t_i) * (1 - sigmoid(t_i)), where t_i = offset_i + x * slope_i.
struct LogitMoments {
  double softplus = 0.0;
  double first = 0.0;
  double second = 0.0;
};

enum class Isa { scalar, avx2 };

struct KernelTable {
  LogitMoments (*logit_moments)(const double* offset, const double* slope, std::size_t n, double x);
  double (*softplus_sum)(const double* offset, const double* slope, std::size_t n, double x);
  // out_i = (lp[c]_i - g * x_i) - log sum_{c' != c} exp(lp[c']_i); lp has four columns.
  void (*mnl_offsets)(const double* const lp[4], int cell, const double* x, double g, std::size_t n,
                      double* out);
  // Elementwise softplus and sigmoid.
  void (*softplus_sigmoid)(const double* t, std::size_t n, double* softplus, double* sigmoid);
};

namespace scalar {
LogitMoments logit_moments(const double* offset, const double* slope, std::size_t n, double x);
double softplus_sum(const double* offset, const double* slope, std::size_t n, double x);
void mnl_offsets(const double* const lp[4], int cell, const double* x, double g, std::size_t n,
                 double* out);
void softplus_sigmoid(const double* t, std::size_t n, double* softplus, double* sigmoid);
}  // namespace scalar

#if defined(ZIDYAD_HAS_AVX2)
namespace avx2 {
LogitMoments logit_moments(const double* offset, const double* slope, std::size_t n, double x);
double softplus_sum(const double* offset, const double* slope, std::size_t n, double x);
void mnl_offsets(const double* const lp[4], int cell, const double* x, double g, std::size_t n,
                 double* out);
void softplus_sigmoid(const double* t, std::size_t n, double* softplus, double* sigmoid);
// Exposed for accuracy tests.
void exp(const double* in, std::size_t n, double* out);
void log(const double* in, std::size_t n, double* out);
}  // namespace avx2
#endif

bool isa_available(Isa isa) noexcept;
const KernelTable& table(Isa isa);
const KernelTable& active() noexcept;
Isa active_isa() noexcept;
std::string_view to_string(Isa isa) noexcept;

inline LogitMoments logit_moments(std::span<const double> offset, std::span<const double> slope, double x) {
  return active().logit_moments(offset.data(), slope.data(), offset.size(), x);
}

}  // namespace zidyad::kernels
