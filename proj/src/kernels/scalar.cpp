#include <algorithm>
#include <cmath>

#include "zidyad/kernels.hpp"

namespace zidyad::kernels::scalar {

namespace {

// softplus(t) = log(1 + e^t) and sigmoid(t), sharing one exp.
inline void softplus_sigmoid_one(double t, double& sp, double& sig) {
  const double e = std::exp(-std::abs(t));
  sp = std::max(t, 0.0) + std::log1p(e);
  const double inv = 1.0 / (1.0 + e);
  sig = t >= 0.0 ? inv : e * inv;
}

}  // namespace

LogitMoments logit_moments(const double* offset, const double* slope, std::size_t n, double x) {
  LogitMoments m;
  for (std::size_t i = 0; i < n; ++i) {
    double sp, sig;
    softplus_sigmoid_one(offset[i] + x * slope[i], sp, sig);
    m.softplus += sp;
    m.first += slope[i] * sig;
    m.second += slope[i] * slope[i] * sig * (1.0 - sig);
  }
  return m;
}

double softplus_sum(const double* offset, const double* slope, std::size_t n, double x) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = offset[i] + x * slope[i];
    s += std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
  }
  return s;
}

void mnl_offsets(const double* const lp[4], int cell, const double* x, double g, std::size_t n,
                 double* out) {
  int others[3];
  for (int c = 0, k = 0; c < 4; ++c)
    if (c != cell) others[k++] = c;
  const double* a = lp[others[0]];
  const double* b = lp[others[1]];
  const double* c = lp[others[2]];
  const double* own = lp[cell];
  for (std::size_t i = 0; i < n; ++i) {
    const double m = std::max(a[i], std::max(b[i], c[i]));
    const double lse = m + std::log(std::exp(a[i] - m) + std::exp(b[i] - m) + std::exp(c[i] - m));
    out[i] = (own[i] - g * x[i]) - lse;
  }
}

void softplus_sigmoid(const double* t, std::size_t n, double* softplus, double* sigmoid) {
  for (std::size_t i = 0; i < n; ++i) softplus_sigmoid_one(t[i], softplus[i], sigmoid[i]);
}

}  // namespace zidyad::kernels::scalar
