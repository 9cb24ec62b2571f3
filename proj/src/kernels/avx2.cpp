// AVX2 + FMA variants. Compiled with -mavx2 -mfma; only called when the CPU
// reports both features. exp and log use the Cephes rational approximations
// (about 1 ulp over the ranges used here).

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "zidyad/kernels.hpp"

namespace zidyad::kernels::avx2 {

namespace {

inline __m256d set1(double v) { return _mm256_set1_pd(v); }

inline __m256d exp_pd(__m256d x) {
  const __m256d lo = set1(-708.39);
  const __m256d under = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  x = _mm256_min_pd(_mm256_max_pd(x, lo), set1(709.0));

  const __m256d fx = _mm256_floor_pd(_mm256_fmadd_pd(x, set1(1.4426950408889634073599), set1(0.5)));
  x = _mm256_fnmadd_pd(fx, set1(6.93145751953125E-1), x);
  x = _mm256_fnmadd_pd(fx, set1(1.42860682030941723212E-6), x);

  const __m256d xx = _mm256_mul_pd(x, x);
  __m256d px = _mm256_fmadd_pd(set1(1.26177193074810590878E-4), xx, set1(3.02994407707441961300E-2));
  px = _mm256_fmadd_pd(px, xx, set1(9.99999999999999999910E-1));
  px = _mm256_mul_pd(px, x);
  __m256d qx = _mm256_fmadd_pd(set1(3.00198505138664455042E-6), xx, set1(2.52448340349684104192E-3));
  qx = _mm256_fmadd_pd(qx, xx, set1(2.27265548208155028766E-1));
  qx = _mm256_fmadd_pd(qx, xx, set1(2.00000000000000000009E0));
  __m256d r = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  r = _mm256_fmadd_pd(set1(2.0), r, set1(1.0));

  // 2^fx through the exponent field.
  const __m128i n32 = _mm256_cvtpd_epi32(fx);
  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  n64 = _mm256_slli_epi64(_mm256_add_epi64(n64, _mm256_set1_epi64x(1023)), 52);
  r = _mm256_mul_pd(r, _mm256_castsi256_pd(n64));
  return _mm256_andnot_pd(under, r);
}

// Natural log for positive normal inputs.
inline __m256d log_pd(__m256d x) {
  const __m256i bits = _mm256_castpd_si256(x);
  // Biased exponent as a double via the 2^52 magic constant.
  const __m256i ebits = _mm256_or_si256(_mm256_srli_epi64(bits, 52), _mm256_set1_epi64x(0x4330000000000000LL));
  __m256d e = _mm256_sub_pd(_mm256_castsi256_pd(ebits), set1(4503599627370496.0 + 1022.0));
  // Mantissa in [0.5, 1).
  __m256d m = _mm256_castsi256_pd(_mm256_or_si256(_mm256_and_si256(bits, _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL)),
                                                  _mm256_set1_epi64x(0x3FE0000000000000LL)));
  const __m256d small = _mm256_cmp_pd(m, set1(0.70710678118654752440), _CMP_LT_OQ);
  e = _mm256_sub_pd(e, _mm256_and_pd(small, set1(1.0)));
  m = _mm256_add_pd(m, _mm256_and_pd(small, m));
  const __m256d f = _mm256_sub_pd(m, set1(1.0));

  __m256d p = _mm256_fmadd_pd(set1(1.01875663804580931796E-4), f, set1(4.97494994976747001425E-1));
  p = _mm256_fmadd_pd(p, f, set1(4.70579119878881725854E0));
  p = _mm256_fmadd_pd(p, f, set1(1.44989225341610930846E1));
  p = _mm256_fmadd_pd(p, f, set1(1.79368678507819816313E1));
  p = _mm256_fmadd_pd(p, f, set1(7.70838733755885391666E0));
  __m256d q = _mm256_add_pd(f, set1(1.12873587189167450590E1));
  q = _mm256_fmadd_pd(q, f, set1(4.52279145837532221105E1));
  q = _mm256_fmadd_pd(q, f, set1(8.29875266912776603211E1));
  q = _mm256_fmadd_pd(q, f, set1(7.11544750618563894466E1));
  q = _mm256_fmadd_pd(q, f, set1(2.31251620126765340583E1));

  const __m256d z = _mm256_mul_pd(f, f);
  __m256d y = _mm256_mul_pd(_mm256_mul_pd(f, z), _mm256_div_pd(p, q));
  y = _mm256_fnmadd_pd(e, set1(2.121944400546905827679e-4), y);
  y = _mm256_fnmadd_pd(set1(0.5), z, y);
  __m256d r = _mm256_add_pd(f, y);
  return _mm256_fmadd_pd(e, set1(0.693359375), r);
}

// log1p(u) for u in [0, 1], compensated so tiny u keeps full relative accuracy.
inline __m256d log1p_unit_pd(__m256d u) {
  const __m256d w = _mm256_add_pd(set1(1.0), u);
  const __m256d wm1 = _mm256_sub_pd(w, set1(1.0));
  const __m256d exact = _mm256_cmp_pd(wm1, _mm256_setzero_pd(), _CMP_EQ_OQ);
  const __m256d l = _mm256_div_pd(_mm256_mul_pd(log_pd(w), u), _mm256_blendv_pd(wm1, set1(1.0), exact));
  return _mm256_blendv_pd(l, u, exact);
}

struct SoftplusSigmoid {
  __m256d softplus;
  __m256d sigmoid;
};

inline SoftplusSigmoid softplus_sigmoid_pd(__m256d t) {
  const __m256d abs_t = _mm256_andnot_pd(set1(-0.0), t);
  const __m256d e = exp_pd(_mm256_sub_pd(_mm256_setzero_pd(), abs_t));
  const __m256d sp = _mm256_add_pd(_mm256_max_pd(t, _mm256_setzero_pd()), log1p_unit_pd(e));
  const __m256d inv = _mm256_div_pd(set1(1.0), _mm256_add_pd(set1(1.0), e));
  const __m256d nonneg = _mm256_cmp_pd(t, _mm256_setzero_pd(), _CMP_GE_OQ);
  const __m256d sig = _mm256_blendv_pd(_mm256_mul_pd(e, inv), inv, nonneg);
  return {sp, sig};
}

inline double hsum(__m256d v) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, v);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

}  // namespace

void exp(const double* in, std::size_t n, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, exp_pd(_mm256_loadu_pd(in + i)));
  for (; i < n; ++i) out[i] = std::exp(in[i]);
}

void log(const double* in, std::size_t n, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, log_pd(_mm256_loadu_pd(in + i)));
  for (; i < n; ++i) out[i] = std::log(in[i]);
}

LogitMoments logit_moments(const double* offset, const double* slope, std::size_t n, double x) {
  __m256d acc_sp = _mm256_setzero_pd(), acc_1 = _mm256_setzero_pd(), acc_2 = _mm256_setzero_pd();
  const __m256d xv = set1(x);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d s = _mm256_loadu_pd(slope + i);
    const __m256d t = _mm256_fmadd_pd(xv, s, _mm256_loadu_pd(offset + i));
    const SoftplusSigmoid r = softplus_sigmoid_pd(t);
    acc_sp = _mm256_add_pd(acc_sp, r.softplus);
    acc_1 = _mm256_fmadd_pd(s, r.sigmoid, acc_1);
    const __m256d w = _mm256_mul_pd(r.sigmoid, _mm256_sub_pd(set1(1.0), r.sigmoid));
    acc_2 = _mm256_fmadd_pd(_mm256_mul_pd(s, s), w, acc_2);
  }
  LogitMoments m{hsum(acc_sp), hsum(acc_1), hsum(acc_2)};
  if (i < n) {
    const LogitMoments tail = scalar::logit_moments(offset + i, slope + i, n - i, x);
    m.softplus += tail.softplus;
    m.first += tail.first;
    m.second += tail.second;
  }
  return m;
}

double softplus_sum(const double* offset, const double* slope, std::size_t n, double x) {
  __m256d acc = _mm256_setzero_pd();
  const __m256d xv = set1(x);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = _mm256_fmadd_pd(xv, _mm256_loadu_pd(slope + i), _mm256_loadu_pd(offset + i));
    const __m256d abs_t = _mm256_andnot_pd(set1(-0.0), t);
    const __m256d e = exp_pd(_mm256_sub_pd(_mm256_setzero_pd(), abs_t));
    acc = _mm256_add_pd(acc, _mm256_add_pd(_mm256_max_pd(t, _mm256_setzero_pd()), log1p_unit_pd(e)));
  }
  double s = hsum(acc);
  if (i < n) s += scalar::softplus_sum(offset + i, slope + i, n - i, x);
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
  const __m256d gv = set1(g);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d av = _mm256_loadu_pd(a + i);
    const __m256d bv = _mm256_loadu_pd(b + i);
    const __m256d cv = _mm256_loadu_pd(c + i);
    const __m256d m = _mm256_max_pd(av, _mm256_max_pd(bv, cv));
    __m256d s = exp_pd(_mm256_sub_pd(av, m));
    s = _mm256_add_pd(s, exp_pd(_mm256_sub_pd(bv, m)));
    s = _mm256_add_pd(s, exp_pd(_mm256_sub_pd(cv, m)));
    const __m256d lse = _mm256_add_pd(m, log_pd(s));
    const __m256d base = _mm256_fnmadd_pd(gv, _mm256_loadu_pd(x + i), _mm256_loadu_pd(own + i));
    _mm256_storeu_pd(out + i, _mm256_sub_pd(base, lse));
  }
  if (i < n) {
    const double* tail[4] = {lp[0] + i, lp[1] + i, lp[2] + i, lp[3] + i};
    scalar::mnl_offsets(tail, cell, x + i, g, n - i, out + i);
  }
}

void softplus_sigmoid(const double* t, std::size_t n, double* softplus, double* sigmoid) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const SoftplusSigmoid r = softplus_sigmoid_pd(_mm256_loadu_pd(t + i));
    _mm256_storeu_pd(softplus + i, r.softplus);
    _mm256_storeu_pd(sigmoid + i, r.sigmoid);
  }
  if (i < n) scalar::softplus_sigmoid(t + i, n - i, softplus + i, sigmoid + i);
}

}  // namespace zidyad::kernels::avx2
