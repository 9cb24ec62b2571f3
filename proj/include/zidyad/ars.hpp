#pragma once

// Tangent-based adaptive rejection sampling (Gilks & Wild 1992) for
// log-concave densities on an interval.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>

#include "zidyad/error.hpp"
#include "zidyad/rng.hpp"

namespace zidyad::ars {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr int kDefaultMaxIter = 500;

struct Support {
  double lo = -kInf;
  double hi = kInf;
  bool contains(double x) const { return x > lo && x < hi; }
};

/// Log-density (up to a constant), its derivative, and optionally its second
/// derivative (NaN when unknown) at one point.
struct Eval {
  double value = 0.0;
  double slope = 0.0;
  double curvature = std::numeric_limits<double>::quiet_NaN();
};

/// A log-concave target given as separate density and gradient callables.
struct LogConcaveTarget {
  std::function<double(double)> log_density;
  std::function<double(double)> log_density_gradient;
  Support support;

  Eval operator()(double x) const { return {log_density(x), log_density_gradient(x)}; }
};

/// Counters accumulated over sampler invocations.
struct Stats {
  std::size_t draws = 0;
  std::size_t proposals = 0;
  std::size_t evaluations = 0;
  std::size_t squeeze_accepts = 0;

  Stats& operator+=(const Stats& o) {
    draws += o.draws;
    proposals += o.proposals;
    evaluations += o.evaluations;
    squeeze_accepts += o.squeeze_accepts;
    return *this;
  }
  double acceptance_rate() const { return proposals ? static_cast<double>(draws) / proposals : 0.0; }
};

/// Piecewise-exponential upper hull from tangents plus the chord squeeze.
class Envelope {
 public:
  static constexpr std::size_t kCapacity = 64;

  explicit Envelope(Support support) : support_(support) {}

  /// Adds a tangent point. Throws Error(numeric) if the slopes stop being
  /// non-increasing (the target is not log-concave). Returns false if full
  /// or x duplicates an abscissa.
  bool insert(double x, const Eval& e);

  std::size_t size() const { return k_; }
  std::span<const double> abscissae() const { return {x_.data(), k_}; }
  std::span<const double> slopes() const { return {s_.data(), k_}; }

  /// True when the hull has finite mass over the support.
  bool integrable() const;
  void require_integrable() const;

  double upper(double x) const;
  double lower(double x) const;
  double log_mass() const { return log_total_; }
  /// Log-mass of each hull segment (segment k uses the tangent at abscissa k).
  std::span<const double> segment_log_mass() const { return {log_mass_.data(), k_}; }

  /// Draw from the normalized exp(upper) using two uniforms in (0, 1).
  double sample(double u_segment, double u_position) const;

 private:
  void rebuild();
  double left_edge(std::size_t k) const { return k == 0 ? support_.lo : z_[k - 1]; }
  double right_edge(std::size_t k) const { return k + 1 == k_ ? support_.hi : z_[k]; }

  Support support_;
  std::size_t k_ = 0;
  std::array<double, kCapacity> x_{}, h_{}, s_{};
  std::array<double, kCapacity> z_{};  // hull breakpoints, k_ - 1 used
  std::array<double, kCapacity> log_mass_{};
  double log_total_ = -kInf;
};

namespace detail {
[[noreturn]] void throw_max_iter(int max_iter);
[[noreturn]] void throw_concavity(double x, double hull, double value);
[[noreturn]] void throw_init(const std::string& what);
inline double tolerance(double v) { return 1e-8 * (1.0 + std::abs(v)); }
}  // namespace detail

/// Rejection loop on a prepared envelope.
template <class F>
double sample_from(Envelope& env, F&& target, Rng& rng, int max_iter, Stats* stats) {
  env.require_integrable();
  for (int it = 0; it < max_iter; ++it) {
    const double x = env.sample(rng.uniform_pos(), rng.uniform_pos());
    const double log_u = std::log(rng.uniform_pos());
    const double up = env.upper(x);
    if (stats) ++stats->proposals;
    if (log_u <= env.lower(x) - up) {
      if (stats) {
        ++stats->draws;
        ++stats->squeeze_accepts;
      }
      return x;
    }
    const Eval e = target(x);
    if (stats) ++stats->evaluations;
    if (up < e.value - detail::tolerance(e.value)) detail::throw_concavity(x, up, e.value);
    if (log_u <= e.value - up) {
      if (stats) ++stats->draws;
      return x;
    }
    env.insert(x, e);
  }
  detail::throw_max_iter(max_iter);
}

/// One exact draw from the normalized target, starting from the given abscissae.
template <class F>
double sample(F&& target, Support support, std::span<const double> init, Rng& rng,
              int max_iter = kDefaultMaxIter, Stats* stats = nullptr) {
  Envelope env(support);
  for (double x : init) {
    if (!support.contains(x)) detail::throw_init("initial abscissa outside the support");
    env.insert(x, target(x));
    if (stats) ++stats->evaluations;
  }
  if (env.size() < 2 && !(env.size() == 1 && std::isfinite(support.lo) && std::isfinite(support.hi)))
    detail::throw_init("at least two distinct initial abscissae are required");
  return sample_from(env, target, rng, max_iter, stats);
}

/// Mode bracketing on the real line: damped Newton steps from `start`, then
/// tangents at the mode and one local standard deviation either side
/// (pushed outward until the slopes bracket the mode). `scale` is the
/// standard deviation of the Gaussian factor in the target and bounds the
/// local scale. Requires Eval::curvature.
template <class F>
void bracket_mode(Envelope& env, F&& target, double start, double scale, Stats* stats) {
  double x = start;
  Eval e = target(x);
  if (stats) ++stats->evaluations;
  for (int it = 0; it < 30; ++it) {
    if (!(e.curvature < 0.0)) detail::throw_init("bracketing requires negative curvature");
    const double local_sd = 1.0 / std::sqrt(-e.curvature);
    double step = -e.slope / e.curvature;
    if (std::abs(step) < 0.25 * local_sd) break;
    step = std::clamp(step, -8.0 * scale, 8.0 * scale);
    Eval next = target(x + step);
    if (stats) ++stats->evaluations;
    // Halve the step until the log-density does not decrease.
    int halvings = 0;
    while (next.value < e.value && halvings < 30) {
      step *= 0.5;
      next = target(x + step);
      if (stats) ++stats->evaluations;
      ++halvings;
    }
    x += step;
    e = next;
  }
  env.insert(x, e);
  const double sd = std::min(scale, 1.0 / std::sqrt(-e.curvature));
  double offset = sd;
  for (int tries = 0; tries < 60; ++tries, offset *= 2.0) {
    const Eval l = target(x - offset);
    if (stats) ++stats->evaluations;
    env.insert(x - offset, l);
    if (l.slope > 0.0) break;
  }
  offset = sd;
  for (int tries = 0; tries < 60; ++tries, offset *= 2.0) {
    const Eval r = target(x + offset);
    if (stats) ++stats->evaluations;
    env.insert(x + offset, r);
    if (r.slope < 0.0) break;
  }
}

/// Exact draw from a log-concave target on the real line, initialized by bracket_mode.
template <class F>
double sample_auto(F&& target, double start, double scale, Rng& rng, int max_iter = kDefaultMaxIter,
                   Stats* stats = nullptr) {
  Envelope env(Support{});
  bracket_mode(env, target, start, scale, stats);
  return sample_from(env, target, rng, max_iter, stats);
}

}  // namespace zidyad::ars
