#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace zidyad {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). The output
/// stream is a pure function of (key, counter), so draws for a given
/// (seed, chain, iteration, dyad, purpose) do not depend on thread scheduling.
class Philox4x32 {
 public:
  using result_type = std::uint64_t;
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32(Key key, Counter counter) : key_(key), ctr_(counter) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (avail_ == 0) refill();
    --avail_;
    return buf_[avail_];
  }

  /// The raw 10-round bijection, exposed for known-answer tests.
  static Counter block(Counter ctr, Key key);

 private:
  void refill();

  Key key_;
  Counter ctr_;  // ctr_[0] advances per block
  std::array<result_type, 2> buf_{};
  int avail_ = 0;
};

/// What a random stream is used for; part of the counter so purposes never collide.
enum class StreamPurpose : std::uint32_t {
  impute_xi = 1,
  impute_eta = 2,
  beta = 3,
  sigma = 4,
  gamma = 5,
  simulate = 6,
  init = 7,
  test = 15,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Engine plus the distributions the samplers need.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint32_t chain, std::uint32_t iteration, std::uint32_t index,
      StreamPurpose purpose);

  double uniform() { return std::generate_canonical<double, 53>(engine_); }
  /// Uniform on the open interval (0, 1).
  double uniform_pos();
  double normal() { return normal_(engine_); }
  double gamma(double shape, double scale) {
    return std::gamma_distribution<double>(shape, scale)(engine_);
  }
  double chi_squared(double df) { return gamma(0.5 * df, 2.0); }
  Philox4x32& engine() { return engine_; }

 private:
  Philox4x32 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace zidyad
