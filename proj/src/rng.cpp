#include "zidyad/rng.hpp"

namespace zidyad {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

Philox4x32::Counter Philox4x32::block(Counter c, Key k) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c[0], hi0, lo0);
    mulhilo(kMul1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kWeyl0;
    k[1] += kWeyl1;
  }
  return c;
}

void Philox4x32::refill() {
  const Counter out = block(ctr_, key_);
  buf_[0] = (static_cast<result_type>(out[0]) << 32) | out[1];
  buf_[1] = (static_cast<result_type>(out[2]) << 32) | out[3];
  avail_ = 2;
  ++ctr_[0];
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint32_t chain, std::uint32_t iteration, std::uint32_t index,
         StreamPurpose purpose)
    : engine_(
          [&] {
            const std::uint64_t k = splitmix64(seed ^ splitmix64(chain));
            return Philox4x32::Key{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
          }(),
          Philox4x32::Counter{0u, index, iteration, static_cast<std::uint32_t>(purpose)}) {}

double Rng::uniform_pos() {
  double u;
  do {
    u = uniform();
  } while (u <= 0.0 || u >= 1.0);
  return u;
}

}  // namespace zidyad
