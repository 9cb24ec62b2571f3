#include <cstdlib>
#include <string>

#include "zidyad/error.hpp"
#include "zidyad/kernels.hpp"

namespace zidyad::kernels {

namespace {

constexpr KernelTable kScalar{&scalar::logit_moments, &scalar::softplus_sum, &scalar::mnl_offsets,
                              &scalar::softplus_sigmoid};

#if defined(ZIDYAD_HAS_AVX2)
constexpr KernelTable kAvx2{&avx2::logit_moments, &avx2::softplus_sum, &avx2::mnl_offsets,
                            &avx2::softplus_sigmoid};
#endif

Isa detect() noexcept {
  if (const char* env = std::getenv("ZIDYAD_SIMD"); env && std::string(env) == "scalar") return Isa::scalar;
  if (isa_available(Isa::avx2)) return Isa::avx2;
  return Isa::scalar;
}

}  // namespace

bool isa_available(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(ZIDYAD_HAS_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!isa_available(isa)) throw Error(ErrorCategory::config, "kernel variant not available on this CPU");
#if defined(ZIDYAD_HAS_AVX2)
  if (isa == Isa::avx2) return kAvx2;
#endif
  return kScalar;
}

Isa active_isa() noexcept {
  static const Isa isa = detect();
  return isa;
}

const KernelTable& active() noexcept {
  static const KernelTable& t = table(active_isa());
  return t;
}

std::string_view to_string(Isa isa) noexcept {
  return isa == Isa::avx2 ? "avx2" : "scalar";
}

}  // namespace zidyad::kernels
