#include <atomic>
#include <cstdlib>
#include <string_view>

#include "transda/simd/kernels.hpp"

namespace transda::simd {
namespace {

Isa detect_isa() {
  if (const char* env = std::getenv("TRANSDA_SIMD")) {
    if (std::string_view(env) == "scalar") return Isa::Scalar;
  }
  return cpu_supports_avx2() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detect_isa()};
  return isa;
}

}  // namespace

bool cpu_supports_avx2() {
#if defined(TRANSDA_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (isa == Isa::Avx2 && !cpu_supports_avx2()) isa = Isa::Scalar;
  active().store(isa, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

template <>
const KernelTable<float>& kernels_for<float>(Isa isa) {
#if defined(TRANSDA_HAVE_AVX2)
  if (isa == Isa::Avx2) return avx2_kernels_f32();
#endif
  (void)isa;
  return scalar_kernels_f32();
}

template <>
const KernelTable<double>& kernels_for<double>(Isa isa) {
#if defined(TRANSDA_HAVE_AVX2)
  if (isa == Isa::Avx2) return avx2_kernels_f64();
#endif
  (void)isa;
  return scalar_kernels_f64();
}

template <>
const KernelTable<float>& kernels<float>() {
  return kernels_for<float>(active_isa());
}

template <>
const KernelTable<double>& kernels<double>() {
  return kernels_for<double>(active_isa());
}

}  // namespace transda::simd
