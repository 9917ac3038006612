#pragma once

#include <cstddef>
#include <string_view>

// Data-parallel inner loops shared by the tensor ops. Every kernel has a
// scalar reference implementation; vector variants are selected once at
// runtime from the host CPU features and must agree with the reference up
// to floating-point reassociation.

namespace transda::simd {

enum class Isa { Scalar, Avx2 };

template <typename T>
struct KernelTable {
  // C[m x n] = beta * C + A[m x k] * B[k x n], all row-major and dense.
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const T* a,
                  const T* b, T* c, T beta);
  T (*dot)(const T* x, const T* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  // out = x + y, out = x * y (out may alias x or y)
  void (*add)(const T* x, const T* y, T* out, std::size_t n);
  void (*mul)(const T* x, const T* y, T* out, std::size_t n);
  void (*scale)(T alpha, const T* x, T* out, std::size_t n);
  void (*relu)(const T* x, T* out, std::size_t n);
};

const KernelTable<float>& scalar_kernels_f32();
const KernelTable<double>& scalar_kernels_f64();
#if defined(TRANSDA_HAVE_AVX2)
const KernelTable<float>& avx2_kernels_f32();
const KernelTable<double>& avx2_kernels_f64();
#endif

bool cpu_supports_avx2();

// The ISA in use. Defaults to the best supported one; the environment
// variable TRANSDA_SIMD=scalar forces the reference path.
Isa active_isa();
void set_active_isa(Isa isa);
std::string_view isa_name(Isa isa);

template <typename T>
const KernelTable<T>& kernels();

template <typename T>
const KernelTable<T>& kernels_for(Isa isa);

}  // namespace transda::simd
