// Compiled with -mavx2 -mfma; only reached after cpu_supports_avx2().

#include <immintrin.h>

#include <algorithm>

#include "transda/simd/kernels.hpp"

namespace transda::simd {
namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
  using type = __m256;
  static constexpr std::size_t width = 8;
  static type load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, type v) { _mm256_storeu_ps(p, v); }
  static type set1(float v) { return _mm256_set1_ps(v); }
  static type zero() { return _mm256_setzero_ps(); }
  static type fmadd(type a, type b, type c) { return _mm256_fmadd_ps(a, b, c); }
  static type add(type a, type b) { return _mm256_add_ps(a, b); }
  static type mul(type a, type b) { return _mm256_mul_ps(a, b); }
  static type max(type a, type b) { return _mm256_max_ps(a, b); }
  static float hsum(type v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

template <>
struct Vec<double> {
  using type = __m256d;
  static constexpr std::size_t width = 4;
  static type load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, type v) { _mm256_storeu_pd(p, v); }
  static type set1(double v) { return _mm256_set1_pd(v); }
  static type zero() { return _mm256_setzero_pd(); }
  static type fmadd(type a, type b, type c) { return _mm256_fmadd_pd(a, b, c); }
  static type add(type a, type b) { return _mm256_add_pd(a, b); }
  static type mul(type a, type b) { return _mm256_mul_pd(a, b); }
  static type max(type a, type b) { return _mm256_max_pd(a, b); }
  static double hsum(type v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d high64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
  }
};

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c, T beta) {
  using V = Vec<T>;
  constexpr std::size_t w = V::width;
  const std::size_t nv = n - n % w;
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (beta == T(0)) {
      std::fill(crow, crow + n, T(0));
    } else if (beta != T(1)) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
    const T* arow = a + i * k;
    std::size_t p = 0;
    // Two rows of B per pass halve the load/store traffic on C.
    for (; p + 1 < k; p += 2) {
      const auto a0 = V::set1(arow[p]);
      const auto a1 = V::set1(arow[p + 1]);
      const T* b0 = b + p * n;
      const T* b1 = b0 + n;
      std::size_t j = 0;
      for (; j < nv; j += w) {
        auto acc = V::load(crow + j);
        acc = V::fmadd(a0, V::load(b0 + j), acc);
        acc = V::fmadd(a1, V::load(b1 + j), acc);
        V::store(crow + j, acc);
      }
      for (; j < n; ++j) crow[j] += arow[p] * b0[j] + arow[p + 1] * b1[j];
    }
    for (; p < k; ++p) {
      const auto a0 = V::set1(arow[p]);
      const T* b0 = b + p * n;
      std::size_t j = 0;
      for (; j < nv; j += w) {
        V::store(crow + j, V::fmadd(a0, V::load(b0 + j), V::load(crow + j)));
      }
      for (; j < n; ++j) crow[j] += arow[p] * b0[j];
    }
  }
}

template <typename T>
T dot(const T* x, const T* y, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t w = V::width;
  auto acc0 = V::zero();
  auto acc1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * w <= n; i += 2 * w) {
    acc0 = V::fmadd(V::load(x + i), V::load(y + i), acc0);
    acc1 = V::fmadd(V::load(x + i + w), V::load(y + i + w), acc1);
  }
  for (; i + w <= n; i += w) acc0 = V::fmadd(V::load(x + i), V::load(y + i), acc0);
  T acc = V::hsum(V::add(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t w = V::width;
  const auto va = V::set1(alpha);
  std::size_t i = 0;
  for (; i + w <= n; i += w) V::store(y + i, V::fmadd(va, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void add(const T* x, const T* y, T* out, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t w = V::width;
  std::size_t i = 0;
  for (; i + w <= n; i += w) V::store(out + i, V::add(V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

template <typename T>
void mul(const T* x, const T* y, T* out, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t w = V::width;
  std::size_t i = 0;
  for (; i + w <= n; i += w) V::store(out + i, V::mul(V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

template <typename T>
void scale(T alpha, const T* x, T* out, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t w = V::width;
  const auto va = V::set1(alpha);
  std::size_t i = 0;
  for (; i + w <= n; i += w) V::store(out + i, V::mul(va, V::load(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

template <typename T>
void relu(const T* x, T* out, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t w = V::width;
  const auto z = V::zero();
  std::size_t i = 0;
  // max(x, 0) maps -0.0 and NaN the same way as the scalar comparison.
  for (; i + w <= n; i += w) V::store(out + i, V::max(V::load(x + i), z));
  for (; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
KernelTable<T> make_table() {
  return {&gemm_nn<T>, &dot<T>, &axpy<T>, &add<T>, &mul<T>, &scale<T>,
          &relu<T>};
}

}  // namespace

const KernelTable<float>& avx2_kernels_f32() {
  static const KernelTable<float> table = make_table<float>();
  return table;
}

const KernelTable<double>& avx2_kernels_f64() {
  static const KernelTable<double> table = make_table<double>();
  return table;
}

}  // namespace transda::simd
