// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma; callers must check backend_supported() before routing
// here (see kernels.cpp).

#include "tallkit/kernels.hpp"

#if TALLKIT_HAVE_AVX2_KERNELS

#include <immintrin.h>

#include <algorithm>

namespace tallkit::kernels::avx2 {

namespace {

inline float hsum8(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

}  // namespace

void gemm(int m, int k, int n, float alpha, const float* a, const float* b,
          float beta, float* c) {
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<std::size_t>(i) * n;
    if (beta == 0.0f) {
      std::fill(crow, crow + n, 0.0f);
    } else if (beta != 1.0f) {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
    const float* arow = a + static_cast<std::size_t>(i) * k;
    int p = 0;
    // Two k-steps per iteration keeps both FMA ports busy.
    for (; p + 2 <= k; p += 2) {
      const __m256 av0 = _mm256_set1_ps(alpha * arow[p]);
      const __m256 av1 = _mm256_set1_ps(alpha * arow[p + 1]);
      const float* brow0 = b + static_cast<std::size_t>(p) * n;
      const float* brow1 = brow0 + n;
      int j = 0;
      for (; j + 8 <= n; j += 8) {
        __m256 acc = _mm256_loadu_ps(crow + j);
        acc = _mm256_fmadd_ps(av0, _mm256_loadu_ps(brow0 + j), acc);
        acc = _mm256_fmadd_ps(av1, _mm256_loadu_ps(brow1 + j), acc);
        _mm256_storeu_ps(crow + j, acc);
      }
      const float s0 = alpha * arow[p];
      const float s1 = alpha * arow[p + 1];
      for (; j < n; ++j) crow[j] += s0 * brow0[j] + s1 * brow1[j];
    }
    for (; p < k; ++p) {
      const float s = alpha * arow[p];
      const __m256 av = _mm256_set1_ps(s);
      const float* brow = b + static_cast<std::size_t>(p) * n;
      int j = 0;
      for (; j + 8 <= n; j += 8) {
        __m256 acc = _mm256_loadu_ps(crow + j);
        acc = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j), acc);
        _mm256_storeu_ps(crow + j, acc);
      }
      for (; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

void add(std::size_t n, const float* x, const float* y, float* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i,
                     _mm256_add_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void sub(std::size_t n, const float* x, const float* y, float* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i,
                     _mm256_sub_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) out[i] = x[i] - y[i];
}

void mul(std::size_t n, const float* x, const float* y, float* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i,
                     _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void axpy(std::size_t n, float a, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i,
                     _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale(std::size_t n, float a, float* x) {
  const __m256 av = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(x + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

float dot(std::size_t n, const float* x, const float* y) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc);
  float total = hsum8(acc);
  for (; i < n; ++i) total += x[i] * y[i];
  return total;
}

float sum(std::size_t n, const float* x) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  float total = hsum8(acc);
  for (; i < n; ++i) total += x[i];
  return total;
}

float max_value(std::size_t n, const float* x) {
  std::size_t i = 0;
  float best;
  if (n >= 8) {
    __m256 acc = _mm256_loadu_ps(x);
    for (i = 8; i + 8 <= n; i += 8)
      acc = _mm256_max_ps(acc, _mm256_loadu_ps(x + i));
    alignas(32) float lanes[8];
    _mm256_store_ps(lanes, acc);
    best = lanes[0];
    for (int l = 1; l < 8; ++l) best = std::max(best, lanes[l]);
  } else {
    best = x[0];
    i = 1;
  }
  for (; i < n; ++i) best = std::max(best, x[i]);
  return best;
}

void relu(std::size_t n, const float* x, float* out) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_max_ps(zero, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(std::size_t n, const float* x, const float* gout, float* gin) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    const __m256 g = _mm256_and_ps(mask, _mm256_loadu_ps(gout + i));
    _mm256_storeu_ps(gin + i, _mm256_add_ps(_mm256_loadu_ps(gin + i), g));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0f) gin[i] += gout[i];
}

}  // namespace tallkit::kernels::avx2

#endif  // TALLKIT_HAVE_AVX2_KERNELS
