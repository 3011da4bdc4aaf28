#include "tallkit/kernels.hpp"

#include <cstdlib>
#include <cstring>

#if TALLKIT_HAVE_AVX2_KERNELS
#include <cpuid.h>
#endif

namespace tallkit::kernels {

namespace {

bool cpu_has_avx2_fma() {
#if TALLKIT_HAVE_AVX2_KERNELS
  unsigned eax, ebx, ecx, edx;
  if (!__get_cpuid(1, &eax, &ebx, &ecx, &edx)) return false;
  const bool fma = ecx & (1u << 12);
  if (!__get_cpuid_count(7, 0, &eax, &ebx, &ecx, &edx)) return false;
  const bool avx2 = ebx & (1u << 5);
  return fma && avx2;
#else
  return false;
#endif
}

Backend g_backend = [] {
  Backend b = cpu_has_avx2_fma() ? Backend::kAvx2 : Backend::kScalar;
  if (const char* env = std::getenv("TALLKIT_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) b = Backend::kScalar;
    if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2_fma()) b = Backend::kAvx2;
  }
  return b;
}();

}  // namespace

Backend detect_backend() {
  return cpu_has_avx2_fma() ? Backend::kAvx2 : Backend::kScalar;
}

Backend active_backend() { return g_backend; }

bool backend_supported(Backend b) {
  return b == Backend::kScalar || cpu_has_avx2_fma();
}

void set_backend(Backend b) {
  g_backend = backend_supported(b) ? b : Backend::kScalar;
}

const char* backend_name(Backend b) {
  return b == Backend::kAvx2 ? "avx2" : "scalar";
}

#if TALLKIT_HAVE_AVX2_KERNELS
#define TALLKIT_DISPATCH(fn, ...)                            \
  if (g_backend == Backend::kAvx2) return avx2::fn(__VA_ARGS__); \
  return scalar::fn(__VA_ARGS__)
#else
#define TALLKIT_DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__)
#endif

void gemm(int m, int k, int n, float alpha, const float* a, const float* b,
          float beta, float* c) {
  TALLKIT_DISPATCH(gemm, m, k, n, alpha, a, b, beta, c);
}

void add(std::size_t n, const float* x, const float* y, float* out) {
  TALLKIT_DISPATCH(add, n, x, y, out);
}

void sub(std::size_t n, const float* x, const float* y, float* out) {
  TALLKIT_DISPATCH(sub, n, x, y, out);
}

void mul(std::size_t n, const float* x, const float* y, float* out) {
  TALLKIT_DISPATCH(mul, n, x, y, out);
}

void axpy(std::size_t n, float a, const float* x, float* y) {
  TALLKIT_DISPATCH(axpy, n, a, x, y);
}

void scale(std::size_t n, float a, float* x) {
  TALLKIT_DISPATCH(scale, n, a, x);
}

float dot(std::size_t n, const float* x, const float* y) {
  TALLKIT_DISPATCH(dot, n, x, y);
}

float sum(std::size_t n, const float* x) { TALLKIT_DISPATCH(sum, n, x); }

float max_value(std::size_t n, const float* x) {
  TALLKIT_DISPATCH(max_value, n, x);
}

void relu(std::size_t n, const float* x, float* out) {
  TALLKIT_DISPATCH(relu, n, x, out);
}

void relu_backward(std::size_t n, const float* x, const float* gout, float* gin) {
  TALLKIT_DISPATCH(relu_backward, n, x, gout, gin);
}

#undef TALLKIT_DISPATCH

}  // namespace tallkit::kernels
