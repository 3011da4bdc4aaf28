#pragma once

#include <cstddef>

// Float32 inner-loop kernels. Every kernel has a scalar reference
// implementation and, on x86-64 with AVX2+FMA, a vectorized variant.
// The backend is picked once at startup (cpuid), overridable through
// set_backend() or the TALLKIT_KERNELS environment variable
// ("scalar" / "avx2"). Within one process a single backend is active,
// so all results are deterministic.

namespace tallkit::kernels {

enum class Backend { kScalar, kAvx2 };

Backend detect_backend();          // best supported backend, after env override
Backend active_backend();
void set_backend(Backend b);       // fails over to scalar if unsupported
bool backend_supported(Backend b);
const char* backend_name(Backend b);

// c[m x n] = alpha * a[m x k] * b[k x n] + beta * c  (row-major, contiguous)
void gemm(int m, int k, int n, float alpha, const float* a, const float* b,
          float beta, float* c);

void add(std::size_t n, const float* x, const float* y, float* out);
void sub(std::size_t n, const float* x, const float* y, float* out);
void mul(std::size_t n, const float* x, const float* y, float* out);
void axpy(std::size_t n, float a, const float* x, float* y);  // y += a*x
void scale(std::size_t n, float a, float* x);
float dot(std::size_t n, const float* x, const float* y);
float sum(std::size_t n, const float* x);
float max_value(std::size_t n, const float* x);
void relu(std::size_t n, const float* x, float* out);
// gin += gout where x > 0
void relu_backward(std::size_t n, const float* x, const float* gout, float* gin);

namespace scalar {
void gemm(int m, int k, int n, float alpha, const float* a, const float* b,
          float beta, float* c);
void add(std::size_t n, const float* x, const float* y, float* out);
void sub(std::size_t n, const float* x, const float* y, float* out);
void mul(std::size_t n, const float* x, const float* y, float* out);
void axpy(std::size_t n, float a, const float* x, float* y);
void scale(std::size_t n, float a, float* x);
float dot(std::size_t n, const float* x, const float* y);
float sum(std::size_t n, const float* x);
float max_value(std::size_t n, const float* x);
void relu(std::size_t n, const float* x, float* out);
void relu_backward(std::size_t n, const float* x, const float* gout, float* gin);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define TALLKIT_HAVE_AVX2_KERNELS 1
namespace avx2 {
void gemm(int m, int k, int n, float alpha, const float* a, const float* b,
          float beta, float* c);
void add(std::size_t n, const float* x, const float* y, float* out);
void sub(std::size_t n, const float* x, const float* y, float* out);
void mul(std::size_t n, const float* x, const float* y, float* out);
void axpy(std::size_t n, float a, const float* x, float* y);
void scale(std::size_t n, float a, float* x);
float dot(std::size_t n, const float* x, const float* y);
float sum(std::size_t n, const float* x);
float max_value(std::size_t n, const float* x);
void relu(std::size_t n, const float* x, float* out);
void relu_backward(std::size_t n, const float* x, const float* gout, float* gin);
}  // namespace avx2
#else
#define TALLKIT_HAVE_AVX2_KERNELS 0
#endif

}  // namespace tallkit::kernels
