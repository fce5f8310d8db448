#pragma once

// Data-parallel inner loops used by the network and simulator code.
//
// Every float kernel exists as a portable scalar reference and as an AVX2/FMA
// variant. The variant is picked once at startup from CPUID and can be forced
// with SONOGAN_SIMD=scalar|avx2 or set_isa(). Double-precision entry points
// always take the scalar path; they serve gradient checks and oracles.

#include <cstddef>
#include <string_view>

namespace sonogan::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

// Best ISA supported by the running CPU.
Isa detect_isa();

// ISA used by the dispatching entry points below.
Isa active_isa();

// Override the dispatch target. Throws if the CPU lacks the requested ISA.
void set_isa(Isa isa);

// Row-major C(m x n) = alpha * op(A) * op(B) + beta * C.
// op(A) is m x k, op(B) is k x n. beta == 0 overwrites C without reading it.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc);
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc);

// y += alpha * x
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);

float dot(std::size_t n, const float* x, const float* y);
double dot(std::size_t n, const double* x, const double* y);

// Sum of elements, accumulated in double.
double sum(std::size_t n, const float* x);
double sum(std::size_t n, const double* x);

// Sum of (x - mean)^2, accumulated in double.
double sum_sq_dev(std::size_t n, const float* x, double mean);
double sum_sq_dev(std::size_t n, const double* x, double mean);

// y = (x - shift) * scale
void shift_scale(std::size_t n, const float* x, float shift, float scale, float* y);
void shift_scale(std::size_t n, const double* x, double shift, double scale, double* y);

// y = x > 0 ? x : slope * x   (slope = 0 gives ReLU)
void leaky_relu(std::size_t n, const float* x, float slope, float* y);
void leaky_relu(std::size_t n, const double* x, double slope, double* y);

// grad_in = grad_out * (y > 0 ? 1 : slope), where y is the forward output.
void leaky_relu_backward(std::size_t n, const float* y, const float* grad_out, float slope,
                         float* grad_in);
void leaky_relu_backward(std::size_t n, const double* y, const double* grad_out, double slope,
                         double* grad_in);

// Direct-call variants for equivalence tests and benchmarks.
namespace scalar {
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc);
void axpy(std::size_t n, float alpha, const float* x, float* y);
float dot(std::size_t n, const float* x, const float* y);
double sum(std::size_t n, const float* x);
double sum_sq_dev(std::size_t n, const float* x, double mean);
void shift_scale(std::size_t n, const float* x, float shift, float scale, float* y);
void leaky_relu(std::size_t n, const float* x, float slope, float* y);
void leaky_relu_backward(std::size_t n, const float* y, const float* grad_out, float slope,
                         float* grad_in);
}  // namespace scalar

namespace avx2 {
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc);
void axpy(std::size_t n, float alpha, const float* x, float* y);
float dot(std::size_t n, const float* x, const float* y);
double sum(std::size_t n, const float* x);
double sum_sq_dev(std::size_t n, const float* x, double mean);
void shift_scale(std::size_t n, const float* x, float shift, float scale, float* y);
void leaky_relu(std::size_t n, const float* x, float slope, float* y);
void leaky_relu_backward(std::size_t n, const float* y, const float* grad_out, float slope,
                         float* grad_in);
}  // namespace avx2

}  // namespace sonogan::simd
