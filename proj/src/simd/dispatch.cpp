#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "scalar_impl.hpp"
#include "sonogan/simd/kernels.hpp"

namespace sonogan::simd {

namespace {

Isa initial_isa() {
  const Isa best = detect_isa();
  if (const char* env = std::getenv("SONOGAN_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return Isa::scalar;
    if (want == "avx2" && best == Isa::avx2) return Isa::avx2;
  }
  return best;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

bool use_avx2() { return current().load(std::memory_order_relaxed) == Isa::avx2; }

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa detect_isa() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::avx2;
#endif
  return Isa::scalar;
}

Isa active_isa() { return current().load(); }

void set_isa(Isa isa) {
  if (isa == Isa::avx2 && detect_isa() != Isa::avx2) {
    throw std::runtime_error("set_isa: CPU does not support AVX2+FMA");
  }
  current().store(isa);
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc) {
  if (use_avx2()) {
    avx2::gemm(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  } else {
    scalar::gemm(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc) {
  detail::gemm_ref(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  use_avx2() ? avx2::axpy(n, alpha, x, y) : scalar::axpy(n, alpha, x, y);
}
void axpy(std::size_t n, double alpha, const double* x, double* y) {
  detail::axpy_ref(n, alpha, x, y);
}

float dot(std::size_t n, const float* x, const float* y) {
  return use_avx2() ? avx2::dot(n, x, y) : scalar::dot(n, x, y);
}
double dot(std::size_t n, const double* x, const double* y) { return detail::dot_ref(n, x, y); }

double sum(std::size_t n, const float* x) { return use_avx2() ? avx2::sum(n, x) : scalar::sum(n, x); }
double sum(std::size_t n, const double* x) { return detail::sum_ref(n, x); }

double sum_sq_dev(std::size_t n, const float* x, double mean) {
  return use_avx2() ? avx2::sum_sq_dev(n, x, mean) : scalar::sum_sq_dev(n, x, mean);
}
double sum_sq_dev(std::size_t n, const double* x, double mean) {
  return detail::sum_sq_dev_ref(n, x, mean);
}

void shift_scale(std::size_t n, const float* x, float shift, float scale, float* y) {
  use_avx2() ? avx2::shift_scale(n, x, shift, scale, y) : scalar::shift_scale(n, x, shift, scale, y);
}
void shift_scale(std::size_t n, const double* x, double shift, double scale, double* y) {
  detail::shift_scale_ref(n, x, shift, scale, y);
}

void leaky_relu(std::size_t n, const float* x, float slope, float* y) {
  use_avx2() ? avx2::leaky_relu(n, x, slope, y) : scalar::leaky_relu(n, x, slope, y);
}
void leaky_relu(std::size_t n, const double* x, double slope, double* y) {
  detail::leaky_relu_ref(n, x, slope, y);
}

void leaky_relu_backward(std::size_t n, const float* y, const float* grad_out, float slope,
                         float* grad_in) {
  use_avx2() ? avx2::leaky_relu_backward(n, y, grad_out, slope, grad_in)
             : scalar::leaky_relu_backward(n, y, grad_out, slope, grad_in);
}
void leaky_relu_backward(std::size_t n, const double* y, const double* grad_out, double slope,
                         double* grad_in) {
  detail::leaky_relu_backward_ref(n, y, grad_out, slope, grad_in);
}

}  // namespace sonogan::simd
