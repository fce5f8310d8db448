#include "sonogan/simd/kernels.hpp"

#include "scalar_impl.hpp"

namespace sonogan::simd::scalar {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc) {
  detail::gemm_ref(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void axpy(std::size_t n, float alpha, const float* x, float* y) { detail::axpy_ref(n, alpha, x, y); }

float dot(std::size_t n, const float* x, const float* y) { return detail::dot_ref(n, x, y); }

double sum(std::size_t n, const float* x) { return detail::sum_ref(n, x); }

double sum_sq_dev(std::size_t n, const float* x, double mean) {
  return detail::sum_sq_dev_ref(n, x, mean);
}

void shift_scale(std::size_t n, const float* x, float shift, float scale, float* y) {
  detail::shift_scale_ref(n, x, shift, scale, y);
}

void leaky_relu(std::size_t n, const float* x, float slope, float* y) {
  detail::leaky_relu_ref(n, x, slope, y);
}

void leaky_relu_backward(std::size_t n, const float* y, const float* grad_out, float slope,
                         float* grad_in) {
  detail::leaky_relu_backward_ref(n, y, grad_out, slope, grad_in);
}

}  // namespace sonogan::simd::scalar
