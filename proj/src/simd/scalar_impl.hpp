#pragma once

// Reference loops shared by the float scalar variant and the double path.

#include <cstddef>

namespace sonogan::simd::detail {

template <typename T>
void gemm_ref(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
              const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
              std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (beta == T(0)) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    } else if (beta != T(1)) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
  }
  if (alpha == T(0) || k == 0) return;
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = alpha * (trans_a ? a[p * lda + i] : a[i * lda + p]);
      if (av == T(0)) continue;
      if (trans_b) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * ldb + p];
      } else {
        const T* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

template <typename T>
void axpy_ref(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T dot_ref(std::size_t n, const T* x, const T* y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * y[i];
  return static_cast<T>(acc);
}

template <typename T>
double sum_ref(std::size_t n, const T* x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <typename T>
double sum_sq_dev_ref(std::size_t n, const T* x, double mean) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - mean;
    acc += d * d;
  }
  return acc;
}

template <typename T>
void shift_scale_ref(std::size_t n, const T* x, T shift, T scale, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = (x[i] - shift) * scale;
}

template <typename T>
void leaky_relu_ref(std::size_t n, const T* x, T slope, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
}

template <typename T>
void leaky_relu_backward_ref(std::size_t n, const T* y, const T* grad_out, T slope, T* grad_in) {
  for (std::size_t i = 0; i < n; ++i) grad_in[i] = y[i] > T(0) ? grad_out[i] : slope * grad_out[i];
}

}  // namespace sonogan::simd::detail
