// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the dispatcher confirmed CPU support.

#include <immintrin.h>

#include <algorithm>
#include <vector>

#include "sonogan/simd/kernels.hpp"

namespace sonogan::simd::avx2 {

namespace {

constexpr std::size_t kMr = 6;
constexpr std::size_t kNr = 16;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 120;
constexpr std::size_t kNc = 3072;

void pack_a(bool trans_a, const float* a, std::size_t lda, std::size_t i0, std::size_t p0,
            std::size_t mc, std::size_t kc, float* buf) {
  for (std::size_t ir = 0; ir < mc; ir += kMr) {
    const std::size_t rows = std::min(kMr, mc - ir);
    float* panel = buf + ir * kc;
    if (rows < kMr) std::fill(panel, panel + kMr * kc, 0.0f);
    if (trans_a) {
      for (std::size_t p = 0; p < kc; ++p) {
        const float* src = a + (p0 + p) * lda + i0 + ir;
        for (std::size_t r = 0; r < rows; ++r) panel[p * kMr + r] = src[r];
      }
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        const float* src = a + (i0 + ir + r) * lda + p0;
        for (std::size_t p = 0; p < kc; ++p) panel[p * kMr + r] = src[p];
      }
    }
  }
}

void pack_b(bool trans_b, const float* b, std::size_t ldb, std::size_t p0, std::size_t j0,
            std::size_t kc, std::size_t nc, float* buf) {
  for (std::size_t jr = 0; jr < nc; jr += kNr) {
    const std::size_t cols = std::min(kNr, nc - jr);
    float* panel = buf + jr * kc;
    if (trans_b) {
      if (cols < kNr) std::fill(panel, panel + kNr * kc, 0.0f);
      for (std::size_t c = 0; c < cols; ++c) {
        const float* src = b + (j0 + jr + c) * ldb + p0;
        for (std::size_t p = 0; p < kc; ++p) panel[p * kNr + c] = src[p];
      }
    } else if (cols == kNr) {
      for (std::size_t p = 0; p < kc; ++p) {
        const float* src = b + (p0 + p) * ldb + j0 + jr;
        _mm256_storeu_ps(panel + p * kNr, _mm256_loadu_ps(src));
        _mm256_storeu_ps(panel + p * kNr + 8, _mm256_loadu_ps(src + 8));
      }
    } else {
      for (std::size_t p = 0; p < kc; ++p) {
        const float* src = b + (p0 + p) * ldb + j0 + jr;
        float* dst = panel + p * kNr;
        std::size_t c = 0;
        for (; c < cols; ++c) dst[c] = src[c];
        for (; c < kNr; ++c) dst[c] = 0.0f;
      }
    }
  }
}

// c(R x cols) += alpha * A_panel * B_panel over kc; B rows are `ldbp` floats apart.
template <std::size_t R>
void micro_kernel(std::size_t kc, const float* ap, const float* bp, std::size_t ldbp, float* c,
                  std::size_t ldc, float alpha, std::size_t rows, std::size_t cols) {
  __m256 acc[R][2];
#pragma GCC unroll 6
  for (std::size_t r = 0; r < R; ++r) acc[r][0] = acc[r][1] = _mm256_setzero_ps();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_loadu_ps(bp);
    const __m256 b1 = _mm256_loadu_ps(bp + 8);
#pragma GCC unroll 6
    for (std::size_t r = 0; r < R; ++r) {
      const __m256 av = _mm256_broadcast_ss(ap + r);
      acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
    }
    ap += kMr;
    bp += ldbp;
  }
  const __m256 va = _mm256_set1_ps(alpha);
  if (rows == R && cols == kNr) {
    for (std::size_t r = 0; r < R; ++r) {
      float* crow = c + r * ldc;
      _mm256_storeu_ps(crow, _mm256_fmadd_ps(acc[r][0], va, _mm256_loadu_ps(crow)));
      _mm256_storeu_ps(crow + 8, _mm256_fmadd_ps(acc[r][1], va, _mm256_loadu_ps(crow + 8)));
    }
    return;
  }
  alignas(32) float tile[R * kNr];
  for (std::size_t r = 0; r < R; ++r) {
    _mm256_store_ps(tile + r * kNr, _mm256_mul_ps(acc[r][0], va));
    _mm256_store_ps(tile + r * kNr + 8, _mm256_mul_ps(acc[r][1], va));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] += tile[r * kNr + j];
  }
}

void run_micro(std::size_t rows, std::size_t kc, const float* ap, const float* bp,
               std::size_t ldbp, float* c, std::size_t ldc, float alpha, std::size_t cols) {
  switch (rows) {
    case 1: micro_kernel<1>(kc, ap, bp, ldbp, c, ldc, alpha, rows, cols); break;
    case 2: micro_kernel<2>(kc, ap, bp, ldbp, c, ldc, alpha, rows, cols); break;
    case 3: micro_kernel<3>(kc, ap, bp, ldbp, c, ldc, alpha, rows, cols); break;
    case 4: micro_kernel<4>(kc, ap, bp, ldbp, c, ldc, alpha, rows, cols); break;
    case 5: micro_kernel<5>(kc, ap, bp, ldbp, c, ldc, alpha, rows, cols); break;
    default: micro_kernel<kMr>(kc, ap, bp, ldbp, c, ldc, alpha, rows, cols); break;
  }
}

double hsum(__m256d v) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, v);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc) {
  if (m == 0 || n == 0) return;
  if (beta != 1.0f) {
    for (std::size_t i = 0; i < m; ++i) {
      float* crow = c + i * ldc;
      if (beta == 0.0f) {
        std::fill(crow, crow + n, 0.0f);
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
      }
    }
  }
  if (alpha == 0.0f || k == 0) return;

  thread_local std::vector<float> a_buf;
  thread_local std::vector<float> b_buf;
  const std::size_t mc_max = std::min(kMc, (m + kMr - 1) / kMr * kMr);
  const std::size_t nc_max = std::min(kNc, (n + kNr - 1) / kNr * kNr);
  const std::size_t kc_max = std::min(kKc, k);
  a_buf.resize(mc_max * kc_max);
  b_buf.resize(nc_max * kc_max);

  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = std::min(kNc, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = std::min(kKc, k - pc);
      pack_b(trans_b, b, ldb, pc, jc, kc, nc, b_buf.data());
      for (std::size_t ic = 0; ic < m; ic += kMc) {
        const std::size_t mc = std::min(kMc, m - ic);
        pack_a(trans_a, a, lda, ic, pc, mc, kc, a_buf.data());
        for (std::size_t jr = 0; jr < nc; jr += kNr) {
          const std::size_t cols = std::min(kNr, nc - jr);
          for (std::size_t ir = 0; ir < mc; ir += kMr) {
            const std::size_t rows = std::min(kMr, mc - ir);
            run_micro(rows, kc, a_buf.data() + ir * kc, b_buf.data() + jr * kc, kNr,
                      c + (ic + ir) * ldc + jc + jr, ldc, alpha, cols);
          }
        }
      }
    }
  }
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

float dot(std::size_t n, const float* x, const float* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 p = _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i));
    acc0 = _mm256_add_pd(acc0, _mm256_cvtps_pd(_mm256_castps256_ps128(p)));
    acc1 = _mm256_add_pd(acc1, _mm256_cvtps_pd(_mm256_extractf128_ps(p, 1)));
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += static_cast<double>(x[i]) * y[i];
  return static_cast<float>(acc);
}

double sum(std::size_t n, const float* x) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    acc0 = _mm256_add_pd(acc0, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
    acc1 = _mm256_add_pd(acc1, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}

double sum_sq_dev(std::size_t n, const float* x, double mean) {
  const __m256d vm = _mm256_set1_pd(mean);
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256d d0 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(v)), vm);
    const __m256d d1 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)), vm);
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = x[i] - mean;
    acc += d * d;
  }
  return acc;
}

void shift_scale(std::size_t n, const float* x, float shift, float scale, float* y) {
  const __m256 vs = _mm256_set1_ps(shift);
  const __m256 vk = _mm256_set1_ps(scale);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_sub_ps(_mm256_loadu_ps(x + i), vs), vk));
  }
  for (; i < n; ++i) y[i] = (x[i] - shift) * scale;
}

void leaky_relu(std::size_t n, const float* x, float slope, float* y) {
  const __m256 zero = _mm256_setzero_ps();
  const __m256 vs = _mm256_set1_ps(slope);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 pos = _mm256_cmp_ps(v, zero, _CMP_GT_OQ);
    _mm256_storeu_ps(y + i, _mm256_blendv_ps(_mm256_mul_ps(v, vs), v, pos));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void leaky_relu_backward(std::size_t n, const float* y, const float* grad_out, float slope,
                         float* grad_in) {
  const __m256 zero = _mm256_setzero_ps();
  const __m256 vs = _mm256_set1_ps(slope);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(grad_out + i);
    const __m256 pos = _mm256_cmp_ps(_mm256_loadu_ps(y + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(grad_in + i, _mm256_blendv_ps(_mm256_mul_ps(g, vs), g, pos));
  }
  for (; i < n; ++i) grad_in[i] = y[i] > 0.0f ? grad_out[i] : slope * grad_out[i];
}

}  // namespace sonogan::simd::avx2
