#include <doctest.h>

#include <cmath>
#include <vector>

#include "sonogan/simd/kernels.hpp"
#include "support.hpp"

using namespace sonogan;

namespace {

// Naive double-precision reference for op(A) * op(B).
std::vector<double> ref_gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
                             const std::vector<float>& a, std::size_t lda,
                             const std::vector<float>& b, std::size_t ldb) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta ? a[p * lda + i] : a[i * lda + p];
        const double bv = tb ? b[j * ldb + p] : b[p * ldb + j];
        acc += av * bv;
      }
      c[i * n + j] = acc;
    }
  }
  return c;
}

bool have_avx2() { return simd::detect_isa() == simd::Isa::avx2; }

}  // namespace

TEST_CASE("gemm kernels agree with a double reference on random shapes") {
  testing::Gen gen(11);
  // Sizes straddle the register-tile and cache-block edges.
  const std::size_t dims[] = {1, 2, 5, 6, 7, 15, 16, 17, 31, 97, 121, 257, 300};
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t m = dims[gen.size(0, std::size(dims) - 1)];
    const std::size_t n = dims[gen.size(0, std::size(dims) - 1)];
    const std::size_t k = dims[gen.size(0, std::size(dims) - 1)];
    const bool ta = gen.coin(), tb = gen.coin();
    const std::size_t lda = (ta ? m : k) + gen.size(0, 3);
    const std::size_t ldb = (tb ? k : n) + gen.size(0, 3);
    const auto a = gen.vecf((ta ? k : m) * lda);
    const auto b = gen.vecf((tb ? n : k) * ldb);
    const float alpha = static_cast<float>(gen.uniform(0.5, 2.0));
    const bool accumulate = gen.coin();
    const auto c0 = gen.vecf(m * n);
    const auto ref = ref_gemm(ta, tb, m, n, k, a, lda, b, ldb);
    CAPTURE(m);
    CAPTURE(n);
    CAPTURE(k);
    CAPTURE(ta);
    CAPTURE(tb);

    auto check = [&](auto&& fn) {
      std::vector<float> c = c0;
      fn(c);
      const double tol = 1e-5 * static_cast<double>(k) + 1e-5;
      for (std::size_t i = 0; i < m * n; ++i) {
        const double want = alpha * ref[i] + (accumulate ? c0[i] : 0.0);
        REQUIRE(std::abs(c[i] - want) <= tol * (1.0 + std::abs(want)));
      }
    };
    const float beta = accumulate ? 1.0f : 0.0f;
    check([&](std::vector<float>& c) {
      simd::scalar::gemm(ta, tb, m, n, k, alpha, a.data(), lda, b.data(), ldb, beta, c.data(), n);
    });
    if (have_avx2()) {
      check([&](std::vector<float>& c) {
        simd::avx2::gemm(ta, tb, m, n, k, alpha, a.data(), lda, b.data(), ldb, beta, c.data(), n);
      });
    }
  }
}

TEST_CASE("beta = 0 ignores NaN garbage in C") {
  std::vector<float> a(6, 1.0f), b(6, 1.0f), c(4, std::nanf(""));
  simd::gemm(false, false, 2, 2, 3, 1.0f, a.data(), 3, b.data(), 2, 0.0f, c.data(), 2);
  for (float v : c) CHECK(v == 3.0f);
}

TEST_CASE("double gemm matches the reference exactly on small integers") {
  const std::vector<double> a{1, 2, 3, 4, 5, 6};  // 2x3
  const std::vector<double> b{7, 8, 9, 10, 11, 12};  // 3x2
  std::vector<double> c(4, 0.0);
  simd::gemm(false, false, 2, 2, 3, 1.0, a.data(), 3, b.data(), 2, 0.0, c.data(), 2);
  CHECK(c == std::vector<double>{58, 64, 139, 154});
}

TEST_CASE("elementwise kernels: avx2 equals scalar") {
  if (!have_avx2()) {
    MESSAGE("CPU lacks AVX2; only the scalar path is exercised");
    return;
  }
  testing::Gen gen(12);
  for (std::size_t n : {0, 1, 7, 8, 9, 31, 64, 1000, 4099}) {
    CAPTURE(n);
    const auto x = gen.vecf(n, -3, 3);
    const auto y0 = gen.vecf(n, -3, 3);
    const double mean = gen.uniform(-1, 1);

    auto ys = y0, yv = y0;
    simd::scalar::axpy(n, 0.7f, x.data(), ys.data());
    simd::avx2::axpy(n, 0.7f, x.data(), yv.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(yv[i] == doctest::Approx(ys[i]).epsilon(1e-6));

    CHECK(simd::avx2::dot(n, x.data(), y0.data()) ==
          doctest::Approx(simd::scalar::dot(n, x.data(), y0.data())).epsilon(1e-4));
    CHECK(simd::avx2::sum(n, x.data()) ==
          doctest::Approx(simd::scalar::sum(n, x.data())).epsilon(1e-12));
    CHECK(simd::avx2::sum_sq_dev(n, x.data(), mean) ==
          doctest::Approx(simd::scalar::sum_sq_dev(n, x.data(), mean)).epsilon(1e-12));

    std::vector<float> a(n), b(n);
    simd::scalar::shift_scale(n, x.data(), 0.25f, 1.5f, a.data());
    simd::avx2::shift_scale(n, x.data(), 0.25f, 1.5f, b.data());
    CHECK(a == b);
    simd::scalar::leaky_relu(n, x.data(), 0.2f, a.data());
    simd::avx2::leaky_relu(n, x.data(), 0.2f, b.data());
    CHECK(a == b);
    simd::scalar::leaky_relu_backward(n, x.data(), y0.data(), 0.2f, a.data());
    simd::avx2::leaky_relu_backward(n, x.data(), y0.data(), 0.2f, b.data());
    CHECK(a == b);
  }
}

TEST_CASE("dispatch can be forced and restored") {
  const simd::Isa before = simd::active_isa();
  simd::set_isa(simd::Isa::scalar);
  CHECK(simd::active_isa() == simd::Isa::scalar);
  CHECK(simd::isa_name(simd::Isa::scalar) == "scalar");
  simd::set_isa(before);
  CHECK(simd::active_isa() == before);
}
