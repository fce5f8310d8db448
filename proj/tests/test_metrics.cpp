#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <numeric>

#include "sonogan/metrics.hpp"
#include "support.hpp"

using namespace sonogan;

namespace {

// Rescales column values to sample mean 0 and sample std 1.
std::vector<double> standardized(std::vector<double> v) {
  const double n = static_cast<double>(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / (n - 1));
  for (double& x : v) x = (x - m) / sd;
  return v;
}

FeatureMatrix column(const std::vector<double>& v) {
  FeatureMatrix f;
  for (double x : v) f.append(std::span<const double>(&x, 1));
  return f;
}

FeatureMatrix random_features(testing::Gen& gen, std::size_t n, std::size_t d, double shift,
                              double spread) {
  FeatureMatrix f(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double common = gen.normal();
    for (std::size_t j = 0; j < d; ++j) {
      f(i, j) = shift * static_cast<double>(j + 1) + spread * (gen.normal() + 0.5 * common);
    }
  }
  return f;
}

// Random orthogonal matrix by Gram-Schmidt on Gaussian columns.
std::vector<double> random_rotation(testing::Gen& gen, std::size_t d) {
  std::vector<double> q(d * d);
  for (auto& v : q) v = gen.normal();
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += q[i * d + j] * q[i * d + k];
      for (std::size_t i = 0; i < d; ++i) q[i * d + j] -= dot * q[i * d + k];
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) norm += q[i * d + j] * q[i * d + j];
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < d; ++i) q[i * d + j] /= norm;
  }
  return q;
}

FeatureMatrix rotate(const FeatureMatrix& f, const std::vector<double>& q) {
  FeatureMatrix out(f.rows, f.cols);
  for (std::size_t r = 0; r < f.rows; ++r) {
    for (std::size_t i = 0; i < f.cols; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < f.cols; ++j) acc += q[i * f.cols + j] * f(r, j);
      out(r, i) = acc;
    }
  }
  return out;
}

// Mean and sample covariance of a 2-column feature set.
void moments2(const FeatureMatrix& f, double mu[2], double cov[3]) {
  mu[0] = mu[1] = 0.0;
  for (std::size_t r = 0; r < f.rows; ++r) {
    mu[0] += f(r, 0);
    mu[1] += f(r, 1);
  }
  mu[0] /= static_cast<double>(f.rows);
  mu[1] /= static_cast<double>(f.rows);
  cov[0] = cov[1] = cov[2] = 0.0;
  for (std::size_t r = 0; r < f.rows; ++r) {
    const double a = f(r, 0) - mu[0], b = f(r, 1) - mu[1];
    cov[0] += a * a;
    cov[1] += a * b;
    cov[2] += b * b;
  }
  for (int k = 0; k < 3; ++k) cov[k] /= static_cast<double>(f.rows - 1);
}

}  // namespace

TEST_CASE("PSNR") {
  std::vector<double> y(64);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<double>(i * 3 % 200);
  CHECK(std::isinf(psnr(y, y)));
  std::vector<double> off = y;
  for (double& v : off) v += 10.0;
  CHECK(psnr(y, off) == doctest::Approx(28.1308).epsilon(1e-5));
  CHECK(psnr(y, off) == doctest::Approx(10.0 * std::log10(65025.0 / 100.0)).epsilon(1e-14));
  CHECK(psnr(y, off, PsnrForm::linear_peak) == doctest::Approx(10.0 * std::log10(2.55)).epsilon(1e-14));

  testing::Gen gen(41);
  double last = std::numeric_limits<double>::infinity();
  for (double sd : {2.0, 8.0, 32.0}) {
    std::vector<double> noisy = y;
    for (double& v : noisy) v += gen.normal(0.0, sd);
    const double p = psnr(y, noisy);
    CHECK(p < last);
    last = p;
  }
  for (int t = 0; t < 10; ++t) {
    const auto a = gen.vec(64, 0, 255), b = gen.vec(64, 0, 255);
    double mse = 0.0;
    for (std::size_t i = 0; i < 64; ++i) mse += (a[i] - b[i]) * (a[i] - b[i]) / 64.0;
    CHECK(std::abs(psnr(a, b) - 10.0 * std::log10(255.0 * 255.0 / mse)) < 1e-9);
  }
  CHECK_THROWS_AS(psnr(y, std::vector<double>(3)), std::invalid_argument);
}

TEST_CASE("MAE") {
  testing::Gen gen(42);
  const auto y = gen.vec(64, 0, 255);
  CHECK(mae(y, y) == 0.0);
  std::vector<double> off = y;
  for (double& v : off) v -= 7.5;
  CHECK(mae(y, off) == doctest::Approx(7.5).epsilon(1e-14));
  for (int t = 0; t < 10; ++t) {
    const auto a = gen.vec(64, 0, 255), b = gen.vec(64, 0, 255);
    double ref = 0.0;
    for (std::size_t i = 0; i < 64; ++i) ref += std::abs(a[i] - b[i]);
    CHECK(std::abs(mae(a, b) - ref / 64.0) < 1e-12);
  }
}

TEST_CASE("histogram chi-square") {
  testing::Gen gen(43);
  for (int t = 0; t < 200; ++t) {
    const std::size_t bins = gen.size(2, 60);
    const auto a = gen.histogram(bins), b = gen.histogram(bins);
    CHECK(chi2_hist(a, a) == 0.0);
    CHECK(chi2_hist(a, b) == doctest::Approx(chi2_hist(b, a)).epsilon(1e-15));
    CHECK(chi2_hist(a, b) >= 0.0);
    CHECK(chi2_hist(a, b) <= 1.0 + 1e-12);
  }
  const std::vector<double> left{0.5, 0.5, 0.0, 0.0}, right{0.0, 0.0, 0.25, 0.75};
  CHECK(chi2_hist(left, right) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(chi2_hist(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(0.5 * (0.25 / 1.5 + 0.25 / 0.5)));
  CHECK_THROWS_AS(chi2_hist(std::vector<double>{-0.1, 1.1}, left), std::invalid_argument);
  CHECK_THROWS_AS(chi2_hist(left, std::vector<double>{1.0}), std::invalid_argument);

  HistogramSpec spec;
  const std::vector<float> vals{0.0f, 0.019f, 0.03f, 0.5f, 0.999f, 1.0f, 1.5f, -0.2f};
  const auto h = histogram(vals, spec);
  REQUIRE(h.size() == 50);
  CHECK(h[0] == doctest::Approx(3.0 / 8));  // 0, 0.019 and the clamped -0.2
  CHECK(h[1] == doctest::Approx(1.0 / 8));
  CHECK(h[25] == doctest::Approx(1.0 / 8));
  CHECK(h[49] == doctest::Approx(3.0 / 8));
  CHECK(std::accumulate(h.begin(), h.end(), 0.0) == doctest::Approx(1.0));
}

TEST_CASE("patch chi-square") {
  testing::Gen gen(44);
  const HistogramSpec spec;
  SUBCASE("identical images") {
    const auto y = gen.grid<float>(60, 45, 0, 1);
    const auto r = patch_chi2(y, y, spec);
    CHECK(r.value == 0.0);
    CHECK(r.tiles == 6);  // 45 columns hold two full tiles
    for (double v : r.map.values()) CHECK(v == 0.0);
  }
  SUBCASE("40x40 gives four tiles and the RMS of their values") {
    const auto y = gen.grid<float>(40, 40, 0, 1), x = gen.grid<float>(40, 40, 0, 0.5);
    const auto r = patch_chi2(y, x, spec);
    REQUIRE(r.tiles == 4);
    double acc = 0.0;
    for (std::size_t ti = 0; ti < 2; ++ti) {
      for (std::size_t tj = 0; tj < 2; ++tj) {
        std::vector<float> a, b;
        for (std::size_t rr = 20 * ti; rr < 20 * ti + 20; ++rr) {
          for (std::size_t cc = 20 * tj; cc < 20 * tj + 20; ++cc) {
            a.push_back(y(rr, cc));
            b.push_back(x(rr, cc));
          }
        }
        const double v = chi2_hist(histogram(a, spec), histogram(b, spec));
        CHECK(r.tile_values(ti, tj) == doctest::Approx(v).epsilon(1e-14));
        CHECK(r.map(20 * ti + 7, 20 * tj + 13) == r.tile_values(ti, tj));
        acc += v * v;
      }
    }
    CHECK(r.value == doctest::Approx(std::sqrt(acc / 4)).epsilon(1e-14));
  }
  SUBCASE("shuffling pixels within each tile leaves the tile values unchanged") {
    const auto y = gen.grid<float>(40, 60, 0, 1), x = gen.grid<float>(40, 60, 0.2, 0.9);
    auto shuffled = x;
    for (std::size_t ti = 0; ti < 2; ++ti) {
      for (std::size_t tj = 0; tj < 3; ++tj) {
        for (int swaps = 0; swaps < 300; ++swaps) {
          const std::size_t r1 = 20 * ti + gen.size(0, 19), c1 = 20 * tj + gen.size(0, 19);
          const std::size_t r2 = 20 * ti + gen.size(0, 19), c2 = 20 * tj + gen.size(0, 19);
          std::swap(shuffled(r1, c1), shuffled(r2, c2));
        }
      }
    }
    CHECK(!(shuffled == x));
    const auto a = patch_chi2(y, x, spec), b = patch_chi2(y, shuffled, spec);
    CHECK(a.tile_values == b.tile_values);
    CHECK(a.value == b.value);
  }
  SUBCASE("bounded by one") {
    for (int t = 0; t < 20; ++t) {
      const auto y = gen.grid<float>(40, 40, 0, 1), x = gen.grid<float>(40, 40, -1, 2);
      const auto r = patch_chi2(y, x, spec);
      CHECK(r.value >= 0.0);
      CHECK(r.value <= 1.0);
      for (double v : r.map.values()) CHECK(v <= 1.0);
    }
    ImageF dark(40, 40, 0.0f), bright(40, 40, 1.0f);
    CHECK(patch_chi2(dark, bright, spec).value == doctest::Approx(1.0));
  }
  SUBCASE("masked tiles") {
    const auto y = gen.grid<float>(40, 40, 0, 1), x = gen.grid<float>(40, 40, 0, 1);
    Grid<std::uint8_t> mask(40, 40, 0);
    mask(5, 25) = 1;
    const auto r = patch_chi2(y, x, spec, &mask);
    CHECK(r.tiles == 1);
    CHECK(std::isnan(r.tile_values(1, 0)));
    CHECK(!std::isnan(r.tile_values(0, 1)));
    Grid<std::uint8_t> none(40, 40, 0);
    CHECK_THROWS_AS(patch_chi2(y, x, spec, &none), std::invalid_argument);
  }
  CHECK_THROWS_AS(patch_chi2(ImageF(19, 40), ImageF(19, 40), spec), std::invalid_argument);
  CHECK_THROWS_AS(patch_chi2(ImageF(40, 40), ImageF(40, 41), spec), std::invalid_argument);
}

TEST_CASE("FID crops") {
  const auto subs = fid_sub_offsets({});
  CHECK(subs[0] == std::array<std::size_t, 2>{0, 0});
  CHECK(subs[1] == std::array<std::size_t, 2>{0, 213});
  CHECK(subs[2] == std::array<std::size_t, 2>{213, 0});
  CHECK(subs[3] == std::array<std::size_t, 2>{213, 213});
  CHECK(fid_center_offset(1000, 1386, {}) == std::array<std::size_t, 2>{244, 437});
  CHECK(fid_center_offset(512, 512, {}) == std::array<std::size_t, 2>{0, 0});
  CHECK_THROWS_AS(fid_crops(ImageF(298, 298)), std::invalid_argument);
  CHECK_THROWS_AS(fid_crops(ImageF(511, 700)), std::invalid_argument);

  ImageF img(520, 530);
  for (std::size_t r = 0; r < img.rows(); ++r) {
    for (std::size_t c = 0; c < img.cols(); ++c) img(r, c) = static_cast<float>(r * 1000 + c);
  }
  const auto crops = fid_crops(img);
  REQUIRE(crops.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(crops[k].rows() == 299);
    CHECK(crops[k].cols() == 299);
    CHECK(crops[k](0, 0) == img(4 + subs[k][0], 9 + subs[k][1]));
  }
  const auto small = fid_crops(ImageF(256, 256), {256, 150});
  CHECK(small.size() == 4);
  CHECK(small[3].rows() == 150);
}

TEST_CASE("FID") {
  testing::Gen gen(45);
  SUBCASE("one-dimensional closed forms") {
    std::vector<double> raw(500);
    for (double& v : raw) v = gen.normal();
    const auto x = standardized(raw);
    std::vector<double> shifted = x, scaled = x;
    for (double& v : shifted) v += 1.0;
    for (double& v : scaled) v *= 2.0;
    CHECK(fid(column(x), column(x)) < 1e-6);
    CHECK(fid(column(x), column(shifted)) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fid(column(x), column(scaled)) == doctest::Approx(1.0).epsilon(1e-9));
    std::vector<double> both = x;
    for (double& v : both) v = 3.0 * v - 2.0;
    CHECK(fid(column(x), column(both)) == doctest::Approx(4.0 + 4.0).epsilon(1e-9));
  }
  SUBCASE("two-dimensional trace identity") {
    // For 2x2 covariances, Tr sqrt(S1 S2) = sqrt(Tr(S1 S2) + 2 sqrt(det S1 det S2)).
    for (int t = 0; t < 20; ++t) {
      const auto a = random_features(gen, 40, 2, gen.uniform(-1, 1), gen.uniform(0.5, 2));
      const auto b = random_features(gen, 60, 2, gen.uniform(-1, 1), gen.uniform(0.5, 2));
      double ma[2], mb[2], ca[3], cb[3];
      moments2(a, ma, ca);
      moments2(b, mb, cb);
      const double tr_prod = ca[0] * cb[0] + 2 * ca[1] * cb[1] + ca[2] * cb[2];
      const double det = (ca[0] * ca[2] - ca[1] * ca[1]) * (cb[0] * cb[2] - cb[1] * cb[1]);
      const double tr_sqrt = std::sqrt(tr_prod + 2 * std::sqrt(det));
      const double ref = (ma[0] - mb[0]) * (ma[0] - mb[0]) + (ma[1] - mb[1]) * (ma[1] - mb[1]) +
                         ca[0] + ca[2] + cb[0] + cb[2] - 2 * tr_sqrt;
      CHECK(fid(a, b) == doctest::Approx(ref).epsilon(1e-10));
    }
  }
  SUBCASE("identity, symmetry and rotation invariance") {
    for (int t = 0; t < 5; ++t) {
      const std::size_t d = gen.size(3, 12);
      const auto a = random_features(gen, 80, d, 0.0, 1.0);
      const auto b = random_features(gen, 70, d, 0.3, 1.5);
      const double ab = fid(a, b);
      CHECK(fid(a, a) < 1e-6);
      CHECK(std::abs(ab - fid(b, a)) < 1e-6);
      CHECK(ab > 0.0);
      const auto q = random_rotation(gen, d);
      CHECK(std::abs(fid(rotate(a, q), rotate(b, q)) - ab) < 1e-5);
    }
  }
  SUBCASE("rank-deficient sets") {
    // fewer samples than dimensions
    const auto a = random_features(gen, 5, 16, 0.0, 1.0);
    const auto b = random_features(gen, 6, 16, 0.1, 1.0);
    const double v = fid(a, b);
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
    CHECK(fid(a, a) < 1e-6);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(fid(random_features(gen, 1, 3, 0, 1), random_features(gen, 5, 3, 0, 1)),
                    std::invalid_argument);
    CHECK_THROWS_AS(fid(random_features(gen, 5, 3, 0, 1), random_features(gen, 5, 4, 0, 1)),
                    std::invalid_argument);
    auto bad = random_features(gen, 5, 3, 0, 1);
    bad(2, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(fid(bad, random_features(gen, 5, 3, 0, 1)), std::invalid_argument);
  }
}

TEST_CASE("stand-in feature extractor") {
  testing::Gen gen(46);
  const StandInExtractor ex;
  const auto img = gen.grid<float>(150, 150, 0, 1);
  const auto f1 = ex.features(img);
  CHECK(f1.size() == ex.dim());
  CHECK(f1 == ex.features(img));
  for (double v : f1) CHECK(std::isfinite(v));
  CHECK(f1 != ex.features(gen.grid<float>(150, 150, 0, 0.5)));
  CHECK(StandInExtractor(1).id() != ex.id());

  const auto dir = std::filesystem::temp_directory_path() / "sonogan_test_fid";
  std::filesystem::remove_all(dir);
  const auto a = StandInExtractor::from_directory(dir);
  CHECK(std::filesystem::exists(dir / StandInExtractor::kWeightsFile));
  const auto b = StandInExtractor::from_directory(dir);
  CHECK(a->id() == b->id());
  CHECK(a->features(img) == b->features(img));
  std::filesystem::remove_all(dir);
}

TEST_CASE("per-image evaluation") {
  testing::Gen gen(47);
  const auto y = gen.grid<float>(40, 40, 0, 1);
  auto x = y;
  Grid<std::uint8_t> mask(40, 40, 0), shadow(40, 40, 0);
  for (std::size_t r = 0; r < 40; ++r) {
    for (std::size_t c = 0; c < 20; ++c) mask(r, c) = 1;
  }
  shadow(3, 3) = 1;
  for (std::size_t r = 0; r < 40; ++r) {
    for (std::size_t c = 0; c < 40; ++c) x(r, c) += mask(r, c) ? 10.0f / 255.0f : 0.5f;
  }
  const auto m = evaluate_image("f", y, x, mask, shadow, HistogramSpec{});
  CHECK(m.id == "f");
  CHECK(m.psnr == doctest::Approx(28.1308).epsilon(1e-4));  // outside pixels ignored
  CHECK(m.mae == doctest::Approx(10.0).epsilon(1e-4));
  REQUIRE(m.shadow_error.has_value());
  CHECK(*m.shadow_error == doctest::Approx(10.0 / 255.0).epsilon(1e-4));
  CHECK(!evaluate_image("g", y, x, mask, Grid<std::uint8_t>(40, 40, 0), HistogramSpec{})
             .shadow_error.has_value());
  CHECK_THROWS_AS(evaluate_image("h", y, x, Grid<std::uint8_t>(40, 40, 0), shadow, HistogramSpec{}),
                  std::invalid_argument);
}

TEST_CASE("summaries and box statistics") {
  const std::vector<double> v{4.0, 1.0, 3.0, 2.0, 100.0};
  const auto s = summarize(v);
  CHECK(s.count == 5);
  CHECK(s.mean == doctest::Approx(22.0));
  CHECK(s.std == doctest::Approx(std::sqrt((324.0 + 441 + 361 + 400 + 6084) / 4.0)));
  CHECK(summarize(std::vector<double>{3.0}).std == 0.0);

  const auto b = box_stats(v);
  CHECK(b.median == 3.0);
  CHECK(b.q1 == 2.0);
  CHECK(b.q3 == 4.0);
  CHECK(b.min == 1.0);
  CHECK(b.max == 100.0);
  CHECK(b.whisker_lo == 1.0);
  CHECK(b.whisker_hi == 4.0);  // 100 is an outlier beyond q3 + 1.5 IQR

  testing::Gen gen(48);
  for (int t = 0; t < 50; ++t) {
    auto vals = gen.vec(gen.size(1, 30), -5, 5);
    const auto bs = box_stats(vals);
    CHECK(bs.min <= bs.whisker_lo);
    CHECK(bs.whisker_lo <= bs.q1 + 1e-12);
    CHECK(bs.q1 <= bs.median);
    CHECK(bs.median <= bs.q3);
    CHECK(bs.q3 <= bs.whisker_hi + 1e-12);
    CHECK(bs.whisker_hi <= bs.max);
  }
}

TEST_CASE("paired differences") {
  auto report = [](std::vector<std::array<double, 3>> rows) {
    MetricReport r;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      ImageMetrics m;
      m.id = "f" + std::to_string(i);
      m.psnr = rows[i][0];
      m.mae = rows[i][1];
      m.pchi2 = rows[i][2];
      r.images.push_back(m);
    }
    r.aggregate();
    return r;
  };
  const auto a = report({{28, 6, 0.2}, {27, 7, 0.3}, {30, 5, 0.1}});
  const auto b = report({{25, 8, 0.3}, {26, 9, 0.25}, {24, 6, 0.4}});
  CHECK(a.psnr.mean == doctest::Approx(85.0 / 3));

  const auto self = paired_differences(a, a);
  for (double v : self.psnr) CHECK(v == 0.0);
  for (double v : self.mae) CHECK(v == 0.0);
  for (double v : self.pchi2) CHECK(v == 0.0);

  const auto d = paired_differences(a, b);
  CHECK(d.psnr == std::vector<double>{3, 1, 6});
  CHECK(d.mae == std::vector<double>{-2, -2, -1});
  CHECK(d.pchi2[0] == doctest::Approx(-0.1));
  CHECK(d.pchi2[1] == doctest::Approx(0.05));
  CHECK(d.pchi2[2] == doctest::Approx(-0.3));
  CHECK(d.psnr_box.median == 3.0);

  auto ra = a, rb = b;
  std::swap(ra.images[0], ra.images[2]);
  std::swap(rb.images[0], rb.images[2]);
  const auto dr = paired_differences(ra, rb);
  CHECK(dr.psnr_box.median == d.psnr_box.median);
  CHECK(dr.mae_box.median == d.mae_box.median);
  CHECK(dr.pchi2_box.median == d.pchi2_box.median);

  CHECK_THROWS_AS(paired_differences(ra, b), std::invalid_argument);
  auto shorter = b;
  shorter.images.pop_back();
  CHECK_THROWS_AS(paired_differences(a, shorter), std::invalid_argument);
}
