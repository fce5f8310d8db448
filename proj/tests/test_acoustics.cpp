#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sonogan/acoustics.hpp"
#include "support.hpp"

using namespace sonogan;

namespace {

TissueProperties table(std::vector<double> mu) {
  TissueProperties p;
  for (double m : mu) p.tissues.push_back({"t", m, 0.0, 1.0, 1.0, 1.5});
  return p;
}

// Brute-force oracle: a[z] = exp(-sum_{i<=z} mu[s[i]]), summed afresh per pixel.
Grid<double> brute_attenuation(const LabelImage& s, const std::vector<double>& mu) {
  Grid<double> a(s.rows(), s.cols());
  for (std::size_t col = 0; col < s.cols(); ++col) {
    for (std::size_t z = 0; z < s.rows(); ++z) {
      double total = 0.0;
      for (std::size_t i = 0; i <= z; ++i) total += mu[s(i, col)];
      a(z, col) = std::exp(-total);
    }
  }
  return a;
}

// Sorted-array percentile with rank q (N - 1), linear interpolation.
double sorted_percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double rank = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(rank);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (rank - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

FanTissueMap fan_of(const LabelImage& labels) {
  ScanGeometry g;
  g.n_axial = labels.rows();
  g.n_scanlines = labels.cols();
  return {g, labels};
}

ScanGeometry coarse_geometry() {
  ScanGeometry g;
  g.n_scanlines = 32;
  g.n_axial = 32;
  g.cart_rows = 256;
  g.cart_cols = 256;
  return g;
}

}  // namespace

TEST_CASE("attenuation_lut unit conversion") {
  ScanGeometry g;
  g.freq_mhz = 8.0;
  g.depth_m = 0.0001 * 99;  // 100 samples, 0.01 cm apart
  g.n_axial = 100;
  const auto lut = attenuation_lut(table({0.0, 0.5}), g);
  CHECK(lut.mu[0] == 0.0);
  CHECK(lut.mu[1] == doctest::Approx(4.605e-3).epsilon(1e-3));
  CHECK(lut.mu[1] == doctest::Approx(0.5 * 8 * 0.01 * std::log(10.0) / 20.0).epsilon(1e-12));

  ScanGeometry g2 = g;
  g2.freq_mhz = 16.0;
  const auto lut2 = attenuation_lut(table({0.3, 0.5, 2.0}), g2);
  const auto lut1 = attenuation_lut(table({0.3, 0.5, 2.0}), g);
  for (std::size_t t = 0; t < 3; ++t) CHECK(lut2.mu[t] == doctest::Approx(2 * lut1.mu[t]));

  CHECK_THROWS_WITH(table({0.1, 0.2}).validate(4), doctest::Contains("index 2"));
  CHECK_THROWS_AS(attenuation_lut(table({-0.1}), g), std::invalid_argument);
}

TEST_CASE("integrate_attenuation: worked examples") {
  LabelImage col(3, 1, 1);
  const auto a = integrate_attenuation(fan_of(col), {{0.0, 0.1}});
  CHECK(a.values(0, 0) == doctest::Approx(0.9048).epsilon(1e-4));
  CHECK(a.values(1, 0) == doctest::Approx(0.8187).epsilon(1e-4));
  CHECK(a.values(2, 0) == doctest::Approx(0.7408).epsilon(1e-4));

  LabelImage zeros(5, 4, 0);
  const auto clear = integrate_attenuation(fan_of(zeros), {{0.0}});
  for (double v : clear.values.values()) CHECK(v == 1.0);

  LabelImage unknown(2, 2, 3);
  CHECK_THROWS_WITH(integrate_attenuation(fan_of(unknown), {{0.0, 0.1}}),
                    doctest::Contains("tissue index 3"));
}

TEST_CASE("integrate_attenuation matches the brute-force oracle on random grids") {
  testing::Gen gen(31);
  for (int trial = 0; trial < 25; ++trial) {
    const LabelImage s = gen.labels(64, 64, 6);
    std::vector<double> mu(6);
    for (auto& m : mu) m = gen.coin(0.2) ? 0.0 : gen.uniform(0.0, 0.05);
    const auto a = integrate_attenuation(fan_of(s), {mu});
    const auto ref = brute_attenuation(s, mu);
    CHECK(testing::max_abs_diff(a.values.values(), ref.values()) <= 1e-9);
  }
}

TEST_CASE("attenuation properties: monotone columns, column independence, LUT relabelling") {
  testing::Gen gen(32);
  for (int trial = 0; trial < 20; ++trial) {
    const LabelImage s = gen.labels(40, 12, 5);
    std::vector<double> mu(5);
    for (auto& m : mu) m = gen.uniform(0.0, 0.1);
    mu[0] = 0.0;
    const auto a = integrate_attenuation(fan_of(s), {mu});
    for (std::size_t c = 0; c < s.cols(); ++c) {
      for (std::size_t z = 1; z < s.rows(); ++z) {
        CHECK(a.values(z, c) <= a.values(z - 1, c));
        if (s(z, c) == 0) CHECK(a.values(z, c) == a.values(z - 1, c));
      }
    }
    // Permute columns: outputs permute with them.
    std::vector<std::size_t> perm(s.cols());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen.engine());
    LabelImage sp(s.rows(), s.cols());
    for (std::size_t z = 0; z < s.rows(); ++z) {
      for (std::size_t c = 0; c < s.cols(); ++c) sp(z, c) = s(z, perm[c]);
    }
    const auto ap = integrate_attenuation(fan_of(sp), {mu});
    for (std::size_t z = 0; z < s.rows(); ++z) {
      for (std::size_t c = 0; c < s.cols(); ++c) CHECK(ap.values(z, c) == a.values(z, perm[c]));
    }
    // Relabel tissues with a permutation and permute the LUT accordingly.
    std::vector<std::size_t> relabel(5);
    std::iota(relabel.begin(), relabel.end(), 0);
    std::shuffle(relabel.begin(), relabel.end(), gen.engine());
    LabelImage sr = s;
    std::vector<double> mur(5);
    for (auto& v : sr.values()) v = static_cast<TissueIndex>(relabel[v]);
    for (std::size_t t = 0; t < 5; ++t) mur[relabel[t]] = mu[t];
    CHECK(integrate_attenuation(fan_of(sr), {mur}).values == a.values);
  }
}

TEST_CASE("percentile and normalize_attenuation") {
  std::vector<double> lin(100);
  for (std::size_t i = 0; i < 100; ++i) lin[i] = static_cast<double>(i) / 99.0;
  const double v = sorted_percentile(lin, 0.98);
  CHECK(percentile(lin, 0.98) == doctest::Approx(v).epsilon(1e-15));

  FanAttenuationMap m{ScanGeometry{}, Grid<double>(10, 10)};
  std::copy(lin.begin(), lin.end(), m.values.data());
  const auto n = normalize_attenuation(m);
  const double mx = *std::max_element(n.values.data(), n.values.data() + 100);
  CHECK(mx == doctest::Approx(std::min(1.0 / v, 1.0)));

  FanAttenuationMap c{ScanGeometry{}, Grid<double>(4, 4, 0.3)};
  const auto cn = normalize_attenuation(c);
  for (double x : cn.values.values()) CHECK(x == doctest::Approx(1.0));

  FanAttenuationMap opaque{ScanGeometry{}, Grid<double>(4, 4, 0.0)};
  CHECK_THROWS_AS(normalize_attenuation(opaque), std::invalid_argument);
  CHECK_THROWS_AS(percentile(std::vector<double>{}, 0.5), std::invalid_argument);
}

TEST_CASE("normalize_attenuation: range and output percentile on random maps") {
  testing::Gen gen(33);
  for (int trial = 0; trial < 50; ++trial) {
    FanAttenuationMap a{ScanGeometry{}, gen.grid<double>(gen.size(2, 70), gen.size(2, 70), 0.0,
                                                         gen.uniform(0.01, 1.0))};
    const auto n = normalize_attenuation(a);
    for (double x : n.values.values()) REQUIRE((x >= 0.0 && x <= 1.0));
    // The clip can only pull the interpolated percentile down, by at most the
    // normalised gap between the two order statistics it straddles.
    std::vector<double> in(a.values.values().begin(), a.values.values().end());
    std::sort(in.begin(), in.end());
    const double p = sorted_percentile(in, 0.98);
    const auto lo = static_cast<std::size_t>(0.98 * static_cast<double>(in.size() - 1));
    const double gap = (in[std::min(lo + 1, in.size() - 1)] - in[lo]) / p;
    std::vector<double> out(n.values.values().begin(), n.values.values().end());
    const double q = sorted_percentile(out, 0.98);
    CHECK(q <= 1.0 + 1e-12);
    CHECK(1.0 - q <= gap + 1e-12);
  }
}

TEST_CASE("normalize_attenuation: exact percentile and idempotence when the rank is integral") {
  testing::Gen gen(35);
  for (int trial = 0; trial < 50; ++trial) {
    // N - 1 a multiple of 50 puts the 0.98 rank on an order statistic.
    const std::size_t n_values = 50 * gen.size(1, 40) + 1;
    FanAttenuationMap a{ScanGeometry{}, gen.grid<double>(1, n_values, 0.0, gen.uniform(0.01, 1.0))};
    const auto n = normalize_attenuation(a);
    std::vector<double> out(n.values.values().begin(), n.values.values().end());
    CHECK(sorted_percentile(out, 0.98) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(normalize_attenuation(n).values == n.values);
  }
}

TEST_CASE("scan conversion: constants, mask support, convexity") {
  const ScanGeometry g = coarse_geometry();
  const Grid<double> ones(g.n_axial, g.n_scanlines, 1.0);
  const CartesianImage c = scan_convert(ones, g, Interp::bilinear);
  const auto mask = imaging_mask(g);
  CHECK(c.mask == mask);
  std::size_t area = 0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    const bool in = mask.data()[k] != 0;
    area += in;
    if (in) {
      CHECK(std::abs(c.pixels.data()[k] - 1.0f) <= 1e-6);
    } else {
      CHECK(c.pixels.data()[k] == 0.0f);
    }
    CHECK((c.pixels.data()[k] != 0.0f) == in);  // support equality
  }
  CHECK(area > 0);
  CHECK(area < mask.size());

  testing::Gen gen(34);
  const auto noise = gen.grid<double>(g.n_axial, g.n_scanlines, -2.0, 3.0);
  const auto cn = scan_convert(noise, g, Interp::bilinear);
  const auto [lo, hi] = std::minmax_element(noise.data(), noise.data() + noise.size());
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (!mask.data()[k]) continue;
    CHECK(cn.pixels.data()[k] >= static_cast<float>(*lo) - 1e-6f);
    CHECK(cn.pixels.data()[k] <= static_cast<float>(*hi) + 1e-6f);
  }
  ScanGeometry wrong = g;
  wrong.n_axial = 31;
  CHECK_THROWS_AS(scan_convert(ones, wrong, Interp::bilinear), std::invalid_argument);
}

TEST_CASE("scan conversion: angle ramp is monotone along arcs") {
  const ScanGeometry g = coarse_geometry();
  Grid<double> ramp(g.n_axial, g.n_scanlines);
  for (std::size_t j = 0; j < g.n_axial; ++j) {
    for (std::size_t i = 0; i < g.n_scanlines; ++i) ramp(j, i) = static_cast<double>(i);
  }
  const ScanConverter sc(g);
  const auto c = sc.to_cartesian(ramp, Interp::bilinear);
  // Walk arcs of constant range from left to right edge.
  for (double v : {2.0, 10.0, 20.0, 30.0}) {
    double prev = -1.0;
    for (int step = 0; step <= 200; ++step) {
      const double u = 31.0 * step / 200.0;
      double r = 0, col = 0;
      sc.cart_coords(u, v, r, col);
      const auto ri = static_cast<std::size_t>(std::lround(r));
      const auto ci = static_cast<std::size_t>(std::lround(col));
      if (ri >= g.cart_rows || ci >= g.cart_cols || !c.mask(ri, ci)) continue;
      CHECK(c.pixels(ri, ci) >= prev - 1e-6);
      prev = c.pixels(ri, ci);
    }
  }
}

TEST_CASE("inverse scan conversion and round trip") {
  const ScanGeometry g = coarse_geometry();
  CartesianImage constant{ImageF(g.cart_rows, g.cart_cols, 0.0f), imaging_mask(g)};
  for (std::size_t k = 0; k < constant.mask.size(); ++k) {
    if (constant.mask.data()[k]) constant.pixels.data()[k] = 0.4f;
  }
  for (double v : inverse_scan_convert(constant, g, Interp::bilinear).values()) {
    CHECK(v == doctest::Approx(0.4).epsilon(1e-6));
  }
  for (double v : inverse_scan_convert(constant, g, Interp::nearest).values()) {
    CHECK(v == doctest::Approx(0.4).epsilon(1e-6));
  }

  // Smooth blob: round trip within 0.02.
  Grid<double> blob(g.n_axial, g.n_scanlines);
  for (std::size_t j = 0; j < g.n_axial; ++j) {
    for (std::size_t i = 0; i < g.n_scanlines; ++i) {
      const double du = (static_cast<double>(i) - 14.0) / 9.0;
      const double dv = (static_cast<double>(j) - 17.0) / 10.0;
      blob(j, i) = std::exp(-0.5 * (du * du + dv * dv));
    }
  }
  const auto back = inverse_scan_convert(scan_convert(blob, g, Interp::bilinear), g,
                                         Interp::bilinear);
  CHECK(testing::max_abs_diff(back.values(), blob.values()) <= 0.02);
}
