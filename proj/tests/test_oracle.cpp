#include <doctest.h>

#include <cmath>
#include <functional>
#include <optional>
#include <numbers>

#include "sonogan/oracle.hpp"
#include "support.hpp"

using namespace sonogan;

namespace {

FanTissueMap uniform_fan(std::size_t rows, std::size_t cols, TissueIndex t) {
  ScanGeometry g;
  g.n_axial = rows;
  g.n_scanlines = cols;
  return {g, LabelImage(rows, cols, t)};
}

TissueProperties one_tissue(double mean, double sd, double echo) {
  TissueProperties p;
  p.tissues = {{"coupling", 0, 0, 0, 0, 1.5}, {"t", 0.5, mean, sd, echo, 1.6}};
  return p;
}

FanAttenuationMap unit_attenuation(std::size_t rows, std::size_t cols) {
  return {ScanGeometry{}, Grid<double>(rows, cols, 1.0)};
}

Grid<double> carrier(std::size_t rows, std::size_t cols, double freq,
                     const std::function<double(std::size_t, std::size_t)>& amp) {
  Grid<double> rf(rows, cols);
  for (std::size_t j = 0; j < rows; ++j) {
    for (std::size_t i = 0; i < cols; ++i) {
      rf(j, i) = amp(j, i) * std::cos(2.0 * std::numbers::pi * freq * static_cast<double>(j));
    }
  }
  return rf;
}

double pearson(const ImageF& a, const ImageF& b, const Grid<std::uint8_t>& mask) {
  double sa = 0, sb = 0, n = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!mask.data()[k]) continue;
    sa += a.data()[k];
    sb += b.data()[k];
    n += 1;
  }
  const double ma = sa / n, mb = sb / n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!mask.data()[k]) continue;
    const double da = a.data()[k] - ma, db = b.data()[k] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  return cov / std::sqrt(va * vb);
}

struct Scene {
  Phantom3D phantom = build_phantom(default_phantom_spec());
  TissueProperties props = default_tissue_table();
  ScanGeometry geom;
  OracleConfig cfg;
};

// First pose among a fixed lattice whose frame satisfies `pred`.
template <typename Pred>
std::optional<Frame> find_frame(const Scene& sc, Pred&& pred) {
  for (const auto& pose : sample_probe_poses(sc.phantom, 4, 4, 3, 99)) {
    Frame f = render_frame(sc.phantom, pose, sc.geom, sc.props, sc.cfg, 5);
    if (pred(f)) return f;
  }
  return std::nullopt;
}

std::size_t count_label(const Frame& f, TissueIndex t) {
  std::size_t n = 0;
  for (std::size_t k = 0; k < f.s.size(); ++k) n += f.mask.data()[k] && f.s.data()[k] == t;
  return n;
}

}  // namespace

TEST_CASE("scatterer_field: deterministic cases and statistics") {
  const auto fan = uniform_fan(100, 100, 1);
  const auto flat = scatterer_field(fan, one_tissue(0.7, 0.0, 1.5), 3);
  for (double v : flat.values()) CHECK(v == 0.7 * 1.5);
  const auto dark = scatterer_field(fan, one_tissue(0.7, 1.0, 0.0), 3);
  for (double v : dark.values()) CHECK(v == 0.0);

  const double mean = 0.4, sd = 0.9;
  const auto f = scatterer_field(fan, one_tissue(mean, sd, 1.0), 17);
  CHECK(f == scatterer_field(fan, one_tissue(mean, sd, 1.0), 17));
  CHECK_FALSE(f == scatterer_field(fan, one_tissue(mean, sd, 1.0), 18));
  double s = 0, s2 = 0;
  const double n = static_cast<double>(f.size());
  for (double v : f.values()) {
    s += v;
    s2 += v * v;
  }
  const double m = s / n;
  const double var = (s2 - n * m * m) / (n - 1);
  // Standard errors of the sample mean and sample standard deviation.
  CHECK(std::abs(m - mean) <= 3.0 * sd / std::sqrt(n));
  CHECK(std::abs(std::sqrt(var) - sd) <= 3.0 * sd / std::sqrt(2.0 * (n - 1)));
}

TEST_CASE("render_rf: zero input, impulse response and uniform attenuation decay") {
  PsfSpec psf;
  const std::size_t rows = 96, cols = 40;
  const Grid<double> zero(rows, cols, 0.0);
  for (double v : render_rf(zero, psf, unit_attenuation(rows, cols), zero).values()) {
    CHECK(v == 0.0);
  }

  Grid<double> impulse(rows, cols, 0.0);
  const std::size_t j0 = 48, i0 = 20;
  impulse(j0, i0) = 1.0;
  const auto rf = render_rf(impulse, psf, unit_attenuation(rows, cols), zero);
  for (std::size_t j = 0; j < rows; ++j) {
    for (std::size_t i = 0; i < cols; ++i) {
      // Direct convolution of a unit impulse: the PSF stamp at the source depth.
      const int dz = static_cast<int>(j) - static_cast<int>(j0);
      const int dx = static_cast<int>(i) - static_cast<int>(i0);
      REQUIRE(rf(j, i) == doctest::Approx(psf.value(j0, rows, dz, dx)).epsilon(1e-12));
    }
  }

  // Constant field under a = exp(-mu z): interior rows decay by exp(-mu) per sample.
  const double mu = 0.01;
  FanAttenuationMap a{ScanGeometry{}, Grid<double>(rows, cols)};
  for (std::size_t j = 0; j < rows; ++j) {
    for (double& v : a.values.row(j)) v = std::exp(-mu * static_cast<double>(j + 1));
  }
  const Grid<double> field(rows, cols, 1.0);
  const auto decayed = render_rf(field, psf, a, zero);
  const auto env = envelope(decayed);
  const int margin = psf.axial_radius() + 16;
  for (std::size_t j = static_cast<std::size_t>(margin); j + margin < rows; ++j) {
    double m0 = 0, m1 = 0, e0 = 0, e1 = 0;
    for (std::size_t i = 12; i + 12 < cols; ++i) {  // away from truncated lateral kernels
      m0 += decayed(j, i);
      m1 += decayed(j + 1, i);
      e0 += env(j, i);
      e1 += env(j + 1, i);
    }
    CHECK(m1 / m0 == doctest::Approx(std::exp(-mu)).epsilon(1e-9));
    CHECK(e1 / e0 == doctest::Approx(std::exp(-mu)).epsilon(1e-2));
  }
}

TEST_CASE("envelope of a pure carrier is flat between 0.08 and 0.42 cycles per sample") {
  for (double f = 0.08; f <= 0.4201; f += 0.02) {
    CAPTURE(f);
    const auto rf = carrier(200, 1, f, [](std::size_t, std::size_t) { return 1.0; });
    const auto env = envelope(rf);
    for (std::size_t j = 20; j < 180; ++j) CHECK(env(j, 0) == doctest::Approx(1.0).epsilon(0.01));
  }
}

TEST_CASE("log compression arithmetic") {
  ScanGeometry g;
  g.n_axial = 128;
  g.n_scanlines = 16;
  const auto constant = carrier(128, 16, 0.25, [](std::size_t, std::size_t) { return 2.0; });
  const auto out = log_compressed_fan(constant, g, 0.0, 60.0);
  // The FIR edge rows may set the peak; the interior is flat.
  for (std::size_t j = 20; j < 108; ++j) {
    for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(out(j, i) - out(64, 8)) <= 1e-3);
  }
  const auto cart = postprocess_bmode(constant, g, 0.0, 60.0);
  for (std::size_t k = 0; k < cart.mask.size(); ++k) {
    if (!cart.mask.data()[k]) CHECK(cart.pixels.data()[k] == 0.0f);
  }

  // Envelope ratio 10 under a 40 dB range: 20 dB apart, i.e. half the output scale.
  const auto two = carrier(128, 16, 0.25, [](std::size_t, std::size_t i) { return i < 8 ? 1.0 : 10.0; });
  const auto o2 = log_compressed_fan(two, g, 0.0, 40.0);
  for (std::size_t j = 20; j < 108; ++j) {
    CHECK(o2(j, 12) - o2(j, 3) == doctest::Approx(0.5).epsilon(0.01));
  }

  // TGC cancelling a matching exponential decay leaves a depth-flat image.
  const double tgc = 0.7;
  auto decay = [&](std::size_t j, std::size_t) {
    return std::pow(10.0, -tgc * g.sample_depth_m(j) * 100.0 / 20.0);
  };
  const auto o3 = log_compressed_fan(carrier(128, 16, 0.25, decay), g, tgc, 60.0);
  double lo = 1e9, hi = 0;
  for (std::size_t j = 20; j < 108; ++j) {
    double m = 0;
    for (std::size_t i = 0; i < 16; ++i) m += o3(j, i) / 16.0;
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  CHECK((hi - lo) / hi <= 0.02);

  const Grid<double> zero(128, 16, 0.0);
  for (double v : log_compressed_fan(zero, g, 0.7, 60.0).values()) CHECK(v == 0.0);
  Grid<double> bad = zero;
  bad(3, 3) = std::nan("");
  CHECK_THROWS_AS(log_compressed_fan(bad, g, 0.7, 60.0), std::invalid_argument);
}

TEST_CASE("render_frame: determinism, alignment and low/high coupling") {
  Scene sc;
  const auto poses = sample_probe_poses(sc.phantom, 2, 2, 1, 4);
  const Frame a = render_frame(sc.phantom, poses[1], sc.geom, sc.props, sc.cfg, 42);
  const Frame b = render_frame(sc.phantom, poses[1], sc.geom, sc.props, sc.cfg, 42);
  CHECK(a.s == b.s);
  CHECK(a.a == b.a);
  CHECK(a.y == b.y);
  CHECK(*a.low == *b.low);
  CHECK(a.mask == b.mask);
  CHECK(a.shadow == b.shadow);
  const Frame c = render_frame(sc.phantom, poses[1], sc.geom, sc.props, sc.cfg, 43);
  CHECK_FALSE(a.y == c.y);

  for (std::size_t k = 0; k < a.mask.size(); ++k) {
    if (a.mask.data()[k]) continue;
    REQUIRE(a.s.data()[k] == 0);
    REQUIRE(a.a.data()[k] == 0.0f);
    REQUIRE(a.y.data()[k] == 0.0f);
    REQUIRE(a.low->data()[k] == 0.0f);
    REQUIRE(a.shadow.data()[k] == 0);
  }
  for (float v : a.a.values()) REQUIRE((v >= 0.0f && v <= 1.0f));
  for (float v : a.y.values()) REQUIRE((v >= 0.0f && v <= 1.0f));

  CHECK(pearson(a.y, *a.low, a.mask) > 0.5);
  double diff = 0;
  for (std::size_t k = 0; k < a.y.size(); ++k) diff += std::abs(a.y.data()[k] - a.low->data()[k]);
  CHECK(diff > 0.0);

  OracleConfig same = sc.cfg;
  same.low = same.high;
  CHECK_THROWS_AS(same.validate(), std::invalid_argument);
}

TEST_CASE("render_frame: anechoic fluid is dark") {
  Scene sc;
  const auto f = find_frame(sc, [](const Frame& f) { return count_label(f, 5) > 3000; });
  REQUIRE(f.has_value());
  double fluid = 0, tissue = 0;
  std::size_t nf = 0, nt = 0;
  for (std::size_t k = 0; k < f->y.size(); ++k) {
    if (!f->mask.data()[k] || f->shadow.data()[k]) continue;
    const auto t = f->s.data()[k];
    if (t == 5) {
      fluid += f->y.data()[k];
      ++nf;
    } else if (t != 0) {
      tissue += f->y.data()[k];
      ++nt;
    }
  }
  REQUIRE(nt > 0);
  CHECK(fluid / nf < 0.2 * tissue / nt);
}

TEST_CASE("render_frame: bone casts a shadow") {
  Scene sc;
  auto shadow_pixels = [](const Frame& f) {
    std::size_t n = 0;
    for (auto v : f.shadow.values()) n += v;
    return n;
  };
  const auto f = find_frame(sc, [&](const Frame& f) { return shadow_pixels(f) > 800; });
  REQUIRE(f.has_value());
  // Compare shadowed pixels with unshadowed tissue at the same depth.
  const ScanConverter conv(sc.geom);
  std::vector<double> open_sum(sc.geom.n_axial, 0.0), open_n(sc.geom.n_axial, 0.0);
  for (std::size_t r = 0; r < f->y.rows(); ++r) {
    for (std::size_t c = 0; c < f->y.cols(); ++c) {
      double u = 0, v = 0;
      if (!conv.fan_coords(r, c, u, v) || f->shadow(r, c) || f->s(r, c) == 0) continue;
      const auto d = static_cast<std::size_t>(v);
      open_sum[d] += f->y(r, c);
      open_n[d] += 1;
    }
  }
  double shadowed = 0, reference = 0;
  for (std::size_t r = 0; r < f->y.rows(); ++r) {
    for (std::size_t c = 0; c < f->y.cols(); ++c) {
      double u = 0, v = 0;
      if (!conv.fan_coords(r, c, u, v) || !f->shadow(r, c)) continue;
      const auto d = static_cast<std::size_t>(v);
      if (open_n[d] == 0) continue;
      shadowed += f->y(r, c);
      reference += open_sum[d] / open_n[d];
    }
  }
  CHECK(shadowed < 0.5 * reference);
}

TEST_CASE("degrade_field and shadow_band basics") {
  const Grid<double> field(64, 8, 1.0);
  RenderQuality q;
  CHECK(degrade_field(field, q, 1) == field);
  q.axial_downsample = 4;
  const auto d = degrade_field(field, q, 1);
  for (std::size_t j = 0; j < 64; ++j) CHECK(d(j, 0) == d(j / 4 * 4, 0));
  q.axial_downsample = 0;
  CHECK_THROWS_AS(degrade_field(field, q, 1), std::invalid_argument);

  // A bone layer shadows everything below it in its column.
  TissueProperties props = default_tissue_table();
  ScanGeometry g;
  g.n_axial = 64;
  g.n_scanlines = 4;
  FanTissueMap s{g, LabelImage(64, 4, 3)};
  for (std::size_t j = 10; j < 16; ++j) s.labels(j, 1) = 8;
  const auto band = shadow_band(s, props, g, 1.0);
  for (std::size_t j = 0; j < 64; ++j) {
    CHECK(band(j, 0) == 0);
    CHECK(band(j, 1) == (j >= 16 ? 1 : 0));
  }
}
