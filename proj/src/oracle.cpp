#include "sonogan/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace sonogan {

void PsfSpec::validate() const {
  if (!(axial_sigma > 0.0 && lateral_sigma > 0.0)) {
    throw std::invalid_argument("PsfSpec: sigmas must be positive");
  }
  if (!(axial_freq > 0.0 && axial_freq < 0.5)) {
    throw std::invalid_argument("PsfSpec: axial_freq must lie in (0, 0.5)");
  }
  if (!(lateral_growth >= 0.0)) throw std::invalid_argument("PsfSpec: negative lateral_growth");
}

double PsfSpec::lateral_sigma_at(std::size_t sample, std::size_t n_axial) const {
  const double t = n_axial > 1 ? static_cast<double>(sample) / static_cast<double>(n_axial - 1) : 0.0;
  return lateral_sigma * (1.0 + lateral_growth * t);
}

int PsfSpec::axial_radius() const { return static_cast<int>(std::ceil(4.0 * axial_sigma)); }

int PsfSpec::lateral_radius(double sigma) const { return static_cast<int>(std::ceil(4.0 * sigma)); }

double PsfSpec::lateral_norm(double sigma) const {
  const int rad = lateral_radius(sigma);
  double sum = 0.0;
  for (int d = -rad; d <= rad; ++d) sum += std::exp(-double(d) * d / (2.0 * sigma * sigma));
  return 1.0 / sum;
}

double PsfSpec::value(std::size_t sample, std::size_t n_axial, int dz, int dx) const {
  const double sl = lateral_sigma_at(sample, n_axial);
  if (std::abs(dz) > axial_radius() || std::abs(dx) > lateral_radius(sl)) return 0.0;
  const double z = dz;
  const double x = dx;
  return std::exp(-z * z / (2.0 * axial_sigma * axial_sigma)) *
         std::cos(2.0 * std::numbers::pi * axial_freq * z) * std::exp(-x * x / (2.0 * sl * sl)) *
         lateral_norm(sl);
}

void RenderQuality::validate() const {
  if (!(scatterer_density_scale > 0.0 && scatterer_density_scale <= 1.0)) {
    throw std::invalid_argument("RenderQuality: density scale must lie in (0, 1]");
  }
  if (axial_downsample < 1) throw std::invalid_argument("RenderQuality: axial_downsample < 1");
}

RenderQuality high_quality() { return {}; }

RenderQuality low_quality() {
  RenderQuality q;
  q.tag = RenderQuality::Tag::low;
  q.scatterer_density_scale = 0.3;
  q.psf_enabled = true;
  q.axial_downsample = 2;
  return q;
}

void OracleConfig::validate() const {
  psf.validate();
  high.validate();
  if (low) {
    low->validate();
    if (low->scatterer_density_scale == high.scatterer_density_scale &&
        low->psf_enabled == high.psf_enabled && low->axial_downsample == high.axial_downsample) {
      throw std::invalid_argument("OracleConfig: low quality must differ from high quality");
    }
  }
  if (!(dynamic_range_db > 0.0)) throw std::invalid_argument("OracleConfig: dynamic range <= 0");
  if (!(boundary_gain >= 0.0)) throw std::invalid_argument("OracleConfig: negative boundary gain");
}

Grid<double> scatterer_field(const FanTissueMap& s, const TissueProperties& props,
                             std::uint64_t seed) {
  const LabelImage& labels = s.labels;
  Grid<double> field(labels.rows(), labels.cols());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const TissueIndex t = labels.data()[k];
    if (t >= props.size()) {
      throw std::invalid_argument("scatterer_field: no properties for tissue index " +
                                  std::to_string(t));
    }
    const TissueClass& c = props.tissues[t];
    const double z = normal(rng);
    field.data()[k] = (c.scatter_mean + c.scatter_std * z) * c.echogenicity;
  }
  return field;
}

Grid<double> degrade_field(const Grid<double>& field, const RenderQuality& quality,
                           std::uint64_t seed) {
  quality.validate();
  Grid<double> out = field;
  if (quality.scatterer_density_scale < 1.0) {
    std::mt19937_64 rng(derive_seed(seed, 0x5ca77e5ULL));
    std::bernoulli_distribution keep(quality.scatterer_density_scale);
    const double gain = 1.0 / std::sqrt(quality.scatterer_density_scale);
    for (double& v : out.values()) v = keep(rng) ? v * gain : 0.0;
  }
  const auto k = static_cast<std::size_t>(quality.axial_downsample);
  if (k > 1) {
    for (std::size_t i = 0; i < out.cols(); ++i) {
      for (std::size_t j0 = 0; j0 < out.rows(); j0 += k) {
        const std::size_t j1 = std::min(j0 + k, out.rows());
        double acc = 0.0;
        for (std::size_t j = j0; j < j1; ++j) acc += out(j, i);
        // sum scaled by 1/sqrt(n) keeps the variance of a white field
        const double v = acc / std::sqrt(static_cast<double>(j1 - j0));
        for (std::size_t j = j0; j < j1; ++j) out(j, i) = v;
      }
    }
  }
  return out;
}

Grid<double> boundary_echoes(const FanTissueMap& s, const TissueProperties& props, double gain) {
  const LabelImage& labels = s.labels;
  props.validate(props.size());
  auto refl = [&](TissueIndex a, TissueIndex b) {
    if (a >= props.size() || b >= props.size()) {
      throw std::invalid_argument("boundary_echoes: no properties for tissue index " +
                                  std::to_string(std::max(a, b)));
    }
    const double za = props.tissues[a].impedance_mrayl;
    const double zb = props.tissues[b].impedance_mrayl;
    return std::abs(zb - za) / (za + zb);
  };
  Grid<double> out(labels.rows(), labels.cols(), 0.0);
  for (std::size_t j = 0; j < labels.rows(); ++j) {
    for (std::size_t i = 0; i < labels.cols(); ++i) {
      const TissueIndex t = labels(j, i);
      const double ra = j > 0 ? refl(labels(j - 1, i), t) : 0.0;
      const double rl = i > 0 ? refl(labels(j, i - 1), t) : 0.0;
      out(j, i) = gain * std::sqrt(ra * ra + rl * rl);
    }
  }
  return out;
}

Grid<double> render_rf(const Grid<double>& field, const PsfSpec& psf, const FanAttenuationMap& a,
                       const Grid<double>& boundaries, bool psf_enabled) {
  require_same_shape(field, a.values, "render_rf");
  require_same_shape(field, boundaries, "render_rf");
  const std::size_t rows = field.rows();
  const std::size_t cols = field.cols();
  Grid<double> src(rows, cols);
  for (std::size_t k = 0; k < src.size(); ++k) {
    src.data()[k] = field.data()[k] + boundaries.data()[k];
  }
  if (!psf_enabled) {
    for (std::size_t k = 0; k < src.size(); ++k) src.data()[k] *= a.values.data()[k];
    return src;
  }
  psf.validate();

  // lateral blur at the source depth
  Grid<double> lateral(rows, cols, 0.0);
  std::vector<double> kernel;
  for (std::size_t j = 0; j < rows; ++j) {
    const double sl = psf.lateral_sigma_at(j, rows);
    const int rad = psf.lateral_radius(sl);
    const double norm = psf.lateral_norm(sl);
    kernel.resize(static_cast<std::size_t>(2 * rad + 1));
    for (int d = -rad; d <= rad; ++d) {
      kernel[static_cast<std::size_t>(d + rad)] = std::exp(-double(d) * d / (2.0 * sl * sl)) * norm;
    }
    for (std::size_t i = 0; i < cols; ++i) {
      const double v = src(j, i);
      if (v == 0.0) continue;
      const auto ii = static_cast<std::ptrdiff_t>(i);
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, ii - rad);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(cols) - 1, ii + rad);
      for (std::ptrdiff_t o = lo; o <= hi; ++o) {
        lateral(j, static_cast<std::size_t>(o)) += v * kernel[static_cast<std::size_t>(o - ii + rad)];
      }
    }
  }

  // axial carrier pulse
  const int rad = psf.axial_radius();
  std::vector<double> pulse(static_cast<std::size_t>(2 * rad + 1));
  for (int d = -rad; d <= rad; ++d) {
    const double z = d;
    pulse[static_cast<std::size_t>(d + rad)] =
        std::exp(-z * z / (2.0 * psf.axial_sigma * psf.axial_sigma)) *
        std::cos(2.0 * std::numbers::pi * psf.axial_freq * z);
  }
  Grid<double> rf(rows, cols, 0.0);
  for (std::size_t j = 0; j < rows; ++j) {
    const auto jj = static_cast<std::ptrdiff_t>(j);
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, jj - rad);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(rows) - 1, jj + rad);
    for (std::ptrdiff_t o = lo; o <= hi; ++o) {
      const double w = pulse[static_cast<std::size_t>(o - jj + rad)];
      const auto srow = lateral.row(static_cast<std::size_t>(o));
      auto drow = rf.row(j);
      for (std::size_t i = 0; i < cols; ++i) drow[i] += w * srow[i];
    }
  }
  for (std::size_t k = 0; k < rf.size(); ++k) rf.data()[k] *= a.values.data()[k];
  return rf;
}

namespace {

constexpr int kHilbertHalf = 15;

std::array<double, 2 * kHilbertHalf + 1> hilbert_taps() {
  std::array<double, 2 * kHilbertHalf + 1> h{};
  for (int n = -kHilbertHalf; n <= kHilbertHalf; ++n) {
    if (n % 2 == 0) continue;
    const double window = 0.54 + 0.46 * std::cos(std::numbers::pi * n / kHilbertHalf);
    h[static_cast<std::size_t>(n + kHilbertHalf)] = 2.0 / (std::numbers::pi * n) * window;
  }
  return h;
}

}  // namespace

Grid<double> envelope(const Grid<double>& rf) {
  static const auto taps = hilbert_taps();
  const auto rows = static_cast<std::ptrdiff_t>(rf.rows());
  Grid<double> env(rf.rows(), rf.cols());
  auto reflect = [rows](std::ptrdiff_t j) {
    if (rows == 1) return std::ptrdiff_t{0};
    const std::ptrdiff_t period = 2 * (rows - 1);
    j %= period;
    if (j < 0) j += period;
    return j < rows ? j : period - j;
  };
  for (std::size_t i = 0; i < rf.cols(); ++i) {
    for (std::ptrdiff_t j = 0; j < rows; ++j) {
      double q = 0.0;
      for (int n = -kHilbertHalf; n <= kHilbertHalf; ++n) {
        const double h = taps[static_cast<std::size_t>(n + kHilbertHalf)];
        if (h == 0.0) continue;
        q += h * rf(static_cast<std::size_t>(reflect(j - n)), i);
      }
      const double x = rf(static_cast<std::size_t>(j), i);
      env(static_cast<std::size_t>(j), i) = std::sqrt(x * x + q * q);
    }
  }
  return env;
}

Grid<double> log_compressed_fan(const Grid<double>& rf, const ScanGeometry& geom,
                                double tgc_db_per_cm, double dynamic_range_db) {
  if (rf.rows() != geom.n_axial || rf.cols() != geom.n_scanlines) {
    throw std::invalid_argument("postprocess_bmode: RF does not match geometry");
  }
  if (!(dynamic_range_db > 0.0)) throw std::invalid_argument("postprocess_bmode: dynamic range <= 0");
  for (double v : rf.values()) {
    if (!std::isfinite(v)) throw std::invalid_argument("postprocess_bmode: non-finite RF");
  }
  Grid<double> env = envelope(rf);
  double peak = 0.0;
  for (std::size_t j = 0; j < env.rows(); ++j) {
    const double depth_cm = geom.sample_depth_m(j) * 100.0;
    const double gain = std::pow(10.0, tgc_db_per_cm * depth_cm / 20.0);
    for (double& v : env.row(j)) {
      v *= gain;
      peak = std::max(peak, v);
    }
  }
  Grid<double> out(env.rows(), env.cols(), 0.0);
  if (peak <= 0.0) return out;
  for (std::size_t k = 0; k < env.size(); ++k) {
    const double v = env.data()[k];
    if (v <= 0.0) continue;
    const double db = std::clamp(20.0 * std::log10(v / peak), -dynamic_range_db, 0.0);
    out.data()[k] = (db + dynamic_range_db) / dynamic_range_db;
  }
  return out;
}

CartesianImage postprocess_bmode(const Grid<double>& rf, const ScanGeometry& geom,
                                 double tgc_db_per_cm, double dynamic_range_db) {
  return scan_convert(log_compressed_fan(rf, geom, tgc_db_per_cm, dynamic_range_db), geom,
                      Interp::bilinear);
}

Grid<std::uint8_t> shadow_band(const FanTissueMap& s, const TissueProperties& props,
                               const ScanGeometry& geom, double mu_threshold) {
  const AttenuationLut lut = attenuation_lut(props, geom);
  const LabelImage& labels = s.labels;
  Grid<std::uint8_t> out(labels.rows(), labels.cols(), 0);
  const double cutoff = std::log(2.0);
  for (std::size_t i = 0; i < labels.cols(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < labels.rows(); ++j) {
      const TissueIndex t = labels(j, i);
      if (t >= props.size()) {
        throw std::invalid_argument("shadow_band: no properties for tissue index " +
                                    std::to_string(t));
      }
      const bool strong = props.tissues[t].mu_db_cm_mhz >= mu_threshold;
      if (strong) {
        acc += lut.mu[t];
      } else if (t != 0 && acc > cutoff) {
        out(j, i) = 1;
      }
    }
  }
  return out;
}

Frame render_frame(const Phantom3D& phantom, const ProbePose& pose, const ScanGeometry& geom,
                   const TissueProperties& props, const OracleConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  props.validate(phantom.tissue_count());
  const FanTissueMap s = slice_tissue_map(phantom, pose, geom);
  const AttenuationLut lut = attenuation_lut(props, geom);
  const FanAttenuationMap a_raw = integrate_attenuation(s, lut);
  const ScanConverter conv(geom);

  Frame frame;
  frame.pose = pose;
  frame.seed = seed;
  frame.mask = conv.mask();
  frame.s = conv.labels_to_cartesian(s.labels);
  frame.a = conv.to_cartesian(normalize_attenuation(a_raw).values, Interp::bilinear).pixels;
  const Grid<std::uint8_t> shadow_fan = shadow_band(s, props, geom, cfg.shadow_mu_threshold);
  frame.shadow = Grid<std::uint8_t>(geom.cart_rows, geom.cart_cols, 0);
  {
    const CartesianImage sc = conv.to_cartesian(shadow_fan, Interp::nearest);
    for (std::size_t k = 0; k < sc.pixels.size(); ++k) {
      frame.shadow.data()[k] = sc.pixels.data()[k] > 0.5f ? 1 : 0;
    }
  }

  const Grid<double> field = scatterer_field(s, props, seed);
  const Grid<double> boundaries = boundary_echoes(s, props, cfg.boundary_gain);
  auto render = [&](const RenderQuality& q) {
    const Grid<double> f = degrade_field(field, q, seed);
    const Grid<double> rf = render_rf(f, cfg.psf, a_raw, boundaries, q.psf_enabled);
    return conv.to_cartesian(log_compressed_fan(rf, geom, cfg.tgc_db_per_cm, cfg.dynamic_range_db),
                             Interp::bilinear)
        .pixels;
  };
  frame.y = render(cfg.high);
  if (cfg.low) frame.low = render(*cfg.low);
  return frame;
}

}  // namespace sonogan
