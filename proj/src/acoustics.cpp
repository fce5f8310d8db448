#include "sonogan/acoustics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sonogan {

void TissueProperties::validate(std::size_t required) const {
  if (tissues.size() < required) {
    throw std::invalid_argument("TissueProperties: missing tissue index " +
                                std::to_string(tissues.size()));
  }
  for (std::size_t t = 0; t < tissues.size(); ++t) {
    const TissueClass& c = tissues[t];
    if (!(c.mu_db_cm_mhz >= 0.0)) {
      throw std::invalid_argument("TissueProperties: negative attenuation for tissue " +
                                  std::to_string(t));
    }
    if (!(c.scatter_std >= 0.0)) {
      throw std::invalid_argument("TissueProperties: negative scatter_std for tissue " +
                                  std::to_string(t));
    }
    if (!(c.impedance_mrayl > 0.0)) {
      throw std::invalid_argument("TissueProperties: non-positive impedance for tissue " +
                                  std::to_string(t));
    }
  }
}

TissueProperties default_tissue_table() {
  TissueProperties p;
  //               name        mu     mean  std   echo  Z
  p.tissues = {
      {"coupling", 0.0, 0.0, 0.0, 0.0, 1.52},
      {"skin", 0.12, 0.0, 1.0, 1.3, 1.70},
      {"fat", 0.09, 0.0, 0.8, 0.55, 1.38},
      {"muscle", 0.10, 0.0, 1.0, 0.85, 1.70},
      {"uterus", 0.08, 0.0, 1.0, 0.75, 1.62},
      {"amniotic_fluid", 0.002, 0.0, 1.0, 0.0, 1.52},
      {"fetal_tissue", 0.07, 0.0, 1.0, 0.65, 1.60},
      {"brain", 0.06, 0.0, 1.0, 0.45, 1.58},
      {"bone", 20.0, 0.0, 1.0, 1.4, 7.80},
  };
  return p;
}

AttenuationLut attenuation_lut(const TissueProperties& props, const ScanGeometry& geom) {
  geom.validate();
  props.validate(props.size());
  const double step_cm = geom.axial_step_m() * 100.0;
  const double db_to_neper = std::numbers::ln10 / 20.0;
  AttenuationLut lut;
  lut.mu.reserve(props.size());
  for (const TissueClass& t : props.tissues) {
    lut.mu.push_back(t.mu_db_cm_mhz * geom.freq_mhz * step_cm * db_to_neper);
  }
  return lut;
}

FanAttenuationMap integrate_attenuation(const FanTissueMap& s, const AttenuationLut& lut) {
  const LabelImage& labels = s.labels;
  FanAttenuationMap out{s.geometry, Grid<double>(labels.rows(), labels.cols())};
  for (std::size_t i = 0; i < labels.cols(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < labels.rows(); ++j) {
      const TissueIndex t = labels(j, i);
      if (t >= lut.mu.size()) {
        throw std::invalid_argument("integrate_attenuation: no attenuation for tissue index " +
                                    std::to_string(t));
      }
      acc += lut.mu[t];
      out.values(j, i) = std::exp(-acc);
    }
  }
  return out;
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile: empty input");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile: q outside [0, 1]");
  std::vector<double> v(values.begin(), values.end());
  const double rank = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double vlo = v[lo];
  if (hi == lo) return vlo;
  const double vhi = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return vlo + (rank - static_cast<double>(lo)) * (vhi - vlo);
}

FanAttenuationMap normalize_attenuation(const FanAttenuationMap& a) {
  const double p98 = percentile(a.values.values(), 0.98);
  if (!(p98 > 0.0)) {
    throw std::invalid_argument("normalize_attenuation: 98th percentile is zero (opaque map)");
  }
  FanAttenuationMap out = a;
  for (double& v : out.values.values()) v = std::clamp(v / p98, 0.0, 1.0);
  return out;
}

ScanConverter::ScanConverter(const ScanGeometry& geom) : geom_(geom) {
  geom_.validate();
  const double r0 = geom_.probe_radius_m;
  const double r1 = r0 + geom_.depth_m;
  const double half = geom_.fov_rad() / 2.0;
  const double width = 2.0 * r1 * std::sin(half);
  const double height = r1 - r0 * std::cos(half);
  const auto rows = static_cast<double>(geom_.cart_rows);
  const auto cols = static_cast<double>(geom_.cart_cols);
  pixel_m_ = std::max(width / cols, height / rows);
  x0_ = -cols * pixel_m_ / 2.0;
  z0_ = r0 * std::cos(half) - (rows * pixel_m_ - height) / 2.0;

  mask_ = Grid<std::uint8_t>(geom_.cart_rows, geom_.cart_cols, 0);
  u_.assign(mask_.size(), 0.0);
  v_.assign(mask_.size(), 0.0);
  const double su = static_cast<double>(geom_.n_scanlines - 1) / geom_.fov_rad();
  const double sv = static_cast<double>(geom_.n_axial - 1) / geom_.depth_m;
  for (std::size_t r = 0; r < geom_.cart_rows; ++r) {
    const double z = z0_ + (static_cast<double>(r) + 0.5) * pixel_m_;
    for (std::size_t c = 0; c < geom_.cart_cols; ++c) {
      const double x = x0_ + (static_cast<double>(c) + 0.5) * pixel_m_;
      const double rho = std::hypot(x, z);
      const double theta = std::atan2(x, z);
      if (rho < r0 || rho > r1 || std::abs(theta) > half) continue;
      const std::size_t k = r * geom_.cart_cols + c;
      mask_(r, c) = 1;
      u_[k] = (theta + half) * su;
      v_[k] = (rho - r0) * sv;
    }
  }
}

bool ScanConverter::fan_coords(std::size_t row, std::size_t col, double& u, double& v) const {
  const std::size_t k = row * geom_.cart_cols + col;
  u = u_[k];
  v = v_[k];
  return mask_(row, col) != 0;
}

void ScanConverter::cart_coords(double u, double v, double& row, double& col) const {
  const double theta = u / static_cast<double>(geom_.n_scanlines - 1) * geom_.fov_rad() -
                       geom_.fov_rad() / 2.0;
  const double rho =
      geom_.probe_radius_m + v / static_cast<double>(geom_.n_axial - 1) * geom_.depth_m;
  const double x = rho * std::sin(theta);
  const double z = rho * std::cos(theta);
  col = (x - x0_) / pixel_m_ - 0.5;
  row = (z - z0_) / pixel_m_ - 0.5;
}

namespace {

template <typename T>
double sample_fan(const Grid<T>& fan, double u, double v, Interp interp) {
  const std::size_t nu = fan.cols();
  const std::size_t nv = fan.rows();
  if (interp == Interp::nearest) {
    const auto iu = std::min(static_cast<std::size_t>(std::lround(u)), nu - 1);
    const auto iv = std::min(static_cast<std::size_t>(std::lround(v)), nv - 1);
    return static_cast<double>(fan(iv, iu));
  }
  const std::size_t i0 = std::min(static_cast<std::size_t>(std::floor(u)), nu - 2);
  const std::size_t j0 = std::min(static_cast<std::size_t>(std::floor(v)), nv - 2);
  const double fu = std::clamp(u - static_cast<double>(i0), 0.0, 1.0);
  const double fv = std::clamp(v - static_cast<double>(j0), 0.0, 1.0);
  const double a = static_cast<double>(fan(j0, i0));
  const double b = static_cast<double>(fan(j0, i0 + 1));
  const double c = static_cast<double>(fan(j0 + 1, i0));
  const double d = static_cast<double>(fan(j0 + 1, i0 + 1));
  return (1.0 - fv) * ((1.0 - fu) * a + fu * b) + fv * ((1.0 - fu) * c + fu * d);
}

}  // namespace

template <typename T>
CartesianImage ScanConverter::to_cartesian(const Grid<T>& fan, Interp interp) const {
  if (fan.rows() != geom_.n_axial || fan.cols() != geom_.n_scanlines) {
    throw std::invalid_argument("scan_convert: fan image does not match geometry");
  }
  CartesianImage out{ImageF(geom_.cart_rows, geom_.cart_cols, 0.0f), mask_, ValueRange::unit};
  for (std::size_t k = 0; k < mask_.size(); ++k) {
    if (!mask_.data()[k]) continue;
    out.pixels.data()[k] = static_cast<float>(sample_fan(fan, u_[k], v_[k], interp));
  }
  return out;
}

LabelImage ScanConverter::labels_to_cartesian(const LabelImage& fan) const {
  if (fan.rows() != geom_.n_axial || fan.cols() != geom_.n_scanlines) {
    throw std::invalid_argument("scan_convert: label image does not match geometry");
  }
  LabelImage out(geom_.cart_rows, geom_.cart_cols, 0);
  for (std::size_t k = 0; k < mask_.size(); ++k) {
    if (!mask_.data()[k]) continue;
    out.data()[k] = static_cast<TissueIndex>(sample_fan(fan, u_[k], v_[k], Interp::nearest));
  }
  return out;
}

template <typename T>
Grid<double> ScanConverter::to_fan(const Grid<T>& cart, Interp interp) const {
  if (cart.rows() != geom_.cart_rows || cart.cols() != geom_.cart_cols) {
    throw std::invalid_argument("inverse_scan_convert: image does not match geometry");
  }
  const auto rows = static_cast<std::ptrdiff_t>(geom_.cart_rows);
  const auto cols = static_cast<std::ptrdiff_t>(geom_.cart_cols);
  auto inside = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
    return r >= 0 && c >= 0 && r < rows && c < cols && mask_(r, c) != 0;
  };
  Grid<double> out(geom_.n_axial, geom_.n_scanlines, 0.0);
  for (std::size_t j = 0; j < geom_.n_axial; ++j) {
    for (std::size_t i = 0; i < geom_.n_scanlines; ++i) {
      double fr = 0.0;
      double fc = 0.0;
      cart_coords(static_cast<double>(i), static_cast<double>(j), fr, fc);
      const auto r0 = static_cast<std::ptrdiff_t>(std::floor(fr));
      const auto c0 = static_cast<std::ptrdiff_t>(std::floor(fc));
      const double dr = fr - static_cast<double>(r0);
      const double dc = fc - static_cast<double>(c0);
      if (interp == Interp::nearest) {
        // nearest masked neighbour among the four surrounding pixels
        double best = 1e300;
        double value = 0.0;
        for (std::ptrdiff_t a = 0; a < 2; ++a) {
          for (std::ptrdiff_t b = 0; b < 2; ++b) {
            if (!inside(r0 + a, c0 + b)) continue;
            const double d = (dr - a) * (dr - a) + (dc - b) * (dc - b);
            if (d < best) {
              best = d;
              value = static_cast<double>(cart(r0 + a, c0 + b));
            }
          }
        }
        out(j, i) = value;
        continue;
      }
      double acc = 0.0;
      double wsum = 0.0;
      for (std::ptrdiff_t a = 0; a < 2; ++a) {
        for (std::ptrdiff_t b = 0; b < 2; ++b) {
          if (!inside(r0 + a, c0 + b)) continue;
          const double w = (a ? dr : 1.0 - dr) * (b ? dc : 1.0 - dc);
          acc += w * static_cast<double>(cart(r0 + a, c0 + b));
          wsum += w;
        }
      }
      out(j, i) = wsum > 0.0 ? acc / wsum : 0.0;
    }
  }
  return out;
}

template CartesianImage ScanConverter::to_cartesian(const Grid<double>&, Interp) const;
template CartesianImage ScanConverter::to_cartesian(const Grid<float>&, Interp) const;
template CartesianImage ScanConverter::to_cartesian(const Grid<std::uint8_t>&, Interp) const;
template CartesianImage ScanConverter::to_cartesian(const Grid<std::uint16_t>&, Interp) const;
template Grid<double> ScanConverter::to_fan(const Grid<float>&, Interp) const;
template Grid<double> ScanConverter::to_fan(const Grid<double>&, Interp) const;

Grid<double> inverse_scan_convert(const CartesianImage& cart, const ScanGeometry& geom,
                                  Interp interp) {
  return ScanConverter(geom).to_fan(cart.pixels, interp);
}

Grid<std::uint8_t> imaging_mask(const ScanGeometry& geom) { return ScanConverter(geom).mask(); }

}  // namespace sonogan
