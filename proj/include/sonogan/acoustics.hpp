#pragma once

// Tissue attenuation look-up, integral attenuation maps in fan coordinates,
// and convex-probe scan conversion.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sonogan/grid.hpp"
#include "sonogan/scene.hpp"

namespace sonogan {

struct TissueClass {
  std::string name;
  double mu_db_cm_mhz = 0.0;   // attenuation, dB / cm / MHz
  double scatter_mean = 0.0;   // Gaussian scatterer amplitude
  double scatter_std = 0.0;
  double echogenicity = 0.0;   // amplitude scale of the scatterers
  double impedance_mrayl = 1.5;  // drives boundary echo strength
};

struct TissueProperties {
  std::vector<TissueClass> tissues;  // indexed by tissue label

  std::size_t size() const { return tissues.size(); }
  // Throws unless every label in [0, required) is covered and values are sane.
  void validate(std::size_t required) const;
};

// Coefficients matching default_phantom_spec() labels.
TissueProperties default_tissue_table();

// Per-sample natural-log attenuation for each tissue label, so that an
// integral map is exactly a = exp(-sum mu).
struct AttenuationLut {
  std::vector<double> mu;
};

AttenuationLut attenuation_lut(const TissueProperties& props, const ScanGeometry& geom);

struct FanAttenuationMap {
  ScanGeometry geometry;
  Grid<double> values;  // rows = axial samples, cols = scanlines
};

// a[z] = exp(-sum_{i<=z} mu[s[i]]) down each scanline, starting at the transducer face.
FanAttenuationMap integrate_attenuation(const FanTissueMap& s, const AttenuationLut& lut);

// Percentile with linear interpolation between order statistics at rank q*(N-1).
double percentile(std::span<const double> values, double q);

// Divide by the 98th percentile and clip to [0, 1].
FanAttenuationMap normalize_attenuation(const FanAttenuationMap& a);

enum class Interp { nearest, bilinear };
enum class ValueRange { unit, symmetric };

struct CartesianImage {
  ImageF pixels;
  Grid<std::uint8_t> mask;
  ValueRange range = ValueRange::unit;
};

// Fixed mapping between a fan grid and its Cartesian display raster.
class ScanConverter {
 public:
  explicit ScanConverter(const ScanGeometry& geom);

  const ScanGeometry& geometry() const { return geom_; }
  const Grid<std::uint8_t>& mask() const { return mask_; }
  double pixel_size_m() const { return pixel_m_; }

  // Fan coordinates (continuous scanline u, axial v) of a Cartesian pixel centre.
  bool fan_coords(std::size_t row, std::size_t col, double& u, double& v) const;
  // Continuous Cartesian (row, col) of a fan sample.
  void cart_coords(double u, double v, double& row, double& col) const;

  template <typename T>
  CartesianImage to_cartesian(const Grid<T>& fan, Interp interp) const;
  LabelImage labels_to_cartesian(const LabelImage& fan) const;

  template <typename T>
  Grid<double> to_fan(const Grid<T>& cart, Interp interp) const;

 private:
  ScanGeometry geom_;
  double pixel_m_ = 0.0;
  double x0_ = 0.0;
  double z0_ = 0.0;
  Grid<std::uint8_t> mask_;
  std::vector<double> u_;
  std::vector<double> v_;
};

template <typename T>
CartesianImage scan_convert(const Grid<T>& fan, const ScanGeometry& geom, Interp interp) {
  return ScanConverter(geom).to_cartesian(fan, interp);
}

Grid<double> inverse_scan_convert(const CartesianImage& cart, const ScanGeometry& geom,
                                  Interp interp);

Grid<std::uint8_t> imaging_mask(const ScanGeometry& geom);

}  // namespace sonogan
