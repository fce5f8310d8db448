#pragma once

// Image similarity metrics: PSNR, MAE, patch chi-square and FID.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sonogan/grid.hpp"

namespace sonogan {

enum class PsnrForm {
  squared_peak,  // 10 log10(255^2 / MSE)
  linear_peak,   // 10 log10(255 / MSE)
};

// Inputs on the 0..255 scale. Returns +infinity when the images are identical.
double psnr(std::span<const double> y, std::span<const double> y_hat,
            PsnrForm form = PsnrForm::squared_peak);

double mae(std::span<const double> y, std::span<const double> y_hat);

struct HistogramSpec {
  int bins = 50;
  int patch = 20;
  double lo = 0.0;
  double hi = 1.0;

  void validate() const;
};

// Unit-mass histogram; values outside [lo, hi] fall in the edge bins.
std::vector<double> histogram(std::span<const float> values, const HistogramSpec& spec);

// 1/2 sum (hA - hB)^2 / (hA + hB); empty bins contribute 0.
double chi2_hist(std::span<const double> ha, std::span<const double> hb);

struct PatchChi2 {
  double value = 0.0;           // RMS over the scored tiles
  std::size_t tiles = 0;        // tiles scored
  Grid<double> tile_values;     // one entry per full tile (NaN where skipped)
  Grid<double> map;             // image-sized, tile value painted over its pixels, 0 elsewhere
};

// Non-overlapping patch x patch tiles, trailing partial tiles dropped. With a
// mask, tiles containing no mask pixel are skipped.
PatchChi2 patch_chi2(const ImageF& y, const ImageF& y_hat, const HistogramSpec& spec,
                     const Grid<std::uint8_t>* mask = nullptr);

struct FidCropSpec {
  std::size_t center = 512;
  std::size_t sub = 299;

  void validate() const;
};

// Offset of the centred `spec.center` square.
std::array<std::size_t, 2> fid_center_offset(std::size_t rows, std::size_t cols,
                                             const FidCropSpec& spec);
// Corner offsets of the four sub-crops inside the centre crop.
std::array<std::array<std::size_t, 2>, 4> fid_sub_offsets(const FidCropSpec& spec);
std::vector<ImageF> fid_crops(const ImageF& img, const FidCropSpec& spec = {});

// Row-major N x D feature matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  void append(std::span<const double> row);
};

// Frechet distance between Gaussian fits of two feature sets.
double fid(const FeatureMatrix& real, const FeatureMatrix& gen);

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::size_t dim() const = 0;
  virtual std::string id() const = 0;
  virtual std::vector<double> features(const ImageF& img) const = 0;
};

// Deterministic fixed-weight convolutional embedding (two scales of random
// 5x5 filters, rectified, mean and std pooled; 64 features). The weights come
// from a fixed seed, or from fid_extractor.bin in the directory named by
// SONOGAN_FID_DIR, which is created from the seed on first use.
class StandInExtractor : public FeatureExtractor {
 public:
  static constexpr const char* kEnvDir = "SONOGAN_FID_DIR";
  static constexpr const char* kWeightsFile = "fid_extractor.bin";

  explicit StandInExtractor(std::uint64_t seed = 0x5f1dULL);
  // Loads (or creates) the weights under `dir`.
  static std::unique_ptr<StandInExtractor> from_directory(const std::filesystem::path& dir);
  // Uses SONOGAN_FID_DIR when set, the built-in seed otherwise.
  static std::unique_ptr<StandInExtractor> from_environment();

  std::size_t dim() const override { return 64; }
  std::string id() const override { return id_; }
  std::vector<double> features(const ImageF& img) const override;

  static constexpr std::size_t kFilters = 16;
  static constexpr std::size_t kTaps = 5;
  static constexpr std::size_t kInput = 64;

 private:
  std::vector<float> filters_;  // [2 scales][kFilters][kTaps * kTaps]
  std::string id_;
};

struct ImageMetrics {
  std::string id;
  double psnr = 0.0;
  double mae = 0.0;
  double pchi2 = 0.0;
  // Mean |y_hat - y| (0..1 scale) over shadow pixels; absent when the frame has none.
  std::optional<double> shadow_error;
};

// Compares generated and reference images inside `mask`.
ImageMetrics evaluate_image(const std::string& id, const ImageF& y, const ImageF& y_hat,
                            const Grid<std::uint8_t>& mask, const Grid<std::uint8_t>& shadow,
                            const HistogramSpec& spec, PsnrForm form = PsnrForm::squared_peak);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (0 for a single value)
  std::size_t count = 0;
};

Summary summarize(std::span<const double> values);

struct MetricReport {
  std::string variant;
  std::string checkpoint_id;
  std::string dataset_id;
  std::size_t generator_params = 0;
  std::vector<ImageMetrics> images;
  Summary psnr;
  Summary mae;
  Summary pchi2;
  Summary shadow_error;
  std::optional<double> fid;
  std::string fid_extractor;

  // Recomputes the summaries from the per-image lists.
  void aggregate();
};

struct BoxStats {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double whisker_lo = 0.0;  // furthest value within 1.5 IQR
  double whisker_hi = 0.0;
  double min = 0.0;
  double max = 0.0;
};

BoxStats box_stats(std::span<const double> values);

struct PairedDifferences {
  std::vector<std::string> ids;
  std::vector<double> psnr;   // a - b, per image
  std::vector<double> mae;
  std::vector<double> pchi2;
  BoxStats psnr_box;
  BoxStats mae_box;
  BoxStats pchi2_box;
};

// Requires both reports to list the same images in the same order.
PairedDifferences paired_differences(const MetricReport& a, const MetricReport& b);

}  // namespace sonogan
