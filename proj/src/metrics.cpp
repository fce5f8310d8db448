#include "sonogan/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "sonogan/io.hpp"

namespace sonogan {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": inputs differ in size (" +
                                std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
  if (a == 0) throw std::invalid_argument(std::string(what) + ": empty input");
}

// Linear interpolation between order statistics at rank q (n - 1).
double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double psnr(std::span<const double> y, std::span<const double> y_hat, PsnrForm form) {
  require_same_length(y.size(), y_hat.size(), "psnr");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - y_hat[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(y.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  const double peak = form == PsnrForm::squared_peak ? 255.0 * 255.0 : 255.0;
  return 10.0 * std::log10(peak / mse);
}

double mae(std::span<const double> y, std::span<const double> y_hat) {
  require_same_length(y.size(), y_hat.size(), "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += std::abs(y[i] - y_hat[i]);
  return acc / static_cast<double>(y.size());
}

void HistogramSpec::validate() const {
  if (bins < 2) throw std::invalid_argument("histogram: bins must be >= 2");
  if (patch < 2) throw std::invalid_argument("histogram: patch must be >= 2");
  if (!(hi > lo)) throw std::invalid_argument("histogram: empty value range");
}

std::vector<double> histogram(std::span<const float> values, const HistogramSpec& spec) {
  spec.validate();
  std::vector<double> h(static_cast<std::size_t>(spec.bins), 0.0);
  if (values.empty()) return h;
  const double scale = spec.bins / (spec.hi - spec.lo);
  for (const float v : values) {
    const double t = std::floor((static_cast<double>(v) - spec.lo) * scale);
    const auto bin = static_cast<std::size_t>(std::clamp(t, 0.0, spec.bins - 1.0));
    h[bin] += 1.0;
  }
  const double inv = 1.0 / static_cast<double>(values.size());
  for (double& b : h) b *= inv;
  return h;
}

double chi2_hist(std::span<const double> ha, std::span<const double> hb) {
  if (ha.size() != hb.size()) throw std::invalid_argument("chi2_hist: histogram lengths differ");
  double acc = 0.0;
  for (std::size_t l = 0; l < ha.size(); ++l) {
    if (ha[l] < 0 || hb[l] < 0) throw std::invalid_argument("chi2_hist: negative bin count");
    const double s = ha[l] + hb[l];
    if (s > 0) {
      const double d = ha[l] - hb[l];
      acc += d * d / s;
    }
  }
  return 0.5 * acc;
}

PatchChi2 patch_chi2(const ImageF& y, const ImageF& y_hat, const HistogramSpec& spec,
                     const Grid<std::uint8_t>* mask) {
  spec.validate();
  require_same_shape(y, y_hat, "patch_chi2");
  if (mask) require_same_shape(y, *mask, "patch_chi2 mask");
  const auto p = static_cast<std::size_t>(spec.patch);
  if (y.rows() < p || y.cols() < p) {
    throw std::invalid_argument("patch_chi2: image " + std::to_string(y.rows()) + "x" +
                                std::to_string(y.cols()) + " is smaller than one " +
                                std::to_string(p) + "x" + std::to_string(p) + " patch");
  }
  PatchChi2 out;
  const std::size_t th = y.rows() / p;
  const std::size_t tw = y.cols() / p;
  out.tile_values = Grid<double>(th, tw, std::numeric_limits<double>::quiet_NaN());
  out.map = Grid<double>(y.rows(), y.cols(), 0.0);
  std::vector<float> ta(p * p);
  std::vector<float> tb(p * p);
  double acc = 0.0;
  for (std::size_t ti = 0; ti < th; ++ti) {
    for (std::size_t tj = 0; tj < tw; ++tj) {
      bool any = mask == nullptr;
      std::size_t k = 0;
      for (std::size_t r = ti * p; r < (ti + 1) * p; ++r) {
        for (std::size_t c = tj * p; c < (tj + 1) * p; ++c) {
          ta[k] = y(r, c);
          tb[k] = y_hat(r, c);
          ++k;
          if (mask && (*mask)(r, c)) any = true;
        }
      }
      if (!any) continue;
      const double v = chi2_hist(histogram(ta, spec), histogram(tb, spec));
      out.tile_values(ti, tj) = v;
      for (std::size_t r = ti * p; r < (ti + 1) * p; ++r) {
        for (std::size_t c = tj * p; c < (tj + 1) * p; ++c) out.map(r, c) = v;
      }
      acc += v * v;
      ++out.tiles;
    }
  }
  if (out.tiles == 0) throw std::invalid_argument("patch_chi2: no tile overlaps the mask");
  out.value = std::sqrt(acc / static_cast<double>(out.tiles));
  return out;
}

void FidCropSpec::validate() const {
  if (sub == 0 || center < sub) {
    throw std::invalid_argument("fid crops: sub-crop must be non-empty and fit the centre crop");
  }
}

std::array<std::size_t, 2> fid_center_offset(std::size_t rows, std::size_t cols,
                                             const FidCropSpec& spec) {
  spec.validate();
  if (rows < spec.center || cols < spec.center) {
    throw std::invalid_argument("fid crops: image " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " is smaller than the " +
                                std::to_string(spec.center) + " centre crop");
  }
  return {(rows - spec.center) / 2, (cols - spec.center) / 2};
}

std::array<std::array<std::size_t, 2>, 4> fid_sub_offsets(const FidCropSpec& spec) {
  spec.validate();
  const std::size_t e = spec.center - spec.sub;
  return {{{0, 0}, {0, e}, {e, 0}, {e, e}}};
}

std::vector<ImageF> fid_crops(const ImageF& img, const FidCropSpec& spec) {
  const auto [r0, c0] = fid_center_offset(img.rows(), img.cols(), spec);
  std::vector<ImageF> out;
  for (const auto& [dr, dc] : fid_sub_offsets(spec)) {
    out.push_back(crop(img, r0 + dr, c0 + dc, spec.sub, spec.sub));
  }
  return out;
}

void FeatureMatrix::append(std::span<const double> row) {
  if (rows == 0 && cols == 0) cols = row.size();
  if (row.size() != cols) throw std::invalid_argument("feature row has the wrong length");
  data.insert(data.end(), row.begin(), row.end());
  ++rows;
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void fit_gaussian(const FeatureMatrix& f, VectorXd& mu, MatrixXd& cov) {
  if (f.rows < 2) throw std::invalid_argument("fid: need at least 2 feature vectors per set");
  for (const double v : f.data) {
    if (!std::isfinite(v)) throw std::invalid_argument("fid: non-finite feature value");
  }
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      f.data.data(), static_cast<Eigen::Index>(f.rows), static_cast<Eigen::Index>(f.cols));
  mu = x.colwise().mean().transpose();
  const MatrixXd centered = x.rowwise() - mu.transpose();
  cov = centered.transpose() * centered / static_cast<double>(f.rows - 1);
}

// Eigenvalues of a symmetric PSD matrix with round-off negatives clamped to 0.
VectorXd clamped_eigenvalues(const Eigen::SelfAdjointEigenSolver<MatrixXd>& es, double scale) {
  VectorXd ev = es.eigenvalues();
  const double tol = 1e-6 * std::max(1.0, scale);
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -tol) {
      throw std::runtime_error("fid: covariance product has eigenvalue " + std::to_string(ev[i]) +
                               " below the clamping tolerance");
    }
    ev[i] = std::max(ev[i], 0.0);
  }
  return ev;
}

}  // namespace

double fid(const FeatureMatrix& real, const FeatureMatrix& gen) {
  if (real.cols != gen.cols) throw std::invalid_argument("fid: feature dimensions differ");
  VectorXd mu1, mu2;
  MatrixXd s1, s2;
  fit_gaussian(real, mu1, s1);
  fit_gaussian(gen, mu2, s2);

  // Tr((S1 S2)^1/2) = Tr((S1^1/2 S2 S1^1/2)^1/2), which keeps every step symmetric
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es1(s1);
  const VectorXd ev1 = clamped_eigenvalues(es1, s1.diagonal().cwiseAbs().maxCoeff());
  const MatrixXd s1_half =
      es1.eigenvectors() * ev1.cwiseSqrt().asDiagonal() * es1.eigenvectors().transpose();
  MatrixXd m = s1_half * s2 * s1_half;
  m = 0.5 * (m + m.transpose());
  const Eigen::SelfAdjointEigenSolver<MatrixXd> esm(m, Eigen::EigenvaluesOnly);
  const VectorXd evm = clamped_eigenvalues(esm, m.diagonal().cwiseAbs().maxCoeff());
  const double tr_sqrt = evm.cwiseSqrt().sum();

  const double d = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
  return std::max(d, 0.0);
}

namespace {

constexpr char kExtractorMagic[8] = {'S', 'G', 'F', 'X', '0', '0', '0', '1'};
constexpr std::size_t kExtractorWeights =
    2 * StandInExtractor::kFilters * StandInExtractor::kTaps * StandInExtractor::kTaps;

std::vector<float> random_filters(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / StandInExtractor::kTaps);
  std::vector<float> w(kExtractorWeights);
  for (float& v : w) v = static_cast<float>(dist(rng));
  return w;
}

std::string weights_id(const std::vector<float>& w) {
  std::string bytes(reinterpret_cast<const char*>(w.data()), w.size() * sizeof(float));
  return "standin-" + io::content_hash(bytes);
}

// Box-filtered resize to n x n; each output pixel averages its source footprint.
std::vector<float> area_resize(const ImageF& img, std::size_t n) {
  std::vector<float> out(n * n, 0.0f);
  const double sy = static_cast<double>(img.rows()) / static_cast<double>(n);
  const double sx = static_cast<double>(img.cols()) / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto r0 = static_cast<std::size_t>(std::floor(r * sy));
    const auto r1 = std::max(r0 + 1, static_cast<std::size_t>(std::ceil((r + 1) * sy)));
    for (std::size_t c = 0; c < n; ++c) {
      const auto c0 = static_cast<std::size_t>(std::floor(c * sx));
      const auto c1 = std::max(c0 + 1, static_cast<std::size_t>(std::ceil((c + 1) * sx)));
      double acc = 0.0;
      for (std::size_t i = r0; i < std::min(r1, img.rows()); ++i) {
        for (std::size_t j = c0; j < std::min(c1, img.cols()); ++j) acc += img(i, j);
      }
      const double cnt = static_cast<double>((std::min(r1, img.rows()) - r0) *
                                             (std::min(c1, img.cols()) - c0));
      out[r * n + c] = static_cast<float>(acc / cnt);
    }
  }
  return out;
}

// Rectified valid convolution responses of one filter bank, pooled to (mean, std).
void pooled_responses(const std::vector<float>& img, std::size_t n, const float* filters,
                      std::vector<double>& out) {
  constexpr std::size_t k = StandInExtractor::kTaps;
  const std::size_t m = n - k + 1;
  for (std::size_t f = 0; f < StandInExtractor::kFilters; ++f) {
    const float* w = filters + f * k * k;
    double s = 0.0;
    double s2 = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < m; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < k; ++j) acc += w[i * k + j] * img[(r + i) * n + c + j];
        }
        acc = std::max(acc, 0.0);
        s += acc;
        s2 += acc * acc;
      }
    }
    const double cnt = static_cast<double>(m * m);
    const double mean = s / cnt;
    out.push_back(mean);
    out.push_back(std::sqrt(std::max(s2 / cnt - mean * mean, 0.0)));
  }
}

}  // namespace

StandInExtractor::StandInExtractor(std::uint64_t seed)
    : filters_(random_filters(seed)), id_(weights_id(filters_)) {}

std::unique_ptr<StandInExtractor> StandInExtractor::from_directory(
    const std::filesystem::path& dir) {
  auto ex = std::make_unique<StandInExtractor>();
  const auto path = dir / kWeightsFile;
  if (!std::filesystem::exists(path)) {
    std::filesystem::create_directories(dir);
    std::ofstream out(path, std::ios::binary);
    out.write(kExtractorMagic, sizeof(kExtractorMagic));
    out.write(reinterpret_cast<const char*>(ex->filters_.data()),
              static_cast<std::streamsize>(ex->filters_.size() * sizeof(float)));
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return ex;
  }
  std::ifstream in(path, std::ios::binary);
  char magic[sizeof(kExtractorMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kExtractorMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not a feature extractor weights file: " + path.string());
  }
  in.read(reinterpret_cast<char*>(ex->filters_.data()),
          static_cast<std::streamsize>(ex->filters_.size() * sizeof(float)));
  if (!in) throw std::runtime_error("truncated feature extractor weights: " + path.string());
  ex->id_ = weights_id(ex->filters_);
  return ex;
}

std::unique_ptr<StandInExtractor> StandInExtractor::from_environment() {
  if (const char* dir = std::getenv(kEnvDir); dir != nullptr && *dir != '\0') {
    return from_directory(dir);
  }
  return std::make_unique<StandInExtractor>();
}

std::vector<double> StandInExtractor::features(const ImageF& img) const {
  if (img.rows() < kTaps || img.cols() < kTaps) {
    throw std::invalid_argument("feature extractor: image too small");
  }
  std::vector<float> x = area_resize(img, kInput);
  for (float& v : x) v = 2.0f * v - 1.0f;
  std::vector<double> out;
  out.reserve(dim());
  pooled_responses(x, kInput, filters_.data(), out);
  const std::size_t half = kInput / 2;
  std::vector<float> x2(half * half);
  for (std::size_t r = 0; r < half; ++r) {
    for (std::size_t c = 0; c < half; ++c) {
      x2[r * half + c] = 0.25f * (x[2 * r * kInput + 2 * c] + x[2 * r * kInput + 2 * c + 1] +
                                  x[(2 * r + 1) * kInput + 2 * c] +
                                  x[(2 * r + 1) * kInput + 2 * c + 1]);
    }
  }
  pooled_responses(x2, half, filters_.data() + kFilters * kTaps * kTaps, out);
  return out;
}

ImageMetrics evaluate_image(const std::string& id, const ImageF& y, const ImageF& y_hat,
                            const Grid<std::uint8_t>& mask, const Grid<std::uint8_t>& shadow,
                            const HistogramSpec& spec, PsnrForm form) {
  require_same_shape(y, y_hat, "evaluate_image");
  require_same_shape(y, mask, "evaluate_image mask");
  std::vector<double> a;
  std::vector<double> b;
  double shadow_acc = 0.0;
  std::size_t shadow_n = 0;
  const bool has_shadow = shadow.size() == y.size();
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (!mask.data()[k]) continue;
    a.push_back(255.0 * y.data()[k]);
    b.push_back(255.0 * y_hat.data()[k]);
    if (has_shadow && shadow.data()[k]) {
      shadow_acc += std::abs(static_cast<double>(y_hat.data()[k]) - y.data()[k]);
      ++shadow_n;
    }
  }
  if (a.empty()) throw std::invalid_argument("evaluate_image: empty mask");
  ImageMetrics m;
  m.id = id;
  m.psnr = psnr(a, b, form);
  m.mae = mae(a, b);
  m.pchi2 = patch_chi2(y, y_hat, spec, &mask).value;
  if (shadow_n > 0) m.shadow_error = shadow_acc / static_cast<double>(shadow_n);
  return m;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  double acc = 0.0;
  for (const double v : values) {
    if (!std::isfinite(v)) continue;
    acc += v;
    ++s.count;
  }
  if (s.count == 0) return s;
  s.mean = acc / static_cast<double>(s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (const double v : values) {
      if (std::isfinite(v)) ss += (v - s.mean) * (v - s.mean);
    }
    s.std = std::sqrt(ss / static_cast<double>(s.count - 1));
  }
  return s;
}

void MetricReport::aggregate() {
  std::vector<double> p, m, c, sh;
  for (const ImageMetrics& im : images) {
    p.push_back(im.psnr);
    m.push_back(im.mae);
    c.push_back(im.pchi2);
    if (im.shadow_error) sh.push_back(*im.shadow_error);
  }
  psnr = summarize(p);
  mae = summarize(m);
  pchi2 = summarize(c);
  shadow_error = summarize(sh);
}

BoxStats box_stats(std::span<const double> values) {
  BoxStats b;
  std::vector<double> v(values.begin(), values.end());
  if (v.empty()) return b;
  std::sort(v.begin(), v.end());
  b.q1 = quantile_sorted(v, 0.25);
  b.median = quantile_sorted(v, 0.5);
  b.q3 = quantile_sorted(v, 0.75);
  b.min = v.front();
  b.max = v.back();
  const double iqr = b.q3 - b.q1;
  b.whisker_lo = *std::lower_bound(v.begin(), v.end(), b.q1 - 1.5 * iqr);
  b.whisker_hi = *(std::upper_bound(v.begin(), v.end(), b.q3 + 1.5 * iqr) - 1);
  return b;
}

PairedDifferences paired_differences(const MetricReport& a, const MetricReport& b) {
  if (a.images.size() != b.images.size()) {
    throw std::invalid_argument("paired_differences: reports cover " +
                                std::to_string(a.images.size()) + " and " +
                                std::to_string(b.images.size()) + " images");
  }
  PairedDifferences d;
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    const ImageMetrics& x = a.images[i];
    const ImageMetrics& y = b.images[i];
    if (x.id != y.id) {
      throw std::invalid_argument("paired_differences: image " + std::to_string(i) + " is '" +
                                  x.id + "' in one report and '" + y.id + "' in the other");
    }
    d.ids.push_back(x.id);
    d.psnr.push_back(x.psnr - y.psnr);
    d.mae.push_back(x.mae - y.mae);
    d.pchi2.push_back(x.pchi2 - y.pchi2);
  }
  d.psnr_box = box_stats(d.psnr);
  d.mae_box = box_stats(d.mae);
  d.pchi2_box = box_stats(d.pchi2);
  return d;
}

}  // namespace sonogan
