#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sonogan {

// Dense row-major 2D array. Fan-domain images use rows = axial samples and
// cols = scanlines, so one image column is one pre-scan-converted beam.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Grid& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using ImageF = Grid<float>;
using LabelImage = Grid<std::uint16_t>;

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

// Copy of the window [r0, r0+h) x [c0, c0+w).
template <typename T>
Grid<T> crop(const Grid<T>& src, std::size_t r0, std::size_t c0, std::size_t h, std::size_t w) {
  if (r0 + h > src.rows() || c0 + w > src.cols()) {
    throw std::out_of_range("crop: window exceeds image bounds");
  }
  Grid<T> out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    std::copy_n(src.data() + (r0 + r) * src.cols() + c0, w, out.data() + r * w);
  }
  return out;
}

}  // namespace sonogan
