#pragma once

// Hand-rolled random generators for property tests.

#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "sonogan/grid.hpp"
#include "sonogan/nn/tensor.hpp"

namespace testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  double normal(double mean = 0.0, double sd = 1.0) {
    return std::normal_distribution<double>(mean, sd)(rng_);
  }
  // Inclusive range.
  long integer(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(rng_); }
  std::size_t size(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  bool coin(double p = 0.5) { return uniform() < p; }

  std::vector<double> vec(std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = uniform(lo, hi);
    return v;
  }
  std::vector<float> vecf(std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(uniform(lo, hi));
    return v;
  }

  template <typename T>
  sonogan::Grid<T> grid(std::size_t rows, std::size_t cols, double lo, double hi) {
    sonogan::Grid<T> g(rows, cols);
    for (auto& x : g.values()) x = static_cast<T>(uniform(lo, hi));
    return g;
  }

  sonogan::LabelImage labels(std::size_t rows, std::size_t cols, int n_labels) {
    sonogan::LabelImage g(rows, cols);
    for (auto& x : g.values()) x = static_cast<std::uint16_t>(integer(0, n_labels - 1));
    return g;
  }

  template <typename T>
  sonogan::nn::Tensor<T> tensor(sonogan::nn::Shape s, double lo = -1.0, double hi = 1.0) {
    sonogan::nn::Tensor<T> t(s);
    for (auto& x : t.values()) x = static_cast<T>(uniform(lo, hi));
    return t;
  }

  // Unit-mass histogram with roughly `zero_frac` empty bins.
  std::vector<double> histogram(std::size_t bins, double zero_frac = 0.3) {
    std::vector<double> h(bins);
    double total = 0.0;
    for (auto& x : h) {
      x = coin(zero_frac) ? 0.0 : uniform(0.0, 1.0);
      total += x;
    }
    if (total == 0.0) {
      h[size(0, bins - 1)] = 1.0;
      total = 1.0;
    }
    for (auto& x : h) x /= total;
    return h;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testing
