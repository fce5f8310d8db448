#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sonogan::nn {

struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t plane() const { return h * w; }
  std::size_t sample() const { return c * h * w; }
  std::size_t count() const { return n * c * h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

// NCHW dense tensor.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{}) : shape_(shape), data_(shape.count(), fill) {}
  Tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T{})
      : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }

  T* sample(std::size_t n) { return data_.data() + n * shape_.sample(); }
  const T* sample(std::size_t n) const { return data_.data() + n * shape_.sample(); }
  T* plane(std::size_t n, std::size_t c) { return sample(n) + c * shape_.plane(); }
  const T* plane(std::size_t n, std::size_t c) const { return sample(n) + c * shape_.plane(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T{}); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

// Channel concatenation of tensors sharing n, h, w.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Shape& s0 = parts.front()->shape();
  std::size_t channels = 0;
  for (const auto* p : parts) {
    const Shape& s = p->shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
      throw std::invalid_argument("concat_channels: " + to_string(s) + " vs " + to_string(s0));
    }
    channels += s.c;
  }
  Tensor<T> out(s0.n, channels, s0.h, s0.w);
  for (std::size_t n = 0; n < s0.n; ++n) {
    T* dst = out.sample(n);
    for (const auto* p : parts) {
      const std::size_t len = p->shape().sample();
      std::copy_n(p->sample(n), len, dst);
      dst += len;
    }
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Tensor<T>* parts[] = {&a, &b};
  return concat_channels<T>(parts);
}

// Channels [c0, c0 + count) of src.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& src, std::size_t c0, std::size_t count) {
  const Shape& s = src.shape();
  if (c0 + count > s.c) throw std::out_of_range("slice_channels: range exceeds channels");
  Tensor<T> out(s.n, count, s.h, s.w);
  for (std::size_t n = 0; n < s.n; ++n) {
    std::copy_n(src.plane(n, c0), count * s.plane(), out.sample(n));
  }
  return out;
}

// dst[:, c0:c0+src.c] += src
template <typename T>
void add_into_channels(Tensor<T>& dst, std::size_t c0, const Tensor<T>& src) {
  const Shape& s = src.shape();
  if (s.n != dst.n() || s.h != dst.h() || s.w != dst.w() || c0 + s.c > dst.c()) {
    throw std::invalid_argument("add_into_channels: shape mismatch");
  }
  for (std::size_t n = 0; n < s.n; ++n) {
    T* d = dst.plane(n, c0);
    const T* p = src.sample(n);
    for (std::size_t i = 0; i < s.sample(); ++i) d[i] += p[i];
  }
}

}  // namespace sonogan::nn
