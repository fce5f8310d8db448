#pragma once

// Layers with explicit forward/backward passes.
//
// Each layer caches what its backward pass needs from the most recent
// forward call, so forward and backward must alternate one-to-one. Parameter
// gradients accumulate until zero_grad().

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sonogan/nn/tensor.hpp"

namespace sonogan::nn {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

template <typename T>
void zero_grad(const ParamList<T>& params) {
  for (Param<T>* p : params) p->grad.zero();
}

template <typename T>
std::size_t parameter_count(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const Param<T>* p : params) n += p->value.size();
  return n;
}

// Geometry of a sliding window over one spatial axis.
struct Window {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  // Output length of a convolution over `len` input samples.
  std::size_t conv_out(std::size_t len) const;
};

// cols[(c*k + ki)*k + kj][oy*ow + ox] = x[c][oy*s - p + ki][ox*s - p + kj] (0 outside).
template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t h, std::size_t w, const Window& win,
            std::size_t oh, std::size_t ow, T* cols);

// Adjoint of im2col: scatter-adds cols back into x (x is not cleared).
template <typename T>
void col2im(const T* cols, std::size_t channels, std::size_t h, std::size_t w, const Window& win,
            std::size_t oh, std::size_t ow, T* x);

// N(0, std) weights, zero biases. Values are drawn in double so float and
// double networks built from one seed hold the same numbers.
template <typename T>
void init_normal(Tensor<T>& t, double stddev, std::mt19937_64& rng);

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride, std::size_t pad);

  Shape output_shape(const Shape& in) const;
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void init(double stddev, std::mt19937_64& rng);
  void collect(ParamList<T>& out);

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  const Window& window() const { return win_; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  Window win_;
  Param<T> weight_;  // [out, in, k, k]
  Param<T> bias_;    // [out]
  Tensor<T> input_;
};

// Transposed convolution; weight layout [in, out, k, k].
template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::string name, std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel, std::size_t stride, std::size_t pad,
                  std::size_t output_padding = 0);

  Shape output_shape(const Shape& in) const;
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void init(double stddev, std::mt19937_64& rng);
  void collect(ParamList<T>& out);

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  const Window& window() const { return win_; }
  std::size_t output_padding() const { return output_padding_; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  Window win_;
  std::size_t output_padding_ = 0;
  Param<T> weight_;
  Param<T> bias_;
  Tensor<T> input_;
};

// Per-sample, per-channel normalisation without affine parameters.
template <typename T>
class InstanceNorm {
 public:
  explicit InstanceNorm(double eps = 1e-5) : eps_(eps) {}
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);

 private:
  double eps_;
  Tensor<T> normed_;
  std::vector<T> inv_std_;
};

// slope 0 is a plain ReLU.
template <typename T>
class LeakyRelu {
 public:
  explicit LeakyRelu(T slope = T(0)) : slope_(slope) {}
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  T slope() const { return slope_; }

 private:
  T slope_;
  Tensor<T> out_;
};

template <typename T>
class Tanh {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);

 private:
  Tensor<T> out_;
};

// y[n, c] = x[n, c] + weight[c] * noise[n, 0]; weights start at zero.
template <typename T>
class NoiseInjection {
 public:
  NoiseInjection() = default;
  NoiseInjection(std::string name, std::size_t channels);
  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& noise);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(ParamList<T>& out);
  Param<T>& weight() { return weight_; }

 private:
  Param<T> weight_;
  Tensor<T> noise_;
};

// Nearest-neighbour decimation by an integer factor (src = dst * factor).
template <typename T>
Tensor<T> downsample_nearest(const Tensor<T>& x, std::size_t factor);

// Bilinear resize by 1/factor with half-pixel centres and edge clamping.
template <typename T>
Tensor<T> downsample_bilinear(const Tensor<T>& x, std::size_t factor);

// Mean over all elements of a tensor (helper for losses and tests).
template <typename T>
double mean(const Tensor<T>& x);

}  // namespace sonogan::nn
