#include "sonogan/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "sonogan/simd/kernels.hpp"

namespace sonogan::nn {

std::string to_string(const Shape& s) {
  return "[" + std::to_string(s.n) + ", " + std::to_string(s.c) + ", " + std::to_string(s.h) +
         ", " + std::to_string(s.w) + "]";
}

std::size_t Window::conv_out(std::size_t len) const {
  if (len + 2 * pad < kernel) {
    throw std::invalid_argument("window of " + std::to_string(kernel) +
                                " does not fit input length " + std::to_string(len));
  }
  return (len + 2 * pad - kernel) / stride + 1;
}

template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t h, std::size_t w, const Window& win,
            std::size_t oh, std::size_t ow, T* cols) {
  const std::size_t k = win.kernel;
  const auto s = static_cast<std::ptrdiff_t>(win.stride);
  const auto p = static_cast<std::ptrdiff_t>(win.pad);
  const auto hh = static_cast<std::ptrdiff_t>(h);
  const auto ww = static_cast<std::ptrdiff_t>(w);
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = x + c * h * w;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = cols + ((c * k + ki) * k + kj) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s - p +
                                    static_cast<std::ptrdiff_t>(ki);
          T* dst = row + oy * ow;
          if (iy < 0 || iy >= hh) {
            std::fill_n(dst, ow, T(0));
            continue;
          }
          const T* src = plane + iy * ww;
          const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kj) - p;
          if (s == 1) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) + off;
              dst[ox] = (ix >= 0 && ix < ww) ? src[ix] : T(0);
            }
          } else {
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * s + off;
              dst[ox] = (ix >= 0 && ix < ww) ? src[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, std::size_t channels, std::size_t h, std::size_t w, const Window& win,
            std::size_t oh, std::size_t ow, T* x) {
  const std::size_t k = win.kernel;
  const auto s = static_cast<std::ptrdiff_t>(win.stride);
  const auto p = static_cast<std::ptrdiff_t>(win.pad);
  const auto hh = static_cast<std::ptrdiff_t>(h);
  const auto ww = static_cast<std::ptrdiff_t>(w);
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = x + c * h * w;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = cols + ((c * k + ki) * k + kj) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s - p +
                                    static_cast<std::ptrdiff_t>(ki);
          if (iy < 0 || iy >= hh) continue;
          const T* src = row + oy * ow;
          T* dst = plane + iy * ww;
          const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kj) - p;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * s + off;
            if (ix >= 0 && ix < ww) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void init_normal(Tensor<T>& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (T& v : t.values()) v = static_cast<T>(dist(rng));
}

namespace {

template <typename T>
void add_bias(Tensor<T>& y, const Tensor<T>& bias) {
  for (std::size_t n = 0; n < y.n(); ++n) {
    for (std::size_t c = 0; c < y.c(); ++c) {
      T* p = y.plane(n, c);
      const T b = bias.data()[c];
      for (std::size_t i = 0; i < y.shape().plane(); ++i) p[i] += b;
    }
  }
}

template <typename T>
void accumulate_bias_grad(const Tensor<T>& grad_out, Tensor<T>& bias_grad) {
  for (std::size_t n = 0; n < grad_out.n(); ++n) {
    for (std::size_t c = 0; c < grad_out.c(); ++c) {
      bias_grad.data()[c] +=
          static_cast<T>(simd::sum(grad_out.shape().plane(), grad_out.plane(n, c)));
    }
  }
}

void check_channels(const char* layer, const std::string& name, std::size_t expected,
                    const Shape& got) {
  if (got.c != expected) {
    throw std::invalid_argument(std::string(layer) + " " + name + ": expected " +
                                std::to_string(expected) + " input channels, got " +
                                to_string(got));
  }
}

}  // namespace

template <typename T>
Conv2d<T>::Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel, std::size_t stride, std::size_t pad)
    : in_(in_channels),
      out_(out_channels),
      win_{kernel, stride, pad},
      weight_(name + ".weight", Shape{out_channels, in_channels, kernel, kernel}),
      bias_(name + ".bias", Shape{1, 1, 1, out_channels}) {
  if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0) {
    throw std::invalid_argument("conv " + name + ": zero-sized configuration");
  }
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& in) const {
  return Shape{in.n, out_, win_.conv_out(in.h), win_.conv_out(in.w)};
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  check_channels("conv", weight_.name, in_, x.shape());
  const Shape os = output_shape(x.shape());
  const std::size_t kk = in_ * win_.kernel * win_.kernel;
  const std::size_t pix = os.plane();
  Tensor<T> y(os);
  std::vector<T> cols(kk * pix);
  for (std::size_t n = 0; n < x.n(); ++n) {
    im2col(x.sample(n), in_, x.h(), x.w(), win_, os.h, os.w, cols.data());
    simd::gemm(false, false, out_, pix, kk, T(1), weight_.value.data(), kk, cols.data(), pix, T(0),
               y.sample(n), pix);
  }
  add_bias(y, bias_.value);
  input_ = x;
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  const Shape os = output_shape(input_.shape());
  if (grad_out.shape() != os) {
    throw std::invalid_argument("conv " + weight_.name + " backward: gradient " +
                                to_string(grad_out.shape()) + " vs output " + to_string(os));
  }
  const std::size_t kk = in_ * win_.kernel * win_.kernel;
  const std::size_t pix = os.plane();
  Tensor<T> dx(input_.shape());
  std::vector<T> cols(kk * pix);
  for (std::size_t n = 0; n < input_.n(); ++n) {
    im2col(input_.sample(n), in_, input_.h(), input_.w(), win_, os.h, os.w, cols.data());
    simd::gemm(false, true, out_, kk, pix, T(1), grad_out.sample(n), pix, cols.data(), pix, T(1),
               weight_.grad.data(), kk);
    simd::gemm(true, false, kk, pix, out_, T(1), weight_.value.data(), kk, grad_out.sample(n), pix,
               T(0), cols.data(), pix);
    col2im(cols.data(), in_, input_.h(), input_.w(), win_, os.h, os.w, dx.sample(n));
  }
  accumulate_bias_grad(grad_out, bias_.grad);
  return dx;
}

template <typename T>
void Conv2d<T>::init(double stddev, std::mt19937_64& rng) {
  init_normal(weight_.value, stddev, rng);
  bias_.value.zero();
}

template <typename T>
void Conv2d<T>::collect(ParamList<T>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::string name, std::size_t in_channels,
                                    std::size_t out_channels, std::size_t kernel,
                                    std::size_t stride, std::size_t pad,
                                    std::size_t output_padding)
    : in_(in_channels),
      out_(out_channels),
      win_{kernel, stride, pad},
      output_padding_(output_padding),
      weight_(name + ".weight", Shape{in_channels, out_channels, kernel, kernel}),
      bias_(name + ".bias", Shape{1, 1, 1, out_channels}) {
  if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0) {
    throw std::invalid_argument("deconv " + name + ": zero-sized configuration");
  }
  if (output_padding >= stride) {
    throw std::invalid_argument("deconv " + name + ": output_padding must be below stride");
  }
}

template <typename T>
Shape ConvTranspose2d<T>::output_shape(const Shape& in) const {
  auto len = [&](std::size_t l) -> std::size_t {
    const std::size_t full = (l - 1) * win_.stride + win_.kernel + output_padding_;
    if (l == 0 || full <= 2 * win_.pad) {
      throw std::invalid_argument("deconv " + weight_.name + ": input too small");
    }
    return full - 2 * win_.pad;
  };
  return Shape{in.n, out_, len(in.h), len(in.w)};
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x) {
  check_channels("deconv", weight_.name, in_, x.shape());
  const Shape os = output_shape(x.shape());
  const std::size_t okk = out_ * win_.kernel * win_.kernel;
  const std::size_t pix = x.shape().plane();
  Tensor<T> y(os);
  std::vector<T> cols(okk * pix);
  for (std::size_t n = 0; n < x.n(); ++n) {
    simd::gemm(true, false, okk, pix, in_, T(1), weight_.value.data(), okk, x.sample(n), pix,
               T(0), cols.data(), pix);
    col2im(cols.data(), out_, os.h, os.w, win_, x.h(), x.w(), y.sample(n));
  }
  add_bias(y, bias_.value);
  input_ = x;
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& grad_out) {
  const Shape os = output_shape(input_.shape());
  if (grad_out.shape() != os) {
    throw std::invalid_argument("deconv " + weight_.name + " backward: gradient " +
                                to_string(grad_out.shape()) + " vs output " + to_string(os));
  }
  const std::size_t okk = out_ * win_.kernel * win_.kernel;
  const std::size_t pix = input_.shape().plane();
  Tensor<T> dx(input_.shape());
  std::vector<T> cols(okk * pix);
  for (std::size_t n = 0; n < input_.n(); ++n) {
    im2col(grad_out.sample(n), out_, os.h, os.w, win_, input_.h(), input_.w(), cols.data());
    simd::gemm(false, false, in_, pix, okk, T(1), weight_.value.data(), okk, cols.data(), pix,
               T(0), dx.sample(n), pix);
    simd::gemm(false, true, in_, okk, pix, T(1), input_.sample(n), pix, cols.data(), pix, T(1),
               weight_.grad.data(), okk);
  }
  accumulate_bias_grad(grad_out, bias_.grad);
  return dx;
}

template <typename T>
void ConvTranspose2d<T>::init(double stddev, std::mt19937_64& rng) {
  init_normal(weight_.value, stddev, rng);
  bias_.value.zero();
}

template <typename T>
void ConvTranspose2d<T>::collect(ParamList<T>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

template <typename T>
Tensor<T> InstanceNorm<T>::forward(const Tensor<T>& x) {
  const std::size_t len = x.shape().plane();
  normed_ = Tensor<T>(x.shape());
  inv_std_.assign(x.n() * x.c(), T(0));
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      const double mu = simd::sum(len, src) / static_cast<double>(len);
      const double var = simd::sum_sq_dev(len, src, mu) / static_cast<double>(len);
      const double inv = 1.0 / std::sqrt(var + eps_);
      inv_std_[n * x.c() + c] = static_cast<T>(inv);
      simd::shift_scale(len, src, static_cast<T>(mu), static_cast<T>(inv), normed_.plane(n, c));
    }
  }
  return normed_;
}

template <typename T>
Tensor<T> InstanceNorm<T>::backward(const Tensor<T>& grad_out) {
  if (grad_out.shape() != normed_.shape()) {
    throw std::invalid_argument("instance norm backward: shape mismatch");
  }
  const std::size_t len = grad_out.shape().plane();
  Tensor<T> dx(grad_out.shape());
  for (std::size_t n = 0; n < grad_out.n(); ++n) {
    for (std::size_t c = 0; c < grad_out.c(); ++c) {
      const T* g = grad_out.plane(n, c);
      const T* y = normed_.plane(n, c);
      const double mg = simd::sum(len, g) / static_cast<double>(len);
      const double mgy = static_cast<double>(simd::dot(len, g, y)) / static_cast<double>(len);
      const T inv = inv_std_[n * grad_out.c() + c];
      T* d = dx.plane(n, c);
      const T tmg = static_cast<T>(mg);
      const T tmgy = static_cast<T>(mgy);
      for (std::size_t i = 0; i < len; ++i) d[i] = inv * (g[i] - tmg - y[i] * tmgy);
    }
  }
  return dx;
}

template <typename T>
Tensor<T> LeakyRelu<T>::forward(const Tensor<T>& x) {
  out_ = Tensor<T>(x.shape());
  simd::leaky_relu(x.size(), x.data(), slope_, out_.data());
  return out_;
}

template <typename T>
Tensor<T> LeakyRelu<T>::backward(const Tensor<T>& grad_out) {
  if (grad_out.shape() != out_.shape()) {
    throw std::invalid_argument("leaky relu backward: shape mismatch");
  }
  Tensor<T> dx(grad_out.shape());
  simd::leaky_relu_backward(grad_out.size(), out_.data(), grad_out.data(), slope_, dx.data());
  return dx;
}

template <typename T>
Tensor<T> Tanh<T>::forward(const Tensor<T>& x) {
  out_ = Tensor<T>(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out_.data()[i] = std::tanh(x.data()[i]);
  return out_;
}

template <typename T>
Tensor<T> Tanh<T>::backward(const Tensor<T>& grad_out) {
  if (grad_out.shape() != out_.shape()) throw std::invalid_argument("tanh backward: shape mismatch");
  Tensor<T> dx(grad_out.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const T y = out_.data()[i];
    dx.data()[i] = grad_out.data()[i] * (T(1) - y * y);
  }
  return dx;
}

template <typename T>
NoiseInjection<T>::NoiseInjection(std::string name, std::size_t channels)
    : weight_(name + ".weight", Shape{1, 1, 1, channels}) {}

template <typename T>
Tensor<T> NoiseInjection<T>::forward(const Tensor<T>& x, const Tensor<T>& noise) {
  const Shape& s = x.shape();
  if (noise.c() != 1 || noise.h() != s.h || noise.w() != s.w ||
      (noise.n() != s.n && noise.n() != 1)) {
    throw std::invalid_argument("noise " + weight_.name + ": noise " + to_string(noise.shape()) +
                                " does not match features " + to_string(s));
  }
  if (s.c != weight_.value.size()) {
    throw std::invalid_argument("noise " + weight_.name + ": channel count mismatch");
  }
  Tensor<T> y = x;
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* z = noise.plane(noise.n() == 1 ? 0 : n, 0);
    for (std::size_t c = 0; c < s.c; ++c) {
      const T w = weight_.value.data()[c];
      if (w != T(0)) simd::axpy(s.plane(), w, z, y.plane(n, c));
    }
  }
  noise_ = noise;
  return y;
}

template <typename T>
Tensor<T> NoiseInjection<T>::backward(const Tensor<T>& grad_out) {
  const Shape& s = grad_out.shape();
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* z = noise_.plane(noise_.n() == 1 ? 0 : n, 0);
    for (std::size_t c = 0; c < s.c; ++c) {
      weight_.grad.data()[c] += simd::dot(s.plane(), grad_out.plane(n, c), z);
    }
  }
  return grad_out;
}

template <typename T>
void NoiseInjection<T>::collect(ParamList<T>& out) {
  out.push_back(&weight_);
}

template <typename T>
Tensor<T> downsample_nearest(const Tensor<T>& x, std::size_t factor) {
  if (factor == 0 || x.h() % factor != 0 || x.w() % factor != 0) {
    throw std::invalid_argument("downsample_nearest: factor must divide " + to_string(x.shape()));
  }
  if (factor == 1) return x;
  Tensor<T> y(x.n(), x.c(), x.h() / factor, x.w() / factor);
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      for (std::size_t r = 0; r < y.h(); ++r) {
        for (std::size_t q = 0; q < y.w(); ++q) y.at(n, c, r, q) = x.at(n, c, r * factor, q * factor);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> downsample_bilinear(const Tensor<T>& x, std::size_t factor) {
  if (factor == 0 || x.h() % factor != 0 || x.w() % factor != 0) {
    throw std::invalid_argument("downsample_bilinear: factor must divide " + to_string(x.shape()));
  }
  if (factor == 1) return x;
  Tensor<T> y(x.n(), x.c(), x.h() / factor, x.w() / factor);
  auto taps = [&](std::size_t dst, std::size_t len, std::size_t& i0, std::size_t& i1, double& f) {
    double src = (static_cast<double>(dst) + 0.5) * static_cast<double>(factor) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(len - 1));
    i0 = static_cast<std::size_t>(src);
    i1 = std::min(i0 + 1, len - 1);
    f = src - static_cast<double>(i0);
  };
  for (std::size_t r = 0; r < y.h(); ++r) {
    std::size_t r0, r1;
    double fr;
    taps(r, x.h(), r0, r1, fr);
    for (std::size_t q = 0; q < y.w(); ++q) {
      std::size_t q0, q1;
      double fq;
      taps(q, x.w(), q0, q1, fq);
      for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
          const double top = (1 - fq) * x.at(n, c, r0, q0) + fq * x.at(n, c, r0, q1);
          const double bot = (1 - fq) * x.at(n, c, r1, q0) + fq * x.at(n, c, r1, q1);
          y.at(n, c, r, q) = static_cast<T>((1 - fr) * top + fr * bot);
        }
      }
    }
  }
  return y;
}

template <typename T>
double mean(const Tensor<T>& x) {
  if (x.empty()) throw std::invalid_argument("mean of empty tensor");
  return simd::sum(x.size(), x.data()) / static_cast<double>(x.size());
}

#define SONOGAN_INSTANTIATE(T)                                                               \
  template void im2col<T>(const T*, std::size_t, std::size_t, std::size_t, const Window&,    \
                          std::size_t, std::size_t, T*);                                     \
  template void col2im<T>(const T*, std::size_t, std::size_t, std::size_t, const Window&,    \
                          std::size_t, std::size_t, T*);                                     \
  template void init_normal<T>(Tensor<T>&, double, std::mt19937_64&);                        \
  template class Conv2d<T>;                                                                  \
  template class ConvTranspose2d<T>;                                                         \
  template class InstanceNorm<T>;                                                            \
  template class LeakyRelu<T>;                                                               \
  template class Tanh<T>;                                                                    \
  template class NoiseInjection<T>;                                                          \
  template Tensor<T> downsample_nearest<T>(const Tensor<T>&, std::size_t);                   \
  template Tensor<T> downsample_bilinear<T>(const Tensor<T>&, std::size_t);                  \
  template double mean<T>(const Tensor<T>&);

SONOGAN_INSTANTIATE(float)
SONOGAN_INSTANTIATE(double)

#undef SONOGAN_INSTANTIATE

}  // namespace sonogan::nn
