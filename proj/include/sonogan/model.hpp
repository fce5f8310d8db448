#pragma once

// U-Net style label+attenuation to B-mode generator and the conditional
// patch discriminator.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sonogan/nn/layers.hpp"

namespace sonogan {

enum class Variant { sa2h, sa2h_att, sa2h_concat, sa2h_conv, sa2h_noise, nsa2h, lsa2h };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);
const std::array<Variant, 7>& all_variants();

// Additional whole-image input channel after (s, a).
enum class ExtraInput { none, noise, low_quality };

std::string_view extra_input_name(ExtraInput e);
ExtraInput parse_extra_input(std::string_view name);

struct GeneratorConfig {
  int n_down = 4;
  int base_channels = 64;
  std::vector<int> channel_schedule{128, 256, 384, 464};
  bool use_att = true;
  bool use_concat = true;
  bool use_texture_conv = true;
  bool use_noise = true;
  ExtraInput extra_input = ExtraInput::none;
  // Off gives a purely local network, used for receptive-field analysis.
  bool instance_norm = true;

  // Channels of the network input: s, [a], [extra].
  int in_channels() const;
  // Channels re-injected before every non-stem convolution.
  int map_channels() const;
  // Spatial sizes must be multiples of this.
  std::size_t size_multiple() const { return std::size_t{1} << n_down; }
  void validate() const;

  // Same topology with every channel width divided by `divisor` (at least 1).
  GeneratorConfig narrowed(int divisor) const;

  static GeneratorConfig for_variant(Variant v);
  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

// Transposed-convolution window of the decoder: k4 s2 p1 with the texture
// conv, k5 s2 p2 (output padding 1) without.
struct UpsampleGeometry {
  std::size_t kernel = 4;
  std::size_t stride = 2;
  std::size_t pad = 1;
  std::size_t out_pad = 0;
};

UpsampleGeometry upsample_geometry(const GeneratorConfig& cfg);

// One single-channel unit-Gaussian image per decoder resolution, finest first.
template <typename T>
struct NoiseBank {
  std::uint64_t seed = 0;
  std::vector<nn::Tensor<T>> images;
};

// Each shape gets its own RNG stream derived from (seed, level).
template <typename T>
NoiseBank<T> make_noise_bank(std::uint64_t seed, const std::vector<nn::Shape>& shapes);

template <typename T>
struct GeneratorInputs {
  nn::Tensor<T> s;      // [N, 1, H, W] label intensities in [-1, 1]
  nn::Tensor<T> a;      // [N, 1, H, W] attenuation in [-1, 1]; ignored without use_att
  nn::Tensor<T> extra;  // [N, 1, H, W] noise or low-quality image; only with extra_input
};

template <typename T>
class Generator {
 public:
  Generator(GeneratorConfig cfg, std::uint64_t init_seed);

  const GeneratorConfig& config() const { return cfg_; }
  nn::ParamList<T> params();
  std::size_t parameter_count();

  // Noise image shapes expected for an input of the given size.
  std::vector<nn::Shape> noise_shapes(std::size_t batch, std::size_t h, std::size_t w) const;

  // Output in [-1, 1], [N, 1, H, W]. The bank may be empty when use_noise is off.
  nn::Tensor<T> forward(const GeneratorInputs<T>& in, const NoiseBank<T>& noise);
  // Accumulates parameter gradients for the last forward call.
  void backward(const nn::Tensor<T>& grad_out);

  // All noise-injection weights (empty without use_noise).
  std::vector<nn::Param<T>*> noise_weights();

 private:
  struct Block {
    nn::Conv2d<T> conv;
    nn::ConvTranspose2d<T> deconv;
    bool transposed = false;
    nn::LeakyRelu<T> act;
    bool norm = true;
    nn::InstanceNorm<T> in;

    nn::Tensor<T> forward(const nn::Tensor<T>& x);
    nn::Tensor<T> backward(const nn::Tensor<T>& g);
    void collect(nn::ParamList<T>& out);
  };

  nn::Tensor<T> with_maps(const nn::Tensor<T>& x, std::size_t level) const;
  nn::Tensor<T> strip_maps(const nn::Tensor<T>& g, std::size_t channels) const;

  GeneratorConfig cfg_;
  Block stem_;
  std::vector<Block> down_;     // down_[k] produces level k+1
  std::vector<Block> up_;       // up_[k] produces level k (from level k+1)
  std::vector<Block> texture_;  // stride-1 follow-up of up_[k]
  std::vector<nn::NoiseInjection<T>> noise_;
  nn::Conv2d<T> out_conv_;
  nn::Tanh<T> tanh_;

  std::vector<nn::Tensor<T>> maps_;  // per level, cached for the current forward
  std::vector<std::size_t> enc_channels_;
};

struct DiscriminatorConfig {
  int n_layers = 4;  // stride-2 layers
  int base_channels = 64;
  int condition_channels = 2;

  void validate() const;
  // Side of the input square seen by one output logit.
  int receptive_field() const;
  std::size_t output_size(std::size_t input) const;
  DiscriminatorConfig narrowed(int divisor) const;
  friend bool operator==(const DiscriminatorConfig&, const DiscriminatorConfig&) = default;
};

template <typename T>
class Discriminator {
 public:
  Discriminator(DiscriminatorConfig cfg, std::uint64_t init_seed);

  const DiscriminatorConfig& config() const { return cfg_; }
  nn::ParamList<T> params();
  std::size_t parameter_count();

  // Patch logits [N, 1, h', w'] for candidate [N, 1, H, W] given the condition channels.
  nn::Tensor<T> forward(const nn::Tensor<T>& candidate, const nn::Tensor<T>& condition);
  // Accumulates parameter gradients; returns the gradient w.r.t. the candidate.
  nn::Tensor<T> backward(const nn::Tensor<T>& grad_logits);

 private:
  struct Layer {
    nn::Conv2d<T> conv;
    bool norm = false;
    bool act = true;
    nn::InstanceNorm<T> in;
    nn::LeakyRelu<T> lrelu{T(0.2)};
  };
  DiscriminatorConfig cfg_;
  std::vector<Layer> layers_;
};

// Weights file: magic, tensor count, then (name, shape, float32 values) per tensor.
template <typename T>
void save_weights(const std::filesystem::path& path, const nn::ParamList<T>& params);
// Names and shapes must match the file exactly.
template <typename T>
void load_weights(const std::filesystem::path& path, const nn::ParamList<T>& params);

}  // namespace sonogan
