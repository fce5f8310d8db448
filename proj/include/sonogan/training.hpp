#pragma once

// Masked adversarial + L1 objective, crop sampling and the training loop.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sonogan/grid.hpp"
#include "sonogan/model.hpp"
#include "sonogan/oracle.hpp"

namespace sonogan {

struct TrainConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 4;
  double lambda_f = 100.0;
  int crop = 512;
  int epochs = 20;
  std::uint64_t seed = 0;
  Variant variant = Variant::sa2h;
  // Save weights every this many epochs in addition to the final ones (0: final only).
  int checkpoint_every = 0;

  void validate(const GeneratorConfig& gen) const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// One pixel-aligned training tuple in [0, 1] units.
struct Example {
  ImageF s;     // label index / (label count - 1)
  ImageF a;     // normalised integral attenuation
  ImageF y;     // high-quality B-mode
  ImageF low;   // low-quality B-mode (empty if not rendered)
  Grid<std::uint8_t> mask;
  Grid<std::uint8_t> shadow;

  std::size_t rows() const { return y.rows(); }
  std::size_t cols() const { return y.cols(); }
};

Example example_from_frame(const Frame& frame, std::size_t label_count);

struct Crop {
  Example example;
  std::size_t row = 0;
  std::size_t col = 0;
};

// One shared uniform offset for every channel.
Crop sample_crop(const Example& ex, std::size_t crop, std::mt19937_64& rng);

// mean |y - m * y_hat| over all pixels; m must hold only 0 and 1.
template <typename T>
double masked_l1(const nn::Tensor<T>& y, const nn::Tensor<T>& y_hat, const nn::Tensor<T>& m);
// d masked_l1 / d y_hat (sign(0) taken as 0).
template <typename T>
nn::Tensor<T> masked_l1_grad(const nn::Tensor<T>& y, const nn::Tensor<T>& y_hat,
                             const nn::Tensor<T>& m);

struct GanLosses {
  double d = 0.0;      // -E[log sig(real)] - E[log(1 - sig(fake))]
  double g_adv = 0.0;  // -E[log sig(fake)]
};

template <typename T>
GanLosses gan_losses(const nn::Tensor<T>& d_real, const nn::Tensor<T>& d_fake);

// Logit gradients of the two losses above.
template <typename T>
void discriminator_loss_grad(const nn::Tensor<T>& d_real, const nn::Tensor<T>& d_fake,
                             nn::Tensor<T>& g_real, nn::Tensor<T>& g_fake);
template <typename T>
nn::Tensor<T> generator_adv_grad(const nn::Tensor<T>& d_fake);

double total_generator_loss(double g_adv, double l1, double lambda_f);

// log(1 + exp(x)) without overflow.
double softplus(double x);

// Discriminator conditioning channels for a generator config: s, [a], [low-quality image].
int condition_channels(const GeneratorConfig& gen);

// Names of the generator input channels in order, e.g. {"s", "a", "noise"}.
std::vector<std::string> input_channel_names(const GeneratorConfig& gen);

// Network tensors for a batch of same-sized examples.
template <typename T>
struct Batch {
  GeneratorInputs<T> inputs;
  nn::Tensor<T> target;     // m * (2y - 1)
  nn::Tensor<T> mask;
  nn::Tensor<T> condition;  // discriminator conditioning channels
};

// `noise_rng` feeds the extra noise input channel when the config has one.
template <typename T>
Batch<T> make_batch(const std::vector<const Example*>& examples, const GeneratorConfig& gen,
                    std::mt19937_64& noise_rng);

struct GeneratorStep {
  double g_adv = 0.0;
  double l1 = 0.0;
  double total = 0.0;
};

// Generator loss for `fake`, which must be the output of g's latest forward
// pass on bt. Accumulates the total-loss gradient into g's parameters (and,
// as a side effect, into d's).
template <typename T>
GeneratorStep generator_step(Generator<T>& g, Discriminator<T>& d, const Batch<T>& bt,
                             const nn::Tensor<T>& fake, double lambda_f);

struct EpochStats {
  int epoch = 0;
  int steps = 0;
  double loss_d = 0.0;
  double loss_g_adv = 0.0;
  double loss_l1 = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  std::filesystem::path checkpoint;
  std::size_t generator_params = 0;
  std::size_t discriminator_params = 0;
};

// Checkpoint directory layout: generator.bin, discriminator.bin, checkpoint.json.
struct CheckpointMeta {
  GeneratorConfig gen;
  DiscriminatorConfig disc;
  TrainConfig train;
  int epoch = 0;
  std::uint64_t step = 0;
  std::string dataset_id;
  std::size_t image_rows = 0;  // full-frame size of the training data
  std::size_t image_cols = 0;
};

void write_checkpoint(const std::filesystem::path& dir, Generator<float>& g,
                      Discriminator<float>& d, const CheckpointMeta& meta);
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir);
// Rebuilds the generator from the sidecar and loads its weights.
Generator<float> load_generator(const std::filesystem::path& dir);

struct TrainOptions {
  std::filesystem::path out_dir;
  std::string dataset_id;
  // Called after every epoch; useful for progress output.
  std::function<void(const EpochStats&)> on_epoch;
};

// Alternating D/G Adam updates, one D step per G step. Writes train_log.jsonl
// (a header record, then one record per epoch) and checkpoints under out_dir.
TrainResult train(const TrainConfig& cfg, const GeneratorConfig& gen_cfg,
                  const DiscriminatorConfig& disc_cfg, const std::vector<Example>& data,
                  const TrainOptions& opts);

// Full-image inference: pads to the size multiple, runs the generator and
// returns the masked output in [0, 1].
ImageF infer_full_fov(Generator<float>& g, const Example& ex, std::uint64_t seed);

}  // namespace sonogan
