#include "sonogan/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "sonogan/io.hpp"
#include "sonogan/nn/adam.hpp"
#include "sonogan/seed.hpp"
#include "sonogan/serialize.hpp"

namespace sonogan {

using nn::Shape;
using nn::Tensor;

void TrainConfig::validate(const GeneratorConfig& gen) const {
  gen.validate();
  if (!(lr > 0)) throw std::invalid_argument("train: lr must be positive");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
    throw std::invalid_argument("train: betas must lie in [0, 1)");
  }
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(lambda_f >= 0)) throw std::invalid_argument("train: lambda_f must be >= 0");
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (checkpoint_every < 0) throw std::invalid_argument("train: checkpoint_every must be >= 0");
  if (crop < 1 || static_cast<std::size_t>(crop) % gen.size_multiple() != 0) {
    throw std::invalid_argument("train: crop " + std::to_string(crop) +
                                " must be a positive multiple of " +
                                std::to_string(gen.size_multiple()));
  }
}

Example example_from_frame(const Frame& frame, std::size_t label_count) {
  if (label_count < 2) throw std::invalid_argument("example_from_frame: need >= 2 labels");
  Example ex;
  ex.s = ImageF(frame.s.rows(), frame.s.cols());
  const double scale = 1.0 / static_cast<double>(label_count - 1);
  for (std::size_t k = 0; k < frame.s.size(); ++k) {
    const auto label = frame.s.data()[k];
    if (label >= label_count) {
      throw std::invalid_argument("example_from_frame: label " + std::to_string(label) +
                                  " outside the tissue table");
    }
    ex.s.data()[k] = static_cast<float>(label * scale);
  }
  ex.a = frame.a;
  ex.y = frame.y;
  if (frame.low) ex.low = *frame.low;
  ex.mask = frame.mask;
  ex.shadow = frame.shadow;
  return ex;
}

Crop sample_crop(const Example& ex, std::size_t crop, std::mt19937_64& rng) {
  if (crop == 0 || crop > ex.rows() || crop > ex.cols()) {
    throw std::invalid_argument("sample_crop: crop " + std::to_string(crop) +
                                " does not fit image " + std::to_string(ex.rows()) + "x" +
                                std::to_string(ex.cols()));
  }
  Crop out;
  out.row = std::uniform_int_distribution<std::size_t>(0, ex.rows() - crop)(rng);
  out.col = std::uniform_int_distribution<std::size_t>(0, ex.cols() - crop)(rng);
  auto cut = [&](const auto& g) {
    return g.size() == 0 ? std::decay_t<decltype(g)>() : sonogan::crop(g, out.row, out.col, crop, crop);
  };
  out.example.s = cut(ex.s);
  out.example.a = cut(ex.a);
  out.example.y = cut(ex.y);
  out.example.low = cut(ex.low);
  out.example.mask = cut(ex.mask);
  out.example.shadow = cut(ex.shadow);
  return out;
}

namespace {

template <typename T>
void require_binary_mask(const Tensor<T>& m) {
  for (const T v : m.values()) {
    if (v != T(0) && v != T(1)) {
      throw std::invalid_argument("masked_l1: mask must contain only 0 and 1");
    }
  }
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

template <typename T>
double masked_l1(const Tensor<T>& y, const Tensor<T>& y_hat, const Tensor<T>& m) {
  if (y.shape() != y_hat.shape() || y.shape() != m.shape()) {
    throw std::invalid_argument("masked_l1: shapes differ (" + nn::to_string(y.shape()) + ", " +
                                nn::to_string(y_hat.shape()) + ", " + nn::to_string(m.shape()) +
                                ")");
  }
  if (y.empty()) throw std::invalid_argument("masked_l1: empty input");
  require_binary_mask(m);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    acc += std::abs(static_cast<double>(y.data()[i]) -
                    static_cast<double>(m.data()[i]) * static_cast<double>(y_hat.data()[i]));
  }
  return acc / static_cast<double>(y.size());
}

template <typename T>
Tensor<T> masked_l1_grad(const Tensor<T>& y, const Tensor<T>& y_hat, const Tensor<T>& m) {
  if (y.shape() != y_hat.shape() || y.shape() != m.shape()) {
    throw std::invalid_argument("masked_l1_grad: shapes differ");
  }
  require_binary_mask(m);
  Tensor<T> g(y.shape());
  const T inv = T(1) / static_cast<T>(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const T mi = m.data()[i];
    const T r = mi * y_hat.data()[i] - y.data()[i];
    g.data()[i] = r > 0 ? mi * inv : (r < 0 ? -mi * inv : T(0));
  }
  return g;
}

template <typename T>
GanLosses gan_losses(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  if (d_real.empty() || d_fake.empty()) throw std::invalid_argument("gan_losses: empty logits");
  double real = 0.0;
  double fake = 0.0;
  double gen = 0.0;
  for (const T v : d_real.values()) real += softplus(-static_cast<double>(v));
  for (const T v : d_fake.values()) {
    fake += softplus(static_cast<double>(v));
    gen += softplus(-static_cast<double>(v));
  }
  GanLosses out;
  out.d = real / static_cast<double>(d_real.size()) + fake / static_cast<double>(d_fake.size());
  out.g_adv = gen / static_cast<double>(d_fake.size());
  return out;
}

template <typename T>
void discriminator_loss_grad(const Tensor<T>& d_real, const Tensor<T>& d_fake, Tensor<T>& g_real,
                             Tensor<T>& g_fake) {
  g_real = Tensor<T>(d_real.shape());
  g_fake = Tensor<T>(d_fake.shape());
  const double nr = static_cast<double>(d_real.size());
  const double nf = static_cast<double>(d_fake.size());
  for (std::size_t i = 0; i < d_real.size(); ++i) {
    g_real.data()[i] = static_cast<T>((sigmoid(d_real.data()[i]) - 1.0) / nr);
  }
  for (std::size_t i = 0; i < d_fake.size(); ++i) {
    g_fake.data()[i] = static_cast<T>(sigmoid(d_fake.data()[i]) / nf);
  }
}

template <typename T>
Tensor<T> generator_adv_grad(const Tensor<T>& d_fake) {
  Tensor<T> g(d_fake.shape());
  const double n = static_cast<double>(d_fake.size());
  for (std::size_t i = 0; i < d_fake.size(); ++i) {
    g.data()[i] = static_cast<T>((sigmoid(d_fake.data()[i]) - 1.0) / n);
  }
  return g;
}

double total_generator_loss(double g_adv, double l1, double lambda_f) {
  return g_adv + lambda_f * l1;
}

int condition_channels(const GeneratorConfig& gen) {
  return 1 + (gen.use_att ? 1 : 0) + (gen.extra_input == ExtraInput::low_quality ? 1 : 0);
}

std::vector<std::string> input_channel_names(const GeneratorConfig& gen) {
  std::vector<std::string> out{"s"};
  if (gen.use_att) out.emplace_back("a");
  if (gen.extra_input == ExtraInput::noise) out.emplace_back("noise");
  if (gen.extra_input == ExtraInput::low_quality) out.emplace_back("low_quality");
  return out;
}

namespace {

// Copies a [0, 1] image into one sample plane as 2v - 1.
template <typename T>
void put_symmetric(const ImageF& img, Tensor<T>& t, std::size_t n) {
  T* dst = t.plane(n, 0);
  for (std::size_t k = 0; k < img.size(); ++k) dst[k] = static_cast<T>(2.0f * img.data()[k] - 1.0f);
}

template <typename T>
Tensor<T> concat_batch(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.c != sb.c || sa.h != sb.h || sa.w != sb.w) {
    throw std::invalid_argument("concat_batch: shape mismatch");
  }
  Tensor<T> out(sa.n + sb.n, sa.c, sa.h, sa.w);
  std::copy_n(a.data(), a.size(), out.data());
  std::copy_n(b.data(), b.size(), out.data() + a.size());
  return out;
}

template <typename T>
Tensor<T> batch_range(const Tensor<T>& t, std::size_t n0, std::size_t count) {
  Tensor<T> out(count, t.c(), t.h(), t.w());
  std::copy_n(t.sample(n0), out.size(), out.data());
  return out;
}

}  // namespace

template <typename T>
Batch<T> make_batch(const std::vector<const Example*>& examples, const GeneratorConfig& gen,
                    std::mt19937_64& noise_rng) {
  if (examples.empty()) throw std::invalid_argument("make_batch: no examples");
  const std::size_t rows = examples.front()->rows();
  const std::size_t cols = examples.front()->cols();
  const std::size_t n = examples.size();
  const Shape plane{n, 1, rows, cols};
  const auto cc = static_cast<std::size_t>(condition_channels(gen));
  Batch<T> b;
  b.inputs.s = Tensor<T>(plane);
  if (gen.use_att) b.inputs.a = Tensor<T>(plane);
  if (gen.extra_input != ExtraInput::none) b.inputs.extra = Tensor<T>(plane);
  b.target = Tensor<T>(plane);
  b.mask = Tensor<T>(plane);
  b.condition = Tensor<T>(Shape{n, cc, rows, cols});
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Example& ex = *examples[i];
    if (ex.rows() != rows || ex.cols() != cols || ex.s.rows() != rows || ex.a.rows() != rows ||
        ex.mask.rows() != rows || ex.s.cols() != cols || ex.a.cols() != cols ||
        ex.mask.cols() != cols) {
      throw std::invalid_argument("make_batch: examples must share one size");
    }
    put_symmetric(ex.s, b.inputs.s, i);
    if (gen.use_att) put_symmetric(ex.a, b.inputs.a, i);
    if (gen.extra_input == ExtraInput::noise) {
      T* dst = b.inputs.extra.plane(i, 0);
      for (std::size_t k = 0; k < rows * cols; ++k) dst[k] = static_cast<T>(gauss(noise_rng));
    } else if (gen.extra_input == ExtraInput::low_quality) {
      if (ex.low.rows() != rows || ex.low.cols() != cols) {
        throw std::invalid_argument("make_batch: variant needs low-quality images in the dataset");
      }
      put_symmetric(ex.low, b.inputs.extra, i);
    }
    T* tgt = b.target.plane(i, 0);
    T* msk = b.mask.plane(i, 0);
    for (std::size_t k = 0; k < rows * cols; ++k) {
      const T m = ex.mask.data()[k] ? T(1) : T(0);
      msk[k] = m;
      tgt[k] = m * static_cast<T>(2.0f * ex.y.data()[k] - 1.0f);
    }
    std::size_t c = 0;
    std::copy_n(b.inputs.s.plane(i, 0), rows * cols, b.condition.plane(i, c++));
    if (gen.use_att) std::copy_n(b.inputs.a.plane(i, 0), rows * cols, b.condition.plane(i, c++));
    if (gen.extra_input == ExtraInput::low_quality) {
      std::copy_n(b.inputs.extra.plane(i, 0), rows * cols, b.condition.plane(i, c++));
    }
  }
  return b;
}

template <typename T>
GeneratorStep generator_step(Generator<T>& g, Discriminator<T>& d, const Batch<T>& bt,
                             const Tensor<T>& fake, double lambda_f) {
  Tensor<T> masked_fake = fake;
  for (std::size_t i = 0; i < fake.size(); ++i) masked_fake.data()[i] *= bt.mask.data()[i];
  const Tensor<T> logits = d.forward(masked_fake, bt.condition);
  GeneratorStep out;
  out.g_adv = gan_losses(logits, logits).g_adv;
  out.l1 = masked_l1(bt.target, fake, bt.mask);
  out.total = total_generator_loss(out.g_adv, out.l1, lambda_f);
  Tensor<T> grad = d.backward(generator_adv_grad(logits));
  const Tensor<T> l1_grad = masked_l1_grad(bt.target, fake, bt.mask);
  const auto lambda = static_cast<T>(lambda_f);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    grad.data()[i] = grad.data()[i] * bt.mask.data()[i] + lambda * l1_grad.data()[i];
  }
  g.backward(grad);
  return out;
}

void write_checkpoint(const std::filesystem::path& dir, Generator<float>& g,
                      Discriminator<float>& d, const CheckpointMeta& meta) {
  std::filesystem::create_directories(dir);
  save_weights(dir / "generator.bin", g.params());
  save_weights(dir / "discriminator.bin", d.params());
  Json j = meta;
  j["generator_params"] = g.parameter_count();
  j["discriminator_params"] = d.parameter_count();
  j["weights"] = Json{{"generator", io::file_hash(dir / "generator.bin")},
                      {"discriminator", io::file_hash(dir / "discriminator.bin")}};
  io::write_text(dir / "checkpoint.json", j.dump(2) + "\n");
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir) {
  const auto path = dir / "checkpoint.json";
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("no checkpoint.json in " + dir.string());
  }
  return Json::parse(io::read_text(path)).get<CheckpointMeta>();
}

Generator<float> load_generator(const std::filesystem::path& dir) {
  const CheckpointMeta meta = read_checkpoint_meta(dir);
  Generator<float> g(meta.gen, 0);
  load_weights(dir / "generator.bin", g.params());
  return g;
}

TrainResult train(const TrainConfig& cfg, const GeneratorConfig& gen_cfg,
                  const DiscriminatorConfig& disc_cfg, const std::vector<Example>& data,
                  const TrainOptions& opts) {
  cfg.validate(gen_cfg);
  disc_cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (disc_cfg.condition_channels != condition_channels(gen_cfg)) {
    throw std::invalid_argument("train: discriminator expects " +
                                std::to_string(disc_cfg.condition_channels) +
                                " condition channels, generator provides " +
                                std::to_string(condition_channels(gen_cfg)));
  }
  const auto crop = static_cast<std::size_t>(cfg.crop);
  if (disc_cfg.receptive_field() >= cfg.crop) {
    throw std::invalid_argument("train: discriminator receptive field " +
                                std::to_string(disc_cfg.receptive_field()) +
                                " is not smaller than the crop");
  }

  Generator<float> g(gen_cfg, derive_seed(cfg.seed, 10));
  Discriminator<float> d(disc_cfg, derive_seed(cfg.seed, 11));
  const nn::AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2, 1e-8};
  nn::Adam<float> opt_g(g.params(), adam);
  nn::Adam<float> opt_d(d.params(), adam);

  std::mt19937_64 rng_order(derive_seed(cfg.seed, 1));
  std::mt19937_64 rng_crop(derive_seed(cfg.seed, 2));
  std::mt19937_64 rng_input_noise(derive_seed(cfg.seed, 3));
  std::mt19937_64 rng_bank(derive_seed(cfg.seed, 4));

  TrainResult result;
  result.generator_params = g.parameter_count();
  result.discriminator_params = d.parameter_count();

  std::filesystem::create_directories(opts.out_dir);
  std::ofstream log(opts.out_dir / "train_log.jsonl");
  if (!log) throw std::runtime_error("cannot write train log in " + opts.out_dir.string());
  Json header{{"record", "header"},
              {"variant", std::string(variant_name(cfg.variant))},
              {"inputs", input_channel_names(gen_cfg)},
              {"condition_channels", disc_cfg.condition_channels},
              {"generator", gen_cfg},
              {"discriminator", disc_cfg},
              {"train", cfg},
              {"generator_params", result.generator_params},
              {"discriminator_params", result.discriminator_params},
              {"frames", data.size()},
              {"dataset_id", opts.dataset_id}};
  log << header.dump() << "\n" << std::flush;

  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size),
                                                  data.size());
  const std::size_t steps_per_epoch = data.size() / batch;
  std::vector<std::size_t> order(data.size());
  std::uint64_t step = 0;

  auto checkpoint = [&](const std::filesystem::path& dir, int epoch) {
    CheckpointMeta meta{gen_cfg, disc_cfg, cfg, epoch, step, opts.dataset_id,
                        data.front().rows(), data.front().cols()};
    write_checkpoint(dir, g, d, meta);
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng_order);
    EpochStats stats;
    stats.epoch = epoch;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      std::vector<Example> crops;
      crops.reserve(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        crops.push_back(sample_crop(data[order[s * batch + b]], crop, rng_crop).example);
      }
      std::vector<const Example*> ptrs;
      for (const Example& e : crops) ptrs.push_back(&e);
      const Batch<float> bt = make_batch<float>(ptrs, gen_cfg, rng_input_noise);
      const NoiseBank<float> bank =
          make_noise_bank<float>(rng_bank(), g.noise_shapes(batch, crop, crop));

      const Tensor<float> fake = g.forward(bt.inputs, bank);
      Tensor<float> masked_fake = fake;
      for (std::size_t i = 0; i < fake.size(); ++i) masked_fake.data()[i] *= bt.mask.data()[i];

      // discriminator update on real and fake halves of one batch
      const Tensor<float> logits =
          d.forward(concat_batch(bt.target, masked_fake), concat_batch(bt.condition, bt.condition));
      const Tensor<float> real_logits = batch_range(logits, 0, batch);
      const Tensor<float> fake_logits = batch_range(logits, batch, batch);
      const GanLosses dl = gan_losses(real_logits, fake_logits);
      Tensor<float> g_real;
      Tensor<float> g_fake;
      discriminator_loss_grad(real_logits, fake_logits, g_real, g_fake);
      opt_d.zero_grad();
      d.backward(concat_batch(g_real, g_fake));
      opt_d.step();

      // generator update through the refreshed discriminator
      opt_g.zero_grad();
      const GeneratorStep gs = generator_step(g, d, bt, fake, cfg.lambda_f);
      if (!std::isfinite(dl.d) || !std::isfinite(gs.total)) {
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", step " + std::to_string(step) + " (L_D=" +
                                 std::to_string(dl.d) + ", L_G_adv=" + std::to_string(gs.g_adv) +
                                 ", L1=" + std::to_string(gs.l1) + ")");
      }
      opt_g.step();

      ++step;
      ++stats.steps;
      stats.loss_d += dl.d;
      stats.loss_g_adv += gs.g_adv;
      stats.loss_l1 += gs.l1;
    }
    if (stats.steps > 0) {
      stats.loss_d /= stats.steps;
      stats.loss_g_adv /= stats.steps;
      stats.loss_l1 /= stats.steps;
    }
    result.epochs.push_back(stats);
    Json rec{{"record", "epoch"},          {"epoch", epoch},
             {"steps", stats.steps},       {"loss_d", stats.loss_d},
             {"loss_g_adv", stats.loss_g_adv}, {"loss_l1", stats.loss_l1}};
    log << rec.dump() << "\n" << std::flush;
    if (opts.on_epoch) opts.on_epoch(stats);
    if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch < cfg.epochs) {
      checkpoint(opts.out_dir / ("epoch_" + std::to_string(epoch)), epoch);
    }
  }
  result.checkpoint = opts.out_dir / "checkpoint";
  checkpoint(result.checkpoint, cfg.epochs);
  return result;
}

ImageF infer_full_fov(Generator<float>& g, const Example& ex, std::uint64_t seed) {
  const GeneratorConfig& cfg = g.config();
  const std::size_t mult = cfg.size_multiple();
  const std::size_t rows = (ex.rows() + mult - 1) / mult * mult;
  const std::size_t cols = (ex.cols() + mult - 1) / mult * mult;

  Example padded;
  auto pad = [&](const auto& src) {
    std::decay_t<decltype(src)> out(rows, cols);
    if (src.size() == 0) return src;
    for (std::size_t r = 0; r < src.rows(); ++r) {
      for (std::size_t c = 0; c < src.cols(); ++c) out(r, c) = src(r, c);
    }
    return out;
  };
  padded.s = pad(ex.s);
  padded.a = pad(ex.a);
  padded.y = pad(ex.y);
  padded.low = pad(ex.low);
  padded.mask = pad(ex.mask);

  std::mt19937_64 noise_rng(derive_seed(seed, 1));
  const Batch<float> bt = make_batch<float>({&padded}, cfg, noise_rng);
  const NoiseBank<float> bank = make_noise_bank<float>(derive_seed(seed, 2),
                                                       g.noise_shapes(1, rows, cols));
  const Tensor<float> out = g.forward(bt.inputs, bank);
  ImageF img(ex.rows(), ex.cols());
  for (std::size_t r = 0; r < ex.rows(); ++r) {
    for (std::size_t c = 0; c < ex.cols(); ++c) {
      img(r, c) = ex.mask(r, c) ? 0.5f * (out.at(0, 0, r, c) + 1.0f) : 0.0f;
    }
  }
  return img;
}

template double masked_l1<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template double masked_l1<double>(const Tensor<double>&, const Tensor<double>&,
                                  const Tensor<double>&);
template Tensor<float> masked_l1_grad<float>(const Tensor<float>&, const Tensor<float>&,
                                             const Tensor<float>&);
template Tensor<double> masked_l1_grad<double>(const Tensor<double>&, const Tensor<double>&,
                                               const Tensor<double>&);
template GanLosses gan_losses<float>(const Tensor<float>&, const Tensor<float>&);
template GanLosses gan_losses<double>(const Tensor<double>&, const Tensor<double>&);
template void discriminator_loss_grad<float>(const Tensor<float>&, const Tensor<float>&,
                                             Tensor<float>&, Tensor<float>&);
template void discriminator_loss_grad<double>(const Tensor<double>&, const Tensor<double>&,
                                              Tensor<double>&, Tensor<double>&);
template Tensor<float> generator_adv_grad<float>(const Tensor<float>&);
template Tensor<double> generator_adv_grad<double>(const Tensor<double>&);
template GeneratorStep generator_step<float>(Generator<float>&, Discriminator<float>&,
                                             const Batch<float>&, const Tensor<float>&, double);
template GeneratorStep generator_step<double>(Generator<double>&, Discriminator<double>&,
                                              const Batch<double>&, const Tensor<double>&, double);
template Batch<float> make_batch<float>(const std::vector<const Example*>&,
                                        const GeneratorConfig&, std::mt19937_64&);
template Batch<double> make_batch<double>(const std::vector<const Example*>&,
                                          const GeneratorConfig&, std::mt19937_64&);

}  // namespace sonogan
