#include "sonogan/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "sonogan/seed.hpp"

namespace sonogan {

using nn::Shape;
using nn::Tensor;

namespace {

constexpr std::array<std::string_view, 7> kVariantNames{
    "sa2h", "sa2h-att", "sa2h-concat", "sa2h-conv", "sa2h-noise", "nsa2h", "lsa2h"};

constexpr double kInitStd = 0.02;
constexpr float kEncoderSlope = 0.2f;

}  // namespace

std::string_view variant_name(Variant v) { return kVariantNames[static_cast<std::size_t>(v)]; }

Variant parse_variant(std::string_view name) {
  for (std::size_t i = 0; i < kVariantNames.size(); ++i) {
    if (kVariantNames[i] == name) return static_cast<Variant>(i);
  }
  std::string known;
  for (auto n : kVariantNames) known += (known.empty() ? "" : ", ") + std::string(n);
  throw std::invalid_argument("unknown variant '" + std::string(name) + "' (known: " + known + ")");
}

const std::array<Variant, 7>& all_variants() {
  static const std::array<Variant, 7> v{Variant::sa2h,       Variant::sa2h_att,
                                        Variant::sa2h_concat, Variant::sa2h_conv,
                                        Variant::sa2h_noise, Variant::nsa2h,
                                        Variant::lsa2h};
  return v;
}

std::string_view extra_input_name(ExtraInput e) {
  switch (e) {
    case ExtraInput::none: return "none";
    case ExtraInput::noise: return "noise";
    case ExtraInput::low_quality: return "low_quality";
  }
  return "none";
}

ExtraInput parse_extra_input(std::string_view name) {
  if (name == "none") return ExtraInput::none;
  if (name == "noise") return ExtraInput::noise;
  if (name == "low_quality") return ExtraInput::low_quality;
  throw std::invalid_argument("unknown extra input '" + std::string(name) + "'");
}

int GeneratorConfig::in_channels() const {
  return 1 + (use_att ? 1 : 0) + (extra_input != ExtraInput::none ? 1 : 0);
}

int GeneratorConfig::map_channels() const { return use_concat ? 1 + (use_att ? 1 : 0) : 0; }

void GeneratorConfig::validate() const {
  if (n_down < 1) throw std::invalid_argument("generator: n_down must be >= 1");
  if (n_down > 12) throw std::invalid_argument("generator: n_down must be <= 12");
  if (base_channels < 1) throw std::invalid_argument("generator: base_channels must be >= 1");
  if (channel_schedule.size() != static_cast<std::size_t>(n_down)) {
    throw std::invalid_argument("generator: channel_schedule has " +
                                std::to_string(channel_schedule.size()) + " entries but n_down is " +
                                std::to_string(n_down));
  }
  for (int c : channel_schedule) {
    if (c < 1) throw std::invalid_argument("generator: channel widths must be >= 1");
  }
}

GeneratorConfig GeneratorConfig::narrowed(int divisor) const {
  if (divisor < 1) throw std::invalid_argument("width divisor must be >= 1");
  GeneratorConfig out = *this;
  out.base_channels = std::max(1, base_channels / divisor);
  for (int& c : out.channel_schedule) c = std::max(1, c / divisor);
  return out;
}

GeneratorConfig GeneratorConfig::for_variant(Variant v) {
  GeneratorConfig c;
  switch (v) {
    case Variant::sa2h: break;
    case Variant::sa2h_att: c.use_att = false; break;
    case Variant::sa2h_concat: c.use_concat = false; break;
    case Variant::sa2h_conv: c.use_texture_conv = false; break;
    case Variant::sa2h_noise:
      c.use_noise = false;
      c.extra_input = ExtraInput::noise;
      break;
    case Variant::nsa2h:
    case Variant::lsa2h:
      c.n_down = 6;
      c.channel_schedule = {128, 256, 512, 512, 512, 512};
      c.use_concat = false;
      c.use_texture_conv = false;
      c.use_noise = false;
      c.extra_input = v == Variant::nsa2h ? ExtraInput::noise : ExtraInput::low_quality;
      break;
  }
  return c;
}

UpsampleGeometry upsample_geometry(const GeneratorConfig& cfg) {
  if (cfg.use_texture_conv) return {4, 2, 1, 0};
  return {5, 2, 2, 1};
}

template <typename T>
NoiseBank<T> make_noise_bank(std::uint64_t seed, const std::vector<Shape>& shapes) {
  NoiseBank<T> bank;
  bank.seed = seed;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    std::mt19937_64 rng(derive_seed(seed, l));
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor<T> img(shapes[l]);
    for (T& v : img.values()) v = static_cast<T>(dist(rng));
    bank.images.push_back(std::move(img));
  }
  return bank;
}

template <typename T>
Tensor<T> Generator<T>::Block::forward(const Tensor<T>& x) {
  Tensor<T> h = transposed ? deconv.forward(x) : conv.forward(x);
  h = act.forward(h);
  return norm ? in.forward(h) : h;
}

template <typename T>
Tensor<T> Generator<T>::Block::backward(const Tensor<T>& g) {
  Tensor<T> d = norm ? in.backward(g) : g;
  d = act.backward(d);
  return transposed ? deconv.backward(d) : conv.backward(d);
}

template <typename T>
void Generator<T>::Block::collect(nn::ParamList<T>& out) {
  if (transposed) {
    deconv.collect(out);
  } else {
    conv.collect(out);
  }
}

template <typename T>
Generator<T>::Generator(GeneratorConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto n = static_cast<std::size_t>(cfg_.n_down);
  const auto m = static_cast<std::size_t>(cfg_.map_channels());
  enc_channels_.push_back(static_cast<std::size_t>(cfg_.base_channels));
  for (int c : cfg_.channel_schedule) enc_channels_.push_back(static_cast<std::size_t>(c));
  const auto& ch = enc_channels_;

  const bool norm = cfg_.instance_norm;
  auto conv_block = [norm](std::string name, std::size_t in, std::size_t out, std::size_t k,
                       std::size_t s, std::size_t p, T slope) {
    Block b;
    b.conv = nn::Conv2d<T>(std::move(name), in, out, k, s, p);
    b.act = nn::LeakyRelu<T>(slope);
    b.norm = norm;
    return b;
  };

  stem_ = conv_block("stem", static_cast<std::size_t>(cfg_.in_channels()), ch[0], 3, 1, 1,
                     T(kEncoderSlope));
  for (std::size_t l = 0; l < n; ++l) {
    down_.push_back(conv_block("down" + std::to_string(l + 1), ch[l] + m, ch[l + 1], 4, 2, 1,
                               T(kEncoderSlope)));
  }
  down_.back().norm = false;

  up_.resize(n);
  const UpsampleGeometry ug = upsample_geometry(cfg_);
  if (cfg_.use_texture_conv) texture_.resize(n);
  if (cfg_.use_noise) noise_.resize(n);
  for (std::size_t l = n; l-- > 0;) {
    const std::size_t d_in = (l + 1 == n ? ch[n] : 2 * ch[l + 1]) + m;
    Block& up = up_[l];
    up.transposed = true;
    up.act = nn::LeakyRelu<T>(T(0));
    up.norm = norm;
    const std::string name = "up" + std::to_string(l);
    up.deconv = nn::ConvTranspose2d<T>(name, d_in, ch[l], ug.kernel, ug.stride, ug.pad, ug.out_pad);
    if (cfg_.use_texture_conv) {
      texture_[l] = conv_block("texture" + std::to_string(l), ch[l] + m, ch[l], 3, 1, 1, T(0));
    }
    if (cfg_.use_noise) noise_[l] = nn::NoiseInjection<T>("noise" + std::to_string(l), 2 * ch[l]);
  }
  out_conv_ = nn::Conv2d<T>("out", 2 * ch[0] + m, 1, 3, 1, 1);

  std::mt19937_64 rng(init_seed);
  for (nn::Param<T>* p : params()) {
    const bool is_bias = p->name.ends_with(".bias");
    const bool is_noise = p->name.starts_with("noise");
    if (is_bias || is_noise) {
      p->value.zero();
    } else {
      nn::init_normal(p->value, kInitStd, rng);
    }
  }
}

template <typename T>
nn::ParamList<T> Generator<T>::params() {
  nn::ParamList<T> out;
  stem_.collect(out);
  for (Block& b : down_) b.collect(out);
  for (std::size_t l = up_.size(); l-- > 0;) {
    up_[l].collect(out);
    if (cfg_.use_texture_conv) texture_[l].collect(out);
    if (cfg_.use_noise) noise_[l].collect(out);
  }
  out_conv_.collect(out);
  return out;
}

template <typename T>
std::size_t Generator<T>::parameter_count() {
  return nn::parameter_count(params());
}

template <typename T>
std::vector<nn::Param<T>*> Generator<T>::noise_weights() {
  std::vector<nn::Param<T>*> out;
  for (auto& ni : noise_) out.push_back(&ni.weight());
  return out;
}

template <typename T>
std::vector<Shape> Generator<T>::noise_shapes(std::size_t batch, std::size_t h,
                                              std::size_t w) const {
  std::vector<Shape> out;
  if (!cfg_.use_noise) return out;
  for (std::size_t l = 0; l < static_cast<std::size_t>(cfg_.n_down); ++l) {
    out.push_back(Shape{batch, 1, h >> l, w >> l});
  }
  return out;
}

template <typename T>
Tensor<T> Generator<T>::with_maps(const Tensor<T>& x, std::size_t level) const {
  if (!cfg_.use_concat) return x;
  return nn::concat_channels(x, maps_[level]);
}

template <typename T>
Tensor<T> Generator<T>::strip_maps(const Tensor<T>& g, std::size_t channels) const {
  if (!cfg_.use_concat) return g;
  return nn::slice_channels(g, 0, channels);
}

template <typename T>
Tensor<T> Generator<T>::forward(const GeneratorInputs<T>& in, const NoiseBank<T>& noise) {
  const Shape& ss = in.s.shape();
  const auto n = static_cast<std::size_t>(cfg_.n_down);
  const std::size_t mult = cfg_.size_multiple();
  if (ss.c != 1 || ss.h == 0 || ss.w == 0) {
    throw std::invalid_argument("generator: s must be [N, 1, H, W], got " + nn::to_string(ss));
  }
  if (ss.h % mult != 0 || ss.w % mult != 0) {
    throw std::invalid_argument("generator: input " + std::to_string(ss.h) + "x" +
                                std::to_string(ss.w) + " is not a multiple of " +
                                std::to_string(mult) + "; pad the input to a multiple first");
  }
  if (cfg_.use_att && in.a.shape() != ss) {
    throw std::invalid_argument("generator: a " + nn::to_string(in.a.shape()) +
                                " does not match s " + nn::to_string(ss));
  }
  if (cfg_.extra_input != ExtraInput::none && in.extra.shape() != ss) {
    throw std::invalid_argument("generator: extra input " + nn::to_string(in.extra.shape()) +
                                " does not match s " + nn::to_string(ss));
  }
  if (cfg_.use_noise) {
    if (noise.images.size() != n) {
      throw std::invalid_argument("generator: noise bank has " +
                                  std::to_string(noise.images.size()) + " images, expected " +
                                  std::to_string(n));
    }
  }

  std::vector<const Tensor<T>*> parts{&in.s};
  if (cfg_.use_att) parts.push_back(&in.a);
  if (cfg_.extra_input != ExtraInput::none) parts.push_back(&in.extra);
  const Tensor<T> x0 = nn::concat_channels<T>(parts);

  maps_.clear();
  if (cfg_.use_concat) {
    for (std::size_t l = 0; l <= n; ++l) {
      const std::size_t f = std::size_t{1} << l;
      Tensor<T> sm = nn::downsample_nearest(in.s, f);
      if (cfg_.use_att) {
        maps_.push_back(nn::concat_channels(sm, nn::downsample_bilinear(in.a, f)));
      } else {
        maps_.push_back(std::move(sm));
      }
    }
  }

  std::vector<Tensor<T>> enc(n + 1);
  enc[0] = stem_.forward(x0);
  for (std::size_t l = 0; l < n; ++l) enc[l + 1] = down_[l].forward(with_maps(enc[l], l));

  Tensor<T> d = enc[n];
  for (std::size_t l = n; l-- > 0;) {
    Tensor<T> u = up_[l].forward(with_maps(d, l + 1));
    if (cfg_.use_texture_conv) u = texture_[l].forward(with_maps(u, l));
    d = nn::concat_channels(u, enc[l]);
    if (cfg_.use_noise) d = noise_[l].forward(d, noise.images[l]);
  }
  return tanh_.forward(out_conv_.forward(with_maps(d, 0)));
}

template <typename T>
void Generator<T>::backward(const Tensor<T>& grad_out) {
  const auto n = static_cast<std::size_t>(cfg_.n_down);
  const auto& ch = enc_channels_;
  std::vector<Tensor<T>> grad_enc(n + 1);
  auto accumulate = [](Tensor<T>& dst, const Tensor<T>& g) {
    if (dst.empty()) {
      dst = g;
    } else {
      nn::add_into_channels(dst, 0, g);
    }
  };

  Tensor<T> g = strip_maps(out_conv_.backward(tanh_.backward(grad_out)), 2 * ch[0]);
  for (std::size_t l = 0; l < n; ++l) {
    if (cfg_.use_noise) g = noise_[l].backward(g);
    Tensor<T> gu = nn::slice_channels(g, 0, ch[l]);
    accumulate(grad_enc[l], nn::slice_channels(g, ch[l], ch[l]));
    if (cfg_.use_texture_conv) gu = strip_maps(texture_[l].backward(gu), ch[l]);
    const std::size_t d_channels = l + 1 == n ? ch[n] : 2 * ch[l + 1];
    Tensor<T> gd = strip_maps(up_[l].backward(gu), d_channels);
    if (l + 1 == n) {
      accumulate(grad_enc[n], gd);
    } else {
      g = std::move(gd);
    }
  }
  for (std::size_t l = n; l-- > 0;) {
    accumulate(grad_enc[l], strip_maps(down_[l].backward(grad_enc[l + 1]), ch[l]));
  }
  stem_.backward(grad_enc[0]);
}

void DiscriminatorConfig::validate() const {
  if (n_layers < 1) throw std::invalid_argument("discriminator: n_layers must be >= 1");
  if (base_channels < 1) throw std::invalid_argument("discriminator: base_channels must be >= 1");
  if (condition_channels < 0) {
    throw std::invalid_argument("discriminator: condition_channels must be >= 0");
  }
}

int DiscriminatorConfig::receptive_field() const {
  // walked from one output logit back: two k4 s1 layers, then the k4 s2 layers
  int rf = 1 + 3 + 3;
  for (int l = 0; l < n_layers; ++l) rf = (rf - 1) * 2 + 4;
  return rf;
}

std::size_t DiscriminatorConfig::output_size(std::size_t input) const {
  std::size_t s = input;
  const nn::Window strided{4, 2, 1};
  const nn::Window flat{4, 1, 1};
  for (int l = 0; l < n_layers; ++l) s = strided.conv_out(s);
  s = flat.conv_out(s);
  return flat.conv_out(s);
}

DiscriminatorConfig DiscriminatorConfig::narrowed(int divisor) const {
  if (divisor < 1) throw std::invalid_argument("width divisor must be >= 1");
  DiscriminatorConfig out = *this;
  out.base_channels = std::max(1, base_channels / divisor);
  return out;
}

template <typename T>
Discriminator<T>::Discriminator(DiscriminatorConfig cfg, std::uint64_t init_seed)
    : cfg_(cfg) {
  cfg_.validate();
  const auto base = static_cast<std::size_t>(cfg_.base_channels);
  const std::size_t cap = 8 * base;
  std::size_t in = 1 + static_cast<std::size_t>(cfg_.condition_channels);
  std::size_t out = base;
  for (int l = 0; l < cfg_.n_layers; ++l) {
    Layer layer;
    layer.conv = nn::Conv2d<T>("d" + std::to_string(l), in, out, 4, 2, 1);
    layer.norm = l > 0;
    layers_.push_back(std::move(layer));
    in = out;
    out = std::min(2 * out, cap);
  }
  Layer flat;
  flat.conv = nn::Conv2d<T>("d" + std::to_string(cfg_.n_layers), in, out, 4, 1, 1);
  flat.norm = true;
  layers_.push_back(std::move(flat));
  Layer head;
  head.conv = nn::Conv2d<T>("d_out", out, 1, 4, 1, 1);
  head.act = false;
  layers_.push_back(std::move(head));

  std::mt19937_64 rng(init_seed);
  for (Layer& l : layers_) l.conv.init(kInitStd, rng);
}

template <typename T>
nn::ParamList<T> Discriminator<T>::params() {
  nn::ParamList<T> out;
  for (Layer& l : layers_) l.conv.collect(out);
  return out;
}

template <typename T>
std::size_t Discriminator<T>::parameter_count() {
  return nn::parameter_count(params());
}

template <typename T>
Tensor<T> Discriminator<T>::forward(const Tensor<T>& candidate, const Tensor<T>& condition) {
  const Shape& cs = candidate.shape();
  if (cs.c != 1) {
    throw std::invalid_argument("discriminator: candidate must have one channel, got " +
                                nn::to_string(cs));
  }
  const auto cc = static_cast<std::size_t>(cfg_.condition_channels);
  if (condition.c() != cc || condition.n() != cs.n || condition.h() != cs.h ||
      condition.w() != cs.w) {
    throw std::invalid_argument("discriminator: condition " + nn::to_string(condition.shape()) +
                                " is not aligned with candidate " + nn::to_string(cs));
  }
  Tensor<T> h = cc > 0 ? nn::concat_channels(candidate, condition) : candidate;
  for (Layer& l : layers_) {
    h = l.conv.forward(h);
    if (l.norm) h = l.in.forward(h);
    if (l.act) h = l.lrelu.forward(h);
  }
  return h;
}

template <typename T>
Tensor<T> Discriminator<T>::backward(const Tensor<T>& grad_logits) {
  Tensor<T> g = grad_logits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    if (it->act) g = it->lrelu.backward(g);
    if (it->norm) g = it->in.backward(g);
    g = it->conv.backward(g);
  }
  return nn::slice_channels(g, 0, 1);
}

namespace {

constexpr char kWeightsMagic[8] = {'S', 'G', 'W', 'T', 'S', '0', '0', '1'};

template <typename V>
void put(std::ostream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw std::runtime_error("weights file truncated");
  return v;
}

}  // namespace

template <typename T>
void save_weights(const std::filesystem::path& path, const nn::ParamList<T>& params) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write weights: " + path.string());
  out.write(kWeightsMagic, sizeof(kWeightsMagic));
  put<std::uint64_t>(out, params.size());
  std::vector<float> buf;
  for (const nn::Param<T>* p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    const Shape& s = p->value.shape();
    for (std::uint64_t d : {s.n, s.c, s.h, s.w}) put<std::uint64_t>(out, d);
    buf.assign(p->value.values().begin(), p->value.values().end());
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

template <typename T>
void load_weights(const std::filesystem::path& path, const nn::ParamList<T>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read weights: " + path.string());
  char magic[sizeof(kWeightsMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kWeightsMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not a weights file: " + path.string());
  }
  const auto count = get<std::uint64_t>(in);
  if (count != params.size()) {
    throw std::runtime_error("weights file holds " + std::to_string(count) +
                             " tensors, model has " + std::to_string(params.size()));
  }
  std::vector<float> buf;
  for (nn::Param<T>* p : params) {
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    Shape s;
    s.n = get<std::uint64_t>(in);
    s.c = get<std::uint64_t>(in);
    s.h = get<std::uint64_t>(in);
    s.w = get<std::uint64_t>(in);
    if (name != p->name || s != p->value.shape()) {
      throw std::runtime_error("weights mismatch: file has " + name + " " + nn::to_string(s) +
                               ", model expects " + p->name + " " +
                               nn::to_string(p->value.shape()));
    }
    buf.resize(s.count());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw std::runtime_error("weights file truncated: " + path.string());
    std::copy(buf.begin(), buf.end(), p->value.data());
  }
}

template struct NoiseBank<float>;
template struct NoiseBank<double>;
template NoiseBank<float> make_noise_bank<float>(std::uint64_t, const std::vector<Shape>&);
template NoiseBank<double> make_noise_bank<double>(std::uint64_t, const std::vector<Shape>&);
template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template void save_weights<float>(const std::filesystem::path&, const nn::ParamList<float>&);
template void save_weights<double>(const std::filesystem::path&, const nn::ParamList<double>&);
template void load_weights<float>(const std::filesystem::path&, const nn::ParamList<float>&);
template void load_weights<double>(const std::filesystem::path&, const nn::ParamList<double>&);

}  // namespace sonogan
