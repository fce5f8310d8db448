#include "sonogan/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "sonogan/io.hpp"
#include "sonogan/seed.hpp"

namespace sonogan {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestFormat = "sonogan-dataset/1";
constexpr const char* kReportFormat = "sonogan-report/1";

template <typename V>
void read_opt(const Json& j, const char* key, V& out) {
  if (auto it = j.find(key); it != j.end()) it->get_to(out);
}

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double number_or(const Json& j, double null_value) {
  return j.is_null() ? null_value : j.get<double>();
}

std::string frame_id(std::size_t i) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << i;
  return os.str();
}

std::string psnr_form_name(PsnrForm f) {
  return f == PsnrForm::squared_peak ? "squared_peak" : "linear_peak";
}

PsnrForm parse_psnr_form(const std::string& s) {
  if (s == "squared_peak") return PsnrForm::squared_peak;
  if (s == "linear_peak") return PsnrForm::linear_peak;
  throw std::invalid_argument("unknown psnr form '" + s + "' (squared_peak, linear_peak)");
}

void write_json(const fs::path& path, const Json& j) {
  const fs::path tmp = path.string() + ".tmp";
  io::write_text(tmp, j.dump(2) + "\n");
  fs::rename(tmp, path);
}

Json read_json(const fs::path& path) {
  try {
    return Json::parse(io::read_text(path));
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
// is rethrown after all workers stop.
template <typename F>
void parallel_for(std::size_t n, int threads, F&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i, w);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void validate_dataset_config(const DatasetConfig& cfg, std::size_t phantom_labels) {
  if (cfg.frames < 1) throw std::invalid_argument("dataset: frames must be >= 1");
  if (!(cfg.train_fraction >= 0.0 && cfg.train_fraction <= 1.0)) {
    throw std::invalid_argument("dataset: train_fraction must be in [0, 1]");
  }
  if (cfg.orientations_per_position < 1) {
    throw std::invalid_argument("dataset: orientations_per_position must be >= 1");
  }
  cfg.geometry.validate();
  cfg.oracle.validate();
  TissueProperties{cfg.tissues}.validate(phantom_labels);
}

std::vector<ProbePose> dataset_poses(const Phantom3D& phantom, const DatasetConfig& cfg) {
  const int per_side = static_cast<int>(std::ceil(
      std::sqrt(static_cast<double>(cfg.frames) / cfg.orientations_per_position)));
  auto poses = sample_probe_poses(phantom, per_side, per_side, cfg.orientations_per_position,
                                  derive_seed(cfg.seed, 1));
  std::mt19937_64 rng(derive_seed(cfg.seed, 2));
  std::shuffle(poses.begin(), poses.end(), rng);
  poses.resize(static_cast<std::size_t>(cfg.frames));
  return poses;
}

// Train/eval membership for n frames: a seeded permutation, the first
// round(fraction * n) entries train.
std::vector<bool> dataset_split(std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, 3));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<bool> is_train(n, false);
  for (std::size_t k = 0; k < n_train; ++k) is_train[order[k]] = true;
  return is_train;
}

// Checks every listed file against its recorded hash.
std::optional<std::string> verify_files(const fs::path& root, const Json& manifest) {
  for (const auto& frame : manifest.at("frames")) {
    for (const auto& [name, entry] : frame.at("files").items()) {
      const fs::path p = root / entry.at("path").get<std::string>();
      if (!fs::exists(p)) return "missing " + p.string();
      if (io::file_hash(p) != entry.at("hash").get<std::string>()) {
        return "hash mismatch for " + p.string();
      }
    }
  }
  return std::nullopt;
}

std::string dataset_hash(const Json& config, const Json& frames) {
  std::string bytes = config.dump();
  for (const auto& frame : frames) {
    for (const auto& [name, entry] : frame.at("files").items()) {
      bytes += name;
      bytes += entry.at("hash").get<std::string>();
    }
  }
  return io::content_hash(bytes);
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

TrainConfig desk_train_defaults() {
  TrainConfig t;
  t.crop = 128;
  t.epochs = 20;
  return t;
}

void to_json(Json& j, const DatasetConfig& c) {
  j = Json{{"frames", c.frames},
           {"seed", c.seed},
           {"train_fraction", c.train_fraction},
           {"orientations_per_position", c.orientations_per_position},
           {"phantom", c.phantom},
           {"geometry", c.geometry},
           {"oracle", c.oracle},
           {"tissues", c.tissues}};
}

void from_json(const Json& j, DatasetConfig& c) {
  require_known_keys(j,
                     {"frames", "seed", "train_fraction", "orientations_per_position", "phantom",
                      "geometry", "oracle", "tissues"},
                     "dataset");
  read_opt(j, "frames", c.frames);
  read_opt(j, "seed", c.seed);
  read_opt(j, "train_fraction", c.train_fraction);
  read_opt(j, "orientations_per_position", c.orientations_per_position);
  read_opt(j, "phantom", c.phantom);
  read_opt(j, "geometry", c.geometry);
  read_opt(j, "oracle", c.oracle);
  read_opt(j, "tissues", c.tissues);
}

void to_json(Json& j, const ModelScale& c) {
  j = Json{{"width_divisor", c.width_divisor}, {"discriminator_layers", c.discriminator_layers}};
}

void from_json(const Json& j, ModelScale& c) {
  require_known_keys(j, {"width_divisor", "discriminator_layers"}, "model");
  read_opt(j, "width_divisor", c.width_divisor);
  read_opt(j, "discriminator_layers", c.discriminator_layers);
}

void to_json(Json& j, const EvalConfig& c) {
  j = Json{{"histogram",
            {{"bins", c.histogram.bins},
             {"patch", c.histogram.patch},
             {"lo", c.histogram.lo},
             {"hi", c.histogram.hi}}},
           {"fid_crop", {{"center", c.fid_crop.center}, {"sub", c.fid_crop.sub}}},
           {"psnr_form", psnr_form_name(c.psnr_form)},
           {"figure_frames", c.figure_frames}};
}

void from_json(const Json& j, EvalConfig& c) {
  require_known_keys(j, {"histogram", "fid_crop", "psnr_form", "figure_frames"}, "eval");
  if (auto it = j.find("histogram"); it != j.end()) {
    require_known_keys(*it, {"bins", "patch", "lo", "hi"}, "eval.histogram");
    read_opt(*it, "bins", c.histogram.bins);
    read_opt(*it, "patch", c.histogram.patch);
    read_opt(*it, "lo", c.histogram.lo);
    read_opt(*it, "hi", c.histogram.hi);
  }
  if (auto it = j.find("fid_crop"); it != j.end()) {
    require_known_keys(*it, {"center", "sub"}, "eval.fid_crop");
    read_opt(*it, "center", c.fid_crop.center);
    read_opt(*it, "sub", c.fid_crop.sub);
  }
  if (auto it = j.find("psnr_form"); it != j.end()) {
    c.psnr_form = parse_psnr_form(it->get<std::string>());
  }
  read_opt(j, "figure_frames", c.figure_frames);
}

void to_json(Json& j, const ExperimentConfig& c) {
  Json variants = Json::array();
  for (Variant v : c.variants) variants.push_back(std::string(variant_name(v)));
  j = Json{{"dataset", c.dataset},
           {"model", c.model},
           {"train", c.train},
           {"variants", variants},
           {"seeds", c.seeds},
           {"eval", c.eval},
           {"reference", std::string(variant_name(c.reference))}};
}

void from_json(const Json& j, ExperimentConfig& c) {
  require_known_keys(j, {"dataset", "model", "train", "variants", "seeds", "eval", "reference"},
                     "experiment");
  read_opt(j, "dataset", c.dataset);
  read_opt(j, "model", c.model);
  read_opt(j, "train", c.train);
  if (auto it = j.find("variants"); it != j.end()) {
    c.variants.clear();
    for (const auto& v : *it) c.variants.push_back(parse_variant(v.get<std::string>()));
  }
  read_opt(j, "seeds", c.seeds);
  read_opt(j, "eval", c.eval);
  if (auto it = j.find("reference"); it != j.end()) {
    c.reference = parse_variant(it->get<std::string>());
  }
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  ExperimentConfig cfg;
  try {
    from_json(read_json(path), cfg);
  } catch (const std::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  if (cfg.variants.empty()) throw std::invalid_argument(path.string() + ": no variants");
  if (cfg.seeds.empty()) throw std::invalid_argument(path.string() + ": no seeds");
  return cfg;
}

void to_json(Json& j, const ImageMetrics& m) {
  j = Json{{"id", m.id},
           {"psnr", finite_or_null(m.psnr)},
           {"mae", m.mae},
           {"pchi2", m.pchi2},
           {"shadow_error", m.shadow_error ? Json(*m.shadow_error) : Json(nullptr)}};
}

void from_json(const Json& j, ImageMetrics& m) {
  m.id = j.at("id").get<std::string>();
  m.psnr = number_or(j.at("psnr"), std::numeric_limits<double>::infinity());
  m.mae = j.at("mae").get<double>();
  m.pchi2 = j.at("pchi2").get<double>();
  m.shadow_error.reset();
  if (auto it = j.find("shadow_error"); it != j.end() && !it->is_null()) {
    m.shadow_error = it->get<double>();
  }
}

void to_json(Json& j, const Summary& s) {
  j = Json{{"mean", finite_or_null(s.mean)}, {"std", finite_or_null(s.std)}, {"count", s.count}};
}

void from_json(const Json& j, Summary& s) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.mean = number_or(j.at("mean"), nan);
  s.std = number_or(j.at("std"), nan);
  s.count = j.at("count").get<std::size_t>();
}

void to_json(Json& j, const MetricReport& r) {
  j = Json{{"format", kReportFormat},
           {"variant", r.variant},
           {"checkpoint_id", r.checkpoint_id},
           {"dataset_id", r.dataset_id},
           {"generator_params", r.generator_params},
           {"summary",
            {{"psnr", r.psnr},
             {"mae", r.mae},
             {"pchi2", r.pchi2},
             {"shadow_error", r.shadow_error}}},
           {"fid", r.fid ? Json(*r.fid) : Json(nullptr)},
           {"fid_extractor", r.fid_extractor},
           {"images", r.images}};
}

void from_json(const Json& j, MetricReport& r) {
  if (j.value("format", std::string()) != kReportFormat) {
    throw std::invalid_argument("not a metric report (format != " + std::string(kReportFormat) +
                                ")");
  }
  r.variant = j.at("variant").get<std::string>();
  r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.generator_params = j.at("generator_params").get<std::size_t>();
  r.images = j.at("images").get<std::vector<ImageMetrics>>();
  const Json& s = j.at("summary");
  r.psnr = s.at("psnr").get<Summary>();
  r.mae = s.at("mae").get<Summary>();
  r.pchi2 = s.at("pchi2").get<Summary>();
  r.shadow_error = s.at("shadow_error").get<Summary>();
  r.fid.reset();
  if (!j.at("fid").is_null()) r.fid = j.at("fid").get<double>();
  r.fid_extractor = j.value("fid_extractor", std::string());
}

MetricReport read_report(const fs::path& path) {
  try {
    return read_json(path).get<MetricReport>();
  } catch (const std::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

void write_report(const fs::path& path, const MetricReport& r) {
  fs::create_directories(path.parent_path());
  write_json(path, Json(r));
}

GeneratorConfig cell_generator(const ExperimentConfig& cfg, Variant v) {
  return GeneratorConfig::for_variant(v).narrowed(cfg.model.width_divisor);
}

DiscriminatorConfig cell_discriminator(const ExperimentConfig& cfg, Variant v) {
  DiscriminatorConfig d = DiscriminatorConfig{}.narrowed(cfg.model.width_divisor);
  d.n_layers = cfg.model.discriminator_layers;
  d.condition_channels = condition_channels(cell_generator(cfg, v));
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// gen-data

GenDataResult cmd_gen_data(const DatasetConfig& cfg, const fs::path& out_dir, bool force,
                           int threads) {
  const Phantom3D phantom = build_phantom(cfg.phantom);
  validate_dataset_config(cfg, phantom.tissue_count());
  const Json config_json = cfg;
  const fs::path manifest_path = out_dir / "manifest.json";
  const fs::path frames_dir = out_dir / "frames";

  if (fs::exists(manifest_path)) {
    const Json existing = read_json(manifest_path);
    if (existing.value("config", Json()) == config_json) {
      if (auto problem = verify_files(out_dir, existing); !problem) {
        return {manifest_path, existing.at("dataset_id").get<std::string>(), true};
      } else if (!force) {
        throw std::runtime_error("dataset in " + out_dir.string() + " is damaged (" + *problem +
                                 "); rerun with --force to regenerate");
      }
    } else if (!force) {
      throw std::runtime_error("dataset in " + out_dir.string() +
                               " was generated with different settings; rerun with --force to "
                               "replace it");
    }
  } else if (fs::exists(frames_dir) && !fs::is_empty(frames_dir) && !force) {
    throw std::runtime_error("partial dataset in " + out_dir.string() +
                             " (frames without a manifest); rerun with --force to replace it");
  }
  fs::remove(manifest_path);
  fs::remove_all(frames_dir);
  fs::create_directories(frames_dir);

  const TissueProperties props{cfg.tissues};
  const std::vector<ProbePose> poses = dataset_poses(phantom, cfg);
  const std::size_t n = poses.size();
  const std::vector<bool> is_train = dataset_split(n, cfg.train_fraction, cfg.seed);
  std::vector<Json> entries(n);

  parallel_for(n, threads, [&](std::size_t i, std::size_t) {
    const std::uint64_t seed = derive_seed(derive_seed(cfg.seed, 4), i);
    const Frame f = render_frame(phantom, poses[i], cfg.geometry, props, cfg.oracle, seed);
    const std::string id = frame_id(i);
    const fs::path rel = fs::path("frames") / id;
    fs::create_directories(out_dir / rel);
    Json files = Json::object();
    auto record = [&](const char* name, auto&& write) {
      const fs::path p = rel / (std::string(name) + ".pgm");
      write(out_dir / p);
      files[name] = {{"path", p.generic_string()}, {"hash", io::file_hash(out_dir / p)}};
    };
    record("s", [&](const fs::path& p) { io::write_pgm16(p, f.s); });
    record("a", [&](const fs::path& p) { io::write_unit_image(p, f.a); });
    record("y", [&](const fs::path& p) { io::write_unit_image(p, f.y); });
    if (f.low) record("low", [&](const fs::path& p) { io::write_unit_image(p, *f.low); });
    record("mask", [&](const fs::path& p) { io::write_mask(p, f.mask); });
    record("shadow", [&](const fs::path& p) { io::write_mask(p, f.shadow); });
    entries[i] = {{"id", id},
                  {"seed", seed},
                  {"pose", f.pose},
                  {"split", is_train[i] ? "train" : "eval"},
                  {"files", files}};
  });

  Json train_ids = Json::array(), eval_ids = Json::array();
  for (std::size_t i = 0; i < n; ++i) (is_train[i] ? train_ids : eval_ids).push_back(frame_id(i));
  Json frames = entries;
  Json manifest{{"format", kManifestFormat},
                {"dataset_id", dataset_hash(config_json, frames)},
                {"config", config_json},
                {"label_count", cfg.tissues.size()},
                {"image_size", {cfg.geometry.cart_rows, cfg.geometry.cart_cols}},
                {"split", {{"train", train_ids}, {"eval", eval_ids}}},
                {"frames", frames}};
  write_json(manifest_path, manifest);
  return {manifest_path, manifest.at("dataset_id").get<std::string>(), false};
}

Dataset load_dataset(const fs::path& root) {
  const fs::path manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw std::runtime_error("no dataset manifest at " + manifest_path.string() +
                             " (run gen-data first)");
  }
  Dataset d;
  d.root = root;
  d.manifest = read_json(manifest_path);
  if (d.manifest.value("format", std::string()) != kManifestFormat) {
    throw std::runtime_error(manifest_path.string() + ": unsupported manifest format");
  }
  if (auto problem = verify_files(root, d.manifest)) {
    throw std::runtime_error("dataset " + root.string() + ": " + *problem);
  }
  d.id = d.manifest.at("dataset_id").get<std::string>();
  d.label_count = d.manifest.at("label_count").get<std::size_t>();
  for (const auto& frame : d.manifest.at("frames")) {
    const Json& files = frame.at("files");
    auto path = [&](const char* name) {
      return root / files.at(name).at("path").get<std::string>();
    };
    Frame f;
    f.seed = frame.at("seed").get<std::uint64_t>();
    f.pose = frame.at("pose").get<ProbePose>();
    f.s = io::read_pgm16(path("s"));
    f.a = io::read_unit_image(path("a"));
    f.y = io::read_unit_image(path("y"));
    if (files.contains("low")) f.low = io::read_unit_image(path("low"));
    f.mask = io::read_mask(path("mask"));
    f.shadow = io::read_mask(path("shadow"));
    const std::string id = frame.at("id").get<std::string>();
    if (frame.at("split").get<std::string>() == "train") {
      d.train_ids.push_back(id);
      d.train.push_back(example_from_frame(f, d.label_count));
    } else {
      d.eval_ids.push_back(id);
      d.eval.push_back(example_from_frame(f, d.label_count));
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// train

fs::path cell_dir(const fs::path& root, Variant v, std::uint64_t seed) {
  return root / std::string(variant_name(v)) / ("seed_" + std::to_string(seed));
}

std::vector<TrainCell> cmd_train(const ExperimentConfig& cfg, const Dataset& data,
                                 const fs::path& out_dir, bool force, int jobs, bool verbose) {
  if (data.train.empty()) throw std::invalid_argument("train: dataset has no train frames");
  std::vector<TrainCell> cells;
  for (Variant v : cfg.variants) {
    for (std::uint64_t seed : cfg.seeds) cells.push_back({v, seed, cell_dir(out_dir, v, seed)});
  }
  // Validate every cell before spending time on the first one.
  for (const auto& c : cells) {
    TrainConfig t = cfg.train;
    t.variant = c.variant;
    t.seed = c.seed;
    const GeneratorConfig g = cell_generator(cfg, c.variant);
    g.validate();
    t.validate(g);
    cell_discriminator(cfg, c.variant);
  }

  std::mutex log_mu;
  parallel_for(cells.size(), jobs, [&](std::size_t i, std::size_t) {
    TrainCell& cell = cells[i];
    TrainConfig t = cfg.train;
    t.variant = cell.variant;
    t.seed = cell.seed;
    const GeneratorConfig g = cell_generator(cfg, cell.variant);
    const DiscriminatorConfig d = cell_discriminator(cfg, cell.variant);
    const std::string label =
        std::string(variant_name(cell.variant)) + "/seed_" + std::to_string(cell.seed);

    const fs::path ckpt = cell.dir / "checkpoint";
    if (!force && fs::exists(ckpt / "checkpoint.json")) {
      const CheckpointMeta meta = read_checkpoint_meta(ckpt);
      if (meta.gen == g && meta.disc == d && meta.train == t && meta.dataset_id == data.id) {
        cell.reused = true;
        if (verbose) {
          std::lock_guard lock(log_mu);
          std::cerr << label << ": up to date\n";
        }
        return;
      }
      throw std::runtime_error(label + ": " + cell.dir.string() +
                               " holds a checkpoint for a different configuration; rerun with "
                               "--force to retrain");
    }
    if (force) fs::remove_all(cell.dir);
    fs::create_directories(cell.dir);
    write_json(cell.dir / "config.json",
               Json{{"variant", std::string(variant_name(cell.variant))},
                    {"seed", cell.seed},
                    {"inputs", input_channel_names(g)},
                    {"generator", g},
                    {"discriminator", d},
                    {"train", t},
                    {"dataset_id", data.id}});

    TrainOptions opts;
    opts.out_dir = cell.dir;
    opts.dataset_id = data.id;
    if (verbose) {
      opts.on_epoch = [&, label](const EpochStats& s) {
        std::lock_guard lock(log_mu);
        std::cerr << label << " epoch " << s.epoch << "/" << t.epochs << "  D " << s.loss_d
                  << "  G_adv " << s.loss_g_adv << "  L1 " << s.loss_l1 << "\n";
      };
    }
    train(t, g, d, data.train, opts);
  });
  return cells;
}

// ---------------------------------------------------------------------------
// eval

EvalOptions parse_metric_list(const std::string& list) {
  EvalOptions o;
  o.psnr = o.mae = o.pchi2 = o.fid = false;
  std::stringstream ss(list);
  std::string item;
  bool any = false;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    any = true;
    if (item == "all") {
      o.psnr = o.mae = o.pchi2 = o.fid = true;
    } else if (item == "psnr") {
      o.psnr = true;
    } else if (item == "mae") {
      o.mae = true;
    } else if (item == "pchi2") {
      o.pchi2 = true;
    } else if (item == "fid") {
      o.fid = true;
    } else {
      throw std::invalid_argument("unknown metric '" + item + "' (psnr, mae, pchi2, fid, all)");
    }
  }
  if (!any) throw std::invalid_argument("empty metric list");
  return o;
}

namespace {

struct CellEval {
  MetricReport report;
  std::map<std::string, ImageF> outputs;       // figure frames only
  std::map<std::string, Grid<double>> maps;    // pchi2 maps of figure frames
};

std::uint64_t infer_seed(std::uint64_t train_seed, const std::string& frame) {
  return derive_seed(derive_seed(train_seed, 5), std::stoull(frame));
}

void check_geometry(const CheckpointMeta& meta, const Dataset& data, const fs::path& ckpt) {
  if (data.eval.empty() && data.train.empty()) return;
  const Example& ex = data.eval.empty() ? data.train.front() : data.eval.front();
  if (meta.image_rows != ex.rows() || meta.image_cols != ex.cols()) {
    throw std::runtime_error(ckpt.string() + " was trained on " + std::to_string(meta.image_rows) +
                             "x" + std::to_string(meta.image_cols) + " frames but the dataset has " +
                             std::to_string(ex.rows()) + "x" + std::to_string(ex.cols()));
  }
  if (meta.gen.extra_input == ExtraInput::low_quality && ex.low.empty()) {
    throw std::runtime_error(ckpt.string() + " needs low-quality frames, the dataset has none");
  }
}

CellEval evaluate_cell(const fs::path& ckpt, const Dataset& data, const ExperimentConfig& cfg,
                       const EvalOptions& opts, const FeatureExtractor& extractor,
                       const std::vector<std::string>& figure_ids) {
  if (data.eval.empty()) throw std::invalid_argument("eval: the dataset's eval split is empty");
  if (opts.fid && data.eval.size() < 2) {
    throw std::invalid_argument("eval: FID needs at least 2 eval images, the split has " +
                                std::to_string(data.eval.size()));
  }
  if (!fs::exists(ckpt / "checkpoint.json")) {
    throw std::runtime_error("no checkpoint at " + ckpt.string() + " (run train first)");
  }
  const CheckpointMeta meta = read_checkpoint_meta(ckpt);
  check_geometry(meta, data, ckpt);
  Generator<float> proto = load_generator(ckpt);

  const std::size_t n = data.eval.size();
  std::vector<ImageMetrics> images(n);
  std::vector<ImageF> outputs(n);
  std::vector<Grid<double>> maps(n);
  std::vector<std::vector<std::vector<double>>> real_feats(n), gen_feats(n);
  const int workers = std::max(1, std::min<int>(opts.threads, static_cast<int>(n)));
  std::vector<Generator<float>> gens(static_cast<std::size_t>(workers), proto);

  parallel_for(n, workers, [&](std::size_t i, std::size_t w) {
    const Example& ex = data.eval[i];
    const std::string& id = data.eval_ids[i];
    ImageF out = infer_full_fov(gens[w], ex, infer_seed(meta.train.seed, id));
    images[i] = evaluate_image(id, ex.y, out, ex.mask, ex.shadow, cfg.eval.histogram,
                               cfg.eval.psnr_form);
    if (std::find(figure_ids.begin(), figure_ids.end(), id) != figure_ids.end()) {
      maps[i] = patch_chi2(ex.y, out, cfg.eval.histogram, &ex.mask).map;
    }
    if (opts.fid) {
      for (const ImageF& c : fid_crops(ex.y, cfg.eval.fid_crop)) {
        real_feats[i].push_back(extractor.features(c));
      }
      for (const ImageF& c : fid_crops(out, cfg.eval.fid_crop)) {
        gen_feats[i].push_back(extractor.features(c));
      }
    }
    outputs[i] = std::move(out);
  });

  CellEval ce;
  MetricReport& r = ce.report;
  r.variant = variant_name(meta.train.variant);
  r.checkpoint_id = io::file_hash(ckpt / "generator.bin");
  r.dataset_id = data.id;
  r.generator_params = proto.parameter_count();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (auto& m : images) {
    if (!opts.psnr) m.psnr = nan;
    if (!opts.mae) m.mae = nan;
    if (!opts.pchi2) m.pchi2 = nan;
  }
  r.images = std::move(images);
  r.aggregate();
  if (opts.fid) {
    FeatureMatrix real, gen;
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& f : real_feats[i]) real.append(f);
      for (const auto& f : gen_feats[i]) gen.append(f);
    }
    r.fid = fid(real, gen);
    r.fid_extractor = extractor.id();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (maps[i].empty()) continue;
    ce.outputs[data.eval_ids[i]] = std::move(outputs[i]);
    ce.maps[data.eval_ids[i]] = std::move(maps[i]);
  }
  return ce;
}

// Box-averaged downsample by an integer factor.
ImageF shrink(const ImageF& img, std::size_t f) {
  ImageF out(img.rows() / f, img.cols() / f);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < f; ++i) {
        for (std::size_t j = 0; j < f; ++j) acc += img(r * f + i, c * f + j);
      }
      out(r, c) = static_cast<float>(acc / static_cast<double>(f * f));
    }
  }
  return out;
}

void paste(ImageF& dst, const ImageF& src, std::size_t r0, std::size_t c0) {
  for (std::size_t r = 0; r < src.rows() && r0 + r < dst.rows(); ++r) {
    for (std::size_t c = 0; c < src.cols() && c0 + c < dst.cols(); ++c) {
      dst(r0 + r, c0 + c) = src(r, c);
    }
  }
}

// Reference frame with s (top left) and a (bottom right) inset at quarter
// size, followed by one generated tile per variant.
ImageF figure_grid(const Example& ex, const std::vector<const ImageF*>& generated) {
  const std::size_t h = ex.rows(), w = ex.cols(), gap = 4;
  ImageF grid(h, (w + gap) * (generated.size() + 1) - gap, 1.0f);
  ImageF ref = ex.y;
  const ImageF s = shrink(ex.s, 4), a = shrink(ex.a, 4);
  paste(ref, s, 0, 0);
  paste(ref, a, h - a.rows(), w - a.cols());
  paste(grid, ref, 0, 0);
  for (std::size_t k = 0; k < generated.size(); ++k) {
    ImageF tile = *generated[k];
    paste(tile, s, 0, 0);
    paste(tile, a, h - a.rows(), w - a.cols());
    paste(grid, tile, 0, (k + 1) * (w + gap));
  }
  return grid;
}

void write_error_map(const fs::path& path, const Grid<double>& map,
                     const Grid<std::uint8_t>& mask) {
  Grid<io::Rgb> img(map.rows(), map.cols(), io::Rgb{0, 0, 0});
  for (std::size_t r = 0; r < map.rows(); ++r) {
    for (std::size_t c = 0; c < map.cols(); ++c) {
      if (mask(r, c)) img(r, c) = io::colormap(map(r, c));
    }
  }
  io::write_ppm(path, img);
}

std::string mean_std(const Summary& s, int digits) {
  if (s.count == 0 || !std::isfinite(s.mean)) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << s.mean << " ± " << s.std;
  return os.str();
}

std::string seed_prefix(std::uint64_t seed) { return "seed" + std::to_string(seed) + "/"; }

}  // namespace

MetricReport evaluate_checkpoint(const fs::path& checkpoint, const Dataset& data,
                                 const ExperimentConfig& cfg, const EvalOptions& opts,
                                 const FeatureExtractor& extractor) {
  return evaluate_cell(checkpoint, data, cfg, opts, extractor, {}).report;
}

EvalResult cmd_eval(const ExperimentConfig& cfg, const Dataset& data, const fs::path& train_root,
                    const fs::path& out_dir, const EvalOptions& opts) {
  std::vector<std::string> figure_ids = opts.figure_ids;
  if (figure_ids.empty()) {
    const auto k = std::min<std::size_t>(data.eval_ids.size(),
                                         static_cast<std::size_t>(std::max(0, cfg.eval.figure_frames)));
    figure_ids.assign(data.eval_ids.begin(), data.eval_ids.begin() + static_cast<long>(k));
  }
  for (const auto& id : figure_ids) {
    if (std::find(data.eval_ids.begin(), data.eval_ids.end(), id) == data.eval_ids.end()) {
      throw std::invalid_argument("eval: figure frame '" + id + "' is not in the eval split");
    }
  }
  std::unique_ptr<FeatureExtractor> extractor = StandInExtractor::from_environment();
  // Check every cell exists before the long loop.
  for (Variant v : cfg.variants) {
    for (std::uint64_t seed : cfg.seeds) {
      const fs::path ckpt = cell_dir(train_root, v, seed) / "checkpoint";
      if (!fs::exists(ckpt / "checkpoint.json")) {
        throw std::runtime_error("no checkpoint at " + ckpt.string() + " (run train first)");
      }
    }
  }

  EvalResult result;
  const fs::path reports = out_dir / "reports";
  const fs::path figures = out_dir / "figures";
  fs::create_directories(reports);
  // figure frame -> generated image per variant (first seed)
  std::map<std::string, std::vector<ImageF>> grid_tiles;

  for (Variant v : cfg.variants) {
    const std::string name(variant_name(v));
    MetricReport pooled;
    pooled.variant = name;
    pooled.dataset_id = data.id;
    std::vector<double> fids;
    std::string ckpt_ids;
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
      const std::uint64_t seed = cfg.seeds[si];
      const fs::path ckpt = cell_dir(train_root, v, seed) / "checkpoint";
      CellEval ce = evaluate_cell(ckpt, data, cfg, opts, *extractor, figure_ids);
      if (ce.report.variant != name) {
        throw std::runtime_error(ckpt.string() + " holds a " + ce.report.variant +
                                 " checkpoint, expected " + name);
      }
      write_report(reports / (name + "_seed" + std::to_string(seed) + ".json"), ce.report);

      const fs::path fig_dir = figures / (name + "_seed" + std::to_string(seed));
      fs::create_directories(fig_dir);
      for (const auto& [id, out] : ce.outputs) {
        const std::size_t idx = static_cast<std::size_t>(
            std::find(data.eval_ids.begin(), data.eval_ids.end(), id) - data.eval_ids.begin());
        io::write_unit_image(fig_dir / (id + "_generated.pgm"), out);
        write_error_map(fig_dir / (id + "_pchi2.ppm"), ce.maps.at(id), data.eval[idx].mask);
        if (si == 0) grid_tiles[id].push_back(out);
      }

      pooled.generator_params = ce.report.generator_params;
      pooled.fid_extractor = ce.report.fid_extractor;
      if (ce.report.fid) fids.push_back(*ce.report.fid);
      ckpt_ids += ce.report.checkpoint_id;
      for (ImageMetrics m : ce.report.images) {
        m.id = seed_prefix(seed) + m.id;
        pooled.images.push_back(std::move(m));
      }
      result.per_checkpoint.push_back(std::move(ce.report));
    }
    pooled.checkpoint_id = io::content_hash(ckpt_ids);
    if (!fids.empty()) pooled.fid = summarize(fids).mean;
    pooled.aggregate();
    write_report(reports / (name + ".json"), pooled);
    result.per_variant.push_back(std::move(pooled));
  }

  for (const auto& [id, tiles] : grid_tiles) {
    const std::size_t idx = static_cast<std::size_t>(
        std::find(data.eval_ids.begin(), data.eval_ids.end(), id) - data.eval_ids.begin());
    std::vector<const ImageF*> ptrs;
    for (const auto& t : tiles) ptrs.push_back(&t);
    fs::create_directories(figures);
    io::write_unit_image(figures / (id + "_grid.pgm"), figure_grid(data.eval[idx], ptrs));
  }

  std::ostringstream md;
  md << "| variant | PSNR (dB) | MAE | pchi2 | FID | shadow error | #params |\n"
     << "|---|---|---|---|---|---|---|\n";
  Json rows = Json::array();
  for (const auto& r : result.per_variant) {
    std::ostringstream fid_s;
    if (r.fid) {
      fid_s << std::fixed << std::setprecision(3) << *r.fid;
    } else {
      fid_s << "n/a";
    }
    md << "| " << r.variant << " | " << mean_std(r.psnr, 2) << " | " << mean_std(r.mae, 2)
       << " | " << mean_std(r.pchi2, 4) << " | " << fid_s.str() << " | "
       << mean_std(r.shadow_error, 4) << " | " << r.generator_params << " |\n";
    rows.push_back({{"variant", r.variant},
                    {"psnr", r.psnr},
                    {"mae", r.mae},
                    {"pchi2", r.pchi2},
                    {"fid", r.fid ? Json(*r.fid) : Json(nullptr)},
                    {"shadow_error", r.shadow_error},
                    {"generator_params", r.generator_params}});
  }
  result.table = out_dir / "results.md";
  io::write_text(result.table, md.str());
  write_json(out_dir / "results.json",
             Json{{"dataset_id", data.id},
                  {"seeds", cfg.seeds},
                  {"fid_extractor", extractor->id()},
                  {"rows", rows}});
  return result;
}

// ---------------------------------------------------------------------------
// report

namespace {

struct Panel {
  std::string metric;
  std::vector<std::pair<std::string, BoxStats>> boxes;
};

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string box_plot_svg(const Panel& p, const std::string& reference) {
  const double width = 120.0 + 110.0 * static_cast<double>(std::max<std::size_t>(1, p.boxes.size()));
  const double height = 320.0, top = 40.0, bottom = 260.0, left = 70.0;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
    << p.metric << ": " << reference << " - variant (paired, per image)</text>\n";
  if (p.boxes.empty()) {
    s << "<text x=\"" << width / 2 << "\" y=\"" << (top + bottom) / 2
      << "\" text-anchor=\"middle\">no variants to compare against " << reference
      << "</text>\n</svg>\n";
    return s.str();
  }
  double lo = 0.0, hi = 0.0;
  for (const auto& [name, b] : p.boxes) {
    lo = std::min(lo, b.min);
    hi = std::max(hi, b.max);
  }
  if (hi - lo < 1e-12) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  auto y = [&](double v) { return bottom - (v - lo) / (hi - lo) * (bottom - top); };
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << bottom
    << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    s << "<text x=\"" << left - 5 << "\" y=\"" << y(v) + 4 << "\" text-anchor=\"end\">"
      << fmt(v) << "</text>\n";
  }
  s << "<line x1=\"" << left << "\" y1=\"" << y(0.0) << "\" x2=\"" << width - 20 << "\" y2=\""
    << y(0.0) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  for (std::size_t k = 0; k < p.boxes.size(); ++k) {
    const auto& [name, b] = p.boxes[k];
    const double cx = left + 60.0 + 110.0 * static_cast<double>(k), hw = 25.0;
    s << "<line x1=\"" << cx << "\" y1=\"" << y(b.whisker_lo) << "\" x2=\"" << cx << "\" y2=\""
      << y(b.whisker_hi) << "\" stroke=\"black\"/>\n";
    s << "<rect x=\"" << cx - hw << "\" y=\"" << y(b.q3) << "\" width=\"" << 2 * hw
      << "\" height=\"" << std::max(0.5, y(b.q1) - y(b.q3))
      << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << cx - hw << "\" y1=\"" << y(b.median) << "\" x2=\"" << cx + hw
      << "\" y2=\"" << y(b.median) << "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << cx << "\" y=\"" << bottom + 20 << "\" text-anchor=\"middle\">" << name
      << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace

ReportResult cmd_report(const std::vector<MetricReport>& reports, const std::string& reference,
                        const fs::path& out_dir) {
  if (reports.empty()) throw std::invalid_argument("report: no reports given");
  const auto ref_it = std::find_if(reports.begin(), reports.end(),
                                   [&](const MetricReport& r) { return r.variant == reference; });
  if (ref_it == reports.end()) {
    throw std::invalid_argument("report: no report for reference variant '" + reference + "'");
  }
  ReportResult result;
  for (const auto& r : reports) {
    if (&r == &*ref_it) continue;
    if (r.dataset_id != ref_it->dataset_id) {
      throw std::invalid_argument("report: " + r.variant + " was evaluated on dataset " +
                                  r.dataset_id + ", " + reference + " on " + ref_it->dataset_id);
    }
    try {
      result.deltas.emplace_back(r.variant, paired_differences(*ref_it, r));
    } catch (const std::exception& e) {
      throw std::invalid_argument("report: " + r.variant + " and " + reference +
                                  " do not share an eval set: " + e.what());
    }
  }

  fs::create_directories(out_dir);
  const char* metrics[] = {"psnr", "mae", "pchi2"};
  for (const char* metric : metrics) {
    Panel p{metric, {}};
    for (const auto& [name, d] : result.deltas) {
      const std::string m = metric;
      p.boxes.emplace_back(name, m == "psnr" ? d.psnr_box : m == "mae" ? d.mae_box : d.pchi2_box);
    }
    const fs::path path = out_dir / ("delta_" + std::string(metric) + ".svg");
    io::write_text(path, box_plot_svg(p, reference));
    result.figures.push_back(path);
  }

  std::ostringstream md;
  md << "# Paired differences against " << reference << "\n\n";
  md << "Dataset `" << ref_it->dataset_id << "`, " << ref_it->images.size()
     << " images per variant. Deltas are " << reference
     << " minus the variant, per image; positive PSNR and negative MAE/pchi2 deltas favour "
     << reference << ".\n\n";
  if (result.deltas.empty()) {
    md << "Only the reference report was given, so there are no deltas to plot.\n";
  } else {
    md << "| variant | PSNR median [q1, q3] | MAE median [q1, q3] | pchi2 median [q1, q3] |\n"
       << "|---|---|---|---|\n";
    auto cell = [](const BoxStats& b, int digits) {
      return fmt(b.median, digits) + " [" + fmt(b.q1, digits) + ", " + fmt(b.q3, digits) + "]";
    };
    for (const auto& [name, d] : result.deltas) {
      md << "| " << name << " | " << cell(d.psnr_box, 2) << " | " << cell(d.mae_box, 2) << " | "
         << cell(d.pchi2_box, 4) << " |\n";
    }
  }
  md << "\n## Means\n\n| variant | PSNR | MAE | pchi2 | FID | #params |\n|---|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    md << "| " << r.variant << " | " << mean_std(r.psnr, 2) << " | " << mean_std(r.mae, 2)
       << " | " << mean_std(r.pchi2, 4) << " | " << (r.fid ? fmt(*r.fid) : "n/a") << " | "
       << r.generator_params << " |\n";
  }
  md << "\nFigures: delta_psnr.svg, delta_mae.svg, delta_pchi2.svg\n";
  result.summary = out_dir / "summary.md";
  io::write_text(result.summary, md.str());
  return result;
}

// ---------------------------------------------------------------------------
// infer

std::vector<fs::path> cmd_infer(const fs::path& checkpoint, const Dataset& data,
                                const std::vector<std::string>& frame_ids, const fs::path& out_dir,
                                std::uint64_t seed) {
  const CheckpointMeta meta = read_checkpoint_meta(checkpoint);
  check_geometry(meta, data, checkpoint);
  Generator<float> g = load_generator(checkpoint);
  std::vector<std::string> ids = frame_ids;
  if (ids.empty()) ids = data.eval_ids;
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (const auto& id : ids) {
    const Example* ex = nullptr;
    for (std::size_t i = 0; i < data.eval_ids.size() && !ex; ++i) {
      if (data.eval_ids[i] == id) ex = &data.eval[i];
    }
    for (std::size_t i = 0; i < data.train_ids.size() && !ex; ++i) {
      if (data.train_ids[i] == id) ex = &data.train[i];
    }
    if (!ex) throw std::invalid_argument("infer: no frame '" + id + "' in the dataset");
    const ImageF out = infer_full_fov(g, *ex, infer_seed(seed, id));
    const fs::path p = out_dir / (id + "_generated.pgm");
    io::write_unit_image(p, out);
    written.push_back(p);
  }
  return written;
}

}  // namespace sonogan
