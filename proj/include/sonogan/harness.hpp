#pragma once

// Experiment orchestration behind the command-line tool: dataset generation,
// training cells, evaluation and reporting.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sonogan/metrics.hpp"
#include "sonogan/serialize.hpp"
#include "sonogan/training.hpp"

namespace sonogan {

struct DatasetConfig {
  int frames = 200;
  std::uint64_t seed = 1;
  double train_fraction = 0.9;
  int orientations_per_position = 4;
  PhantomSpec phantom = default_phantom_spec();
  ScanGeometry geometry;
  OracleConfig oracle;
  std::vector<TissueClass> tissues = default_tissue_table().tissues;
};

struct ModelScale {
  int width_divisor = 4;
  int discriminator_layers = 3;
};

struct EvalConfig {
  HistogramSpec histogram;
  FidCropSpec fid_crop{256, 150};
  PsnrForm psnr_form = PsnrForm::squared_peak;
  // Eval frames (in split order) that get error maps and image grids.
  int figure_frames = 2;
};

// Training defaults for the desk-scale experiment (128 crops, 20 epochs).
TrainConfig desk_train_defaults();

// Everything one experiment needs. Defaults give the desk-scale setup:
// 200 frames at 256x256, 128 crops, 20 epochs, widths divided by 4.
struct ExperimentConfig {
  DatasetConfig dataset;
  ModelScale model;
  TrainConfig train = desk_train_defaults();
  std::vector<Variant> variants{all_variants().begin(), all_variants().end()};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  EvalConfig eval;
  Variant reference = Variant::sa2h;

  static ExperimentConfig load(const std::filesystem::path& path);
};

void to_json(Json& j, const DatasetConfig& c);
void from_json(const Json& j, DatasetConfig& c);
void to_json(Json& j, const ModelScale& c);
void from_json(const Json& j, ModelScale& c);
void to_json(Json& j, const EvalConfig& c);
void from_json(const Json& j, EvalConfig& c);
void to_json(Json& j, const ExperimentConfig& c);
void from_json(const Json& j, ExperimentConfig& c);
void to_json(Json& j, const ImageMetrics& m);
void from_json(const Json& j, ImageMetrics& m);
void to_json(Json& j, const Summary& s);
void from_json(const Json& j, Summary& s);
void to_json(Json& j, const MetricReport& r);
void from_json(const Json& j, MetricReport& r);

// Architecture of one experiment cell.
GeneratorConfig cell_generator(const ExperimentConfig& cfg, Variant v);
DiscriminatorConfig cell_discriminator(const ExperimentConfig& cfg, Variant v);

struct GenDataResult {
  std::filesystem::path manifest;
  std::string dataset_id;
  bool reused = false;  // an identical dataset was already on disk
};

// Renders cfg.frames frames into out_dir/frames and writes manifest.json.
// An existing identical dataset is kept; anything else on disk is refused
// unless `force` is set.
GenDataResult cmd_gen_data(const DatasetConfig& cfg, const std::filesystem::path& out_dir,
                           bool force, int threads);

struct Dataset {
  std::filesystem::path root;
  std::string id;
  std::vector<std::string> train_ids;
  std::vector<std::string> eval_ids;
  std::vector<Example> train;
  std::vector<Example> eval;
  std::size_t label_count = 0;
  Json manifest;
};

// Loads the frames listed in the manifest, verifying their hashes.
Dataset load_dataset(const std::filesystem::path& root);

struct TrainCell {
  Variant variant = Variant::sa2h;
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  bool reused = false;
};

// Directory of one (variant, seed) cell under a training root.
std::filesystem::path cell_dir(const std::filesystem::path& root, Variant v, std::uint64_t seed);

// One checkpoint per (variant, seed). A cell whose directory already holds a
// checkpoint for the same configuration is skipped unless `force` is set.
// `jobs` > 1 trains that many cells concurrently.
std::vector<TrainCell> cmd_train(const ExperimentConfig& cfg, const Dataset& data,
                                 const std::filesystem::path& out_dir, bool force, int jobs = 1,
                                 bool verbose = false);

struct EvalOptions {
  bool psnr = true;
  bool mae = true;
  bool pchi2 = true;
  bool fid = true;
  int threads = 1;
  std::vector<std::string> figure_ids;  // overrides cfg.eval.figure_frames when non-empty
};

// Parses a comma-separated metric list (psnr, mae, pchi2, fid, all).
EvalOptions parse_metric_list(const std::string& list);

// Evaluates one checkpoint on the eval split.
MetricReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const Dataset& data,
                                 const ExperimentConfig& cfg, const EvalOptions& opts,
                                 const FeatureExtractor& extractor);

struct EvalResult {
  std::vector<MetricReport> per_checkpoint;
  std::vector<MetricReport> per_variant;  // seeds pooled, plan order
  std::filesystem::path table;
};

// Evaluates every cell under train_root (plan order), writes per-cell and
// per-variant reports, a results table and figures into out_dir.
EvalResult cmd_eval(const ExperimentConfig& cfg, const Dataset& data,
                    const std::filesystem::path& train_root, const std::filesystem::path& out_dir,
                    const EvalOptions& opts);

struct ReportResult {
  std::filesystem::path summary;
  std::vector<std::filesystem::path> figures;
  std::vector<std::pair<std::string, PairedDifferences>> deltas;  // non-reference variants
};

// Paired-difference box plots against the reference variant plus a summary.
ReportResult cmd_report(const std::vector<MetricReport>& reports, const std::string& reference,
                        const std::filesystem::path& out_dir);

MetricReport read_report(const std::filesystem::path& path);
void write_report(const std::filesystem::path& path, const MetricReport& r);

// Runs a checkpoint on selected dataset frames and writes the outputs.
std::vector<std::filesystem::path> cmd_infer(const std::filesystem::path& checkpoint,
                                             const Dataset& data,
                                             const std::vector<std::string>& frame_ids,
                                             const std::filesystem::path& out_dir,
                                             std::uint64_t seed);

}  // namespace sonogan
