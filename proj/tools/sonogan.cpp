// Command-line front end: gen-data, train, eval, report, infer.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sonogan/harness.hpp"

namespace fs = std::filesystem;
using namespace sonogan;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> variants;
  int threads = 1;
  bool force = false;
};

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(c.config);
  if (!c.variants.empty()) {
    cfg.variants.clear();
    for (const auto& v : c.variants) cfg.variants.push_back(parse_variant(v));
  }
  return cfg;
}

void add_config(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Experiment config (JSON); defaults apply when omitted")
      ->check(CLI::ExistingFile);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segmentation + attenuation to ultrasound image synthesis"};
  app.require_subcommand(1);

  // gen-data
  Common gd;
  std::string gd_out;
  std::optional<int> gd_frames;
  auto* gen = app.add_subcommand("gen-data", "Render the synthetic dataset");
  add_config(gen, gd);
  gen->add_option("--out", gd_out, "Dataset directory")->required();
  gen->add_option("--seed", gd.seed, "Dataset master seed");
  gen->add_option("--frames", gd_frames, "Number of frames")->check(CLI::PositiveNumber);
  gen->add_option("--threads", gd.threads, "Render threads")->check(CLI::PositiveNumber);
  gen->add_flag("--force", gd.force, "Replace an existing or partial dataset");

  // train
  Common tr;
  std::string tr_data, tr_out;
  bool tr_quiet = false;
  auto* trn = app.add_subcommand("train", "Train one checkpoint per (variant, seed)");
  add_config(trn, tr);
  trn->add_option("--dataset", tr_data, "Dataset directory")->required();
  trn->add_option("--out", tr_out, "Training root")->required();
  trn->add_option("--variant", tr.variants, "Variants (comma separated)")->delimiter(',');
  trn->add_option("--seed", tr.seed, "Train only this seed");
  trn->add_option("--threads", tr.threads, "Cells trained concurrently")
      ->check(CLI::PositiveNumber);
  trn->add_flag("--force", tr.force, "Retrain cells that already have a checkpoint");
  trn->add_flag("--quiet", tr_quiet, "No per-epoch progress");

  // eval
  Common ev;
  std::string ev_data, ev_train, ev_out, ev_metrics = "all";
  std::vector<std::string> ev_frames;
  auto* evl = app.add_subcommand("eval", "Evaluate trained checkpoints on the eval split");
  add_config(evl, ev);
  evl->add_option("--dataset", ev_data, "Dataset directory")->required();
  evl->add_option("--train-root", ev_train, "Training root")->required();
  evl->add_option("--out", ev_out, "Output directory")->required();
  evl->add_option("--metrics", ev_metrics, "psnr,mae,pchi2,fid or all");
  evl->add_option("--variant", ev.variants, "Variants (comma separated)")->delimiter(',');
  evl->add_option("--seed", ev.seed, "Evaluate only this seed");
  evl->add_option("--frames", ev_frames, "Eval frame ids for figures")->delimiter(',');
  evl->add_option("--threads", ev.threads, "Evaluation threads")->check(CLI::PositiveNumber);

  // report
  std::vector<std::string> rp_reports;
  std::string rp_reference = "sa2h", rp_out;
  auto* rep = app.add_subcommand("report", "Paired-difference box plots against a reference");
  rep->add_option("--reports", rp_reports, "Per-variant report files")
      ->required()
      ->check(CLI::ExistingFile);
  rep->add_option("--reference", rp_reference, "Reference variant");
  rep->add_option("--out", rp_out, "Output directory")->required();

  // infer
  std::string in_ckpt, in_data, in_out;
  std::vector<std::string> in_frames;
  std::uint64_t in_seed = 0;
  auto* inf = app.add_subcommand("infer", "Run a checkpoint on dataset frames");
  inf->add_option("--checkpoint", in_ckpt, "Checkpoint directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  inf->add_option("--dataset", in_data, "Dataset directory")->required();
  inf->add_option("--frames", in_frames, "Frame ids (default: eval split)")->delimiter(',');
  inf->add_option("--seed", in_seed, "Noise seed");
  inf->add_option("--out", in_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      ExperimentConfig cfg = load_config(gd);
      if (gd.seed) cfg.dataset.seed = *gd.seed;
      if (gd_frames) cfg.dataset.frames = *gd_frames;
      const GenDataResult r = cmd_gen_data(cfg.dataset, gd_out, gd.force, gd.threads);
      std::cout << (r.reused ? "up to date: " : "wrote ") << r.manifest.string() << "\n"
                << "dataset_id " << r.dataset_id << "\n";
    } else if (*trn) {
      ExperimentConfig cfg = load_config(tr);
      if (tr.seed) cfg.seeds = {*tr.seed};
      const Dataset data = load_dataset(tr_data);
      const auto cells = cmd_train(cfg, data, tr_out, tr.force, tr.threads, !tr_quiet);
      for (const auto& c : cells) {
        std::cout << (c.reused ? "kept    " : "trained ") << c.dir.string() << "\n";
      }
    } else if (*evl) {
      ExperimentConfig cfg = load_config(ev);
      if (ev.seed) cfg.seeds = {*ev.seed};
      EvalOptions opts = parse_metric_list(ev_metrics);
      opts.threads = ev.threads;
      opts.figure_ids = ev_frames;
      const Dataset data = load_dataset(ev_data);
      const EvalResult r = cmd_eval(cfg, data, ev_train, ev_out, opts);
      std::cout << "wrote " << r.table.string() << "\n";
    } else if (*rep) {
      std::vector<MetricReport> reports;
      for (const auto& p : rp_reports) reports.push_back(read_report(p));
      const ReportResult r = cmd_report(reports, rp_reference, rp_out);
      std::cout << "wrote " << r.summary.string() << "\n";
      for (const auto& f : r.figures) std::cout << "wrote " << f.string() << "\n";
    } else if (*inf) {
      const Dataset data = load_dataset(in_data);
      for (const auto& p : cmd_infer(in_ckpt, data, in_frames, in_out, in_seed)) {
        std::cout << "wrote " << p.string() << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
