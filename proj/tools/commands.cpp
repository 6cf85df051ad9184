#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

#include "svg_plot.hpp"
#include "vildistill/adaptation.hpp"
#include "vildistill/config.hpp"
#include "vildistill/evaluation.hpp"
#include "vildistill/io.hpp"
#include "vildistill/prediction_bank.hpp"
#include "vildistill/target_model.hpp"
#include "vildistill/vil_backend.hpp"

namespace vildistill::tools {

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Everything a command needs after the config and --setting are applied:
/// the generated domains, the (possibly restricted) model architecture and
/// the ViL world matching the source label space.
struct World {
  AppConfig cfg;
  DomainDataset source;
  DomainDataset target;
  TargetModelConfig arch;
  ShiftPair vil_world;
};

DomainDataset restrict_label_space(const DomainDataset& ds, int keep_classes) {
  DomainDataset out = partial_set_split(ds, keep_classes);
  out.class_names.resize(static_cast<size_t>(keep_classes));
  out.validate();
  return out;
}

World build_world(const CliOptions& opts) {
  World world;
  world.cfg = load_config(opts.config_path);
  ShiftPair pair = generate_shift_pair(world.cfg.data);

  world.arch = world.cfg.target_arch;
  world.vil_world = pair;

  if (opts.setting == "closed") {
    world.source = std::move(pair.source);
    world.target = std::move(pair.target);
  } else if (opts.setting == "partial") {
    world.source = std::move(pair.source);
    world.target = partial_set_split(pair.target, world.cfg.partial_keep_classes);
  } else if (opts.setting == "open") {
    // Open set: the source label space covers only the known classes; the
    // target keeps everything with extra classes folded into "unknown".
    const int known = world.cfg.open_known_classes;
    world.source = restrict_label_space(pair.source, known);
    world.target = open_set_split(pair.target, known);
    world.arch.class_count = known;
    world.vil_world.prototypes = pair.prototypes.topRows(known);
  } else {
    throw ConfigError("unknown --setting '" + opts.setting + "' (closed|partial|open)");
  }
  return world;
}

void write_text_file(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw MissingArtifact("cannot write: " + file.string());
  out << text;
}

void write_run_snapshot(const CliOptions& opts, const World& world, const std::string& command) {
  std::filesystem::create_directories(opts.run_dir());
  write_text_file(opts.run_dir() / "config.ini", render_config(world.cfg));
  io::Manifest m;
  m["format_version"] = "1";
  m["command"] = command;
  m["setting"] = opts.setting;
  m["seed_data"] = std::to_string(world.cfg.data.seed);
  m["seed_vil"] = std::to_string(world.cfg.vil.seed);
  m["seed_source"] = std::to_string(world.cfg.source.seed);
  m["seed_adaptation"] = std::to_string(world.cfg.adaptation.seed);
  io::write_manifest(opts.run_dir() / (command + "_manifest.txt"), m);
}

AdaptationConfig apply_ablations(const AppConfig& cfg, const std::vector<std::string>& ablate,
                                 bool record_trajectory) {
  AdaptationConfig acfg = cfg.adaptation;
  acfg.record_logit_spaces = record_trajectory;
  for (const std::string& name : ablate) {
    if (name == "mce") {
      acfg.ablate_mce = true;
    } else if (name == "customize") {
      acfg.ablate_customize = true;
    } else if (name == "mi") {
      acfg.use_kl_alignment = true;
    } else {
      throw ConfigError("unknown --ablate value '" + name + "' (mce|customize|mi)");
    }
  }
  return acfg;
}

void save_trajectory(const std::filesystem::path& dir, const AdaptResult& result) {
  std::filesystem::create_directories(dir);
  io::Manifest m;
  m["kind"] = "trajectory";
  m["format_version"] = "1";
  m["epochs"] = std::to_string(result.target_logit_spaces.size());
  if (!result.target_logit_spaces.empty()) {
    m["samples"] = std::to_string(result.target_logit_spaces.front().rows());
    m["class_count"] = std::to_string(result.target_logit_spaces.front().cols());
  } else {
    m["samples"] = "0";
    m["class_count"] = "0";
  }
  io::write_manifest(dir / "manifest.txt", m);
  char name[64];
  for (size_t e = 0; e < result.target_logit_spaces.size(); ++e) {
    std::snprintf(name, sizeof(name), "target_epoch_%03zu.bin", e + 1);
    io::write_matrix(dir / name, result.target_logit_spaces[e]);
    std::snprintf(name, sizeof(name), "vil_epoch_%03zu.bin", e + 1);
    io::write_matrix(dir / name, result.vil_logit_spaces[e]);
  }
}

std::pair<std::vector<Mat>, std::vector<Mat>> load_trajectory(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  const auto m = io::read_manifest(manifest_path);
  const auto epochs = io::manifest_get_int(m, "epochs", manifest_path);
  const auto samples = io::manifest_get_int(m, "samples", manifest_path);
  const auto classes = io::manifest_get_int(m, "class_count", manifest_path);
  std::vector<Mat> target_spaces, vil_spaces;
  char name[64];
  for (int64_t e = 1; e <= epochs; ++e) {
    std::snprintf(name, sizeof(name), "target_epoch_%03lld.bin", static_cast<long long>(e));
    target_spaces.push_back(io::read_matrix(dir / name, samples, classes));
    std::snprintf(name, sizeof(name), "vil_epoch_%03lld.bin", static_cast<long long>(e));
    vil_spaces.push_back(io::read_matrix(dir / name, samples, classes));
  }
  return {std::move(target_spaces), std::move(vil_spaces)};
}

}  // namespace

int cmd_pretrain(const CliOptions& opts) {
  const World world = build_world(opts);
  const PretrainResult result = pretrain_source(world.source, world.arch, world.cfg.source);

  write_run_snapshot(opts, world, "pretrain");
  io::Manifest extra;
  extra["epoch"] = std::to_string(world.cfg.source.epochs);
  extra["holdout_accuracy"] = fmt17(result.holdout_accuracy);
  TargetModel model = result.model;
  model.save(opts.run_dir() / "source_ckpt", extra);

  std::string metrics = "holdout_accuracy " + fmt17(result.holdout_accuracy) + "\n";
  for (size_t e = 0; e < result.epoch_losses.size(); ++e) {
    metrics += "epoch_loss_" + std::to_string(e + 1) + " " + fmt17(result.epoch_losses[e]) + "\n";
  }
  write_text_file(opts.run_dir() / "source_metrics.txt", metrics);

  std::cout << "holdout_accuracy " << fmt17(result.holdout_accuracy) << "\n";
  return 0;
}

int cmd_adapt(const CliOptions& opts) {
  const World world = build_world(opts);
  const auto source_ckpt = opts.run_dir() / "source_ckpt";
  if (!std::filesystem::exists(source_ckpt / "manifest.txt")) {
    throw MissingArtifact("source checkpoint not found: " + source_ckpt.string() +
                          " (run the pretrain subcommand first)");
  }
  TargetModel source_model = TargetModel::load(source_ckpt);
  if (source_model.config().class_count != world.arch.class_count ||
      source_model.config().input_dim != world.arch.input_dim) {
    throw ConfigError("source checkpoint architecture does not match the config/setting");
  }

  const auto vil = make_backend(world.cfg.vil_backend_name, world.vil_world, world.cfg.vil);
  const PromptContext prompt =
      init_prompt(*vil, world.cfg.vil.context_length, world.cfg.vil.seed);
  const AdaptationConfig acfg =
      apply_ablations(world.cfg, opts.ablate, world.cfg.record_trajectory);

  const AdaptResult result = adapt(source_model, *vil, prompt, world.target, acfg);

  write_run_snapshot(opts, world, "adapt");
  io::Manifest extra;
  extra["epoch"] = std::to_string(acfg.epochs);
  TargetModel adapted = result.model;
  adapted.save(opts.run_dir() / "adapted_ckpt", extra);
  save_prompt(result.prompt, opts.run_dir() / "prompt_ckpt");
  result.bank.save(opts.run_dir() / "bank");

  std::string log;
  for (const EpochRecord& rec : result.records) log += epoch_record_line(rec) + "\n";
  write_text_file(opts.run_dir() / "epochs.jsonl", log);

  if (world.cfg.record_trajectory) save_trajectory(opts.run_dir() / "trajectory", result);

  const double final_accuracy =
      result.records.empty() ? -1.0 : result.records.back().target_accuracy;
  std::cout << "final_target_accuracy " << fmt17(final_accuracy) << "\n";
  return 0;
}

namespace {

void report_accuracy(const CliOptions& opts, const World& world, TargetModel& model,
                     const std::filesystem::path& out_dir) {
  model.set_training(false);
  const Mat preds = model.predict(world.target.inputs);
  std::string tsv = "overall\t" + fmt17(accuracy(preds, world.target.labels)) + "\n";
  const int classes = model.config().class_count;
  const Vec rates = per_class_accuracy(preds, world.target.labels, classes);
  double mean = 0.0;
  for (int c = 0; c < classes; ++c) mean += rates[c];
  tsv += "per_class_mean\t" + fmt17(mean / classes) + "\n";
  for (int c = 0; c < classes; ++c) {
    tsv += world.target.class_names[static_cast<size_t>(c)] + "\t" + fmt17(rates[c]) + "\n";
  }
  if (opts.setting == "open") {
    std::optional<double> threshold;
    if (world.cfg.evaluation.entropy_threshold >= 0.0) {
      threshold = world.cfg.evaluation.entropy_threshold;
    }
    const OpenSetScore os =
        open_set_score(preds, world.target.labels, world.cfg.open_known_classes, threshold);
    tsv += "open_known_accuracy\t" + fmt17(os.known_accuracy) + "\n";
    tsv += "open_unknown_recall\t" + fmt17(os.unknown_recall) + "\n";
    tsv += "open_score\t" + fmt17(os.score) + "\n";
    tsv += "open_entropy_threshold\t" + fmt17(os.threshold) + "\n";
  }
  write_text_file(out_dir / "accuracy.tsv", tsv);
}

void report_confusion(const World& world, TargetModel& model,
                      const std::filesystem::path& out_dir) {
  model.set_training(false);
  const Mat preds = model.predict(world.target.inputs);
  int dim = model.config().class_count;
  for (const int y : world.target.labels) dim = std::max(dim, y + 1);
  const Eigen::MatrixXi confusion = confusion_matrix(preds, world.target.labels, dim);
  std::string tsv;
  for (Eigen::Index r = 0; r < confusion.rows(); ++r) {
    for (Eigen::Index c = 0; c < confusion.cols(); ++c) {
      if (c > 0) tsv += "\t";
      tsv += std::to_string(confusion(r, c));
    }
    tsv += "\n";
  }
  write_text_file(out_dir / "confusion.tsv", tsv);
}

void report_mmd(const CliOptions& opts, const World& world, const std::filesystem::path& out_dir) {
  if (opts.setting != "closed") {
    throw ConfigError("the mmd report is defined for the closed setting only "
                      "(the oracle needs every class present in the target)");
  }
  const auto trajectory_dir = opts.run_dir() / "trajectory";
  if (!std::filesystem::exists(trajectory_dir / "manifest.txt")) {
    throw MissingArtifact("no trajectory found at " + trajectory_dir.string() +
                          " (run adapt with record_trajectory = true)");
  }
  const auto [target_spaces, vil_spaces] = load_trajectory(trajectory_dir);

  // Reference task-specific space: same architecture trained on the target
  // domain with its true labels.
  const PretrainResult oracle = pretrain_source(world.target, world.arch, world.cfg.source);
  TargetModel oracle_model = oracle.model;
  oracle_model.set_training(false);
  const Mat oracle_logits = oracle_model.forward(world.target.inputs);

  std::vector<double> tgt_series, vil_series;
  if (world.cfg.evaluation.mmd_bandwidth > 0.0) {
    for (const Mat& space : target_spaces) {
      tgt_series.push_back(mmd(space, oracle_logits, world.cfg.evaluation.mmd_bandwidth));
    }
    for (const Mat& space : vil_spaces) {
      vil_series.push_back(mmd(space, oracle_logits, world.cfg.evaluation.mmd_bandwidth));
    }
  } else {
    tgt_series = mmd_trajectory(target_spaces, oracle_logits);
    vil_series = mmd_trajectory(vil_spaces, oracle_logits);
  }

  std::string tsv = "epoch\ttgt\tcus_vil\n";
  PlotSeries tgt{"TGT", {}, {}}, vil{"CUS-VIL", {}, {}};
  for (size_t e = 0; e < tgt_series.size(); ++e) {
    tsv += std::to_string(e + 1) + "\t" + fmt17(tgt_series[e]) + "\t" + fmt17(vil_series[e]) +
           "\n";
    tgt.x.push_back(static_cast<double>(e + 1));
    tgt.y.push_back(tgt_series[e]);
    vil.x.push_back(static_cast<double>(e + 1));
    vil.y.push_back(vil_series[e]);
  }
  write_text_file(out_dir / "mmd.tsv", tsv);
  write_line_plot_svg(out_dir / "mmd.svg", "MMD to oracle logit space", "epoch", "squared MMD",
                      {tgt, vil});
}

void report_sweep(const CliOptions& opts, const World& world,
                  const std::filesystem::path& out_dir) {
  const auto source_ckpt = opts.run_dir() / "source_ckpt";
  if (!std::filesystem::exists(source_ckpt / "manifest.txt")) {
    throw MissingArtifact("sweep report needs the source checkpoint: " + source_ckpt.string());
  }
  TargetModel source_model = TargetModel::load(source_ckpt);
  const auto vil = make_backend(world.cfg.vil_backend_name, world.vil_world, world.cfg.vil);
  const PromptContext prompt =
      init_prompt(*vil, world.cfg.vil.context_length, world.cfg.vil.seed);

  const int points = world.cfg.evaluation.sweep_points;
  std::vector<double> grid(static_cast<size_t>(points));
  for (int i = 0; i < points; ++i) {
    grid[static_cast<size_t>(i)] = static_cast<double>(i) / static_cast<double>(points - 1);
  }
  const std::vector<double> accs = weight_sweep(source_model, *vil, prompt, world.target, grid);

  std::string tsv = "vil_weight\taccuracy\n";
  PlotSeries series{"static ensemble", {}, {}};
  for (size_t i = 0; i < grid.size(); ++i) {
    tsv += fmt17(grid[i]) + "\t" + fmt17(accs[i]) + "\n";
    series.x.push_back(grid[i]);
    series.y.push_back(accs[i]);
  }
  write_text_file(out_dir / "sweep.tsv", tsv);
  write_line_plot_svg(out_dir / "sweep.svg", "source/ViL static weighting sweep", "ViL weight",
                      "accuracy", {series});
}

}  // namespace

int cmd_eval(const CliOptions& opts) {
  const World world = build_world(opts);
  for (const std::string& report : opts.reports) {
    if (report != "accuracy" && report != "confusion" && report != "mmd" && report != "sweep") {
      throw ConfigError("unknown --report '" + report +
                        "' (accuracy|confusion|mmd|sweep)");
    }
  }

  const auto out_dir = opts.run_dir() / "reports";
  std::filesystem::create_directories(out_dir);

  for (const std::string& report : opts.reports) {
    if (report == "accuracy" || report == "confusion") {
      const auto ckpt =
          opts.checkpoint.empty() ? opts.run_dir() / "adapted_ckpt" : opts.checkpoint;
      if (!std::filesystem::exists(ckpt / "manifest.txt")) {
        throw MissingArtifact("checkpoint not found: " + ckpt.string());
      }
      TargetModel model = TargetModel::load(ckpt);
      if (report == "accuracy") {
        report_accuracy(opts, world, model, out_dir);
      } else {
        report_confusion(world, model, out_dir);
      }
    } else if (report == "mmd") {
      report_mmd(opts, world, out_dir);
    } else {
      report_sweep(opts, world, out_dir);
    }
    std::cout << "report " << report << " written\n";
  }
  return 0;
}

}  // namespace vildistill::tools
