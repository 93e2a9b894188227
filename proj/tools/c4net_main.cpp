// c4net command-line front end.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "c4net/checkpoint.hpp"
#include "c4net/config.hpp"
#include "c4net/dataset.hpp"
#include "c4net/errors.hpp"
#include "c4net/gradcheck.hpp"
#include "c4net/metrics.hpp"
#include "c4net/netpbm.hpp"
#include "c4net/train.hpp"

namespace fs = std::filesystem;
using namespace c4net;

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

void print_summary(const MetricsReport& r) {
  std::printf("images=%zu mae=%.6f mF=%.6f e_xi=%.6f mFP=%.6f mFN=%.6f\n", r.count, r.mae, r.mean_f, r.e_xi, r.mfp,
              r.mfn);
}

RunConfig config_or_default(const std::string& path) { return path.empty() ? RunConfig{} : load_config(path); }

fs::path sidecar_config(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  return p.replace_extension(".cfg");
}

int cmd_train(const std::string& config, const fs::path& data, const fs::path& out, std::uint64_t seed) {
  RunConfig cfg = config_or_default(config);
  cfg.train.seed = seed;
  cfg.model.init_seed = seed;
  const DataSplit split = load_split(data, cfg.train.val_fraction);
  fs::create_directories(out);
  Model<float> model(cfg.model);
  std::printf("training on %zu samples, validating on %zu\n", split.train.size(), split.val.size());
  const auto result = train(model, cfg.loss, cfg.train, split.train, split.val, [](const EpochLog& e) {
    std::printf("epoch %d loss %.6f val_mae %.6f\n", e.epoch, e.loss, e.val_mae);
    std::fflush(stdout);
  });
  save_checkpoint(out / "model.c4nt", model);
  {
    auto f = open_out(out / "model.cfg");
    f << format_config(cfg);
  }
  {
    auto f = open_out(out / "train_log.csv");
    write_log_csv(f, result.log);
  }
  if (!split.val.empty()) {
    const auto report = evaluate_model(model, split.val);
    auto f = open_out(out / "val_report.csv");
    write_report_csv(f, report);
    print_summary(report);
  }
  return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data, const fs::path& report_path, std::string config,
             const std::string& save_pred) {
  if (config.empty()) {
    config = sidecar_config(checkpoint).string();
    if (!fs::exists(config)) throw ConfigError("no --config given and " + config + " does not exist");
  }
  const RunConfig cfg = load_config(config);
  Model<float> model(cfg.model);
  load_checkpoint(checkpoint, model);
  const auto samples = load_dataset(data);
  if (samples.empty()) throw FormatError(data.string() + ": no samples");
  const auto pairs = predict_masks(model, samples);
  if (!save_pred.empty()) {
    fs::create_directories(save_pred);
    for (const auto& p : pairs) {
      Image img(1, p.height, p.width);
      for (std::size_t i = 0; i < p.pred.size(); ++i) img.data[i] = static_cast<float>(p.pred[i]);
      save_pgm(fs::path(save_pred) / (p.id + ".pgm"), img);
    }
  }
  const auto report = evaluate(pairs);
  auto f = open_out(report_path);
  write_report_csv(f, report);
  print_summary(report);
  return 0;
}

std::vector<std::string> pgm_stems(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError(dir.string() + " is not a directory");
  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".pgm") stems.push_back(e.path().stem().string());
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

int cmd_metrics(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& out, const std::string& curves) {
  const auto stems = pgm_stems(pred_dir);
  if (stems.empty()) throw FormatError(pred_dir.string() + ": no .pgm predictions");
  std::vector<MaskPair> pairs;
  for (const auto& stem : stems) {
    const Image pred = load_pgm(pred_dir / (stem + ".pgm"));
    const fs::path gt_path = gt_dir / (stem + ".pgm");
    if (!fs::exists(gt_path)) throw FormatError("no ground truth for " + stem + " in " + gt_dir.string());
    const Image gt = load_pgm(gt_path);
    MaskPair p;
    p.id = stem;
    p.height = pred.height;
    p.width = pred.width;
    p.pred.assign(pred.data.begin(), pred.data.end());
    if (gt.height != pred.height || gt.width != pred.width) {
      throw ShapeError(stem + ": prediction and ground truth sizes differ");
    }
    for (float v : gt.data) p.gt.push_back(v >= 128.0f / 255.0f ? 1 : 0);
    pairs.push_back(std::move(p));
  }
  const auto report = evaluate(pairs);
  auto f = open_out(out);
  write_report_csv(f, report);
  if (!curves.empty()) {
    fs::create_directories(curves);
    auto pr = open_out(fs::path(curves) / "pr_curve.csv");
    write_pr_curve_csv(pr, report);
    auto fc = open_out(fs::path(curves) / "f_curve.csv");
    write_f_curve_csv(fc, report);
  }
  print_summary(report);
  return 0;
}

int cmd_gradcheck(const std::string& scope, std::uint64_t seed) {
  std::vector<std::string> units;
  try {
    units = resolve_scope(scope);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\nknown units:";
    for (const auto& u : gradcheck_units()) std::cerr << ' ' << u;
    std::cerr << "\nscopes: all ops modules losses model\n";
    return 2;
  }
  bool ok = true;
  for (const auto& u : units) {
    const auto r = run_gradcheck(u, seed);
    std::printf("%-20s max_rel_error %.3e  checked %4zu  kinks %2zu  %s\n", r.unit.c_str(), r.max_rel_error,
                r.checked, r.kinks, r.pass() ? "PASS" : "FAIL");
    std::fflush(stdout);
    ok = ok && r.pass();
  }
  return ok ? 0 : 1;
}

std::vector<std::string> split_list(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_ablate(const std::string& modes, const fs::path& data, const fs::path& out, int seeds,
               const std::string& config, std::uint64_t seed) {
  const RunConfig cfg = config_or_default(config);
  std::vector<Variant> variants;
  for (const auto& name : split_list(modes)) variants.push_back(make_variant(name, cfg.model, cfg.loss));
  if (variants.empty()) throw ContractError("--modes lists no variants");
  const DataSplit split = load_split(data, cfg.train.val_fraction);
  if (split.val.empty()) throw ContractError("ablate needs a validation split");
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    rows.push_back(run_variant(v, tc, split.train, split.val, seeds));
    const auto& r = rows.back();
    std::printf("%-12s %s mae=%.6f mF=%.6f e_xi=%.6f mFP=%.6f mFN=%.6f\n", r.variant.c_str(),
                r.unstable ? "unstable" : "ok", r.mae, r.mean_f, r.e_xi, r.mfp, r.mfn);
    std::fflush(stdout);
  }
  auto f = open_out(out);
  write_ablation_csv(f, rows);
  return 0;
}

int cmd_gen_data(int n, int size, std::uint64_t seed, const fs::path& out) {
  const auto samples = generate_dataset(n, size, seed);
  save_dataset(out, samples);
  std::printf("wrote %d samples to %s\n", n, out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"c4net: salient object detection toolkit"};
  app.require_subcommand(1);

  std::string config, data, out, checkpoint, report, pred, gt, curves, scope, modes, save_pred;
  std::uint64_t seed = 0;
  int n = 0, size = 0, seeds = 3;

  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint, config and log");
  train_cmd->add_option("--config", config, "Run configuration (key = value)")->check(CLI::ExistingFile);
  train_cmd->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", out, "Output directory")->required();
  train_cmd->add_option("--seed", seed, "Seed for weights, data order and augmentation")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--report", report, "Metrics CSV to write")->required();
  eval_cmd->add_option("--config", config, "Model configuration (default: checkpoint with .cfg extension)")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--save-pred", save_pred, "Directory for predicted masks (.pgm)");

  auto* metrics_cmd = app.add_subcommand("metrics", "Score predicted masks against ground truth");
  metrics_cmd->add_option("--pred", pred, "Directory of predicted .pgm masks")->required()->check(CLI::ExistingDirectory);
  metrics_cmd->add_option("--gt", gt, "Directory of ground-truth .pgm masks")->required()->check(CLI::ExistingDirectory);
  metrics_cmd->add_option("--out", out, "Metrics CSV to write")->required();
  metrics_cmd->add_option("--curves", curves, "Directory for pr_curve.csv and f_curve.csv");

  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad_cmd->add_option("--scope", scope, "Unit name or one of: all, ops, modules, losses, model")->required();
  grad_cmd->add_option("--seed", seed, "Seed for random inputs")->required();

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and compare model variants");
  ablate_cmd->add_option("--modes", modes, "Comma-separated variants (baseline, el, el_ccm, el_ccm_cem, full, "
                                           "full_no_el, PipePP, PipeCC, PipeCP, PipeMM, BranchPP, BranchMM, "
                                           "BranchCC, BranchMP)")
      ->required();
  ablate_cmd->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ablate_cmd->add_option("--out", out, "Comparison CSV to write")->required();
  ablate_cmd->add_option("--seeds", seeds, "Number of seeds per variant")->required()->check(CLI::PositiveNumber);
  ablate_cmd->add_option("--config", config, "Base run configuration")->check(CLI::ExistingFile);
  ablate_cmd->add_option("--seed", seed, "First seed (default 0)");

  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic shape dataset");
  gen_cmd->add_option("--n", n, "Number of samples")->required()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--size", size, "Image extent")->required()->check(CLI::IsMember({32, 64, 128}));
  gen_cmd->add_option("--seed", seed, "Generator seed")->required();
  gen_cmd->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train_cmd) return cmd_train(config, data, out, seed);
    if (*eval_cmd) return cmd_eval(checkpoint, data, report, config, save_pred);
    if (*metrics_cmd) return cmd_metrics(pred, gt, out, curves);
    if (*grad_cmd) return cmd_gradcheck(scope, seed);
    if (*ablate_cmd) return cmd_ablate(modes, data, out, seeds, config, seed);
    if (*gen_cmd) return cmd_gen_data(n, size, seed, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
