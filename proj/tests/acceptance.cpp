// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Optional arguments select criteria by number.
// Progress and per-run details go to stderr.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "c4net/checkpoint.hpp"
#include "c4net/config.hpp"
#include "c4net/dataset.hpp"
#include "c4net/gradcheck.hpp"
#include "c4net/losses.hpp"
#include "c4net/metrics.hpp"
#include "c4net/model.hpp"
#include "c4net/netpbm.hpp"
#include "c4net/train.hpp"
#include "generators.hpp"
#include "metric_oracle.hpp"

using namespace c4net;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

// ------------------------------------------------------------ criterion 1

Outcome gradient_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t runs = 0;
  for (const auto& unit : resolve_scope("all")) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto r = run_gradcheck(unit, seed);
      ++runs;
      worst = std::max(worst, r.max_rel_error);
      o.require(r.pass(), unit + " seed " + std::to_string(seed) + " err " + fmt("%.3e", r.max_rel_error));
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < 300.0, "suite took " + fmt("%.1f", secs) + " s");
  if (o.pass) {
    o.detail = std::to_string(gradcheck_units().size()) + " units x 10 seeds, max rel err " + fmt("%.2e", worst) +
               ", " + fmt("%.1f", secs) + " s";
  }
  return o;
}

// ------------------------------------------------------------ criterion 2

Tensor<double> random_mask(Rng& rng, const Shape& shape, double p) {
  std::vector<double> v(shape.numel());
  for (auto& x : v) x = bernoulli(rng, p) ? 1.0 : 0.0;
  v[0] = 1.0;  // never empty
  return Tensor<double>(shape, std::move(v));
}

Outcome loss_identities() {
  Outcome o;
  const LossConfig cfg;
  Rng rng(2002);
  double worst_bce = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int h = uniform_int(rng, 4, 24);
    const int w = uniform_int(rng, 4, 24);
    const auto gt = random_mask(rng, Shape{uniform_int(rng, 1, 3), 1, h, w}, uniform(rng, 0.05, 0.9));
    const auto om = weight_map(gt, cfg);
    const double b = wbce(gt, gt, om, cfg).item();
    worst_bce = std::max(worst_bce, b);
    o.require(b <= 2e-7, "wbce(Gt,Gt) = " + fmt("%.3e", b));
    o.require(wiou(gt, gt, om).item() == 0.0, "wiou(Gt,Gt) != 0");
    o.require(wel(gt, gt, om, cfg).item() == 0.0, "wel(Gt,Gt) != 0");

    // Predictions only where Gt = 0.
    std::vector<double> fp(gt.numel());
    bool any = false;
    for (std::size_t i = 0; i < fp.size(); ++i) {
      if (gt.values()[i] == 0.0 && bernoulli(rng, 0.5)) {
        fp[i] = uniform(rng, 0.1, 1.0);
        any = true;
      }
    }
    if (any) {
      const double e = wel(Tensor<double>(gt.shape(), fp), gt, om, cfg).item();
      o.require(e == 1.0, "wel(pure FP) = " + fmt("%.17g", e));
    }
  }

  Tensor<double> gt(Shape{1, 1, 2, 2}, std::vector<double>{1, 0, 0, 0});
  Tensor<double> s(Shape{1, 1, 2, 2}, std::vector<double>{0.8, 0.4, 0.2, 0.0});
  Tensor<double> ones(Shape{1, 1, 2, 2}, 1.0);
  const double worked = wel(s, gt, ones, cfg).item();
  o.require(std::abs(worked - 3.0 / 7.0) <= 1e-12, "2x2 wel = " + fmt("%.17g", worked));

  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor<double>> masks, gts;
    const int n = uniform_int(rng, 1, 3);
    int size = 32;
    for (int l = 0; l < kLevels; ++l) {
      gts.push_back(random_mask(rng, Shape{n, 1, size, size}, 0.3));
      masks.push_back(gen::tensor(rng, Shape{n, 1, size, size}, 0.01, 0.99));
      size = (size + 1) / 2;
    }
    const auto terms = total_loss(masks, gts, cfg);
    double expanded = wel(masks[0], gts[0], weight_map(gts[0], cfg), cfg).item();
    for (std::size_t i = 0; i < kLevels; ++i) {
      const auto om = weight_map(gts[i], cfg);
      expanded += cfg.level_weights[i] * (wbce(masks[i], gts[i], om, cfg).item() + wiou(masks[i], gts[i], om).item());
    }
    o.require(terms.total.item() == expanded, "total loss differs from its expansion");
  }
  if (o.pass) o.detail = "max wbce(Gt,Gt) " + fmt("%.2e", worst_bce) + ", 2x2 wel " + fmt("%.15f", worked);
  return o;
}

// ------------------------------------------------------------ criterion 3

Outcome metric_oracle() {
  Outcome o;
  Rng rng(3003);
  std::vector<MaskPair> pairs;
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    auto p = gen::pair(rng, 8, 8);
    p.id = "p" + std::to_string(i);
    pairs.push_back(p);

    const auto sweep = confusion_sweep(p);
    const double m = mae(p);
    worst = std::max(worst, std::abs(m - oracle::mae(p.pred, p.gt)));
    for (int j = 0; j < kThresholds; ++j) {
      const double t = threshold_at(j);
      const auto c = oracle::count(p.pred, p.gt, t);
      const auto& got = sweep[static_cast<std::size_t>(j)];
      o.require(got.tp == c.tp && got.fp == c.fp && got.fn == c.fn && got.tn == c.tn,
                "confusion mismatch at pair " + std::to_string(i));
      const auto pr = precision_recall(got);
      const double want_p = oracle::precision(c), want_r = oracle::recall(c);
      worst = std::max({worst, std::abs(pr.precision - want_p), std::abs(pr.recall - want_r),
                        std::abs(f_beta(pr.precision, pr.recall) - oracle::fmeasure(want_p, want_r)),
                        std::abs(e_measure(p, t) - oracle::emeasure(p.pred, p.gt, t))});
    }
    const auto rates = fp_fn_rates(p);
    const auto half = oracle::count(p.pred, p.gt, 0.5);
    worst = std::max({worst, std::abs(rates.mfp - half.fp / 64.0), std::abs(rates.mfn - half.fn / 64.0)});
  }
  std::string what;
  const double dataset = oracle::max_difference(evaluate(pairs), oracle::evaluate(pairs), &what);
  worst = std::max(worst, dataset);
  o.require(worst <= 1e-12, "max difference " + fmt("%.3e", worst) + (what.empty() ? "" : " (" + what + ")"));
  if (o.pass) o.detail = "200 pairs x 256 thresholds, max difference " + fmt("%.2e", worst);
  return o;
}

// ------------------------------------------------------------ criterion 4

Outcome shapes() {
  Outcome o;
  Rng rng(4004);
  ModelConfig cfg;
  Model<double> model(cfg);
  auto image = gen::tensor(rng, Shape{2, 3, cfg.input_size, cfg.input_size}, 0.0, 1.0);
  const auto feats = model.encoder()(image, Mode::train);
  for (int l = 1; l <= kLevels; ++l) {
    const auto c = model.ccm(l)(feats[static_cast<std::size_t>(l - 1)], Mode::train);
    const int s = cfg.level_size(l);
    o.require(c.shape() == Shape{2, cfg.cf, s, s}, "ccm level " + std::to_string(l) + " " + c.shape().str());
  }

  ParameterStore<double> store(41);
  Psm<double> psm(store, "psm", cfg.cf, {1, 2, 5}, cfg.attention_hidden());
  const auto f = gen::tensor(rng, Shape{2, cfg.cf, 10, 10});
  Psm<double>::Trace trace;
  const auto out = psm(f, Mode::train, &trace);
  o.require(out.shape() == f.shape(), "psm output " + out.shape().str());
  for (const auto* t : {&trace.scale, &trace.shift}) {
    o.require(t->shape() == Shape{2, cfg.cf}, "psm attention " + t->shape().str());
    for (double v : t->values()) o.require(v > 0.0 && v < 1.0, "attention value " + fmt("%.17g", v));
  }
  const int expected[] = {1, 2, 5};
  o.require(trace.pooled.size() == 3, "pyramid branch count");
  for (std::size_t i = 0; i < trace.pooled.size() && i < 3; ++i) {
    const int e = expected[i];
    o.require(trace.pooled[i].shape() == Shape{2, cfg.cf, e, e}, "pyramid branch " + trace.pooled[i].shape().str());
  }

  const auto fwd = model.forward(image, Mode::train);
  std::string sizes;
  for (int l = 1; l <= kLevels; ++l) {
    const int s = cfg.input_size >> l;
    const auto& m = fwd.masks[static_cast<std::size_t>(l - 1)];
    o.require(m.shape() == Shape{2, 1, s, s}, "supervision level " + std::to_string(l) + " " + m.shape().str());
    sizes += (l > 1 ? "/" : "") + std::to_string(m.shape().h());
  }
  if (o.pass) o.detail = "ccm cf=" + std::to_string(cfg.cf) + " x5, pyramid 1/2/5, supervision " + sizes;
  return o;
}

// ------------------------------------------------------- criteria 5, 6, 7

struct Run {
  MetricsReport report;
  std::vector<EpochLog> log;
  double seconds = 0.0;
  bool diverged = false;
};

constexpr int kSeeds = 3;
const std::vector<std::string> kTableVariants{"baseline", "el", "el_ccm", "el_ccm_cem", "full", "full_no_el"};

class ToyRuns {
 public:
  ToyRuns() {
    const auto samples = generate_dataset(500, 64, 5005);
    const std::size_t held = 100;
    train_.assign(samples.begin(), samples.end() - static_cast<std::ptrdiff_t>(held));
    val_.assign(samples.end() - static_cast<std::ptrdiff_t>(held), samples.end());
  }

  const Run& get(const std::string& variant, int seed) {
    const auto key = variant + "#" + std::to_string(seed);
    auto it = runs_.find(key);
    if (it != runs_.end()) return it->second;
    const RunConfig defaults;
    const auto v = make_variant(variant, defaults.model, defaults.loss);
    TrainConfig tc = defaults.train;
    tc.seed = static_cast<std::uint64_t>(seed);
    ModelConfig mc = v.model;
    mc.init_seed = static_cast<std::uint64_t>(seed);
    Model<float> model(mc);
    Run run;
    const auto t0 = Clock::now();
    try {
      run.log = train(model, v.loss, tc, train_, {}).log;
      run.report = evaluate_model(model, val_);
    } catch (const TrainingDiverged&) {
      run.diverged = true;
    }
    run.seconds = seconds_since(t0);
    std::cerr << "  " << variant << " seed " << seed << ": "
              << (run.diverged ? std::string("diverged")
                               : "mae " + fmt("%.5f", run.report.mae) + " mFP " + fmt("%.5f", run.report.mfp))
              << " (" << fmt("%.0f", run.seconds) << " s)\n";
    return runs_.emplace(key, std::move(run)).first->second;
  }

 private:
  std::vector<ToySample> train_, val_;
  std::map<std::string, Run> runs_;
};

// Trailing mean over `window` epochs.
std::vector<double> smoothed(const std::vector<EpochLog>& log, std::size_t window) {
  std::vector<double> out;
  for (std::size_t i = window; i <= log.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = i - window; k < i; ++k) acc += log[k].loss;
    out.push_back(acc / static_cast<double>(window));
  }
  return out;
}

Outcome toy_training(ToyRuns& runs) {
  Outcome o;
  std::string maes;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto& r = runs.get("full", seed);
    const auto tag = "seed " + std::to_string(seed);
    if (r.diverged) {
      o.require(false, tag + " diverged");
      continue;
    }
    o.require(r.report.mae < 0.15, tag + " val mae " + fmt("%.4f", r.report.mae));
    o.require(r.seconds < 1800.0, tag + " took " + fmt("%.0f", r.seconds) + " s");
    const auto sm = smoothed(r.log, 5);
    for (std::size_t i = 1; i < sm.size(); ++i) {
      o.require(sm[i] <= sm[i - 1], tag + " smoothed loss rises at epoch " + std::to_string(i + 5) + " (" +
                                        fmt("%.5f", sm[i - 1]) + " -> " + fmt("%.5f", sm[i]) + ")");
    }
    maes += (seed ? "/" : "") + fmt("%.4f", r.report.mae);
    maes += " (" + fmt("%.0f", r.seconds) + " s)";
  }
  if (o.pass) o.detail = "val mae " + maes + ", smoothed loss non-increasing";
  return o;
}

struct Means {
  double mae = 0.0, mfp = 0.0;
  bool complete = true;
};

Means means(ToyRuns& runs, const std::string& variant) {
  Means m;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto& r = runs.get(variant, seed);
    if (r.diverged) {
      m.complete = false;
      continue;
    }
    m.mae += r.report.mae / kSeeds;
    m.mfp += r.report.mfp / kSeeds;
  }
  return m;
}

Outcome el_ablation(ToyRuns& runs) {
  Outcome o;
  const auto with = means(runs, "full");
  const auto without = means(runs, "full_no_el");
  o.require(with.complete && without.complete, "a run diverged");
  const std::string numbers = "mFP " + fmt("%.5f", with.mfp) + " vs " + fmt("%.5f", without.mfp) + ", mae " +
                              fmt("%.5f", with.mae) + " vs " + fmt("%.5f", without.mae);
  o.require(with.mfp <= without.mfp, "mean mFP with EL is higher: " + numbers);
  o.require(with.mae <= without.mae + 0.01, "mean mae with EL worse by more than 0.01: " + numbers);
  if (o.pass) o.detail = numbers;
  return o;
}

Outcome module_ablation(ToyRuns& runs) {
  Outcome o;
  int wins = 0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto& ccm = runs.get("el_ccm", seed);
    const auto& base = runs.get("baseline", seed);
    if (!ccm.diverged && !base.diverged && ccm.report.mae < base.report.mae) ++wins;
  }
  o.require(wins >= 2, "+CCM beats baseline on " + std::to_string(wins) + "/3 seeds");

  std::string table;
  double best = INFINITY;
  std::string best_name;
  for (const auto& v : kTableVariants) {
    const auto m = means(runs, v);
    table += (table.empty() ? "" : " ") + v + "=" + fmt("%.5f", m.mae);
    if (m.complete && m.mae < best) {
      best = m.mae;
      best_name = v;
    }
  }
  const auto full = means(runs, "full");
  o.require(full.complete && full.mae <= best + 0.005,
            "full " + fmt("%.5f", full.mae) + " vs best " + best_name + " " + fmt("%.5f", best));
  const std::string detail = "+CCM wins " + std::to_string(wins) + "/3; " + table;
  o.detail = o.pass ? detail : o.detail + " [" + detail + "]";
  return o;
}

// ------------------------------------------------------------ criterion 8

Outcome mul_shrinkage() {
  Outcome o;
  const int cf = 8;
  const Shape shape{2, cf, 16, 16};
  std::map<std::string, double> mean_mag;
  const std::vector<std::pair<std::string, AblationSpec>> specs{
      {"Mul", *ablation_spec(DecoderMode::pipe_mm)},
      {"Plus", *ablation_spec(DecoderMode::pipe_pp)},
      {"Cat", *ablation_spec(DecoderMode::pipe_cc)},
  };
  for (std::uint64_t init = 0; init < 20; ++init) {
    Rng rng(mix_seed(8008, init));
    const auto f_l = relu(gen::tensor(rng, shape, -1.0, 1.0));
    const auto f_h = relu(gen::tensor(rng, shape, -1.0, 1.0));
    for (const auto& [name, spec] : specs) {
      ParameterStore<double> store(init);
      AblationLayer<double> layer(store, "layer", spec, cf);
      Tensor<double> aggregated;
      layer(f_l, f_h, Mode::train, &aggregated);
      double acc = 0.0;
      for (double v : aggregated.values()) acc += std::abs(v);
      mean_mag[name] += acc / static_cast<double>(aggregated.numel()) / 20.0;
    }
  }
  const std::string numbers = "Mul " + fmt("%.4f", mean_mag["Mul"]) + ", Plus " + fmt("%.4f", mean_mag["Plus"]) +
                              ", Cat " + fmt("%.4f", mean_mag["Cat"]);
  o.require(mean_mag["Mul"] < mean_mag["Plus"] && mean_mag["Mul"] < mean_mag["Cat"], numbers);
  if (o.pass) o.detail = "mean |activation| over 20 inits: " + numbers;
  return o;
}

// ------------------------------------------------------------ criterion 9

struct CliResult {
  int status = -1;
  std::string out;
};

CliResult cli(const std::string& args) {
  const std::string cmd = std::string(C4NET_CLI_PATH) + " " + args + " 2>/dev/null";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::vector<std::uint8_t> bytes_of(const fs::path& p) { return read_file(p); }

Outcome determinism_io() {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / ("c4net_accept_" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  const auto d = dir.string();

  // Netpbm round trips.
  const auto samples = generate_dataset(12, 32, 909);
  for (const auto& s : samples) {
    const auto ppm = encode_ppm(s.image);
    const auto pgm = encode_pgm(s.mask);
    o.require(encode_ppm(decode_netpbm(ppm)) == ppm, "ppm round trip " + s.id);
    o.require(encode_pgm(decode_netpbm(pgm)) == pgm, "pgm round trip " + s.id);
  }
  save_dataset(dir / "data", samples);
  const auto reloaded = load_dataset(dir / "data");
  save_dataset(dir / "data2", reloaded);
  for (const auto& s : samples) {
    o.require(bytes_of(dir / "data/images" / (s.id + ".ppm")) == bytes_of(dir / "data2/images" / (s.id + ".ppm")),
              "ppm file round trip " + s.id);
    o.require(bytes_of(dir / "data/masks" / (s.id + ".pgm")) == bytes_of(dir / "data2/masks" / (s.id + ".pgm")),
              "pgm file round trip " + s.id);
  }

  // In-process training determinism and checkpoint round trip.
  RunConfig rc;
  rc.model.encoder_channels = {4, 4, 8, 8, 8};
  rc.model.input_size = 32;
  rc.model.cf = 4;
  rc.model.attention_reduction = 2;
  rc.model.pyramid_sizes = {1, 2};
  rc.train.epochs = 2;
  rc.train.batch_size = 4;
  rc.train.seed = 17;
  rc.model.init_seed = 17;
  std::vector<std::uint8_t> snaps[2];
  std::string logs[2];
  for (int k = 0; k < 2; ++k) {
    Model<float> model(rc.model);
    std::ostringstream log;
    write_log_csv(log, train(model, rc.loss, rc.train, reloaded, {}).log);
    logs[k] = log.str();
    snaps[k] = encode_checkpoint(snapshot(model.parameters()));
    if (k == 0) {
      save_checkpoint(dir / "a.c4nt", model);
      Model<float> fresh(rc.model);
      load_checkpoint(dir / "a.c4nt", fresh);
      save_checkpoint(dir / "b.c4nt", fresh);
      o.require(bytes_of(dir / "a.c4nt") == bytes_of(dir / "b.c4nt"), "checkpoint round trip");
    }
  }
  o.require(snaps[0] == snaps[1], "trained weights differ between identical runs");
  o.require(logs[0] == logs[1], "training logs differ between identical runs");

  // CLI: reproducible outputs and exit codes.
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << format_config(rc);
  }
  for (const char* run : {"r1", "r2"}) {
    o.require(cli("train --config " + d + "/run.cfg --data " + d + "/data --out " + d + "/" + run + " --seed 3").status == 0,
              "cli train failed");
  }
  for (const char* file : {"model.c4nt", "train_log.csv", "val_report.csv"}) {
    o.require(fs::exists(dir / "r1" / file) && bytes_of(dir / "r1" / file) == bytes_of(dir / "r2" / file),
              std::string("cli train output differs: ") + file);
  }
  o.require(cli("eval --checkpoint " + d + "/r1/model.c4nt --data " + d + "/data --report " + d + "/e.csv --save-pred " +
                d + "/pred")
                    .status == 0,
            "cli eval failed");
  o.require(cli("metrics --pred " + d + "/pred --gt " + d + "/data/masks --out " + d + "/m.csv --curves " + d + "/c")
                    .status == 0,
            "cli metrics failed");
  o.require(cli("gen-data --n 3 --size 32 --seed 1 --out " + d + "/g").status == 0, "cli gen-data failed");
  o.require(cli("gradcheck --scope wiou --seed 0").status == 0, "cli gradcheck failed");
  o.require(cli("ablate --modes baseline --data " + d + "/data --out " + d + "/a.csv --seeds 1 --config " + d +
                "/run.cfg")
                    .status == 0,
            "cli ablate failed");

  const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
      {"train", {"--config", "--data", "--out", "--seed"}},
      {"eval", {"--checkpoint", "--data", "--report", "--config", "--save-pred"}},
      {"metrics", {"--pred", "--gt", "--out", "--curves"}},
      {"gradcheck", {"--scope", "--seed"}},
      {"ablate", {"--modes", "--data", "--out", "--seeds", "--config", "--seed"}},
      {"gen-data", {"--n", "--size", "--seed", "--out"}},
  };
  for (const auto& [name, flags] : commands) {
    const auto help = cli(name + " --help");
    o.require(help.status == 0, name + " --help exit " + std::to_string(help.status));
    for (const auto& f : flags) o.require(help.out.find(f) != std::string::npos, name + " --help lacks " + f);
    o.require(cli(name + " --no-such-flag").status != 0, name + " accepts an invalid flag");
  }
  const auto unknown = cli("gradcheck --scope no_such_unit --seed 0");
  o.require(unknown.status != 0 && unknown.out.empty(), "unknown gradcheck scope contract");
  o.require(cli("eval --checkpoint " + d + "/r1/train_log.csv --data " + d + "/data --report " + d + "/x.csv --config " +
                d + "/run.cfg")
                    .status != 0,
            "eval accepts a corrupt checkpoint");

  fs::remove_all(dir);
  if (o.pass) o.detail = "netpbm, checkpoint, training and CLI outputs reproducible; exit codes as documented";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  auto wanted = [&](int id) { return selected.empty() || selected.count(id); };

  ToyRuns runs;
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradient_suite},
      {2, loss_identities},
      {3, metric_oracle},
      {4, shapes},
      {5, [&] { return toy_training(runs); }},
      {6, [&] { return el_ablation(runs); }},
      {7, [&] { return module_ablation(runs); }},
      {8, mul_shrinkage},
      {9, determinism_io},
  };
  bool all = true;
  for (const auto& [id, check] : criteria) {
    if (!wanted(id)) continue;
    Outcome out;
    try {
      out = check();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    all = all && out.pass;
    std::cout << "criterion " << id << ": " << (out.pass ? "PASS" : "FAIL") << "  " << out.detail << std::endl;
  }
  return all ? 0 : 1;
}
