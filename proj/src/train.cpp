#include "c4net/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "c4net/errors.hpp"
#include "c4net/layers.hpp"

namespace c4net {

void TrainConfig::validate() const {
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ContractError("weight_decay must be >= 0");
  if (!(lr_head > 0.0) || !(lr_encoder > 0.0)) throw ContractError("learning rates must be > 0");
  if (std::abs(lr_encoder / lr_head - 0.1) > 1e-9) throw ContractError("lr_encoder must be a tenth of lr_head");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ContractError("warmup_fraction must be in [0, 1)");
  if (!(min_crop > 0.0 && min_crop <= 1.0)) throw ContractError("min_crop must be in (0, 1]");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ContractError("val_fraction must be in [0, 1)");
}

double scheduled_lr(double max_lr, long step, long total_steps, double warmup_fraction) {
  if (total_steps <= 0) return 0.0;
  step = std::clamp(step, 0L, total_steps);
  const long warmup = std::lround(warmup_fraction * static_cast<double>(total_steps));
  if (step < warmup) return max_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (warmup >= total_steps) return max_lr;
  return max_lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup);
}

template <typename T>
void sgd_update(std::span<T> w, std::span<const T> g, std::span<T> v, double lr, double momentum,
                double weight_decay) {
  if (w.size() != v.size() || (!g.empty() && g.size() != w.size())) throw ShapeError("sgd_update: size mismatch");
  const T m = static_cast<T>(momentum);
  const T wd = static_cast<T>(weight_decay);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const T gi = g.empty() ? T(0) : g[i];
    v[i] = m * v[i] + gi + wd * w[i];
    w[i] -= rate * v[i];
  }
}

template <typename T>
Sgd<T>::Sgd(ParameterStore<T>& store, const TrainConfig& cfg, long total_steps)
    : store_(store), cfg_(cfg), total_(total_steps) {
  for (const auto& p : store_.entries()) velocity_.emplace_back(p.trainable ? p.tensor.numel() : 0, T(0));
}

template <typename T>
double Sgd<T>::lr(LrGroup group) const {
  const double max_lr = group == LrGroup::encoder ? cfg_.lr_encoder : cfg_.lr_head;
  return scheduled_lr(max_lr, step_, total_, cfg_.warmup_fraction);
}

template <typename T>
void Sgd<T>::step() {
  std::size_t k = 0;
  for (auto& p : store_.entries()) {
    auto& v = velocity_[k++];
    if (!p.trainable) continue;
    sgd_update<T>(p.tensor.data(), p.tensor.grad(), v, lr(p.group), cfg_.momentum, cfg_.weight_decay);
  }
  ++step_;
}

namespace {

void copy_image(const Image& img, std::vector<float>& dst, std::size_t offset) {
  std::copy(img.data.begin(), img.data.end(), dst.begin() + static_cast<std::ptrdiff_t>(offset));
}

}  // namespace

Batch make_batch(const std::vector<ToySample>& samples, const ModelConfig& cfg) {
  if (samples.empty()) throw ContractError("make_batch: empty batch");
  const int n = static_cast<int>(samples.size());
  const int s = cfg.input_size;
  for (const auto& smp : samples) {
    if (smp.image.channels != 3 || smp.image.height != s || smp.image.width != s) {
      throw ShapeError("sample " + smp.id + " is not a 3x" + std::to_string(s) + "x" + std::to_string(s) + " image");
    }
  }
  Batch b;
  std::vector<float> img(static_cast<std::size_t>(n) * 3 * s * s);
  for (int i = 0; i < n; ++i) copy_image(samples[static_cast<std::size_t>(i)].image, img, static_cast<std::size_t>(i) * 3 * s * s);
  b.images = Tensor<float>(Shape{n, 3, s, s}, std::move(img));
  for (int l = 1; l <= kLevels; ++l) {
    const int r = l == 1 ? s : cfg.level_size(l);
    std::vector<float> gt(static_cast<std::size_t>(n) * r * r);
    for (int i = 0; i < n; ++i) {
      const Image& m = samples[static_cast<std::size_t>(i)].mask;
      copy_image(r == s ? m : downsample_mask(m, r), gt, static_cast<std::size_t>(i) * r * r);
    }
    b.targets[static_cast<std::size_t>(l - 1)] = Tensor<float>(Shape{n, 1, r, r}, std::move(gt));
  }
  return b;
}

std::vector<Tensor<float>> supervision_maps(const ModelOutput<float>& out, int input_size) {
  std::vector<Tensor<float>> maps(out.masks.begin(), out.masks.end());
  maps[0] = upsample_to(maps[0], input_size, input_size);
  return maps;
}

TrainResult train(Model<float>& model, const LossConfig& loss_cfg, const TrainConfig& cfg,
                  const std::vector<ToySample>& train_set, const std::vector<ToySample>& val_set,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  loss_cfg.validate();
  if (train_set.empty()) throw ContractError("train: empty training set");
  const ModelConfig& mcfg = model.config();
  const long n = static_cast<long>(train_set.size());
  const long batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  Sgd<float> opt(model.parameters(), cfg, batches_per_epoch * cfg.epochs);
  Rng rng(mix_seed(cfg.seed, 0x7472));
  const AugmentOptions aug{cfg.crop, cfg.flip, cfg.min_crop};

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(i) - 1))]);
    }
    double loss_sum = 0.0;
    for (long b = 0; b < batches_per_epoch; ++b) {
      std::vector<ToySample> chunk;
      for (long k = b * cfg.batch_size; k < std::min(n, (b + 1) * cfg.batch_size); ++k) {
        chunk.push_back(augment(train_set[order[static_cast<std::size_t>(k)]], rng, aug));
      }
      const Batch batch = make_batch(chunk, mcfg);
      const auto out = model.forward(batch.images, Mode::train);
      const auto terms = total_loss(supervision_maps(out, mcfg.input_size),
                                    std::vector<Tensor<float>>(batch.targets.begin(), batch.targets.end()), loss_cfg);
      const double value = terms.total.item();
      if (!std::isfinite(value)) {
        throw TrainingDiverged("loss became " + std::to_string(value) + " at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(b + 1) + " (step " + std::to_string(opt.step_index()) +
                               ", lr_head " + std::to_string(opt.lr(LrGroup::head)) + ")");
      }
      backward(terms.total);
      opt.step();
      model.parameters().zero_grad();
      loss_sum += value * static_cast<double>(chunk.size());
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = loss_sum / static_cast<double>(n);
    entry.val_mae = val_set.empty() ? std::numeric_limits<double>::quiet_NaN() : evaluate_model(model, val_set).mae;
    entry.lr_encoder = opt.lr(LrGroup::encoder);
    entry.lr_head = opt.lr(LrGroup::head);
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

void write_log_csv(std::ostream& out, const std::vector<EpochLog>& log) {
  out << "epoch,loss,val_mae,lr_encoder,lr_head\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << fmt(e.loss, "%.8f") << ',' << fmt(e.val_mae) << ',' << fmt(e.lr_encoder, "%.8f") << ','
        << fmt(e.lr_head, "%.8f") << '\n';
  }
}

std::vector<MaskPair> predict_masks(Model<float>& model, const std::vector<ToySample>& samples, int batch_size) {
  std::vector<MaskPair> pairs;
  const int s = model.config().input_size;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<ToySample> chunk(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                 samples.begin() + static_cast<std::ptrdiff_t>(stop));
    const Batch batch = make_batch(chunk, model.config());
    const Tensor<float> pred = model.predict(batch.images, Mode::eval);
    const auto values = pred.data();
    const std::size_t px = static_cast<std::size_t>(s) * s;
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      MaskPair p;
      p.id = chunk[i].id;
      p.height = s;
      p.width = s;
      p.pred.assign(values.begin() + static_cast<std::ptrdiff_t>(i * px),
                    values.begin() + static_cast<std::ptrdiff_t>((i + 1) * px));
      p.gt.resize(px);
      for (std::size_t k = 0; k < px; ++k) p.gt[k] = chunk[i].mask.data[k] >= 0.5f ? 1 : 0;
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

MetricsReport evaluate_model(Model<float>& model, const std::vector<ToySample>& samples) {
  return evaluate(predict_masks(model, samples));
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names{
      "baseline", "el",      "el_ccm",   "el_ccm_cem", "full",     "full_no_el", "PipePP",  "PipeCC",
      "PipeCP",   "PipeMM",  "BranchPP", "BranchMM",   "BranchCC", "BranchMP"};
  return names;
}

Variant make_variant(const std::string& name, const ModelConfig& base_model, const LossConfig& base_loss) {
  Variant v{name, base_model, base_loss};
  v.model.decoder_mode = DecoderMode::c4net;
  auto modules = [&](bool ccm, bool cem, bool psm, bool el) {
    v.model.use_ccm = ccm;
    v.model.use_cem = cem;
    v.model.use_psm = psm;
    v.loss.use_el = el;
  };
  if (name == "baseline") modules(false, false, false, false);
  else if (name == "el") modules(false, false, false, true);
  else if (name == "el_ccm") modules(true, false, false, true);
  else if (name == "el_ccm_cem") modules(true, true, false, true);
  else if (name == "full") modules(true, true, true, true);
  else if (name == "full_no_el") modules(true, true, true, false);
  else {
    // Throws ContractError for unknown names.
    v.model.decoder_mode = parse_decoder_mode(name);
    if (v.model.decoder_mode == DecoderMode::c4net) modules(true, true, true, true);
  }
  v.model.validate();
  return v;
}

AblationRow run_variant(const Variant& variant, const TrainConfig& cfg, const std::vector<ToySample>& train_set,
                        const std::vector<ToySample>& val_set, int seeds) {
  if (seeds < 1) throw ContractError("run_variant: seeds must be >= 1");
  if (val_set.empty()) throw ContractError("run_variant: empty validation set");
  AblationRow row;
  row.variant = variant.name;
  int finished = 0;
  for (int k = 0; k < seeds; ++k) {
    SeedRun run;
    run.seed = cfg.seed + static_cast<std::uint64_t>(k);
    TrainConfig tc = cfg;
    tc.seed = run.seed;
    ModelConfig mc = variant.model;
    mc.init_seed = run.seed;
    Model<float> model(mc);
    try {
      train(model, variant.loss, tc, train_set, {});
      run.report = evaluate_model(model, val_set);
      if (!std::isfinite(run.report.mae)) throw TrainingDiverged("non-finite predictions");
      ++finished;
      row.mae += run.report.mae;
      row.mean_f += run.report.mean_f;
      row.e_xi += run.report.e_xi;
      row.mfp += run.report.mfp;
      row.mfn += run.report.mfn;
    } catch (const TrainingDiverged&) {
      run.diverged = true;
      row.unstable = true;
    }
    row.runs.push_back(std::move(run));
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (double* m : {&row.mae, &row.mean_f, &row.e_xi, &row.mfp, &row.mfn}) *m = finished ? *m / finished : nan;
  return row;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "variant,seeds,status,mae,mF,e_xi,mFP,mFN\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << r.runs.size() << ',' << (r.unstable ? "unstable" : "ok") << ',' << fmt(r.mae) << ','
        << fmt(r.mean_f) << ',' << fmt(r.e_xi) << ',' << fmt(r.mfp) << ',' << fmt(r.mfn) << '\n';
  }
}

template void sgd_update<float>(std::span<float>, std::span<const float>, std::span<float>, double, double, double);
template void sgd_update<double>(std::span<double>, std::span<const double>, std::span<double>, double, double,
                                 double);
template class Sgd<float>;
template class Sgd<double>;

}  // namespace c4net
