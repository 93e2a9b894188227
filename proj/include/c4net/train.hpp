#pragma once

// Training loop, SGD with momentum, evaluation and the ablation runner.

#include <array>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "c4net/dataset.hpp"
#include "c4net/losses.hpp"
#include "c4net/metrics.hpp"
#include "c4net/model.hpp"

namespace c4net {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double lr_head = 0.05;
  double lr_encoder = 0.005;
  double warmup_fraction = 0.1;
  bool crop = true;
  bool flip = true;
  double min_crop = 0.75;
  std::uint64_t seed = 0;
  // Share of a flat dataset directory held out for validation (tail of the
  // sorted stems). Ignored when the directory has train/ and val/ parts.
  double val_fraction = 0.2;

  void validate() const;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Linear warmup from 0 over the first warmup_fraction of the steps, then
// linear decay to 0 at total_steps.
double scheduled_lr(double max_lr, long step, long total_steps, double warmup_fraction);

// v <- momentum v + g + weight_decay w ; w <- w - lr v
template <typename T>
void sgd_update(std::span<T> w, std::span<const T> g, std::span<T> v, double lr, double momentum,
                double weight_decay);

template <typename T>
class Sgd {
 public:
  Sgd(ParameterStore<T>& store, const TrainConfig& cfg, long total_steps);

  // Applies one update with the current schedule position and advances it.
  void step();
  double lr(LrGroup group) const;
  long step_index() const { return step_; }

 private:
  ParameterStore<T>& store_;
  TrainConfig cfg_;
  long total_;
  long step_ = 0;
  std::vector<std::vector<T>> velocity_;
};

// Input batch plus ground truth for each supervision level: level 1 at the
// input resolution, deeper levels at their native resolution.
struct Batch {
  Tensor<float> images;
  std::array<Tensor<float>, kLevels> targets;
};

Batch make_batch(const std::vector<ToySample>& samples, const ModelConfig& cfg);

// Masks compared against the targets of make_batch: level 1 upsampled to
// the input resolution, the rest unchanged.
std::vector<Tensor<float>> supervision_maps(const ModelOutput<float>& out, int input_size);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double val_mae = 0.0;  // NaN when there is no validation set
  double lr_encoder = 0.0;
  double lr_head = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
};

// Throws TrainingDiverged when the loss stops being finite.
TrainResult train(Model<float>& model, const LossConfig& loss_cfg, const TrainConfig& cfg,
                  const std::vector<ToySample>& train_set, const std::vector<ToySample>& val_set,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

void write_log_csv(std::ostream& out, const std::vector<EpochLog>& log);

// Eval-mode predictions at the input resolution.
std::vector<MaskPair> predict_masks(Model<float>& model, const std::vector<ToySample>& samples, int batch_size = 16);
MetricsReport evaluate_model(Model<float>& model, const std::vector<ToySample>& samples);

// Named model/loss configurations for ablations: baseline, el, el_ccm,
// el_ccm_cem, full, full_no_el, and the decoder modes PipePP ... BranchMP.
struct Variant {
  std::string name;
  ModelConfig model;
  LossConfig loss;
};

Variant make_variant(const std::string& name, const ModelConfig& base_model, const LossConfig& base_loss);
const std::vector<std::string>& variant_names();

struct SeedRun {
  std::uint64_t seed = 0;
  bool diverged = false;
  MetricsReport report;
};

struct AblationRow {
  std::string variant;
  std::vector<SeedRun> runs;
  bool unstable = false;  // at least one seed diverged
  // Means over the seeds that finished.
  double mae = 0.0, mean_f = 0.0, e_xi = 0.0, mfp = 0.0, mfn = 0.0;
};

// Trains the variant once per seed (seed = base_seed + k, used for both the
// weight init and the data order) and evaluates on val_set.
AblationRow run_variant(const Variant& variant, const TrainConfig& cfg, const std::vector<ToySample>& train_set,
                        const std::vector<ToySample>& val_set, int seeds);

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

}  // namespace c4net
