#pragma once

// Saliency evaluation: MAE, precision/recall, F-beta, E-measure, FP/FN
// rates and threshold sweeps over t_j = j/255, j = 0..255. A prediction
// pixel is positive at threshold t when pred > t.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace c4net {

inline constexpr int kThresholds = 256;
inline constexpr double kBetaSquared = 0.3;

inline double threshold_at(int j) { return static_cast<double>(j) / 255.0; }

struct MaskPair {
  std::string id;
  int height = 0;
  int width = 0;
  std::vector<double> pred;       // [0,1]
  std::vector<std::uint8_t> gt;   // {0,1}

  void validate() const;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
};

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

struct FpFnRates {
  double mfp = 0.0;
  double mfn = 0.0;
};

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct ImageMetrics {
  std::string id;
  double mae = 0.0;
  double mean_f = 0.0;  // mean of this image's F over the 256 thresholds
  double e_xi = 0.0;    // mean of this image's E over the 256 thresholds
  double mfp = 0.0;
  double mfn = 0.0;
};

struct MetricsReport {
  double mae = 0.0;
  double mean_f = 0.0;
  double e_xi = 0.0;
  double mfp = 0.0;
  double mfn = 0.0;
  std::array<PrPoint, kThresholds> pr_curve{};
  std::array<double, kThresholds> f_curve{};
  std::size_t count = 0;
  std::vector<ImageMetrics> images;
};

Confusion confusion(const MaskPair& pair, double threshold);
// Confusion counts at all 256 thresholds from one sort of the prediction.
std::array<Confusion, kThresholds> confusion_sweep(const MaskPair& pair);

PrecisionRecall precision_recall(const Confusion& c);
double f_beta(double precision, double recall, double beta_sq = kBetaSquared);
double e_measure(const Confusion& c);

double mae(const MaskPair& pair);
PrecisionRecall precision_recall(const MaskPair& pair, double threshold);
double e_measure(const MaskPair& pair, double threshold);
FpFnRates fp_fn_rates(const MaskPair& pair, double threshold = 0.5);

// Per-threshold dataset means.
std::array<PrPoint, kThresholds> pr_curve(const std::vector<MaskPair>& pairs);
std::array<double, kThresholds> f_curve(const std::vector<MaskPair>& pairs);
// Mean over thresholds of the per-threshold dataset-mean F.
double mean_f(const std::vector<MaskPair>& pairs);
// Mean over images of each image's threshold-averaged E.
double mean_e(const std::vector<MaskPair>& pairs);

MetricsReport evaluate(const std::vector<MaskPair>& pairs);

// CSV with header id,mae,mF,e_xi,mFP,mFN, one row per image and a final ALL row.
void write_report_csv(std::ostream& out, const MetricsReport& report);
void write_pr_curve_csv(std::ostream& out, const MetricsReport& report);
void write_f_curve_csv(std::ostream& out, const MetricsReport& report);

}  // namespace c4net
