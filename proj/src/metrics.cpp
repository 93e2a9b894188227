#include "c4net/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "c4net/errors.hpp"

namespace c4net {

void MaskPair::validate() const {
  const auto n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  if (height <= 0 || width <= 0 || pred.size() != n || gt.size() != n) {
    throw ShapeError("mask pair '" + id + "': prediction and ground truth sizes differ");
  }
}

Confusion confusion(const MaskPair& pair, double threshold) {
  pair.validate();
  Confusion c;
  for (std::size_t i = 0; i < pair.pred.size(); ++i) {
    const bool p = pair.pred[i] > threshold;
    const bool g = pair.gt[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

std::array<Confusion, kThresholds> confusion_sweep(const MaskPair& pair) {
  pair.validate();
  std::vector<double> pos;
  std::vector<double> neg;
  for (std::size_t i = 0; i < pair.pred.size(); ++i) (pair.gt[i] ? pos : neg).push_back(pair.pred[i]);
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::array<Confusion, kThresholds> out{};
  for (int j = 0; j < kThresholds; ++j) {
    const double t = threshold_at(j);
    const auto above_pos = static_cast<std::size_t>(pos.end() - std::upper_bound(pos.begin(), pos.end(), t));
    const auto above_neg = static_cast<std::size_t>(neg.end() - std::upper_bound(neg.begin(), neg.end(), t));
    auto& c = out[static_cast<std::size_t>(j)];
    c.tp = above_pos;
    c.fn = pos.size() - above_pos;
    c.fp = above_neg;
    c.tn = neg.size() - above_neg;
  }
  return out;
}

PrecisionRecall precision_recall(const Confusion& c) {
  PrecisionRecall pr;
  pr.precision = (c.tp + c.fp) == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  pr.recall = (c.tp + c.fn) == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return pr;
}

double f_beta(double precision, double recall, double beta_sq) {
  const double den = beta_sq * precision + recall;
  if (den <= 0.0) return 0.0;
  return (1.0 + beta_sq) * precision * recall / den;
}

// Enhanced alignment for binary maps. Only four (B, G) pixel classes exist,
// so the pixel mean reduces to a count-weighted sum.
double e_measure(const Confusion& c) {
  const double total = static_cast<double>(c.total());
  const double mean_b = static_cast<double>(c.tp + c.fp) / total;
  const double mean_g = static_cast<double>(c.tp + c.fn) / total;
  if (c.tp + c.fn == 0) return 1.0 - mean_b;
  if (c.fp + c.tn == 0) return mean_b;
  auto enhanced = [&](double b, double g) {
    const double pb = b - mean_b;
    const double pg = g - mean_g;
    const double xi = 2.0 * pb * pg / (pb * pb + pg * pg + 1e-12);
    return (xi + 1.0) * (xi + 1.0) / 4.0;
  };
  const double sum = static_cast<double>(c.tp) * enhanced(1, 1) + static_cast<double>(c.fp) * enhanced(1, 0) +
                     static_cast<double>(c.fn) * enhanced(0, 1) + static_cast<double>(c.tn) * enhanced(0, 0);
  return sum / total;
}

double mae(const MaskPair& pair) {
  pair.validate();
  double acc = 0.0;
  for (std::size_t i = 0; i < pair.pred.size(); ++i) acc += std::abs(pair.pred[i] - static_cast<double>(pair.gt[i]));
  return acc / static_cast<double>(pair.pred.size());
}

PrecisionRecall precision_recall(const MaskPair& pair, double threshold) {
  return precision_recall(confusion(pair, threshold));
}

double e_measure(const MaskPair& pair, double threshold) { return e_measure(confusion(pair, threshold)); }

FpFnRates fp_fn_rates(const MaskPair& pair, double threshold) {
  const Confusion c = confusion(pair, threshold);
  const double total = static_cast<double>(c.total());
  return {static_cast<double>(c.fp) / total, static_cast<double>(c.fn) / total};
}

namespace {

void require_nonempty(const std::vector<MaskPair>& pairs) {
  if (pairs.empty()) throw ContractError("metrics need at least one mask pair");
}

}  // namespace

std::array<PrPoint, kThresholds> pr_curve(const std::vector<MaskPair>& pairs) {
  return evaluate(pairs).pr_curve;
}

std::array<double, kThresholds> f_curve(const std::vector<MaskPair>& pairs) { return evaluate(pairs).f_curve; }

double mean_f(const std::vector<MaskPair>& pairs) { return evaluate(pairs).mean_f; }

double mean_e(const std::vector<MaskPair>& pairs) { return evaluate(pairs).e_xi; }

MetricsReport evaluate(const std::vector<MaskPair>& pairs) {
  require_nonempty(pairs);
  MetricsReport rep;
  rep.count = pairs.size();
  std::array<double, kThresholds> precision_sum{};
  std::array<double, kThresholds> recall_sum{};
  std::array<double, kThresholds> f_sum{};
  for (const auto& pair : pairs) {
    const auto sweep = confusion_sweep(pair);
    ImageMetrics im;
    im.id = pair.id;
    im.mae = mae(pair);
    double f_acc = 0.0;
    double e_acc = 0.0;
    for (std::size_t j = 0; j < kThresholds; ++j) {
      const auto pr = precision_recall(sweep[j]);
      const double f = f_beta(pr.precision, pr.recall);
      precision_sum[j] += pr.precision;
      recall_sum[j] += pr.recall;
      f_sum[j] += f;
      f_acc += f;
      e_acc += e_measure(sweep[j]);
    }
    im.mean_f = f_acc / kThresholds;
    im.e_xi = e_acc / kThresholds;
    const auto rates = fp_fn_rates(pair);
    im.mfp = rates.mfp;
    im.mfn = rates.mfn;
    rep.images.push_back(im);
  }
  const double n = static_cast<double>(pairs.size());
  for (const auto& im : rep.images) {
    rep.mae += im.mae;
    rep.e_xi += im.e_xi;
    rep.mfp += im.mfp;
    rep.mfn += im.mfn;
  }
  rep.mae /= n;
  rep.e_xi /= n;
  rep.mfp /= n;
  rep.mfn /= n;
  double f_mean = 0.0;
  for (std::size_t j = 0; j < kThresholds; ++j) {
    rep.pr_curve[j] = {threshold_at(static_cast<int>(j)), precision_sum[j] / n, recall_sum[j] / n};
    rep.f_curve[j] = f_sum[j] / n;
    f_mean += rep.f_curve[j];
  }
  rep.mean_f = f_mean / kThresholds;
  return rep;
}

namespace {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void write_report_csv(std::ostream& out, const MetricsReport& report) {
  out << "id,mae,mF,e_xi,mFP,mFN\n";
  for (const auto& im : report.images) {
    out << im.id << ',' << fmt6(im.mae) << ',' << fmt6(im.mean_f) << ',' << fmt6(im.e_xi) << ',' << fmt6(im.mfp) << ','
        << fmt6(im.mfn) << '\n';
  }
  out << "ALL," << fmt6(report.mae) << ',' << fmt6(report.mean_f) << ',' << fmt6(report.e_xi) << ','
      << fmt6(report.mfp) << ',' << fmt6(report.mfn) << '\n';
}

void write_pr_curve_csv(std::ostream& out, const MetricsReport& report) {
  out << "threshold,precision,recall\n";
  for (const auto& p : report.pr_curve) out << fmt6(p.threshold) << ',' << fmt6(p.precision) << ',' << fmt6(p.recall) << '\n';
}

void write_f_curve_csv(std::ostream& out, const MetricsReport& report) {
  out << "threshold,f_beta\n";
  for (std::size_t j = 0; j < kThresholds; ++j) {
    out << fmt6(threshold_at(static_cast<int>(j))) << ',' << fmt6(report.f_curve[j]) << '\n';
  }
}

}  // namespace c4net
