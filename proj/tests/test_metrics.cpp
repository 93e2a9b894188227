#include <doctest.h>

#include <cmath>
#include <sstream>

#include "c4net/metrics.hpp"
#include "generators.hpp"
#include "metric_oracle.hpp"
#include "oracles.hpp"

using namespace c4net;

namespace {

MaskPair make_pair(std::vector<double> pred, std::vector<std::uint8_t> gt, int h, int w) {
  MaskPair p;
  p.id = "p";
  p.height = h;
  p.width = w;
  p.pred = std::move(pred);
  p.gt = std::move(gt);
  return p;
}

}  // namespace

TEST_CASE("per-image metrics match pixel loops") {
  Rng rng(70);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = gen::pair(rng, 8, 8);
    CHECK(std::abs(mae(p) - oracle::mae(p.pred, p.gt)) <= 1e-12);
    const auto sweep = confusion_sweep(p);
    for (int j = 0; j < kThresholds; ++j) {
      const double t = j / 255.0;
      const auto c = oracle::count(p.pred, p.gt, t);
      const auto& s = sweep[static_cast<std::size_t>(j)];
      CHECK(static_cast<double>(s.tp) == c.tp);
      CHECK(static_cast<double>(s.fp) == c.fp);
      CHECK(static_cast<double>(s.fn) == c.fn);
      CHECK(static_cast<double>(s.tn) == c.tn);
      const auto direct = confusion(p, t);
      CHECK(direct.tp == s.tp);
      CHECK(direct.fp == s.fp);
      const auto pr = precision_recall(p, t);
      CHECK(std::abs(pr.precision - oracle::precision(c)) <= 1e-12);
      CHECK(std::abs(pr.recall - oracle::recall(c)) <= 1e-12);
      CHECK(std::abs(f_beta(pr.precision, pr.recall) - oracle::fmeasure(oracle::precision(c), oracle::recall(c))) <= 1e-12);
      CHECK(std::abs(e_measure(p, t) - oracle::emeasure(p.pred, p.gt, t)) <= 1e-12);
    }
    const auto rates = fp_fn_rates(p);
    const auto half = oracle::count(p.pred, p.gt, 0.5);
    CHECK(std::abs(rates.mfp - half.fp / 64.0) <= 1e-12);
    CHECK(std::abs(rates.mfn - half.fn / 64.0) <= 1e-12);
  }
}

TEST_CASE("dataset metrics and curves match the reference") {
  Rng rng(71);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<MaskPair> pairs;
    const int n = uniform_int(rng, 1, 20);
    for (int i = 0; i < n; ++i) pairs.push_back(gen::pair(rng, uniform_int(rng, 1, 10), uniform_int(rng, 1, 10)));
    const auto rep = evaluate(pairs);
    std::string worst;
    CHECK_MESSAGE(oracle::max_difference(rep, oracle::evaluate(pairs), &worst) <= 1e-12, worst);
    CHECK(rep.count == pairs.size());
    CHECK(mean_f(pairs) == rep.mean_f);
    CHECK(mean_e(pairs) == rep.e_xi);
    CHECK(f_curve(pairs) == rep.f_curve);
  }
}

TEST_CASE("metric ranges and monotonicity") {
  Rng rng(72);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = gen::pair(rng, uniform_int(rng, 1, 12), uniform_int(rng, 1, 12));
    const auto rep = evaluate({p});
    for (double v : {rep.mae, rep.mean_f, rep.e_xi}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    std::size_t prev_pos = SIZE_MAX;
    double prev_recall = 2.0;
    for (int j = 0; j < kThresholds; ++j) {
      const double t = j / 255.0;
      const auto c = confusion(p, t);
      const auto rates = fp_fn_rates(p, t);
      CHECK(rates.mfp + rates.mfn <= 1.0);
      const auto pr = precision_recall(c);
      CHECK(pr.precision >= 0.0);
      CHECK(pr.precision <= 1.0);
      CHECK(pr.recall <= prev_recall);
      CHECK(c.tp + c.fp <= prev_pos);
      prev_recall = pr.recall;
      prev_pos = c.tp + c.fp;
    }
  }
}

TEST_CASE("metric examples") {
  // Perfect binary mask.
  std::vector<std::uint8_t> gt{1, 0, 0, 1, 1, 0};
  auto perfect = make_pair({1, 0, 0, 1, 1, 0}, gt, 2, 3);
  for (double t : {0.1, 0.5, 0.99}) {
    const auto pr = precision_recall(perfect, t);
    CHECK(pr.precision == 1.0);
    CHECK(pr.recall == 1.0);
    CHECK(e_measure(perfect, t) == doctest::Approx(1.0).epsilon(1e-12));
  }
  const auto rep = evaluate({perfect});
  for (int j = 1; j < 255; ++j) {
    CHECK(rep.pr_curve[static_cast<std::size_t>(j)].precision == 1.0);
    CHECK(rep.pr_curve[static_cast<std::size_t>(j)].recall == 1.0);
  }
  CHECK(rep.pr_curve[0].recall >= rep.pr_curve[255].recall);

  // Threshold 0 with strictly positive predictions.
  CHECK(precision_recall(make_pair({0.2, 0.3, 0.9, 0.01}, {1, 0, 1, 0}, 2, 2), 0.0).recall == 1.0);

  // Anti-aligned balanced mask.
  auto anti = make_pair({0, 1, 1, 0}, {1, 0, 0, 1}, 2, 2);
  CHECK(e_measure(anti, 0.5) == doctest::Approx(0.0).epsilon(1e-12));

  // Empty ground truth and empty prediction.
  auto empty = make_pair({0, 0, 0, 0}, {0, 0, 0, 0}, 2, 2);
  CHECK(e_measure(empty, 0.5) == 1.0);
  CHECK(precision_recall(empty, 0.5).precision == 1.0);
  CHECK(precision_recall(empty, 0.5).recall == 1.0);

  CHECK(f_beta(0.0, 0.0) == 0.0);
  CHECK(f_beta(1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(f_beta(0.5, 0.25) == doctest::Approx(1.3 * 0.125 / (0.15 + 0.25)).epsilon(1e-15));

  CHECK_THROWS(evaluate({}));
  CHECK_THROWS_AS(mae(make_pair({0.5}, {1, 0}, 1, 2)), ShapeError);
}

TEST_CASE("report csv layout") {
  auto a = make_pair({0.9, 0.1, 0.2, 0.7}, {1, 0, 0, 1}, 2, 2);
  a.id = "img_a";
  const auto rep = evaluate({a});
  std::ostringstream out;
  write_report_csv(out, rep);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "id,mae,mF,e_xi,mFP,mFN");
  std::getline(in, line);
  CHECK(line.rfind("img_a,0.175000,", 0) == 0);
  std::getline(in, line);
  CHECK(line.rfind("ALL,0.175000,", 0) == 0);

  std::ostringstream pr, f;
  write_pr_curve_csv(pr, rep);
  write_f_curve_csv(f, rep);
  std::istringstream pin(pr.str()), fin(f.str());
  int rows = -1;
  while (std::getline(pin, line)) ++rows;
  CHECK(rows == 256);
  std::getline(fin, line);
  CHECK(line == "threshold,f_beta");
  std::getline(fin, line);
  CHECK(line.rfind("0.000000,", 0) == 0);
  std::getline(fin, line);
  CHECK(line.rfind("0.003922,", 0) == 0);
}
