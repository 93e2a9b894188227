#include <doctest.h>

#include <cmath>

#include "c4net/losses.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace c4net;

namespace {

Tensor<double> binary(Rng& rng, const Shape& shape, double p) {
  Tensor<double> t(shape, 0.0);
  for (auto& v : t.values()) v = bernoulli(rng, p) ? 1.0 : 0.0;
  return t;
}

// Per-image slices of an (N,1,H,W) tensor.
std::vector<double> image(const Tensor<double>& t, int n) {
  const auto plane = static_cast<std::size_t>(t.shape().h() * t.shape().w());
  const auto begin = t.values().begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(n));
  return {begin, begin + static_cast<std::ptrdiff_t>(plane)};
}

LossConfig config(int k, double lambda) {
  LossConfig cfg;
  cfg.window_k = k;
  cfg.lambda_tilde = lambda;
  return cfg;
}

}  // namespace

TEST_CASE("loss config") {
  LossConfig cfg;
  for (std::size_t i = 0; i < kLevels; ++i) CHECK(cfg.level_weights[i] == std::ldexp(1.0, -static_cast<int>(i)));
  CHECK(cfg.eps > 0.0);
  CHECK(cfg.eps <= 1e-3);
  CHECK_NOTHROW(cfg.validate());
  cfg.eps = 0.01;
  CHECK_THROWS(cfg.validate());
  cfg = LossConfig{};
  cfg.window_k = 4;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("weight map examples") {
  const auto cfg = config(3, 5.0);
  auto w0 = weight_map(Tensor<double>(Shape{1, 1, 6, 6}, 0.0), cfg);
  for (double v : w0.values()) CHECK(v == 1.0);
  auto w1 = weight_map(Tensor<double>(Shape{1, 1, 6, 6}, 1.0), cfg);
  for (int y = 1; y < 5; ++y)
    for (int x = 1; x < 5; ++x) CHECK(w1.at(0, 0, y, x) == 1.0);

  // Half plane, columns >= 3 set. On row 2 the boundary pixels see window
  // sums of 3 (column 2) and 6 (column 3).
  Tensor<double> half(Shape{1, 1, 6, 6}, 0.0);
  for (int y = 0; y < 6; ++y)
    for (int x = 3; x < 6; ++x) half.at(0, 0, y, x) = 1.0;
  auto w = weight_map(half, cfg);
  CHECK(w.at(0, 0, 2, 2) == doctest::Approx(1 + 5.0 * 3 / 9).epsilon(1e-15));
  CHECK(w.at(0, 0, 2, 3) == doctest::Approx(1 + 5.0 * (1 - 6.0 / 9)).epsilon(1e-15));
  const auto want = oracle::weight_map(image(half, 0), 6, 6, 3, 5.0);
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(w.values()[i] == doctest::Approx(want[i]).epsilon(1e-14));

  CHECK_THROWS_AS(weight_map(half, config(4, 5.0)), ContractError);
}

TEST_CASE("weight map properties") {
  Rng rng(60);
  for (int trial = 0; trial < 40; ++trial) {
    const int k = 2 * uniform_int(rng, 0, 4) + 1;
    const double lambda = uniform(rng, 0, 8);
    const int h = uniform_int(rng, 3, 12);
    const int w = uniform_int(rng, 3, 12);
    auto gt = binary(rng, Shape{2, 1, h, w}, uniform01(rng));
    auto om = weight_map(gt, config(k, lambda));
    CHECK_FALSE(om.requires_grad());
    for (int n = 0; n < 2; ++n) {
      const auto g = image(gt, n);
      const auto want = oracle::weight_map(g, h, w, k, lambda);
      const auto got = image(om, n);
      double best = -1;
      int by = 0, bx = 0;
      for (int i = 0; i < h * w; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        CHECK(std::abs(got[ui] - want[ui]) <= 1e-12);
        CHECK(got[ui] >= 1.0);
        CHECK(got[ui] <= 1.0 + lambda + 1e-12);
        if (got[ui] > best) {
          best = got[ui];
          by = i / w;
          bx = i % w;
        }
      }
      // Boundary pixel: a 4-neighbour with a different label. The window
      // mean is zero padded, so outside the image counts as background.
      auto label = [&](int y, int x) {
        return (y < 0 || y >= h || x < 0 || x >= w) ? 0.0 : g[static_cast<std::size_t>(y * w + x)];
      };
      bool has_boundary = false;
      bool near = false;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double v = label(y, x);
          const bool edge = label(y, x + 1) != v || label(y + 1, x) != v || label(y, x - 1) != v || label(y - 1, x) != v;
          if (!edge) continue;
          has_boundary = true;
          if (std::abs(y - by) <= k / 2 && std::abs(x - bx) <= k / 2) near = true;
        }
      // k = 1 gives a constant map with no meaningful argmax.
      if (has_boundary && lambda > 0 && k > 1) CHECK(near);
    }
  }
}

TEST_CASE("wbce examples") {
  const LossConfig cfg;
  Rng rng(61);
  auto gt = binary(rng, Shape{2, 1, 5, 5}, 0.4);
  auto om = weight_map(gt, cfg);
  CHECK(wbce(gt, gt, om, cfg).item() <= -std::log(1 - cfg.eps) + 1e-15);

  Tensor<double> one(Shape{1, 1, 1, 1}, 1.0), half(Shape{1, 1, 1, 1}, 0.5);
  CHECK(wbce(half, one, one, cfg).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  auto s = gen::tensor(rng, gt.shape(), 0.05, 0.95);
  const double base = wbce(s, gt, Tensor<double>(gt.shape(), 1.0), cfg).item();
  CHECK(wbce(s, gt, Tensor<double>(gt.shape(), 3.7), cfg).item() == doctest::Approx(base).epsilon(1e-14));
  CHECK_THROWS_AS(wbce(s, gen::tensor(rng, Shape{2, 1, 4, 5}), om, cfg), ShapeError);
}

TEST_CASE("wiou examples") {
  Rng rng(62);
  auto gt = binary(rng, Shape{1, 1, 6, 6}, 0.5);
  auto om = weight_map(gt, LossConfig{});
  CHECK(wiou(gt, gt, om).item() == 0.0);

  Tensor<double> ones(Shape{1, 1, 3, 3}, 1.0), halves(Shape{1, 1, 3, 3}, 0.5), zeros(Shape{1, 1, 3, 3}, 0.0);
  CHECK(wiou(halves, ones, ones).item() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(wiou(zeros, ones, ones).item() == 1.0);
  CHECK(wiou(zeros, zeros, ones).item() == 0.0);
}

TEST_CASE("wel examples") {
  LossConfig cfg;
  Tensor<double> gt(Shape{1, 1, 2, 2}, std::vector<double>{1, 0, 0, 0});
  Tensor<double> s(Shape{1, 1, 2, 2}, std::vector<double>{0.8, 0.4, 0.2, 0.0});
  Tensor<double> ones(Shape{1, 1, 2, 2}, 1.0);
  CHECK(std::abs(wel(s, gt, ones, cfg).item() - 3.0 / 7.0) <= 1e-12);

  Rng rng(63);
  auto g = binary(rng, Shape{1, 1, 6, 6}, 0.5);
  g.at(0, 0, 0, 0) = 1.0;
  CHECK(wel(g, g, weight_map(g, cfg), cfg).item() == 0.0);

  Tensor<double> empty(Shape{1, 1, 6, 6}, 0.0);
  auto pos = gen::tensor(rng, empty.shape(), 0.05, 0.95);
  CHECK(wel(pos, empty, weight_map(empty, cfg), cfg).item() == 1.0);
  CHECK(wel(empty, g, weight_map(g, cfg), cfg).item() == 0.0);
}

TEST_CASE("losses match the direct formulas") {
  Rng rng(64);
  for (int trial = 0; trial < 50; ++trial) {
    LossConfig cfg = config(2 * uniform_int(rng, 0, 3) + 1, uniform(rng, 0, 6));
    cfg.gamma = uniform(rng, 0.2, 3);
    const int n = uniform_int(rng, 1, 3);
    const int h = uniform_int(rng, 2, 9);
    const int w = uniform_int(rng, 2, 9);
    auto gt = binary(rng, Shape{n, 1, h, w}, uniform01(rng));
    auto s = gen::tensor(rng, gt.shape(), 0.0, 1.0);
    auto om = weight_map(gt, cfg);
    double e_bce = 0, e_iou = 0, e_el = 0;
    for (int i = 0; i < n; ++i) {
      const auto si = image(s, i), gi = image(gt, i);
      const auto oi = oracle::weight_map(gi, h, w, cfg.window_k, cfg.lambda_tilde);
      e_bce += oracle::wbce(si, gi, oi, cfg.eps) / n;
      e_iou += oracle::wiou(si, gi, oi) / n;
      e_el += oracle::wel(si, gi, oi, cfg.gamma) / n;
    }
    const double bce = wbce(s, gt, om, cfg).item();
    const double iou = wiou(s, gt, om).item();
    const double el = wel(s, gt, om, cfg).item();
    CHECK(std::abs(bce - e_bce) <= 1e-12);
    CHECK(std::abs(iou - e_iou) <= 1e-12);
    CHECK(std::abs(el - e_el) <= 1e-12);
    CHECK(bce >= 0.0);
    CHECK(iou >= 0.0);
    CHECK(iou <= 1.0);
    CHECK(el >= 0.0);
    CHECK(el <= 1.0);

    // Uniform rescaling of the weights leaves every loss unchanged.
    auto scaled = scale(om, uniform(rng, 0.1, 10));
    CHECK(wbce(s, gt, scaled, cfg).item() == doctest::Approx(bce).epsilon(1e-12));
    CHECK(wiou(s, gt, scaled).item() == doctest::Approx(iou).epsilon(1e-12));
    CHECK(wel(s, gt, scaled, cfg).item() == doctest::Approx(el).epsilon(1e-12));
  }
}

TEST_CASE("wel is monotone in the prediction") {
  Rng rng(65);
  const LossConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    auto gt = binary(rng, Shape{1, 1, 4, 4}, 0.5);
    auto s = gen::tensor(rng, gt.shape(), 0.0, 0.9);
    auto om = weight_map(gt, cfg);
    const double base = wel(s, gt, om, cfg).item();
    auto bumped = s.detach();
    const auto i = static_cast<std::size_t>(uniform_int(rng, 0, 15));
    bumped.values()[i] += uniform(rng, 0.0, 0.1);
    const double after = wel(bumped, gt, om, cfg).item();
    if (gt.values()[i] == 0.0) {
      CHECK(after >= base);
    } else {
      CHECK(after <= base);
    }
  }
}

TEST_CASE("total loss") {
  Rng rng(66);
  LossConfig cfg;
  cfg.window_k = 3;
  std::vector<Tensor<double>> gts, masks;
  for (int l = 0; l < kLevels; ++l) {
    const int r = 16 >> l;
    gts.push_back(binary(rng, Shape{2, 1, r, r}, 0.4));
    masks.push_back(gen::tensor(rng, gts.back().shape(), 0.02, 0.98));
  }

  // Perfect predictions.
  auto perfect = total_loss(gts, gts, cfg);
  CHECK(perfect.total.item() >= 0.0);
  CHECK(perfect.total.item() <= 5 * 2 * 1e-7);

  // Term-by-term expansion.
  auto terms = total_loss(masks, gts, cfg);
  double expanded = wel(masks[0], gts[0], weight_map(gts[0], cfg), cfg).item();
  CHECK(terms.wel == expanded);
  for (std::size_t i = 0; i < kLevels; ++i) {
    const auto om = weight_map(gts[i], cfg);
    const double b = wbce(masks[i], gts[i], om, cfg).item();
    const double u = wiou(masks[i], gts[i], om).item();
    CHECK(terms.wbce[i] == b);
    CHECK(terms.wiou[i] == u);
    expanded += cfg.level_weights[i] * (b + u);
  }
  CHECK(terms.total.item() == expanded);

  // Changing only level 3 moves the total by a quarter of that level's terms.
  LossConfig bce_only = cfg;
  bce_only.use_wiou = false;
  auto before = total_loss(masks, gts, bce_only);
  auto moved = masks;
  moved[2] = gen::tensor(rng, gts[2].shape(), 0.02, 0.98);
  auto after = total_loss(moved, gts, bce_only);
  const double delta = after.wbce[2] - before.wbce[2];
  CHECK(std::abs((after.total.item() - before.total.item()) - 0.25 * delta) <= 1e-12);
  for (std::size_t i : {0u, 1u, 3u, 4u}) CHECK(after.wbce[i] == before.wbce[i]);

  LossConfig no_el = cfg;
  no_el.use_el = false;
  auto without = total_loss(masks, gts, no_el);
  CHECK(std::abs(terms.total.item() - without.total.item() - terms.wel) <= 1e-12);

  CHECK_THROWS_AS(total_loss(std::vector<Tensor<double>>(masks.begin(), masks.end() - 1), gts, cfg), ContractError);
}

TEST_CASE("total loss backpropagates into every level") {
  Rng rng(67);
  LossConfig cfg;
  cfg.window_k = 3;
  std::vector<Tensor<double>> gts, masks;
  for (int l = 0; l < kLevels; ++l) {
    const int r = 8 >> (l > 3 ? 3 : l);
    gts.push_back(binary(rng, Shape{1, 1, r, r}, 0.5));
    masks.push_back(gen::tensor(rng, gts.back().shape(), 0.05, 0.95));
    masks.back().set_requires_grad(true);
  }
  backward(total_loss(masks, gts, cfg).total);
  for (const auto& m : masks) {
    REQUIRE(m.grad().size() == m.numel());
    double mag = 0;
    for (double g : m.grad()) mag += std::abs(g);
    CHECK(mag > 0.0);
  }
}
