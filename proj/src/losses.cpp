#include "c4net/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "c4net/ops.hpp"

namespace c4net {

void LossConfig::validate() const {
  if (lambda_tilde < 0.0) throw ContractError("lambda_tilde must be >= 0");
  if (window_k <= 0 || window_k % 2 == 0) throw ContractError("window_k must be a positive odd integer");
  if (gamma <= 0.0) throw ContractError("gamma must be > 0");
  if (!(eps > 0.0 && eps <= 1e-3)) throw ContractError("eps must lie in (0, 1e-3]");
  for (std::size_t i = 0; i < level_weights.size(); ++i) {
    if (level_weights[i] != std::ldexp(1.0, -static_cast<int>(i))) {
      throw ContractError("level_weights must be 1/2^(i-1)");
    }
  }
}

namespace {

struct Layout {
  int batch;
  std::size_t plane;
};

Layout check_masks(const Shape& s, const Shape& gt, const Shape& omega, const char* op) {
  if (s.rank() != 4 || s.c() != 1) throw ShapeError(std::string(op) + ": expected (N,1,H,W) mask, got " + s.str());
  if (!(gt == s)) throw ShapeError(std::string(op) + ": ground truth " + gt.str() + " vs mask " + s.str());
  if (!(omega == s)) throw ShapeError(std::string(op) + ": weight map " + omega.str() + " vs mask " + s.str());
  return {s.n(), static_cast<std::size_t>(s.h()) * static_cast<std::size_t>(s.w())};
}

}  // namespace

template <typename T>
Tensor<T> weight_map(const Tensor<T>& gt, const LossConfig& cfg) {
  if (cfg.window_k <= 0 || cfg.window_k % 2 == 0) throw ContractError("weight_map: window size must be odd");
  const Shape& s = gt.shape();
  if (s.rank() != 4) throw ShapeError("weight_map: expected NCHW ground truth, got " + s.str());
  const int h = s.h();
  const int w = s.w();
  const int r = cfg.window_k / 2;
  const double n_window = static_cast<double>(cfg.window_k) * cfg.window_k;
  std::vector<T> out(gt.numel());
  // Summed-area table; binary inputs keep the box sums exact.
  std::vector<double> sat(static_cast<std::size_t>(h + 1) * static_cast<std::size_t>(w + 1));
  const int planes = s.n() * s.c();
  for (int p = 0; p < planes; ++p) {
    const T* g = gt.values().data() + static_cast<std::ptrdiff_t>(p) * h * w;
    std::fill(sat.begin(), sat.end(), 0.0);
    for (int y = 0; y < h; ++y) {
      double row = 0.0;
      for (int x = 0; x < w; ++x) {
        row += static_cast<double>(g[y * w + x]);
        sat[static_cast<std::size_t>((y + 1) * (w + 1) + x + 1)] = sat[static_cast<std::size_t>(y * (w + 1) + x + 1)] + row;
      }
    }
    auto at = [&](int y, int x) { return sat[static_cast<std::size_t>(y * (w + 1) + x)]; };
    for (int y = 0; y < h; ++y) {
      const int y0 = std::max(0, y - r);
      const int y1 = std::min(h, y + r + 1);
      for (int x = 0; x < w; ++x) {
        const int x0 = std::max(0, x - r);
        const int x1 = std::min(w, x + r + 1);
        const double box = at(y1, x1) - at(y0, x1) - at(y1, x0) + at(y0, x0);
        const double local = box / n_window;
        out[static_cast<std::size_t>(p) * static_cast<std::size_t>(h * w) + static_cast<std::size_t>(y * w + x)] =
            static_cast<T>(1.0 + cfg.lambda_tilde * std::abs(local - static_cast<double>(g[y * w + x])));
      }
    }
  }
  return Tensor<T>(s, std::move(out));
}

template <typename T>
Tensor<T> wbce(const Tensor<T>& s, const Tensor<T>& gt, const Tensor<T>& omega, const LossConfig& cfg) {
  const auto [batch, plane] = check_masks(s.shape(), gt.shape(), omega.shape(), "wbce");
  const T eps = static_cast<T>(cfg.eps);
  const T lo = eps;
  const T hi = T(1) - eps;
  const auto& sv = s.values();
  const auto& gv = gt.values();
  const auto& wv = omega.values();
  std::vector<T> weight_sums(static_cast<std::size_t>(batch));
  T total = T(0);
  for (int n = 0; n < batch; ++n) {
    T num = T(0);
    T den = T(0);
    const std::size_t off = static_cast<std::size_t>(n) * plane;
    for (std::size_t i = off; i < off + plane; ++i) {
      const T p = std::clamp(sv[i], lo, hi);
      if (auto& kt = detail::kink_trace(); kt.active) kt.mix(static_cast<std::uint64_t>((sv[i] < lo) + 2 * (sv[i] > hi)));
      num += wv[i] * (gv[i] * std::log(p) + (T(1) - gv[i]) * std::log(T(1) - p));
      den += wv[i];
    }
    weight_sums[static_cast<std::size_t>(n)] = den;
    total += -num / den;
  }
  total /= static_cast<T>(batch);
  auto g_node = gt.node_ptr();
  auto w_node = omega.node_ptr();
  return make_result<T>(Shape{1}, {total}, {s.node_ptr()},
                        [g_node, w_node, weight_sums, plane, batch, lo, hi](Node<T>& self) {
                          auto& ns = *self.inputs[0];
                          auto& gs = ns.ensure_grad();
                          const T upstream = self.grad[0] / static_cast<T>(batch);
                          for (int n = 0; n < batch; ++n) {
                            const T den = weight_sums[static_cast<std::size_t>(n)];
                            const std::size_t off = static_cast<std::size_t>(n) * plane;
                            for (std::size_t i = off; i < off + plane; ++i) {
                              const T v = ns.value[i];
                              if (v < lo || v > hi) continue;  // clamped: flat
                              const T g = g_node->value[i];
                              const T d = -(w_node->value[i]) * (g / v - (T(1) - g) / (T(1) - v)) / den;
                              gs[i] += upstream * d;
                            }
                          }
                        });
}

template <typename T>
Tensor<T> wiou(const Tensor<T>& s, const Tensor<T>& gt, const Tensor<T>& omega) {
  const auto [batch, plane] = check_masks(s.shape(), gt.shape(), omega.shape(), "wiou");
  const auto& sv = s.values();
  const auto& gv = gt.values();
  const auto& wv = omega.values();
  std::vector<T> inter(static_cast<std::size_t>(batch));
  std::vector<T> uni(static_cast<std::size_t>(batch));
  T total = T(0);
  for (int n = 0; n < batch; ++n) {
    T a = T(0);
    T b = T(0);
    const std::size_t off = static_cast<std::size_t>(n) * plane;
    for (std::size_t i = off; i < off + plane; ++i) {
      a += sv[i] * gv[i] * wv[i];
      b += (sv[i] + gv[i] - sv[i] * gv[i]) * wv[i];
    }
    inter[static_cast<std::size_t>(n)] = a;
    uni[static_cast<std::size_t>(n)] = b;
    total += b > T(0) ? T(1) - a / b : T(0);
  }
  total /= static_cast<T>(batch);
  auto g_node = gt.node_ptr();
  auto w_node = omega.node_ptr();
  return make_result<T>(Shape{1}, {total}, {s.node_ptr()}, [g_node, w_node, inter, uni, plane, batch](Node<T>& self) {
    auto& gs = self.inputs[0]->ensure_grad();
    const T upstream = self.grad[0] / static_cast<T>(batch);
    for (int n = 0; n < batch; ++n) {
      const T a = inter[static_cast<std::size_t>(n)];
      const T b = uni[static_cast<std::size_t>(n)];
      if (!(b > T(0))) continue;
      const std::size_t off = static_cast<std::size_t>(n) * plane;
      for (std::size_t i = off; i < off + plane; ++i) {
        const T g = g_node->value[i];
        const T w = w_node->value[i];
        // d(1 - a/b)/ds = -(g w b - a (1 - g) w) / b²
        gs[i] += upstream * (-(g * w * b - a * (T(1) - g) * w) / (b * b));
      }
    }
  });
}

template <typename T>
Tensor<T> wel(const Tensor<T>& s, const Tensor<T>& gt, const Tensor<T>& omega, const LossConfig& cfg) {
  const auto [batch, plane] = check_masks(s.shape(), gt.shape(), omega.shape(), "wel");
  const T gamma = static_cast<T>(cfg.gamma);
  const auto& sv = s.values();
  const auto& gv = gt.values();
  const auto& wv = omega.values();
  std::vector<T> fp(static_cast<std::size_t>(batch));
  std::vector<T> tp(static_cast<std::size_t>(batch));
  T total = T(0);
  for (int n = 0; n < batch; ++n) {
    T f = T(0);
    T t = T(0);
    const std::size_t off = static_cast<std::size_t>(n) * plane;
    for (std::size_t i = off; i < off + plane; ++i) {
      const T excess = sv[i] - gv[i];
      if (excess > T(0)) f += excess * wv[i];
      if (auto& kt = detail::kink_trace(); kt.active) kt.mix_sign(excess);
      t += sv[i] * gv[i] * wv[i];
    }
    fp[static_cast<std::size_t>(n)] = f;
    tp[static_cast<std::size_t>(n)] = t;
    const T den = f + gamma * t;
    total += den > T(0) ? f / den : T(0);
  }
  total /= static_cast<T>(batch);
  auto g_node = gt.node_ptr();
  auto w_node = omega.node_ptr();
  return make_result<T>(Shape{1}, {total}, {s.node_ptr()},
                        [g_node, w_node, fp, tp, gamma, plane, batch](Node<T>& self) {
                          auto& ns = *self.inputs[0];
                          auto& gs = ns.ensure_grad();
                          const T upstream = self.grad[0] / static_cast<T>(batch);
                          for (int n = 0; n < batch; ++n) {
                            const T f = fp[static_cast<std::size_t>(n)];
                            const T t = tp[static_cast<std::size_t>(n)];
                            const T den = f + gamma * t;
                            if (!(den > T(0))) continue;
                            const T inv = T(1) / (den * den);
                            const std::size_t off = static_cast<std::size_t>(n) * plane;
                            for (std::size_t i = off; i < off + plane; ++i) {
                              const T g = g_node->value[i];
                              const T w = w_node->value[i];
                              const T dfp = ns.value[i] - g > T(0) ? w : T(0);
                              const T dtp = g * w;
                              // (dFP (FP + γTP) − FP (dFP + γ dTP)) / den²
                              gs[i] += upstream * gamma * (dfp * t - f * dtp) * inv;
                            }
                          }
                        });
}

template <typename T>
LossTerms<T> total_loss(const std::vector<Tensor<T>>& masks, const std::vector<Tensor<T>>& gts, const LossConfig& cfg) {
  if (masks.size() != kLevels || gts.size() != kLevels) {
    throw ContractError("total_loss: expected " + std::to_string(kLevels) + " levels, got " +
                        std::to_string(masks.size()) + " masks and " + std::to_string(gts.size()) + " targets");
  }
  LossTerms<T> terms;
  Tensor<T> total;
  if (cfg.use_el) {
    Tensor<T> el = wel(masks[0], gts[0], weight_map(gts[0], cfg), cfg);
    terms.wel = el.item();
    total = el;
  }
  for (std::size_t i = 0; i < kLevels; ++i) {
    const Tensor<T> omega = weight_map(gts[i], cfg);
    Tensor<T> level = wbce(masks[i], gts[i], omega, cfg);
    terms.wbce[i] = level.item();
    if (cfg.use_wiou) {
      Tensor<T> iou = wiou(masks[i], gts[i], omega);
      terms.wiou[i] = iou.item();
      level = add(level, iou);
    }
    Tensor<T> weighted = scale(level, static_cast<T>(cfg.level_weights[i]));
    total = total.defined() ? add(total, weighted) : weighted;
  }
  terms.total = total;
  return terms;
}

#define C4NET_INSTANTIATE_LOSSES(T)                                                                   \
  template Tensor<T> weight_map<T>(const Tensor<T>&, const LossConfig&);                              \
  template Tensor<T> wbce<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const LossConfig&); \
  template Tensor<T> wiou<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> wel<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const LossConfig&);  \
  template LossTerms<T> total_loss<T>(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&, const LossConfig&);

C4NET_INSTANTIATE_LOSSES(float)
C4NET_INSTANTIATE_LOSSES(double)

}  // namespace c4net
