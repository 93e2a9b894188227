#pragma once

// Edge-weighted loss family for soft saliency masks.
//
// All three losses take S (N,1,H,W) with values in (0,1), a binary ground
// truth of the same shape and a pixel weight map ω. Each loss is computed
// per image and averaged over the batch; ω is a constant (no gradient).

#include <array>
#include <vector>

#include "c4net/autograd.hpp"
#include "c4net/model.hpp"

namespace c4net {

struct LossConfig {
  double lambda_tilde = 5.0;
  int window_k = 15;
  double gamma = 1.0;
  double eps = 1e-7;
  std::array<double, kLevels> level_weights{1.0, 0.5, 0.25, 0.125, 0.0625};
  // Toggles for ablations: the excessiveness term at level 1 and the
  // IoU term at every level.
  bool use_el = true;
  bool use_wiou = true;

  void validate() const;
};

// ω = 1 + λ̃ |box_mean_k(Gt) - Gt|, zero padding, divisor fixed at k².
template <typename T>
Tensor<T> weight_map(const Tensor<T>& gt, const LossConfig& cfg);

// −Σ ω [g log s + (1−g) log(1−s)] / Σ ω with s clamped to [eps, 1−eps].
template <typename T>
Tensor<T> wbce(const Tensor<T>& s, const Tensor<T>& gt, const Tensor<T>& omega, const LossConfig& cfg);

// 1 − Σ s g ω / Σ (s + g − s g) ω; zero when the union is empty.
template <typename T>
Tensor<T> wiou(const Tensor<T>& s, const Tensor<T>& gt, const Tensor<T>& omega);

// ωFP / (ωFP + γ ωTP) with ωFP = Σ relu(s − g) ω, ωTP = Σ s g ω; zero when
// the denominator vanishes.
template <typename T>
Tensor<T> wel(const Tensor<T>& s, const Tensor<T>& gt, const Tensor<T>& omega, const LossConfig& cfg);

template <typename T>
struct LossTerms {
  Tensor<T> total;
  T wel = T(0);
  std::array<T, kLevels> wbce{};
  std::array<T, kLevels> wiou{};
};

// L = L_wel(level 1) + Σ_i level_weights[i] (L_wbce(i) + L_wiou(i)).
template <typename T>
LossTerms<T> total_loss(const std::vector<Tensor<T>>& masks, const std::vector<Tensor<T>>& gts, const LossConfig& cfg);

}  // namespace c4net
