#pragma once

// Finite-difference gradient checks in double precision.
//
// A unit builds a small random graph, projects its output onto a fixed
// random tensor to get a scalar, and compares reverse-mode gradients with
// central differences on sampled coordinates of every differentiable leaf.
// A coordinate whose ±step stencil changes a ReLU sign, a window max/min
// position or a loss clamp is not differentiable over the stencil; it is
// counted as a kink and skipped. A unit fails unless at least half of its
// sampled coordinates were compared.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "c4net/autograd.hpp"
#include "c4net/rng.hpp"

namespace c4net {

inline constexpr double kGradStep = 1e-5;
inline constexpr double kGradTolerance = 1e-4;
// Gradients smaller than this are compared in absolute terms.
inline constexpr double kGradFloor = 1e-3;

struct GradcheckResult {
  std::string unit;
  double max_rel_error = 0.0;
  std::size_t checked = 0;  // coordinates compared
  std::size_t kinks = 0;    // coordinates skipped
  bool pass() const { return checked > 0 && max_rel_error < kGradTolerance && kinks <= checked; }
};

// |a - n| / max(|a|, |n|, kGradFloor)
double relative_error(double analytic, double numeric);

// Compares gradients of `forward()` with respect to `leaves`. Up to
// `per_leaf` coordinates of each leaf are sampled.
GradcheckResult check_gradients(const std::string& unit, const std::vector<Tensor<double>>& leaves,
                                const std::function<Tensor<double>()>& forward, Rng& rng, int per_leaf = 12);

// Registered unit names, grouped as ops, losses and model.
const std::vector<std::string>& gradcheck_units();
// Expands a scope ("all", "ops", "losses", "model" or a unit name). Throws
// ContractError for unknown scopes.
std::vector<std::string> resolve_scope(const std::string& scope);
GradcheckResult run_gradcheck(const std::string& unit, std::uint64_t seed);

}  // namespace c4net
