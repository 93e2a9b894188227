#pragma once

// Parameterised layers and the store that owns their tensors.

#include <cmath>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "c4net/autograd.hpp"
#include "c4net/layers.hpp"
#include "c4net/rng.hpp"

namespace c4net {

// Learning-rate group: the encoder trains at a tenth of the head rate.
enum class LrGroup { encoder, head };

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  LrGroup group = LrGroup::head;
  // Buffers (BatchNorm running statistics) are stored alongside parameters
  // but are never touched by the optimizer.
  bool trainable = true;
};

// Owns every parameter and buffer of a model in registration order.
template <typename T>
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed) : rng_(seed) {}

  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  // Uniform(-bound, bound) initialisation.
  Tensor<T> uniform(const std::string& name, const Shape& shape, LrGroup group, double bound) {
    std::vector<T> v(shape.numel());
    for (auto& x : v) x = static_cast<T>(c4net::uniform(rng_, -bound, bound));
    return add(name, Tensor<T>(shape, std::move(v)), group, true);
  }

  Tensor<T> constant(const std::string& name, const Shape& shape, LrGroup group, T value) {
    return add(name, Tensor<T>(shape, value), group, true);
  }

  Tensor<T> buffer(const std::string& name, const Shape& shape, LrGroup group, T value) {
    return add(name, Tensor<T>(shape, value), group, false);
  }

  const std::deque<Parameter<T>>& entries() const { return entries_; }
  std::deque<Parameter<T>>& entries() { return entries_; }

  const Parameter<T>* find(const std::string& name) const {
    for (const auto& p : entries_) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : entries_) {
      if (p.trainable) n += p.tensor.numel();
    }
    return n;
  }

  void zero_grad() {
    for (auto& p : entries_) p.tensor.zero_grad();
  }

 private:
  Tensor<T> add(const std::string& name, Tensor<T> t, LrGroup group, bool trainable) {
    if (find(name)) throw ContractError("duplicate parameter name " + name);
    t.set_requires_grad(trainable);
    entries_.push_back({name, t, group, trainable});
    return t;
  }

  Rng rng_;
  std::deque<Parameter<T>> entries_;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore<T>& store, const std::string& name, const Conv2dSpec& spec, LrGroup group) : spec_(spec) {
    const int fan_in = spec.in_channels * spec.kernel * spec.kernel;
    // He-uniform keeps activation scale through ReLU stacks.
    weight_ = store.uniform(name + ".weight", Shape{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel},
                            group, std::sqrt(6.0 / fan_in));
    if (spec.bias) bias_ = store.uniform(name + ".bias", Shape{spec.out_channels}, group, 1.0 / std::sqrt(fan_in));
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight_, bias_, spec_); }

  const Conv2dSpec& spec() const { return spec_; }
  Tensor<T>& weight() { return weight_; }
  std::optional<Tensor<T>>& bias() { return bias_; }

 private:
  Conv2dSpec spec_;
  Tensor<T> weight_;
  std::optional<Tensor<T>> bias_;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParameterStore<T>& store, const std::string& name, int channels, LrGroup group) {
    gamma_ = store.constant(name + ".weight", Shape{channels}, group, T(1));
    beta_ = store.constant(name + ".bias", Shape{channels}, group, T(0));
    running_mean_ = store.buffer(name + ".running_mean", Shape{channels}, group, T(0));
    running_var_ = store.buffer(name + ".running_var", Shape{channels}, group, T(1));
  }

  Tensor<T> operator()(const Tensor<T>& x, Mode mode) {
    return batchnorm(x, gamma_, beta_, running_mean_.values(), running_var_.values(), mode);
  }

  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }

 private:
  Tensor<T> gamma_, beta_, running_mean_, running_var_;
};

// Conv -> BN -> optional ReLU.
template <typename T>
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(ParameterStore<T>& store, const std::string& name, const Conv2dSpec& spec, LrGroup group)
      : conv_(store, name + ".conv", spec, group), bn_(store, name + ".bn", spec.out_channels, group) {}

  Tensor<T> operator()(const Tensor<T>& x, Mode mode) { return relu(bn_(conv_(x), mode)); }
  // Conv -> BN only; callers add a residual before the activation.
  Tensor<T> pre_activation(const Tensor<T>& x, Mode mode) { return bn_(conv_(x), mode); }

  Conv2d<T>& conv() { return conv_; }
  BatchNorm2d<T>& bn() { return bn_; }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore<T>& store, const std::string& name, int in, int out, LrGroup group) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight_ = store.uniform(name + ".weight", Shape{out, in}, group, bound);
    bias_ = store.uniform(name + ".bias", Shape{out}, group, bound);
  }

  Tensor<T> operator()(const Tensor<T>& v) const { return fully_connected(v, weight_, std::optional<Tensor<T>>(bias_)); }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  Tensor<T> weight_, bias_;
};

}  // namespace c4net
