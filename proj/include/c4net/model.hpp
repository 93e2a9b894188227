#pragma once

// Salient-object network: a five-stage encoder, compressed shortcuts (CCM),
// a pyramid head with channel scale/shift attention (PSM), edge-aware
// decoder layers (CEM) fed by a global guidance flow, and one sigmoid
// supervision head per decoder level. The same class also builds the
// baseline / partial-module variants and the Pipe/Branch decoder variants
// used for ablations.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "c4net/autograd.hpp"
#include "c4net/layers.hpp"
#include "c4net/modules.hpp"

namespace c4net {

inline constexpr int kLevels = 5;

enum class Structure { pipe, branch };
enum class Aggregation { plus, mul, cat };

enum class DecoderMode { c4net, pipe_pp, pipe_cc, pipe_cp, pipe_mm, branch_pp, branch_mm, branch_cc, branch_mp };

struct AblationSpec {
  Structure structure;
  Aggregation r1;
  Aggregation r2;
};

std::string to_string(DecoderMode mode);
DecoderMode parse_decoder_mode(const std::string& name);  // "C4Net", "PipeCC", ...
std::optional<AblationSpec> ablation_spec(DecoderMode mode);

struct ModelConfig {
  std::array<int, kLevels> encoder_channels{8, 16, 32, 64, 64};
  int input_size = 64;
  int cf = 8;
  std::vector<int> pyramid_sizes{1, 2, 5};
  int attention_reduction = 4;
  DecoderMode decoder_mode = DecoderMode::c4net;
  // Module toggles; only meaningful for DecoderMode::c4net.
  bool use_ccm = true;
  bool use_cem = true;
  bool use_psm = true;
  bool encoder_residual = true;
  std::uint64_t init_seed = 0;

  void validate() const;
  // Spatial extent of encoder stage / decoder level `level` in 1..5.
  int level_size(int level) const;
  int attention_hidden() const { return cf / attention_reduction; }
  // Pyramid sizes clamped to the deepest feature map.
  std::vector<int> effective_pyramid_sizes() const;

  // Smallest configuration used by the end-to-end gradient check.
  static ModelConfig micro();
};

template <typename T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(ParameterStore<T>& store, const ModelConfig& cfg);
  std::array<Tensor<T>, kLevels> operator()(const Tensor<T>& image, Mode mode);

 private:
  struct Stage {
    ConvBnRelu<T> down;
    ConvBnRelu<T> body;
  };
  std::vector<Stage> stages_;
  bool residual_ = true;
  int input_size_ = 0;
};

// Contextual compression: 3x3 Conv-BN-ReLU to cf channels.
template <typename T>
class Ccm {
 public:
  Ccm() = default;
  Ccm(ParameterStore<T>& store, const std::string& name, int in_channels, int cf);
  Tensor<T> operator()(const Tensor<T>& f, Mode mode) { return block_(f, mode); }

 private:
  ConvBnRelu<T> block_;
};

// Per-channel scale w and shift v from the pooled descriptor, each through
// its own fc -> ReLU -> fc -> sigmoid stack.
template <typename T>
class ChannelAttention {
 public:
  struct Result {
    Tensor<T> out;
    Tensor<T> scale;  // (N, C)
    Tensor<T> shift;  // (N, C)
  };

  ChannelAttention() = default;
  ChannelAttention(ParameterStore<T>& store, const std::string& name, int channels, int hidden);
  Result operator()(const Tensor<T>& f);

  Linear<T>& fc1_scale() { return fc1_w_; }
  Linear<T>& fc2_scale() { return fc2_w_; }
  Linear<T>& fc1_shift() { return fc1_v_; }
  Linear<T>& fc2_shift() { return fc2_v_; }

 private:
  Linear<T> fc1_w_, fc2_w_, fc1_v_, fc2_v_;
};

template <typename T>
class Psm {
 public:
  struct Trace {
    std::vector<Tensor<T>> pooled;  // one per pyramid size
    Tensor<T> fused;                // before attention
    Tensor<T> scale, shift;
  };

  Psm() = default;
  Psm(ParameterStore<T>& store, const std::string& name, int cf, const std::vector<int>& sizes, int hidden);
  Tensor<T> operator()(const Tensor<T>& f, Mode mode, Trace* trace = nullptr);

  ChannelAttention<T>& attention() { return attention_; }
  const std::vector<int>& sizes() const { return sizes_; }

 private:
  std::vector<int> sizes_;
  std::vector<ConvBnRelu<T>> branches_;
  ConvBnRelu<T> fuse_;
  ChannelAttention<T> attention_;
};

// 3x3 conv to one channel followed by a sigmoid.
template <typename T>
class SupervisionHead {
 public:
  SupervisionHead() = default;
  SupervisionHead(ParameterStore<T>& store, const std::string& name, int cf);
  Tensor<T> operator()(const Tensor<T>& f) const { return sigmoid(conv_(f)); }

 private:
  Conv2d<T> conv_;
};

// f_g = up(f_h4) + up(f_h5).
template <typename T>
Tensor<T> guidance_flow(const Tensor<T>& f_h4, const Tensor<T>& f_h5, int target_h, int target_w) {
  return add(upsample_to(f_h4, target_h, target_w), upsample_to(f_h5, target_h, target_w));
}

// Boundary band of a soft mask: dilate(S) - erode(S) with a 3x3 window.
template <typename T>
Tensor<T> edge_map(const Tensor<T>& mask) {
  return sub(dilate(mask, 3), erode(mask, 3));
}

// f_edge = edge_map(S) broadcast-multiplied over the channels of f_l.
template <typename T>
Tensor<T> edge_features(const Tensor<T>& mask, const Tensor<T>& f_l) {
  const Shape& ms = mask.shape();
  const Shape& fs = f_l.shape();
  if (ms.rank() != 4 || ms.c() != 1 || ms.n() != fs.n() || ms.h() != fs.h() || ms.w() != fs.w()) {
    throw ShapeError("edge_features: mask " + ms.str() + " does not match features " + fs.str());
  }
  return mul(f_l, edge_map(mask));
}

// Complementary extraction layer.
template <typename T>
class Cem {
 public:
  struct Result {
    Tensor<T> features;
    Tensor<T> mask;
  };

  Cem() = default;
  Cem(ParameterStore<T>& store, const std::string& name, int cf);
  Result operator()(const Tensor<T>& f_l, const Tensor<T>& f_h, const Tensor<T>& f_g, const Tensor<T>& s_prev,
                    Mode mode);

 private:
  std::vector<ConvBnRelu<T>> units_;
  SupervisionHead<T> head_;
};

// Two 3x3 Conv-BN-ReLU units.
template <typename T>
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(ParameterStore<T>& store, const std::string& name, int in, int out);
  Tensor<T> operator()(const Tensor<T>& x, Mode mode) { return second_(first_(x, mode), mode); }

 private:
  ConvBnRelu<T> first_, second_;
};

// Pipe/Branch decoder layer with configurable aggregations.
template <typename T>
class AblationLayer {
 public:
  AblationLayer() = default;
  AblationLayer(ParameterStore<T>& store, const std::string& name, AblationSpec spec, int cf);
  // `aggregated`, when given, receives the output of the second aggregation.
  Tensor<T> operator()(const Tensor<T>& f_l, const Tensor<T>& f_h, Mode mode, Tensor<T>* aggregated = nullptr);

  const AblationSpec& spec() const { return spec_; }

 private:
  Tensor<T> aggregate(Aggregation op, const Tensor<T>& a, const Tensor<T>& b, std::optional<Conv2d<T>>& reduce);

  AblationSpec spec_{};
  ConvBlock<T> block1_, block2_;
  std::optional<Conv2d<T>> reduce1_, reduce2_;
};

template <typename T>
struct ModelOutput {
  // masks[i] is the level-(i+1) supervision at that level's resolution.
  std::array<Tensor<T>, kLevels> masks;
};

template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  ModelOutput<T> forward(const Tensor<T>& image, Mode mode);
  // Level-1 mask upsampled to the input resolution.
  Tensor<T> predict(const Tensor<T>& image, Mode mode = Mode::eval);

  const ModelConfig& config() const { return cfg_; }
  ParameterStore<T>& parameters() { return *store_; }
  const ParameterStore<T>& parameters() const { return *store_; }

  Encoder<T>& encoder() { return encoder_; }
  Ccm<T>& ccm(int level) { return ccm_.at(static_cast<std::size_t>(level - 1)); }
  Psm<T>& psm() { return *psm_; }
  bool has_psm() const { return psm_.has_value(); }

 private:
  bool uses_shortcuts() const;

  ModelConfig cfg_;
  std::unique_ptr<ParameterStore<T>> store_;
  Encoder<T> encoder_;
  std::vector<Ccm<T>> ccm_;
  std::optional<ConvBnRelu<T>> top_;  // baseline: deepest encoder map -> cf
  std::optional<Psm<T>> psm_;
  SupervisionHead<T> top_head_;
  std::vector<Cem<T>> cem_;              // index 0 = level 1
  std::vector<ConvBlock<T>> plain_;
  std::vector<AblationLayer<T>> ablation_;
  std::vector<SupervisionHead<T>> heads_;
};

// Closed-form parameter count of the encoder (weights + BN affine).
std::size_t encoder_parameter_count(const ModelConfig& cfg);

}  // namespace c4net
