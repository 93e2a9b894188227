#include "c4net/model.hpp"

#include <algorithm>
#include <utility>

namespace c4net {

namespace {

struct ModeName {
  DecoderMode mode;
  const char* name;
};

constexpr ModeName kModeNames[] = {
    {DecoderMode::c4net, "C4Net"},         {DecoderMode::pipe_pp, "PipePP"},     {DecoderMode::pipe_cc, "PipeCC"},
    {DecoderMode::pipe_cp, "PipeCP"},      {DecoderMode::pipe_mm, "PipeMM"},     {DecoderMode::branch_pp, "BranchPP"},
    {DecoderMode::branch_mm, "BranchMM"},  {DecoderMode::branch_cc, "BranchCC"}, {DecoderMode::branch_mp, "BranchMP"},
};

std::string level_name(const std::string& prefix, int level) { return prefix + ".l" + std::to_string(level); }

}  // namespace

std::string to_string(DecoderMode mode) {
  for (const auto& m : kModeNames) {
    if (m.mode == mode) return m.name;
  }
  return "unknown";
}

DecoderMode parse_decoder_mode(const std::string& name) {
  for (const auto& m : kModeNames) {
    if (name == m.name) return m.mode;
  }
  throw ContractError("unknown decoder mode '" + name + "'");
}

std::optional<AblationSpec> ablation_spec(DecoderMode mode) {
  using A = Aggregation;
  switch (mode) {
    case DecoderMode::c4net: return std::nullopt;
    case DecoderMode::pipe_pp: return AblationSpec{Structure::pipe, A::plus, A::plus};
    case DecoderMode::pipe_cc: return AblationSpec{Structure::pipe, A::cat, A::cat};
    case DecoderMode::pipe_cp: return AblationSpec{Structure::pipe, A::cat, A::plus};
    case DecoderMode::pipe_mm: return AblationSpec{Structure::pipe, A::mul, A::mul};
    case DecoderMode::branch_pp: return AblationSpec{Structure::branch, A::plus, A::plus};
    case DecoderMode::branch_mm: return AblationSpec{Structure::branch, A::mul, A::mul};
    case DecoderMode::branch_cc: return AblationSpec{Structure::branch, A::cat, A::cat};
    case DecoderMode::branch_mp: return AblationSpec{Structure::branch, A::mul, A::plus};
  }
  return std::nullopt;
}

void ModelConfig::validate() const {
  for (int c : encoder_channels) {
    if (c <= 0) throw ContractError("encoder channels must be positive");
  }
  if (input_size < 16 || input_size % 16 != 0) {
    throw ContractError("input_size must be a positive multiple of 16, got " + std::to_string(input_size));
  }
  if (cf <= 0) throw ContractError("cf must be positive");
  if (attention_reduction <= 0 || cf / attention_reduction < 1) {
    throw ContractError("attention_reduction must leave at least one hidden unit (cf / reduction >= 1)");
  }
  if (pyramid_sizes.empty()) throw ContractError("pyramid_sizes must not be empty");
  for (int p : pyramid_sizes) {
    if (p <= 0) throw ContractError("pyramid sizes must be positive");
  }
  if (decoder_mode == DecoderMode::c4net && use_cem && !use_ccm) {
    throw ContractError("the CEM decoder needs CCM shortcuts (use_cem requires use_ccm)");
  }
}

int ModelConfig::level_size(int level) const {
  int s = input_size;
  for (int i = 0; i < level; ++i) s = (s + 1) / 2;
  return s;
}

std::vector<int> ModelConfig::effective_pyramid_sizes() const {
  std::vector<int> out;
  const int deepest = level_size(kLevels);
  for (int p : pyramid_sizes) out.push_back(std::min(p, deepest));
  return out;
}

ModelConfig ModelConfig::micro() {
  ModelConfig cfg;
  cfg.encoder_channels = {4, 4, 8, 8, 8};
  cfg.input_size = 16;
  cfg.cf = 4;
  cfg.attention_reduction = 2;
  return cfg;
}

std::size_t encoder_parameter_count(const ModelConfig& cfg) {
  std::size_t total = 0;
  std::size_t in = 3;
  for (int c : cfg.encoder_channels) {
    const auto out = static_cast<std::size_t>(c);
    total += 9 * in * out + 2 * out;   // stride-2 conv + BN affine
    total += 9 * out * out + 2 * out;  // body conv + BN affine
    in = out;
  }
  return total;
}

// ---------------------------------------------------------------- encoder

template <typename T>
Encoder<T>::Encoder(ParameterStore<T>& store, const ModelConfig& cfg)
    : residual_(cfg.encoder_residual), input_size_(cfg.input_size) {
  int in = 3;
  for (int i = 0; i < kLevels; ++i) {
    const int out = cfg.encoder_channels[static_cast<std::size_t>(i)];
    const std::string name = "encoder.stage" + std::to_string(i + 1);
    Stage st;
    st.down = ConvBnRelu<T>(store, name + ".down", Conv2dSpec{in, out, 3, 2, 1, false}, LrGroup::encoder);
    st.body = ConvBnRelu<T>(store, name + ".body", Conv2dSpec::same(out, out, 3), LrGroup::encoder);
    stages_.push_back(std::move(st));
    in = out;
  }
}

template <typename T>
std::array<Tensor<T>, kLevels> Encoder<T>::operator()(const Tensor<T>& image, Mode mode) {
  const Shape& s = image.shape();
  if (s.rank() != 4 || s.c() != 3 || s.h() != input_size_ || s.w() != input_size_) {
    throw ShapeError("encoder: expected (N,3," + std::to_string(input_size_) + "," + std::to_string(input_size_) +
                     ") image, got " + s.str());
  }
  std::array<Tensor<T>, kLevels> out;
  Tensor<T> x = image;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    Tensor<T> h = stages_[i].down(x, mode);
    Tensor<T> y = stages_[i].body.pre_activation(h, mode);
    x = relu(residual_ ? add(y, h) : y);
    out[i] = x;
  }
  return out;
}

// -------------------------------------------------------------------- CCM

template <typename T>
Ccm<T>::Ccm(ParameterStore<T>& store, const std::string& name, int in_channels, int cf)
    : block_(store, name, Conv2dSpec::same(in_channels, cf, 3), LrGroup::head) {}

// -------------------------------------------------------------- attention

template <typename T>
ChannelAttention<T>::ChannelAttention(ParameterStore<T>& store, const std::string& name, int channels, int hidden)
    : fc1_w_(store, name + ".scale_fc1", channels, hidden, LrGroup::head),
      fc2_w_(store, name + ".scale_fc2", hidden, channels, LrGroup::head),
      fc1_v_(store, name + ".shift_fc1", channels, hidden, LrGroup::head),
      fc2_v_(store, name + ".shift_fc2", hidden, channels, LrGroup::head) {}

template <typename T>
typename ChannelAttention<T>::Result ChannelAttention<T>::operator()(const Tensor<T>& f) {
  const Shape& s = f.shape();
  const Tensor<T> pooled = global_avg_pool(f);
  Tensor<T> w = sigmoid(fc2_w_(relu(fc1_w_(pooled))));
  Tensor<T> v = sigmoid(fc2_v_(relu(fc1_v_(pooled))));
  const Shape per_channel{s.n(), s.c(), 1, 1};
  Tensor<T> out = add(mul(f, reshape(w, per_channel)), reshape(v, per_channel));
  return {out, w, v};
}

// -------------------------------------------------------------------- PSM

template <typename T>
Psm<T>::Psm(ParameterStore<T>& store, const std::string& name, int cf, const std::vector<int>& sizes, int hidden)
    : sizes_(sizes) {
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    branches_.emplace_back(store, name + ".branch" + std::to_string(j + 1), Conv2dSpec::same(cf, cf, 3),
                           LrGroup::head);
  }
  const int fused_in = cf * static_cast<int>(sizes.size() + 1);
  fuse_ = ConvBnRelu<T>(store, name + ".fuse", Conv2dSpec::same(fused_in, cf, 3), LrGroup::head);
  attention_ = ChannelAttention<T>(store, name + ".attention", cf, hidden);
}

template <typename T>
Tensor<T> Psm<T>::operator()(const Tensor<T>& f, Mode mode, Trace* trace) {
  const Shape& s = f.shape();
  const int largest = *std::max_element(sizes_.begin(), sizes_.end());
  if (s.h() < largest || s.w() < largest) {
    throw ContractError("psm: " + s.str() + " is smaller than pyramid size " + std::to_string(largest));
  }
  std::vector<Tensor<T>> parts{f};
  for (std::size_t j = 0; j < sizes_.size(); ++j) {
    Tensor<T> pooled = adaptive_avg_pool(f, sizes_[j], sizes_[j]);
    if (trace) trace->pooled.push_back(pooled);
    parts.push_back(upsample_to(branches_[j](pooled, mode), s.h(), s.w()));
  }
  Tensor<T> fused = fuse_(concat_channels(parts), mode);
  auto att = attention_(fused);
  if (trace) {
    trace->fused = fused;
    trace->scale = att.scale;
    trace->shift = att.shift;
  }
  return att.out;
}

// ------------------------------------------------------------------ heads

template <typename T>
SupervisionHead<T>::SupervisionHead(ParameterStore<T>& store, const std::string& name, int cf)
    : conv_(store, name, Conv2dSpec::same(cf, 1, 3, true), LrGroup::head) {}

// -------------------------------------------------------------------- CEM

template <typename T>
Cem<T>::Cem(ParameterStore<T>& store, const std::string& name, int cf) {
  for (int u = 1; u <= 6; ++u) {
    const int in = u == 1 ? 4 * cf : cf;
    units_.emplace_back(store, name + ".unit" + std::to_string(u), Conv2dSpec::same(in, cf, 3), LrGroup::head);
  }
  head_ = SupervisionHead<T>(store, name + ".head", cf);
}

template <typename T>
typename Cem<T>::Result Cem<T>::operator()(const Tensor<T>& f_l, const Tensor<T>& f_h, const Tensor<T>& f_g,
                                           const Tensor<T>& s_prev, Mode mode) {
  if (!(f_h.shape() == f_l.shape()) || !(f_g.shape() == f_l.shape())) {
    throw ShapeError("cem: f_l " + f_l.shape().str() + ", f_h " + f_h.shape().str() + ", f_g " + f_g.shape().str() +
                     " must align");
  }
  const Tensor<T> f_edge = edge_features(s_prev, f_l);
  const Tensor<T> first = units_[0](concat_channels<T>({f_l, f_h, f_edge, f_g}), mode);
  Tensor<T> x = first;
  for (std::size_t u = 1; u + 1 < units_.size(); ++u) x = units_[u](x, mode);
  Tensor<T> out = relu(add(units_.back().pre_activation(x, mode), first));
  return {out, head_(out)};
}

// ---------------------------------------------------------------- ablation

template <typename T>
ConvBlock<T>::ConvBlock(ParameterStore<T>& store, const std::string& name, int in, int out)
    : first_(store, name + ".conv1", Conv2dSpec::same(in, out, 3), LrGroup::head),
      second_(store, name + ".conv2", Conv2dSpec::same(out, out, 3), LrGroup::head) {}

template <typename T>
AblationLayer<T>::AblationLayer(ParameterStore<T>& store, const std::string& name, AblationSpec spec, int cf)
    : spec_(spec) {
  if (spec.r1 == Aggregation::cat) {
    reduce1_.emplace(store, name + ".reduce1", Conv2dSpec::same(2 * cf, cf, 1, true), LrGroup::head);
  }
  block1_ = ConvBlock<T>(store, name + ".block1", cf, cf);
  block2_ = ConvBlock<T>(store, name + ".block2", cf, cf);
  if (spec.r2 == Aggregation::cat) {
    reduce2_.emplace(store, name + ".reduce2", Conv2dSpec::same(2 * cf, cf, 1, true), LrGroup::head);
  }
}

template <typename T>
Tensor<T> AblationLayer<T>::aggregate(Aggregation op, const Tensor<T>& a, const Tensor<T>& b,
                                      std::optional<Conv2d<T>>& reduce) {
  switch (op) {
    case Aggregation::plus: return add(a, b);
    case Aggregation::mul: return mul(a, b);
    case Aggregation::cat: return (*reduce)(concat_channels<T>({a, b}));
  }
  throw ContractError("unknown aggregation");
}

template <typename T>
Tensor<T> AblationLayer<T>::operator()(const Tensor<T>& f_l, const Tensor<T>& f_h, Mode mode, Tensor<T>* aggregated) {
  if (!(f_l.shape() == f_h.shape())) {
    throw ShapeError("ablation layer: f_l " + f_l.shape().str() + " vs f_h " + f_h.shape().str());
  }
  if (spec_.structure == Structure::pipe) {
    // Joint path: both aggregations feed one processing chain.
    Tensor<T> joint = block1_(aggregate(spec_.r1, f_l, f_h, reduce1_), mode);
    Tensor<T> second = aggregate(spec_.r2, joint, f_h, reduce2_);
    if (aggregated) *aggregated = second;
    return block2_(second, mode);
  }
  // Separate low / high paths fused at the end.
  Tensor<T> low = block1_(aggregate(spec_.r1, f_l, f_h, reduce1_), mode);
  Tensor<T> high = block2_(f_h, mode);
  Tensor<T> out = aggregate(spec_.r2, low, high, reduce2_);
  if (aggregated) *aggregated = out;
  return out;
}

// ------------------------------------------------------------------ model

template <typename T>
bool Model<T>::uses_shortcuts() const {
  return cfg_.decoder_mode != DecoderMode::c4net || cfg_.use_ccm;
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg) : cfg_(cfg), store_(std::make_unique<ParameterStore<T>>(cfg.init_seed)) {
  cfg_.validate();
  auto& store = *store_;
  const int cf = cfg_.cf;
  encoder_ = Encoder<T>(store, cfg_);
  if (uses_shortcuts()) {
    for (int l = 1; l <= kLevels; ++l) {
      ccm_.emplace_back(store, level_name("ccm", l), cfg_.encoder_channels[static_cast<std::size_t>(l - 1)], cf);
    }
  } else {
    top_.emplace(store, "top", Conv2dSpec::same(cfg_.encoder_channels[kLevels - 1], cf, 3), LrGroup::head);
  }
  const bool c4 = cfg_.decoder_mode == DecoderMode::c4net;
  if (c4 && cfg_.use_psm) {
    psm_.emplace(store, "psm", cf, cfg_.effective_pyramid_sizes(), cfg_.attention_hidden());
  }
  top_head_ = SupervisionHead<T>(store, level_name("head", kLevels), cf);
  for (int l = kLevels - 1; l >= 1; --l) {
    const std::string name = level_name("decoder", l);
    if (!c4) {
      ablation_.emplace_back(store, name, *ablation_spec(cfg_.decoder_mode), cf);
      heads_.emplace_back(store, level_name("head", l), cf);
    } else if (cfg_.use_cem) {
      cem_.emplace_back(store, name, cf);
    } else {
      plain_.emplace_back(store, name, cfg_.use_ccm ? 2 * cf : cf, cf);
      heads_.emplace_back(store, level_name("head", l), cf);
    }
  }
  // Built deep-to-shallow; index by level from here on.
  std::reverse(cem_.begin(), cem_.end());
  std::reverse(plain_.begin(), plain_.end());
  std::reverse(ablation_.begin(), ablation_.end());
  std::reverse(heads_.begin(), heads_.end());
}

template <typename T>
ModelOutput<T> Model<T>::forward(const Tensor<T>& image, Mode mode) {
  const auto enc = encoder_(image, mode);
  std::array<Tensor<T>, kLevels> low;
  if (uses_shortcuts()) {
    for (std::size_t i = 0; i < kLevels; ++i) low[i] = ccm_[i](enc[i], mode);
  }
  const Tensor<T> top = uses_shortcuts() ? low[kLevels - 1] : (*top_)(enc[kLevels - 1], mode);
  const Tensor<T> f_h5 = psm_ ? (*psm_)(top, mode) : top;

  ModelOutput<T> out;
  out.masks[kLevels - 1] = top_head_(f_h5);
  Tensor<T> f_h = f_h5;
  Tensor<T> f_h4;
  const bool c4 = cfg_.decoder_mode == DecoderMode::c4net;
  for (int l = kLevels - 1; l >= 1; --l) {
    const auto i = static_cast<std::size_t>(l - 1);
    const int r = cfg_.level_size(l);
    const Tensor<T> up = upsample_to(f_h, r, r);
    Tensor<T> mask;
    if (c4 && cfg_.use_cem) {
      const Tensor<T> f_g = l == kLevels - 1 ? upsample_to(f_h5, r, r) : guidance_flow(f_h4, f_h5, r, r);
      auto res = cem_[i](low[i], up, f_g, upsample_to(out.masks[i + 1], r, r), mode);
      f_h = res.features;
      mask = res.mask;
    } else if (c4) {
      f_h = plain_[i](cfg_.use_ccm ? concat_channels<T>({low[i], up}) : up, mode);
      mask = heads_[i](f_h);
    } else {
      f_h = ablation_[i](low[i], up, mode);
      mask = heads_[i](f_h);
    }
    if (l == kLevels - 1) f_h4 = f_h;
    out.masks[i] = mask;
  }
  return out;
}

template <typename T>
Tensor<T> Model<T>::predict(const Tensor<T>& image, Mode mode) {
  auto out = forward(image, mode);
  return upsample_to(out.masks[0], cfg_.input_size, cfg_.input_size);
}

template class Encoder<float>;
template class Encoder<double>;
template class Ccm<float>;
template class Ccm<double>;
template class ChannelAttention<float>;
template class ChannelAttention<double>;
template class Psm<float>;
template class Psm<double>;
template class SupervisionHead<float>;
template class SupervisionHead<double>;
template class Cem<float>;
template class Cem<double>;
template class ConvBlock<float>;
template class ConvBlock<double>;
template class AblationLayer<float>;
template class AblationLayer<double>;
template class Model<float>;
template class Model<double>;

}  // namespace c4net
