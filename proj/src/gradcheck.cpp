#include "c4net/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "c4net/errors.hpp"
#include "c4net/layers.hpp"
#include "c4net/losses.hpp"
#include "c4net/model.hpp"
#include "c4net/ops.hpp"

namespace c4net {

double relative_error(double analytic, double numeric) {
  const double den = std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
  return std::abs(analytic - numeric) / den;
}

GradcheckResult check_gradients(const std::string& unit, const std::vector<Tensor<double>>& leaves,
                                const std::function<Tensor<double>()>& forward, Rng& rng, int per_leaf) {
  const Tensor<double> probe = forward();
  std::vector<double> r(probe.numel());
  for (auto& v : r) v = uniform(rng, -1.0, 1.0);
  const Tensor<double> weights(probe.shape(), r);
  auto objective = [&] { return sum(mul(forward(), weights)); };

  // Objective value plus the pattern of non-smooth decisions taken.
  auto traced = [&] {
    auto& kt = detail::kink_trace();
    kt = detail::KinkTrace{};
    kt.active = true;
    const double v = objective().item();
    kt.active = false;
    return std::make_pair(v, kt.hash);
  };
  const std::uint64_t base_pattern = traced().second;

  for (const auto& leaf : leaves) const_cast<Tensor<double>&>(leaf).zero_grad();
  backward(objective());

  GradcheckResult res;
  res.unit = unit;
  for (const auto& leaf_ref : leaves) {
    Tensor<double> leaf = leaf_ref;
    const std::vector<double> analytic = leaf.grad().empty() ? std::vector<double>(leaf.numel(), 0.0)
                                                             : std::vector<double>(leaf.grad().begin(), leaf.grad().end());
    std::vector<std::size_t> idx(leaf.numel());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t count = std::min(idx.size(), static_cast<std::size_t>(per_leaf));
    for (std::size_t k = 0; k < count; ++k) {
      const auto j = k + static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(idx.size() - k) - 1));
      std::swap(idx[k], idx[j]);
    }
    for (std::size_t k = 0; k < count; ++k) {
      double& x = leaf.values()[idx[k]];
      const double saved = x;
      x = saved + kGradStep;
      const auto up = traced();
      x = saved - kGradStep;
      const auto down = traced();
      x = saved;
      if (up.second != base_pattern || down.second != base_pattern) {
        ++res.kinks;
        continue;
      }
      const double numeric = (up.first - down.first) / (2.0 * kGradStep);
      res.max_rel_error = std::max(res.max_rel_error, relative_error(analytic[idx[k]], numeric));
      ++res.checked;
    }
  }
  return res;
}

namespace {

using T = double;
using Leaves = std::vector<Tensor<T>>;

Tensor<T> random_tensor(Rng& rng, const Shape& shape, double lo = -2.0, double hi = 2.0, bool grad = true) {
  std::vector<T> v(shape.numel());
  for (auto& x : v) x = uniform(rng, lo, hi);
  Tensor<T> t(shape, std::move(v));
  t.set_requires_grad(grad);
  return t;
}

Tensor<T> random_mask(Rng& rng, const Shape& shape) {
  std::vector<T> v(shape.numel());
  for (auto& x : v) x = bernoulli(rng, 0.4) ? 1.0 : 0.0;
  return Tensor<T>(shape, std::move(v));
}

Leaves trainable(const ParameterStore<T>& store) {
  Leaves out;
  for (const auto& p : store.entries()) {
    if (p.trainable) out.push_back(p.tensor);
  }
  return out;
}

Leaves with(Leaves a, const Leaves& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

using UnitFn = std::function<GradcheckResult(const std::string&, Rng&)>;

struct Unit {
  const char* name;
  const char* group;
  UnitFn fn;
};

GradcheckResult unary(const std::string& name, Rng& rng, const Shape& shape,
                      const std::function<Tensor<T>(const Tensor<T>&)>& f, double lo = -2.0, double hi = 2.0) {
  auto x = random_tensor(rng, shape, lo, hi);
  return check_gradients(name, {x}, [=] { return f(x); }, rng);
}

Conv2dSpec spec(int in, int out, int k, int stride, int pad, bool bias) { return {in, out, k, stride, pad, bias}; }

GradcheckResult conv_unit(const std::string& name, Rng& rng, const Conv2dSpec& s, int h, int w) {
  auto x = random_tensor(rng, Shape{2, s.in_channels, h, w});
  auto wt = random_tensor(rng, Shape{s.out_channels, s.in_channels, s.kernel, s.kernel}, -1.0, 1.0);
  auto b = random_tensor(rng, Shape{s.out_channels}, -1.0, 1.0);
  std::optional<Tensor<T>> bias;
  if (s.bias) bias = b;
  return check_gradients(name, s.bias ? Leaves{x, wt, b} : Leaves{x, wt}, [=] { return conv2d(x, wt, bias, s); }, rng);
}

GradcheckResult batchnorm_unit(const std::string& name, Rng& rng, Mode mode) {
  auto x = random_tensor(rng, Shape{3, 2, 3, 3});
  auto g = random_tensor(rng, Shape{2}, 0.5, 1.5);
  auto b = random_tensor(rng, Shape{2}, -1.0, 1.0);
  auto rm = std::make_shared<std::vector<T>>(std::vector<T>{0.3, -0.2});
  auto rv = std::make_shared<std::vector<T>>(std::vector<T>{1.5, 0.7});
  return check_gradients(name, {x, g, b}, [=] { return batchnorm(x, g, b, *rm, *rv, mode); }, rng);
}

// Each loss check uses S in [0.05, 0.95] and a binary target.
GradcheckResult loss_unit(const std::string& name, Rng& rng,
                          const std::function<Tensor<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&)>& f) {
  const Shape shape{2, 1, 6, 6};
  auto s = random_tensor(rng, shape, 0.05, 0.95);
  const auto gt = random_mask(rng, shape);
  LossConfig cfg;
  cfg.window_k = 3;
  const auto omega = weight_map(gt, cfg);
  return check_gradients(name, {s}, [=] { return f(s, gt, omega); }, rng);
}

ModelConfig micro_model() { return ModelConfig::micro(); }

const std::vector<Unit>& registry() {
  static const std::vector<Unit> units = {
      // Tensor operations and layers.
      {"add", "ops",
       [](const std::string& n, Rng& rng) {
         auto a = random_tensor(rng, Shape{2, 3, 2, 2});
         auto b = random_tensor(rng, Shape{2, 3, 2, 2});
         return check_gradients(n, {a, b}, [=] { return add(a, b); }, rng);
       }},
      {"sub", "ops",
       [](const std::string& n, Rng& rng) {
         auto a = random_tensor(rng, Shape{2, 3, 2, 2});
         auto b = random_tensor(rng, Shape{1, 3, 1, 1});
         return check_gradients(n, {a, b}, [=] { return sub(a, b); }, rng);
       }},
      {"mul", "ops",
       [](const std::string& n, Rng& rng) {
         auto a = random_tensor(rng, Shape{2, 3, 2, 2});
         auto b = random_tensor(rng, Shape{2, 3, 2, 2});
         return check_gradients(n, {a, b}, [=] { return mul(a, b); }, rng);
       }},
      {"mul_broadcast", "ops",
       [](const std::string& n, Rng& rng) {
         auto a = random_tensor(rng, Shape{2, 3, 2, 2});
         auto b = random_tensor(rng, Shape{2, 3, 1, 1});
         return check_gradients(n, {a, b}, [=] { return mul(a, b); }, rng);
       }},
      {"fan_out", "ops",
       [](const std::string& n, Rng& rng) {
         auto a = random_tensor(rng, Shape{2, 2, 2, 2});
         return check_gradients(n, {a}, [=] { return mul(add(a, a), sigmoid(a)); }, rng);
       }},
      {"scale", "ops", [](const std::string& n, Rng& rng) { return unary(n, rng, Shape{2, 3}, [](auto& x) { return scale(x, T(-1.7)); }); }},
      {"concat_channels", "ops",
       [](const std::string& n, Rng& rng) {
         auto a = random_tensor(rng, Shape{2, 2, 3, 3});
         auto b = random_tensor(rng, Shape{2, 3, 3, 3});
         return check_gradients(n, {a, b}, [=] { return concat_channels<T>({a, b, a}); }, rng);
       }},
      {"sum", "ops", [](const std::string& n, Rng& rng) { return unary(n, rng, Shape{2, 2, 3, 3}, [](auto& x) { return sum(x); }); }},
      {"mean", "ops", [](const std::string& n, Rng& rng) { return unary(n, rng, Shape{2, 2, 3, 3}, [](auto& x) { return mean(x); }); }},
      {"reshape", "ops",
       [](const std::string& n, Rng& rng) {
         return unary(n, rng, Shape{2, 6}, [](auto& x) { return sigmoid(reshape(x, Shape{2, 3, 2, 1})); });
       }},
      {"conv2d", "ops", [](const std::string& n, Rng& rng) { return conv_unit(n, rng, spec(3, 4, 3, 1, 1, true), 5, 4); }},
      {"conv2d_stride2", "ops", [](const std::string& n, Rng& rng) { return conv_unit(n, rng, spec(2, 3, 3, 2, 1, false), 5, 6); }},
      {"conv2d_pointwise", "ops", [](const std::string& n, Rng& rng) { return conv_unit(n, rng, spec(4, 3, 1, 1, 0, true), 3, 3); }},
      {"batchnorm_train", "ops", [](const std::string& n, Rng& rng) { return batchnorm_unit(n, rng, Mode::train); }},
      {"batchnorm_eval", "ops", [](const std::string& n, Rng& rng) { return batchnorm_unit(n, rng, Mode::eval); }},
      {"relu", "ops", [](const std::string& n, Rng& rng) { return unary(n, rng, Shape{2, 3, 3, 3}, [](auto& x) { return relu(x); }); }},
      {"sigmoid", "ops", [](const std::string& n, Rng& rng) { return unary(n, rng, Shape{2, 3, 3, 3}, [](auto& x) { return sigmoid(x); }); }},
      {"avg_pool", "ops",
       [](const std::string& n, Rng& rng) { return unary(n, rng, Shape{2, 2, 6, 6}, [](auto& x) { return avg_pool(x, 2, 2); }); }},
      {"adaptive_avg_pool", "ops",
       [](const std::string& n, Rng& rng) {
         return unary(n, rng, Shape{2, 2, 7, 5}, [](auto& x) { return adaptive_avg_pool(x, 3, 2); });
       }},
      {"global_avg_pool", "ops",
       [](const std::string& n, Rng& rng) { return unary(n, rng, Shape{2, 3, 4, 3}, [](auto& x) { return global_avg_pool(x); }); }},
      {"bilinear_upsample", "ops",
       [](const std::string& n, Rng& rng) {
         return unary(n, rng, Shape{2, 2, 3, 2}, [](auto& x) { return bilinear_upsample(x, 7, 5); });
       }},
      {"fully_connected", "ops",
       [](const std::string& n, Rng& rng) {
         auto v = random_tensor(rng, Shape{3, 4});
         auto w = random_tensor(rng, Shape{5, 4}, -1.0, 1.0);
         auto b = random_tensor(rng, Shape{5}, -1.0, 1.0);
         return check_gradients(n, {v, w, b}, [=] { return fully_connected(v, w, std::optional<Tensor<T>>(b)); }, rng);
       }},
      {"dilate", "ops",
       [](const std::string& n, Rng& rng) { return unary(n, rng, Shape{2, 1, 5, 5}, [](auto& x) { return dilate(x, 3); }, 0.05, 0.95); }},
      {"erode", "ops",
       [](const std::string& n, Rng& rng) { return unary(n, rng, Shape{2, 1, 5, 5}, [](auto& x) { return erode(x, 3); }, 0.05, 0.95); }},

      // Network building blocks.
      {"encoder", "modules",
       [](const std::string& n, Rng& rng) {
         const ModelConfig cfg = micro_model();
         auto store = std::make_shared<ParameterStore<T>>(rng());
         auto enc = std::make_shared<Encoder<T>>(*store, cfg);
         auto x = random_tensor(rng, Shape{3, 3, cfg.input_size, cfg.input_size});
         return check_gradients(n, with({x}, trainable(*store)), [=] {
           auto f = (*enc)(x, Mode::train);
           return concat_channels<T>({f[0], upsample_to(f[2], f[0].shape().h(), f[0].shape().w())});
         }, rng);
       }},
      {"ccm", "modules",
       [](const std::string& n, Rng& rng) {
         auto store = std::make_shared<ParameterStore<T>>(rng());
         auto ccm = std::make_shared<Ccm<T>>(*store, "ccm", 5, 3);
         auto x = random_tensor(rng, Shape{2, 5, 4, 4});
         return check_gradients(n, with({x}, trainable(*store)), [=] { return (*ccm)(x, Mode::train); }, rng);
       }},
      {"channel_attention", "modules",
       [](const std::string& n, Rng& rng) {
         auto store = std::make_shared<ParameterStore<T>>(rng());
         auto att = std::make_shared<ChannelAttention<T>>(*store, "att", 4, 2);
         auto x = random_tensor(rng, Shape{2, 4, 3, 3});
         return check_gradients(n, with({x}, trainable(*store)), [=] { return (*att)(x).out; }, rng);
       }},
      {"psm", "modules",
       [](const std::string& n, Rng& rng) {
         auto store = std::make_shared<ParameterStore<T>>(rng());
         auto psm = std::make_shared<Psm<T>>(*store, "psm", 4, std::vector<int>{1, 2, 5}, 2);
         auto x = random_tensor(rng, Shape{2, 4, 10, 10});
         return check_gradients(n, with({x}, trainable(*store)), [=] { return (*psm)(x, Mode::train); }, rng);
       }},
      {"supervision_head", "modules",
       [](const std::string& n, Rng& rng) {
         auto store = std::make_shared<ParameterStore<T>>(rng());
         auto head = std::make_shared<SupervisionHead<T>>(*store, "head", 3);
         auto x = random_tensor(rng, Shape{2, 3, 4, 4});
         return check_gradients(n, with({x}, trainable(*store)), [=] { return (*head)(x); }, rng);
       }},
      {"guidance_flow", "modules",
       [](const std::string& n, Rng& rng) {
         auto a = random_tensor(rng, Shape{2, 3, 2, 2});
         auto b = random_tensor(rng, Shape{2, 3, 1, 1});
         return check_gradients(n, {a, b}, [=] { return guidance_flow(a, b, 5, 5); }, rng);
       }},
      {"edge_features", "modules",
       [](const std::string& n, Rng& rng) {
         auto s = random_tensor(rng, Shape{2, 1, 5, 5}, 0.05, 0.95);
         auto f = random_tensor(rng, Shape{2, 3, 5, 5});
         return check_gradients(n, {s, f}, [=] { return edge_features(s, f); }, rng);
       }},
      {"cem", "modules",
       [](const std::string& n, Rng& rng) {
         auto store = std::make_shared<ParameterStore<T>>(rng());
         auto cem = std::make_shared<Cem<T>>(*store, "cem", 3);
         const Shape fs{2, 3, 4, 4};
         auto fl = random_tensor(rng, fs);
         auto fh = random_tensor(rng, fs);
         auto fg = random_tensor(rng, fs);
         auto s = random_tensor(rng, Shape{2, 1, 4, 4}, 0.05, 0.95);
         return check_gradients(n, with({fl, fh, fg, s}, trainable(*store)), [=] {
           auto r = (*cem)(fl, fh, fg, s, Mode::train);
           return concat_channels<T>({r.features, r.mask});
         }, rng);
       }},
      {"conv_block", "modules",
       [](const std::string& n, Rng& rng) {
         auto store = std::make_shared<ParameterStore<T>>(rng());
         auto block = std::make_shared<ConvBlock<T>>(*store, "block", 4, 3);
         auto x = random_tensor(rng, Shape{2, 4, 4, 4});
         return check_gradients(n, with({x}, trainable(*store)), [=] { return (*block)(x, Mode::train); }, rng);
       }},
      {"pipe_layer", "modules",
       [](const std::string& n, Rng& rng) {
         auto store = std::make_shared<ParameterStore<T>>(rng());
         auto layer = std::make_shared<AblationLayer<T>>(*store, "pipe", *ablation_spec(DecoderMode::pipe_cp), 3);
         auto fl = random_tensor(rng, Shape{2, 3, 4, 4});
         auto fh = random_tensor(rng, Shape{2, 3, 4, 4});
         return check_gradients(n, with({fl, fh}, trainable(*store)), [=] { return (*layer)(fl, fh, Mode::train); }, rng);
       }},
      {"branch_layer", "modules",
       [](const std::string& n, Rng& rng) {
         auto store = std::make_shared<ParameterStore<T>>(rng());
         auto layer = std::make_shared<AblationLayer<T>>(*store, "branch", *ablation_spec(DecoderMode::branch_mp), 3);
         auto fl = random_tensor(rng, Shape{2, 3, 4, 4});
         auto fh = random_tensor(rng, Shape{2, 3, 4, 4});
         return check_gradients(n, with({fl, fh}, trainable(*store)), [=] { return (*layer)(fl, fh, Mode::train); }, rng);
       }},

      // Losses with respect to the prediction.
      {"wbce", "losses",
       [](const std::string& n, Rng& rng) {
         return loss_unit(n, rng, [](auto& s, auto& g, auto& w) { return wbce(s, g, w, LossConfig{}); });
       }},
      {"wiou", "losses", [](const std::string& n, Rng& rng) { return loss_unit(n, rng, [](auto& s, auto& g, auto& w) { return wiou(s, g, w); }); }},
      {"wel", "losses",
       [](const std::string& n, Rng& rng) {
         return loss_unit(n, rng, [](auto& s, auto& g, auto& w) { return wel(s, g, w, LossConfig{}); });
       }},
      {"total_loss", "losses",
       [](const std::string& n, Rng& rng) {
         Leaves masks;
         std::vector<Tensor<T>> gts;
         for (int l = 0; l < kLevels; ++l) {
           const int r = 8 >> std::min(l, 2);
           masks.push_back(random_tensor(rng, Shape{2, 1, r, r}, 0.05, 0.95));
           gts.push_back(random_mask(rng, Shape{2, 1, r, r}));
         }
         LossConfig cfg;
         cfg.window_k = 3;
         return check_gradients(n, masks, [=] { return total_loss(masks, gts, cfg).total; }, rng);
       }},

      // End-to-end micro model.
      {"model", "model",
       [](const std::string& n, Rng& rng) {
         ModelConfig cfg = micro_model();
         cfg.init_seed = rng();
         auto model = std::make_shared<Model<T>>(cfg);
         auto x = random_tensor(rng, Shape{3, 3, cfg.input_size, cfg.input_size});
         return check_gradients(n, with({x}, trainable(model->parameters())), [=] {
           auto out = model->forward(x, Mode::train);
           return concat_channels<T>({out.masks[0], upsample_to(out.masks[1], 8, 8), upsample_to(out.masks[2], 8, 8),
                                      upsample_to(out.masks[3], 8, 8), upsample_to(out.masks[4], 8, 8)});
         }, rng, 6);
       }},
  };
  return units;
}

// FNV-1a, stable across standard libraries.
std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

const Unit* find_unit(const std::string& name) {
  for (const auto& u : registry()) {
    if (name == u.name) return &u;
  }
  return nullptr;
}

}  // namespace

const std::vector<std::string>& gradcheck_units() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& u : registry()) out.emplace_back(u.name);
    return out;
  }();
  return names;
}

std::vector<std::string> resolve_scope(const std::string& scope) {
  std::vector<std::string> out;
  for (const auto& u : registry()) {
    if (scope == "all" || scope == u.group || scope == u.name) out.emplace_back(u.name);
  }
  if (out.empty()) throw ContractError("unknown gradcheck scope '" + scope + "'");
  return out;
}

GradcheckResult run_gradcheck(const std::string& unit, std::uint64_t seed) {
  const Unit* u = find_unit(unit);
  if (!u) throw ContractError("unknown gradcheck unit '" + unit + "'");
  Rng rng(mix_seed(seed, name_hash(unit)));
  return u->fn(unit, rng);
}

}  // namespace c4net
