#pragma once

// Shape-generic differentiable primitives: elementwise arithmetic with
// broadcasting of the right operand, channel concatenation, reductions.

#include <array>
#include <cstddef>
#include <vector>

#include "c4net/autograd.hpp"

namespace c4net {

enum class BinaryOp { add, sub, mul };

namespace detail {

// Strides of b when broadcast against a (both padded to rank 4).
inline std::array<std::size_t, 4> broadcast_strides(const Shape& a, const Shape& b) {
  if (a.rank() != b.rank()) {
    throw ShapeError("elementwise: rank mismatch " + a.str() + " vs " + b.str());
  }
  const auto da = a.as4();
  const auto db = b.as4();
  std::array<std::size_t, 4> stride{};
  std::size_t s = 1;
  for (int i = 3; i >= 0; --i) {
    const auto k = static_cast<std::size_t>(i);
    if (db[k] == da[k]) {
      stride[k] = s;
    } else if (db[k] == 1) {
      stride[k] = 0;
    } else {
      throw ShapeError("elementwise: " + b.str() + " does not broadcast to " + a.str());
    }
    s *= static_cast<std::size_t>(db[k]);
  }
  return stride;
}

template <typename F>
void for_each_broadcast(const Shape& a, const std::array<std::size_t, 4>& bs, F&& f) {
  const auto d = a.as4();
  std::size_t ia = 0;
  for (int n = 0; n < d[0]; ++n) {
    for (int c = 0; c < d[1]; ++c) {
      for (int h = 0; h < d[2]; ++h) {
        std::size_t ib = static_cast<std::size_t>(n) * bs[0] + static_cast<std::size_t>(c) * bs[1] +
                         static_cast<std::size_t>(h) * bs[2];
        for (int w = 0; w < d[3]; ++w, ++ia, ib += bs[3]) f(ia, ib);
      }
    }
  }
}

}  // namespace detail

// a (op) b where b either matches a or broadcasts along its size-1 axes,
// e.g. (N,C,1,1) per-channel or (N,1,H,W) per-pixel.
template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b) {
  const auto bs = detail::broadcast_strides(a.shape(), b.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(av.size());
  switch (op) {
    case BinaryOp::add:
      detail::for_each_broadcast(a.shape(), bs, [&](std::size_t i, std::size_t j) { out[i] = av[i] + bv[j]; });
      break;
    case BinaryOp::sub:
      detail::for_each_broadcast(a.shape(), bs, [&](std::size_t i, std::size_t j) { out[i] = av[i] - bv[j]; });
      break;
    case BinaryOp::mul:
      detail::for_each_broadcast(a.shape(), bs, [&](std::size_t i, std::size_t j) { out[i] = av[i] * bv[j]; });
      break;
  }
  const Shape shape = a.shape();
  return make_result<T>(shape, std::move(out), {a.node_ptr(), b.node_ptr()}, [op, bs, shape](Node<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    const auto& g = self.grad;
    if (na.requires_grad) {
      auto& ga = na.ensure_grad();
      if (op == BinaryOp::mul) {
        const auto& bv = nb.value;
        detail::for_each_broadcast(shape, bs, [&](std::size_t i, std::size_t j) { ga[i] += g[i] * bv[j]; });
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
    }
    if (nb.requires_grad) {
      auto& gb = nb.ensure_grad();
      switch (op) {
        case BinaryOp::add:
          detail::for_each_broadcast(shape, bs, [&](std::size_t i, std::size_t j) { gb[j] += g[i]; });
          break;
        case BinaryOp::sub:
          detail::for_each_broadcast(shape, bs, [&](std::size_t i, std::size_t j) { gb[j] -= g[i]; });
          break;
        case BinaryOp::mul: {
          const auto& av = na.value;
          detail::for_each_broadcast(shape, bs, [&](std::size_t i, std::size_t j) { gb[j] += g[i] * av[i]; });
          break;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(BinaryOp::add, a, b);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(BinaryOp::sub, a, b);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(BinaryOp::mul, a, b);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.values());
  for (auto& v : out) v *= factor;
  return make_result<T>(x.shape(), std::move(out), {x.node_ptr()}, [factor](Node<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * self.grad[i];
  });
}

// Concatenation along the channel axis of rank-4 tensors.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& s0 = parts.front().shape();
  if (s0.rank() != 4) throw ShapeError("concat_channels: rank-4 inputs required");
  int channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.rank() != 4 || s.n() != s0.n() || s.h() != s0.h() || s.w() != s0.w()) {
      throw ShapeError("concat_channels: " + s.str() + " does not align with " + s0.str());
    }
    channels += s.c();
  }
  const Shape out_shape{s0.n(), channels, s0.h(), s0.w()};
  const std::size_t plane = static_cast<std::size_t>(s0.h()) * static_cast<std::size_t>(s0.w());
  std::vector<T> out(out_shape.numel());
  std::vector<int> offsets;
  std::vector<typename Tensor<T>::NodePtr> inputs;
  int c0 = 0;
  for (const auto& p : parts) {
    offsets.push_back(c0);
    inputs.push_back(p.node_ptr());
    const auto& v = p.values();
    const int pc = p.shape().c();
    for (int n = 0; n < s0.n(); ++n) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(n * pc) * plane),
                  static_cast<std::size_t>(pc) * plane,
                  out.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(n * channels + c0) * plane));
    }
    c0 += pc;
  }
  return make_result<T>(out_shape, std::move(out), std::move(inputs), [offsets, channels, plane](Node<T>& self) {
    const int batch = self.shape.n();
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      auto& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      auto& g = in.ensure_grad();
      const int pc = in.shape.c();
      for (int n = 0; n < batch; ++n) {
        const std::size_t src = static_cast<std::size_t>(n * channels + offsets[k]) * plane;
        const std::size_t dst = static_cast<std::size_t>(n * pc) * plane;
        for (std::size_t i = 0; i < static_cast<std::size_t>(pc) * plane; ++i) g[dst + i] += self.grad[src + i];
      }
    }
  });
}

// Sum of all elements, shape (1).
template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.values()) acc += v;
  return make_result<T>(Shape{1}, {acc}, {x.node_ptr()}, [](Node<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    for (auto& g : gx) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// Same data under a new shape with equal element count.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
  if (shape.numel() != x.numel()) {
    throw ShapeError("reshape: " + x.shape().str() + " -> " + shape.str());
  }
  return make_result<T>(shape, x.values(), {x.node_ptr()}, [](Node<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

}  // namespace c4net
