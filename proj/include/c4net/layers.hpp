#pragma once

// Differentiable image operators on NCHW tensors.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "c4net/autograd.hpp"
#include "c4net/ops.hpp"

namespace c4net {

enum class Mode { train, eval };

struct Conv2dSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  bool bias = false;

  // Stride-1 convolution that keeps the spatial size.
  static Conv2dSpec same(int in, int out, int kernel, bool bias = false) {
    return {in, out, kernel, 1, kernel / 2, bias};
  }
};

namespace detail {

// Records the discrete choices of non-smooth operators (ReLU signs, window
// max/min positions) while active, so a finite-difference probe can tell
// whether its stencil crossed a kink.
struct KinkTrace {
  bool active = false;
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  void mix(std::uint64_t v) { hash = (hash ^ v) * 0x100000001b3ULL; }
  // Sign with a dead band, so rounding noise around zero is not a choice.
  template <typename T>
  void mix_sign(T v) {
    mix(v > T(1e-10) ? 1 : (v < T(-1e-10) ? 2 : 0));
  }
};

inline KinkTrace& kink_trace() {
  thread_local KinkTrace trace;
  return trace;
}


inline void require_rank4(const Shape& s, const char* op) {
  if (s.rank() != 4) throw ShapeError(std::string(op) + ": expected NCHW tensor, got " + s.str());
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// cols[(c*k + ky)*k + kx][oy*wo + ox] = x[c][oy*s - p + ky][ox*s - p + kx]
template <typename T>
void im2col(const T* x, int channels, int h, int w, int k, int stride, int pad, int ho, int wo, T* cols) {
  for (int c = 0; c < channels; ++c) {
    const T* plane = x + static_cast<std::ptrdiff_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + static_cast<std::ptrdiff_t>((c * k + ky) * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + static_cast<std::ptrdiff_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill_n(dst, wo, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::ptrdiff_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int channels, int h, int w, int k, int stride, int pad, int ho, int wo, T* x) {
  for (int c = 0; c < channels; ++c) {
    T* plane = x + static_cast<std::ptrdiff_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + static_cast<std::ptrdiff_t>((c * k + ky) * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* dst = plane + static_cast<std::ptrdiff_t>(iy) * w;
          const T* src = row + static_cast<std::ptrdiff_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Half-pixel source coordinate for resampling `in` samples onto `out`.
struct LerpTap {
  int i0;
  int i1;
  double frac;
};

inline std::vector<LerpTap> bilinear_taps(int in, int out) {
  std::vector<LerpTap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<std::size_t>(d)] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

// Bin [start, end) of output cell i when splitting `in` into `out` parts.
inline std::pair<int, int> adaptive_bin(int i, int in, int out) {
  const int start = (i * in) / out;
  const int end = ((i + 1) * in + out - 1) / out;
  return {start, end};
}

}  // namespace detail

// 2-D cross-correlation. weight (Cout, Cin, k, k), optional bias (Cout).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias,
                 const Conv2dSpec& spec) {
  using Mat = detail::RowMat<T>;
  detail::require_rank4(x.shape(), "conv2d");
  const Shape& xs = x.shape();
  if (xs.c() != spec.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(xs.c()) + " channels, expected " +
                     std::to_string(spec.in_channels));
  }
  const int k = spec.kernel;
  if (!(weight.shape() == Shape{spec.out_channels, spec.in_channels, k, k})) {
    throw ShapeError("conv2d: weight shape " + weight.shape().str());
  }
  if (bias && !(bias->shape() == Shape{spec.out_channels})) throw ShapeError("conv2d: bias shape");
  const int ho = (xs.h() + 2 * spec.padding - k) / spec.stride + 1;
  const int wo = (xs.w() + 2 * spec.padding - k) / spec.stride + 1;
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: kernel larger than padded input");

  const int batch = xs.n();
  const int cin = spec.in_channels;
  const int cout = spec.out_channels;
  const Eigen::Index kk = static_cast<Eigen::Index>(cin) * k * k;
  const Eigen::Index pix = static_cast<Eigen::Index>(ho) * wo;
  const bool pointwise = (k == 1 && spec.stride == 1 && spec.padding == 0);

  auto cols = std::make_shared<std::vector<T>>();
  if (!pointwise) cols->resize(static_cast<std::size_t>(batch * kk * pix));
  Shape out_shape{batch, cout, ho, wo};
  std::vector<T> out(out_shape.numel());
  Eigen::Map<const Mat> wm(weight.values().data(), cout, kk);
  for (int n = 0; n < batch; ++n) {
    const T* xn = x.values().data() + static_cast<std::ptrdiff_t>(n) * cin * xs.h() * xs.w();
    const T* cn = xn;
    if (!pointwise) {
      T* dst = cols->data() + static_cast<std::ptrdiff_t>(n) * kk * pix;
      detail::im2col(xn, cin, xs.h(), xs.w(), k, spec.stride, spec.padding, ho, wo, dst);
      cn = dst;
    }
    Eigen::Map<const Mat> cm(cn, kk, pix);
    Eigen::Map<Mat> om(out.data() + static_cast<std::ptrdiff_t>(n) * cout * pix, cout, pix);
    om.noalias() = wm * cm;
    if (bias) {
      for (int o = 0; o < cout; ++o) om.row(o).array() += bias->values()[static_cast<std::size_t>(o)];
    }
  }

  std::vector<typename Tensor<T>::NodePtr> inputs{x.node_ptr(), weight.node_ptr()};
  if (bias) inputs.push_back(bias->node_ptr());
  return make_result<T>(out_shape, std::move(out), std::move(inputs),
                        [spec, cols, batch, kk, pix, pointwise](Node<T>& self) {
                          auto& nx = *self.inputs[0];
                          auto& nw = *self.inputs[1];
                          const int cin = spec.in_channels;
                          const int cout = spec.out_channels;
                          const int h = nx.shape.h();
                          const int w = nx.shape.w();
                          const int ho = self.shape.h();
                          const int wo = self.shape.w();
                          Eigen::Map<const Mat> wm(nw.value.data(), cout, kk);
                          Mat dcols;
                          for (int n = 0; n < batch; ++n) {
                            Eigen::Map<const Mat> go(self.grad.data() + static_cast<std::ptrdiff_t>(n) * cout * pix, cout,
                                                     pix);
                            const T* cn = pointwise
                                              ? nx.value.data() + static_cast<std::ptrdiff_t>(n) * cin * h * w
                                              : cols->data() + static_cast<std::ptrdiff_t>(n) * kk * pix;
                            Eigen::Map<const Mat> cm(cn, kk, pix);
                            if (nw.requires_grad) {
                              Eigen::Map<Mat> gw(nw.ensure_grad().data(), cout, kk);
                              gw.noalias() += go * cm.transpose();
                            }
                            if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                              auto& gb = self.inputs[2]->ensure_grad();
                              for (int o = 0; o < cout; ++o) gb[static_cast<std::size_t>(o)] += go.row(o).sum();
                            }
                            if (nx.requires_grad) {
                              T* gx = nx.ensure_grad().data() + static_cast<std::ptrdiff_t>(n) * cin * h * w;
                              if (pointwise) {
                                Eigen::Map<Mat> gxm(gx, kk, pix);
                                gxm.noalias() += wm.transpose() * go;
                              } else {
                                dcols.noalias() = wm.transpose() * go;
                                detail::col2im_add(dcols.data(), cin, h, w, spec.kernel, spec.stride, spec.padding, ho, wo,
                                                   gx);
                              }
                            }
                          }
                        });
}

// Per-channel batch normalisation. running_mean / running_var are mutated
// in train mode (momentum 0.1, unbiased variance estimate).
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, std::vector<T>& running_mean,
                    std::vector<T>& running_var, Mode mode, T eps = T(1e-5), T momentum = T(0.1)) {
  detail::require_rank4(x.shape(), "batchnorm");
  const Shape& s = x.shape();
  const int channels = s.c();
  const auto cs = static_cast<std::size_t>(channels);
  if (gamma.numel() != cs || beta.numel() != cs || running_mean.size() != cs || running_var.size() != cs) {
    throw ShapeError("batchnorm: parameters do not match " + std::to_string(channels) + " channels");
  }
  const std::size_t plane = static_cast<std::size_t>(s.h()) * static_cast<std::size_t>(s.w());
  const std::size_t count = plane * static_cast<std::size_t>(s.n());
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();

  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(cs);
  std::vector<T> out(xv.size());
  for (int c = 0; c < channels; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    T mu;
    T var;
    if (mode == Mode::train) {
      T acc = T(0);
      for (int n = 0; n < s.n(); ++n) {
        const T* p = xv.data() + (static_cast<std::size_t>(n) * cs + ci) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      }
      mu = acc / static_cast<T>(count);
      T sq = T(0);
      for (int n = 0; n < s.n(); ++n) {
        const T* p = xv.data() + (static_cast<std::size_t>(n) * cs + ci) * plane;
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      var = sq / static_cast<T>(count);
      const T unbiased = count > 1 ? sq / static_cast<T>(count - 1) : var;
      running_mean[ci] = (T(1) - momentum) * running_mean[ci] + momentum * mu;
      running_var[ci] = (T(1) - momentum) * running_var[ci] + momentum * unbiased;
    } else {
      mu = running_mean[ci];
      var = running_var[ci];
    }
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[ci] = is;
    for (int n = 0; n < s.n(); ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * cs + ci) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = (xv[off + i] - mu) * is;
        (*xhat)[off + i] = xh;
        out[off + i] = gv[ci] * xh + bv[ci];
      }
    }
  }

  return make_result<T>(
      s, std::move(out), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
      [xhat, inv_std, mode, plane, count](Node<T>& self) {
        auto& nx = *self.inputs[0];
        auto& ng = *self.inputs[1];
        auto& nb = *self.inputs[2];
        const int channels = self.shape.c();
        const auto cs = static_cast<std::size_t>(channels);
        const auto& g = self.grad;
        for (int c = 0; c < channels; ++c) {
          const auto ci = static_cast<std::size_t>(c);
          T sum_g = T(0);
          T sum_gx = T(0);
          for (int n = 0; n < self.shape.n(); ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * cs + ci) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_g += g[off + i];
              sum_gx += g[off + i] * (*xhat)[off + i];
            }
          }
          if (ng.requires_grad) ng.ensure_grad()[ci] += sum_gx;
          if (nb.requires_grad) nb.ensure_grad()[ci] += sum_g;
          if (!nx.requires_grad) continue;
          auto& gx = nx.ensure_grad();
          const T gamma_c = ng.value[ci];
          const T is = (*inv_std)[ci];
          for (int n = 0; n < self.shape.n(); ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * cs + ci) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              if (mode == Mode::train) {
                const T m = static_cast<T>(count);
                gx[off + i] += gamma_c * is / m * (m * g[off + i] - sum_g - (*xhat)[off + i] * sum_gx);
              } else {
                gx[off + i] += gamma_c * is * g[off + i];
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.values());
  // NaN passes through so a diverged network still shows up in the loss.
  for (auto& v : out) v = v > T(0) || std::isnan(v) ? v : T(0);
  if (auto& kt = detail::kink_trace(); kt.active) {
    for (T v : x.values()) kt.mix_sign(v);
  }
  return make_result<T>(x.shape(), std::move(out), {x.node_ptr()}, [](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& gx = in.ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (in.value[i] > T(0)) gx[i] += self.grad[i];
    }
  });
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.values());
  for (auto& v : out) v = sigmoid_scalar(v);
  return make_result<T>(x.shape(), std::move(out), {x.node_ptr()}, [](Node<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T s = self.value[i];
      gx[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

// Average pooling without padding.
template <typename T>
Tensor<T> avg_pool(const Tensor<T>& x, int kernel, int stride) {
  detail::require_rank4(x.shape(), "avg_pool");
  const Shape& s = x.shape();
  if (kernel <= 0 || stride <= 0) throw ContractError("avg_pool: kernel and stride must be positive");
  if (kernel > s.h() || kernel > s.w()) {
    throw ShapeError("avg_pool: kernel " + std::to_string(kernel) + " exceeds " + s.str());
  }
  const int ho = (s.h() - kernel) / stride + 1;
  const int wo = (s.w() - kernel) / stride + 1;
  const Shape out_shape{s.n(), s.c(), ho, wo};
  const T inv = T(1) / static_cast<T>(kernel * kernel);
  std::vector<T> out(out_shape.numel(), T(0));
  const auto& xv = x.values();
  const int planes = s.n() * s.c();
  for (int p = 0; p < planes; ++p) {
    const T* src = xv.data() + static_cast<std::ptrdiff_t>(p) * s.h() * s.w();
    T* dst = out.data() + static_cast<std::ptrdiff_t>(p) * ho * wo;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        T acc = T(0);
        for (int ky = 0; ky < kernel; ++ky) {
          for (int kx = 0; kx < kernel; ++kx) acc += src[(oy * stride + ky) * s.w() + ox * stride + kx];
        }
        dst[oy * wo + ox] = acc * inv;
      }
    }
  }
  return make_result<T>(out_shape, std::move(out), {x.node_ptr()}, [kernel, stride, inv](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& gx = in.ensure_grad();
    const int h = in.shape.h();
    const int w = in.shape.w();
    const int ho = self.shape.h();
    const int wo = self.shape.w();
    const int planes = self.shape.n() * self.shape.c();
    for (int p = 0; p < planes; ++p) {
      T* dst = gx.data() + static_cast<std::ptrdiff_t>(p) * h * w;
      const T* g = self.grad.data() + static_cast<std::ptrdiff_t>(p) * ho * wo;
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const T v = g[oy * wo + ox] * inv;
          for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) dst[(oy * stride + ky) * w + ox * stride + kx] += v;
          }
        }
      }
    }
  });
}

// Splits each axis into near-equal bins (floor start, ceil end) and averages.
template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, int out_h, int out_w) {
  detail::require_rank4(x.shape(), "adaptive_avg_pool");
  const Shape& s = x.shape();
  if (out_h <= 0 || out_w <= 0 || out_h > s.h() || out_w > s.w()) {
    throw ShapeError("adaptive_avg_pool: output " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " does not fit " + s.str());
  }
  const Shape out_shape{s.n(), s.c(), out_h, out_w};
  std::vector<T> out(out_shape.numel());
  const auto& xv = x.values();
  const int planes = s.n() * s.c();
  for (int p = 0; p < planes; ++p) {
    const T* src = xv.data() + static_cast<std::ptrdiff_t>(p) * s.h() * s.w();
    for (int oy = 0; oy < out_h; ++oy) {
      const auto [y0, y1] = detail::adaptive_bin(oy, s.h(), out_h);
      for (int ox = 0; ox < out_w; ++ox) {
        const auto [x0, x1] = detail::adaptive_bin(ox, s.w(), out_w);
        T acc = T(0);
        for (int yy = y0; yy < y1; ++yy) {
          for (int xx = x0; xx < x1; ++xx) acc += src[yy * s.w() + xx];
        }
        out[(static_cast<std::size_t>(p) * out_h + oy) * out_w + ox] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
  return make_result<T>(out_shape, std::move(out), {x.node_ptr()}, [](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& gx = in.ensure_grad();
    const int h = in.shape.h();
    const int w = in.shape.w();
    const int oh = self.shape.h();
    const int ow = self.shape.w();
    const int planes = self.shape.n() * self.shape.c();
    for (int p = 0; p < planes; ++p) {
      T* dst = gx.data() + static_cast<std::ptrdiff_t>(p) * h * w;
      for (int oy = 0; oy < oh; ++oy) {
        const auto [y0, y1] = detail::adaptive_bin(oy, h, oh);
        for (int ox = 0; ox < ow; ++ox) {
          const auto [x0, x1] = detail::adaptive_bin(ox, w, ow);
          const T v = self.grad[(static_cast<std::size_t>(p) * oh + oy) * ow + ox] / static_cast<T>((y1 - y0) * (x1 - x0));
          for (int yy = y0; yy < y1; ++yy) {
            for (int xx = x0; xx < x1; ++xx) dst[yy * w + xx] += v;
          }
        }
      }
    }
  });
}

// (N,C,H,W) -> (N,C) spatial mean.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const Shape& s = x.shape();
  return reshape(adaptive_avg_pool(x, 1, 1), Shape{s.n(), s.c()});
}

// Bilinear upsampling with half-pixel centres (align_corners = false).
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int out_h, int out_w) {
  detail::require_rank4(x.shape(), "bilinear_upsample");
  const Shape& s = x.shape();
  if (out_h < s.h() || out_w < s.w()) {
    throw ContractError("bilinear_upsample: cannot shrink " + s.str() + " to " + std::to_string(out_h) + "x" +
                        std::to_string(out_w));
  }
  const auto ty = detail::bilinear_taps(s.h(), out_h);
  const auto tx = detail::bilinear_taps(s.w(), out_w);
  const Shape out_shape{s.n(), s.c(), out_h, out_w};
  std::vector<T> out(out_shape.numel());
  const auto& xv = x.values();
  const int planes = s.n() * s.c();
  for (int p = 0; p < planes; ++p) {
    const T* src = xv.data() + static_cast<std::ptrdiff_t>(p) * s.h() * s.w();
    T* dst = out.data() + static_cast<std::ptrdiff_t>(p) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[static_cast<std::size_t>(oy)];
      const T fy = static_cast<T>(a.frac);
      for (int ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[static_cast<std::size_t>(ox)];
        const T fx = static_cast<T>(b.frac);
        const T top = (T(1) - fx) * src[a.i0 * s.w() + b.i0] + fx * src[a.i0 * s.w() + b.i1];
        const T bot = (T(1) - fx) * src[a.i1 * s.w() + b.i0] + fx * src[a.i1 * s.w() + b.i1];
        dst[oy * out_w + ox] = (T(1) - fy) * top + fy * bot;
      }
    }
  }
  return make_result<T>(out_shape, std::move(out), {x.node_ptr()}, [ty, tx](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& gx = in.ensure_grad();
    const int h = in.shape.h();
    const int w = in.shape.w();
    const int oh = self.shape.h();
    const int ow = self.shape.w();
    const int planes = self.shape.n() * self.shape.c();
    for (int p = 0; p < planes; ++p) {
      T* dst = gx.data() + static_cast<std::ptrdiff_t>(p) * h * w;
      const T* g = self.grad.data() + static_cast<std::ptrdiff_t>(p) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        const auto& a = ty[static_cast<std::size_t>(oy)];
        const T fy = static_cast<T>(a.frac);
        for (int ox = 0; ox < ow; ++ox) {
          const auto& b = tx[static_cast<std::size_t>(ox)];
          const T fx = static_cast<T>(b.frac);
          const T v = g[oy * ow + ox];
          dst[a.i0 * w + b.i0] += (T(1) - fy) * (T(1) - fx) * v;
          dst[a.i0 * w + b.i1] += (T(1) - fy) * fx * v;
          dst[a.i1 * w + b.i0] += fy * (T(1) - fx) * v;
          dst[a.i1 * w + b.i1] += fy * fx * v;
        }
      }
    }
  });
}

// Resizes to (out_h, out_w), passing the tensor through untouched when the
// size already matches.
template <typename T>
Tensor<T> upsample_to(const Tensor<T>& x, int out_h, int out_w) {
  if (x.shape().h() == out_h && x.shape().w() == out_w) return x;
  return bilinear_upsample(x, out_h, out_w);
}

// v (N, Cin) -> v W^T + b, W (Cout, Cin), b (Cout).
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& v, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias) {
  using Mat = detail::RowMat<T>;
  const Shape& vs = v.shape();
  if (vs.rank() != 2) throw ShapeError("fully_connected: expected (N,C) input, got " + vs.str());
  const Shape& ws = weight.shape();
  if (ws.rank() != 2 || ws[1] != vs[1]) {
    throw ShapeError("fully_connected: weight " + ws.str() + " does not accept " + vs.str());
  }
  const int batch = vs[0];
  const int cin = vs[1];
  const int cout = ws[0];
  if (bias && !(bias->shape() == Shape{cout})) throw ShapeError("fully_connected: bias shape");
  Eigen::Map<const Mat> vm(v.values().data(), batch, cin);
  Eigen::Map<const Mat> wm(weight.values().data(), cout, cin);
  std::vector<T> out(static_cast<std::size_t>(batch) * static_cast<std::size_t>(cout));
  Eigen::Map<Mat> om(out.data(), batch, cout);
  om.noalias() = vm * wm.transpose();
  if (bias) {
    for (int n = 0; n < batch; ++n) {
      for (int o = 0; o < cout; ++o) om(n, o) += bias->values()[static_cast<std::size_t>(o)];
    }
  }
  std::vector<typename Tensor<T>::NodePtr> inputs{v.node_ptr(), weight.node_ptr()};
  if (bias) inputs.push_back(bias->node_ptr());
  return make_result<T>(Shape{batch, cout}, std::move(out), std::move(inputs), [batch, cin, cout](Node<T>& self) {
    auto& nv = *self.inputs[0];
    auto& nw = *self.inputs[1];
    Eigen::Map<const Mat> g(self.grad.data(), batch, cout);
    if (nv.requires_grad) {
      Eigen::Map<Mat> gv(nv.ensure_grad().data(), batch, cin);
      Eigen::Map<const Mat> wm(nw.value.data(), cout, cin);
      gv.noalias() += g * wm;
    }
    if (nw.requires_grad) {
      Eigen::Map<Mat> gw(nw.ensure_grad().data(), cout, cin);
      Eigen::Map<const Mat> vm(nv.value.data(), batch, cin);
      gw.noalias() += g.transpose() * vm;
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      auto& gb = self.inputs[2]->ensure_grad();
      for (int o = 0; o < cout; ++o) gb[static_cast<std::size_t>(o)] += g.col(o).sum();
    }
  });
}

namespace detail {

// Sliding-window extremum with same padding. The pad value only wins when
// it strictly beats every in-bounds element; in that case no gradient flows.
template <typename T, bool Max>
Tensor<T> window_extremum(const Tensor<T>& x, int kernel, T pad_value, const char* op) {
  require_rank4(x.shape(), op);
  if (kernel <= 0 || kernel % 2 == 0) {
    throw ContractError(std::string(op) + ": kernel must be odd and positive, got " + std::to_string(kernel));
  }
  const Shape& s = x.shape();
  const int r = kernel / 2;
  const int h = s.h();
  const int w = s.w();
  const int planes = s.n() * s.c();
  std::vector<T> out(x.numel());
  auto src_index = std::make_shared<std::vector<std::ptrdiff_t>>(x.numel(), -1);
  const auto& xv = x.values();
  auto better = [](T a, T b) { return Max ? a > b : a < b; };
  for (int p = 0; p < planes; ++p) {
    const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(p) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        T best = T(0);
        std::ptrdiff_t arg = -1;
        bool truncated = false;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = y + dy;
          if (yy < 0 || yy >= h) {
            truncated = true;
            continue;
          }
          for (int dx = -r; dx <= r; ++dx) {
            const int xs = xx + dx;
            if (xs < 0 || xs >= w) {
              truncated = true;
              continue;
            }
            const std::ptrdiff_t idx = base + static_cast<std::ptrdiff_t>(yy) * w + xs;
            const T v = xv[static_cast<std::size_t>(idx)];
            if (arg < 0 || better(v, best)) {
              best = v;
              arg = idx;
            }
          }
        }
        if (truncated && better(pad_value, best)) {
          best = pad_value;
          arg = -1;
        }
        const std::size_t o = static_cast<std::size_t>(base + static_cast<std::ptrdiff_t>(y) * w + xx);
        out[o] = best;
        (*src_index)[o] = arg;
        if (auto& kt = kink_trace(); kt.active) {
          // Near-ties (e.g. an upsampled constant map) count as one state.
          bool tie = false;
          for (int dy = -r; dy <= r && !tie; ++dy) {
            for (int dx = -r; dx <= r; ++dx) {
              const int yy = y + dy;
              const int xs = xx + dx;
              const bool inside = yy >= 0 && yy < h && xs >= 0 && xs < w;
              const std::ptrdiff_t idx = inside ? base + static_cast<std::ptrdiff_t>(yy) * w + xs : -1;
              if (idx == arg) continue;
              const T v = inside ? xv[static_cast<std::size_t>(idx)] : pad_value;
              if (std::abs(static_cast<double>(v - best)) <= 1e-10) {
                tie = true;
                break;
              }
            }
          }
          kt.mix(tie ? 0 : static_cast<std::uint64_t>(arg + 2));
        }
      }
    }
  }
  return make_result<T>(s, std::move(out), {x.node_ptr()}, [src_index](Node<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const std::ptrdiff_t j = (*src_index)[i];
      if (j >= 0) gx[static_cast<std::size_t>(j)] += self.grad[i];
    }
  });
}

}  // namespace detail

// Grey-scale dilation (window max, zero padding).
template <typename T>
Tensor<T> dilate(const Tensor<T>& mask, int kernel = 3) {
  return detail::window_extremum<T, true>(mask, kernel, T(0), "dilate");
}

// Grey-scale erosion (window min, padding with ones).
template <typename T>
Tensor<T> erode(const Tensor<T>& mask, int kernel = 3) {
  return detail::window_extremum<T, false>(mask, kernel, T(1), "erode");
}

}  // namespace c4net
