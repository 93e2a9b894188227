#include "c4net/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "c4net/errors.hpp"
#include "c4net/layers.hpp"

namespace c4net {

namespace {

using Color = std::array<double, 3>;

double grey(const Color& c) { return (c[0] + c[1] + c[2]) / 3.0; }

Color random_color(Rng& rng) { return {uniform01(rng), uniform01(rng), uniform01(rng)}; }

enum class ShapeKind { ellipse, rectangle, triangle };

struct ShapeDesc {
  ShapeKind kind;
  double cx, cy;
  double rx, ry;
  double angle;
  std::array<double, 6> tri;  // triangle vertices (x0,y0,x1,y1,x2,y2)
  Color color;
};

bool inside(const ShapeDesc& s, double x, double y) {
  switch (s.kind) {
    case ShapeKind::ellipse:
    case ShapeKind::rectangle: {
      const double dx = x - s.cx;
      const double dy = y - s.cy;
      const double ca = std::cos(s.angle);
      const double sa = std::sin(s.angle);
      const double u = (ca * dx + sa * dy) / s.rx;
      const double v = (-sa * dx + ca * dy) / s.ry;
      return s.kind == ShapeKind::ellipse ? u * u + v * v <= 1.0 : std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
    }
    case ShapeKind::triangle: {
      const auto& t = s.tri;
      auto edge = [&](int a, int b) {
        return (t[2 * b] - t[2 * a]) * (y - t[2 * a + 1]) - (t[2 * b + 1] - t[2 * a + 1]) * (x - t[2 * a]);
      };
      const double e0 = edge(0, 1);
      const double e1 = edge(1, 2);
      const double e2 = edge(2, 0);
      return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
    }
  }
  return false;
}

ShapeDesc random_shape(Rng& rng, int size, const Color& background) {
  ShapeDesc s{};
  s.kind = static_cast<ShapeKind>(uniform_int(rng, 0, 2));
  const double n = size;
  s.cx = uniform(rng, 0.2 * n, 0.8 * n);
  s.cy = uniform(rng, 0.2 * n, 0.8 * n);
  s.rx = uniform(rng, 0.08 * n, 0.28 * n);
  s.ry = uniform(rng, 0.08 * n, 0.28 * n);
  s.angle = uniform(rng, 0.0, std::numbers::pi);
  for (int k = 0; k < 3; ++k) {
    const double a = s.angle + 2.0 * std::numbers::pi * k / 3.0 + uniform(rng, -0.4, 0.4);
    const double r = uniform(rng, 0.12 * n, 0.3 * n);
    s.tri[static_cast<std::size_t>(2 * k)] = s.cx + r * std::cos(a);
    s.tri[static_cast<std::size_t>(2 * k + 1)] = s.cy + r * std::sin(a);
  }
  do {
    s.color = random_color(rng);
  } while (std::abs(grey(s.color) - grey(background)) < kMinContrast + 0.05);
  return s;
}

ToySample render(Rng& rng, int size, int index) {
  ToySample out;
  char id[32];
  std::snprintf(id, sizeof id, "toy_%05d", index);
  out.id = id;
  for (;;) {
    const Color bg = random_color(rng);
    const int count = uniform_int(rng, 1, 3);
    std::vector<ShapeDesc> shapes;
    for (int k = 0; k < count; ++k) shapes.push_back(random_shape(rng, size, bg));
    // Background texture: two oriented stripe patterns plus fine noise,
    // bounded by +-0.05 so the colour contrast survives.
    const double f1 = uniform(rng, 0.2, 0.8);
    const double f2 = uniform(rng, 0.2, 0.8);
    const double ph = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    Image image(3, size, size);
    Image mask(1, size, size);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double px = x + 0.5;
        const double py = y + 0.5;
        const ShapeDesc* hit = nullptr;
        for (const auto& s : shapes) {
          if (inside(s, px, py)) hit = &s;
        }
        const double tex = 0.025 * std::sin(f1 * px + ph) + 0.015 * std::sin(f2 * py - ph);
        for (int c = 0; c < 3; ++c) {
          const double noise = uniform(rng, -0.01, 0.01);
          const double base = hit ? hit->color[static_cast<std::size_t>(c)] + noise : bg[static_cast<std::size_t>(c)] + tex + noise;
          image.at(c, y, x) = static_cast<float>(std::clamp(base, 0.0, 1.0));
        }
        mask.at(0, y, x) = hit ? 1.0f : 0.0f;
      }
    }
    const double cov = mask_coverage(mask);
    if (cov >= kMinCoverage && cov <= kMaxCoverage) {
      out.image = std::move(image);
      out.mask = std::move(mask);
      return out;
    }
  }
}

}  // namespace

double mask_coverage(const Image& mask) {
  double acc = 0.0;
  for (float v : mask.data) acc += v;
  return acc / static_cast<double>(mask.data.size());
}

std::vector<ToySample> generate_dataset(int n, int size, std::uint64_t seed) {
  if (n < 1) throw ContractError("generate_dataset: n must be >= 1");
  if (size != 32 && size != 64 && size != 128) throw ContractError("generate_dataset: size must be 32, 64 or 128");
  std::vector<ToySample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    out.push_back(render(rng, size, i));
  }
  return out;
}

ToySample crop_resize(const ToySample& sample, int top, int left, int extent) {
  const int h = sample.image.height;
  const int w = sample.image.width;
  if (extent <= 0 || top < 0 || left < 0 || top + extent > h || left + extent > w) {
    throw ContractError("crop_resize: crop window outside the image");
  }
  ToySample out;
  out.id = sample.id;
  out.image = Image(sample.image.channels, h, w);
  out.mask = Image(1, h, w);
  const auto ty = detail::bilinear_taps(extent, h);
  const auto tx = detail::bilinear_taps(extent, w);
  for (int c = 0; c < sample.image.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      const auto& a = ty[static_cast<std::size_t>(y)];
      for (int x = 0; x < w; ++x) {
        const auto& b = tx[static_cast<std::size_t>(x)];
        auto src = [&](int yy, int xx) { return static_cast<double>(sample.image.at(c, top + yy, left + xx)); };
        const double v0 = (1 - b.frac) * src(a.i0, b.i0) + b.frac * src(a.i0, b.i1);
        const double v1 = (1 - b.frac) * src(a.i1, b.i0) + b.frac * src(a.i1, b.i1);
        out.image.at(c, y, x) = static_cast<float>((1 - a.frac) * v0 + a.frac * v1);
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(extent - 1, static_cast<int>((y + 0.5) * extent / h));
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(extent - 1, static_cast<int>((x + 0.5) * extent / w));
      out.mask.at(0, y, x) = sample.mask.at(0, top + sy, left + sx);
    }
  }
  return out;
}

ToySample flip_horizontal(const ToySample& sample) {
  ToySample out = sample;
  auto flip = [](const Image& in, Image& dst) {
    for (int c = 0; c < in.channels; ++c) {
      for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) dst.at(c, y, x) = in.at(c, y, in.width - 1 - x);
      }
    }
  };
  flip(sample.image, out.image);
  flip(sample.mask, out.mask);
  return out;
}

ToySample augment(const ToySample& sample, Rng& rng, const AugmentOptions& opts) {
  ToySample out = sample;
  if (opts.crop) {
    const int h = sample.image.height;
    const double frac = uniform(rng, opts.min_crop, 1.0);
    const int extent = std::clamp(static_cast<int>(std::lround(frac * h)), 1, h);
    const int top = uniform_int(rng, 0, h - extent);
    const int left = uniform_int(rng, 0, h - extent);
    out = crop_resize(out, top, left, extent);
  }
  if (opts.flip && bernoulli(rng, 0.5)) out = flip_horizontal(out);
  return out;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<ToySample>& samples) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  for (const auto& s : samples) {
    save_ppm(dir / "images" / (s.id + ".ppm"), s.image);
    save_pgm(dir / "masks" / (s.id + ".pgm"), s.mask);
  }
}

std::vector<ToySample> load_dataset(const std::filesystem::path& dir) {
  const auto images = dir / "images";
  const auto masks = dir / "masks";
  if (!std::filesystem::is_directory(images) || !std::filesystem::is_directory(masks)) {
    throw FormatError(dir.string() + ": expected images/ and masks/ subdirectories");
  }
  std::vector<std::string> stems;
  for (const auto& e : std::filesystem::directory_iterator(images)) {
    if (e.path().extension() == ".ppm" && std::filesystem::exists(masks / (e.path().stem().string() + ".pgm"))) {
      stems.push_back(e.path().stem().string());
    }
  }
  std::sort(stems.begin(), stems.end());
  std::vector<ToySample> out;
  for (const auto& stem : stems) {
    ToySample s;
    s.id = stem;
    s.image = load_ppm(images / (stem + ".ppm"));
    s.mask = load_pgm(masks / (stem + ".pgm"));
    if (s.mask.height != s.image.height || s.mask.width != s.image.width) {
      throw FormatError(stem + ": image and mask sizes differ");
    }
    for (auto& v : s.mask.data) v = v >= 128.0f / 255.0f ? 1.0f : 0.0f;
    out.push_back(std::move(s));
  }
  return out;
}

DataSplit load_split(const std::filesystem::path& dir, double val_fraction) {
  DataSplit split;
  if (std::filesystem::is_directory(dir / "train") && std::filesystem::is_directory(dir / "val")) {
    split.train = load_dataset(dir / "train");
    split.val = load_dataset(dir / "val");
  } else {
    split.train = load_dataset(dir);
    const auto n = split.train.size();
    const auto held = std::min(n, static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n))));
    split.val.assign(split.train.end() - static_cast<std::ptrdiff_t>(held), split.train.end());
    split.train.resize(n - held);
  }
  if (split.train.empty()) throw FormatError(dir.string() + ": no training samples");
  return split;
}

Image downsample_mask(const Image& mask, int size) {
  Image out(1, size, size);
  for (int y = 0; y < size; ++y) {
    const auto [y0, y1] = detail::adaptive_bin(y, mask.height, size);
    for (int x = 0; x < size; ++x) {
      const auto [x0, x1] = detail::adaptive_bin(x, mask.width, size);
      double acc = 0.0;
      for (int yy = y0; yy < y1; ++yy) {
        for (int xx = x0; xx < x1; ++xx) acc += mask.at(0, yy, xx);
      }
      out.at(0, y, x) = acc / ((y1 - y0) * (x1 - x0)) >= 0.5 ? 1.0f : 0.0f;
    }
  }
  return out;
}

}  // namespace c4net
