#pragma once

// Binary PGM (P5) and PPM (P6) with maxval 255.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace c4net {

// Planar (C,H,W) image with values in [0,1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

// Decodes P5 (1 channel) or P6 (3 channels). Throws FormatError on a bad
// header, maxval other than 255, or truncated pixel data.
Image decode_netpbm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const Image& img);
std::vector<std::uint8_t> encode_ppm(const Image& img);

Image load_pgm(const std::filesystem::path& path);
Image load_ppm(const std::filesystem::path& path);
void save_pgm(const std::filesystem::path& path, const Image& img);
void save_ppm(const std::filesystem::path& path, const Image& img);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace c4net
