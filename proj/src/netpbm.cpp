#include "c4net/netpbm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "c4net/errors.hpp"

namespace c4net {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int read_int() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) throw FormatError("netpbm: header value out of range");
      ++pos_;
    }
    if (pos_ == start) throw FormatError("netpbm: expected a number in the header");
    return static_cast<int>(value);
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void expect_single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw FormatError("netpbm: missing raster separator");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

std::uint8_t quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

std::vector<std::uint8_t> encode(const Image& img, int channels, const char* magic) {
  if (img.channels != channels) {
    throw FormatError(std::string(magic) + " needs " + std::to_string(channels) + " channel(s), image has " +
                      std::to_string(img.channels));
  }
  const std::string header =
      std::string(magic) + "\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.data.size());
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < channels; ++c) out.push_back(quantize(img.at(c, y, x)));
    }
  }
  return out;
}

}  // namespace

Image decode_netpbm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("netpbm: expected P5 or P6 magic");
  }
  const int channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader rd(bytes);
  const int width = rd.read_int();
  const int height = rd.read_int();
  const int maxval = rd.read_int();
  if (width <= 0 || height <= 0) throw FormatError("netpbm: non-positive dimensions");
  if (maxval != 255) throw FormatError("netpbm: maxval must be 255, got " + std::to_string(maxval));
  rd.expect_single_space();
  const std::size_t need = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * channels;
  if (bytes.size() - rd.pos() < need) throw FormatError("netpbm: truncated pixel data");
  Image img(channels, height, width);
  const std::uint8_t* px = bytes.data() + rd.pos();
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) img.at(c, y, x) = static_cast<float>(*px++) / 255.0f;
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_pgm(const Image& img) { return encode(img, 1, "P5"); }
std::vector<std::uint8_t> encode_ppm(const Image& img) { return encode(img, 3, "P6"); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image load_pgm(const std::filesystem::path& path) {
  Image img = decode_netpbm(read_file(path));
  if (img.channels != 1) throw FormatError(path.string() + ": expected a P5 grayscale file");
  return img;
}

Image load_ppm(const std::filesystem::path& path) {
  Image img = decode_netpbm(read_file(path));
  if (img.channels != 3) throw FormatError(path.string() + ": expected a P6 color file");
  return img;
}

void save_pgm(const std::filesystem::path& path, const Image& img) { write_file(path, encode_pgm(img)); }
void save_ppm(const std::filesystem::path& path, const Image& img) { write_file(path, encode_ppm(img)); }

}  // namespace c4net
