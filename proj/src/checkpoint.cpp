#include "c4net/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>

#include "c4net/errors.hpp"
#include "c4net/netpbm.hpp"

namespace c4net {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'C', '4', 'N', 'T'};

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  std::uint8_t b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  out.insert(out.end(), b, b + sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint: truncated data");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xFFFF) throw FormatError("checkpoint: parameter name too long");
    if (e.data.size() != e.shape.numel()) throw ShapeError("checkpoint: " + e.name + " data does not match its shape");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.shape.rank()));
    for (int i = 0; i < e.shape.rank(); ++i) put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape[i]));
    for (float v : e.data) put<float>(out, v);
  }
  return out;
}

std::vector<CheckpointEntry> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader rd(bytes);
  const auto magic = rd.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
  const auto version = rd.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = rd.get<std::uint32_t>();
  std::vector<CheckpointEntry> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    CheckpointEntry e;
    const auto len = rd.get<std::uint16_t>();
    const auto name = rd.take(len);
    e.name.assign(name.begin(), name.end());
    const int rank = rd.get<std::uint8_t>();
    if (rank < 1 || rank > 4) throw FormatError("checkpoint: " + e.name + " has invalid rank");
    std::vector<int> dims;
    for (int i = 0; i < rank; ++i) {
      const auto d = rd.get<std::uint32_t>();
      if (d == 0 || d > (1u << 24)) throw FormatError("checkpoint: " + e.name + " has invalid extent");
      dims.push_back(static_cast<int>(d));
    }
    e.shape = Shape(dims);
    e.data.resize(e.shape.numel());
    for (auto& v : e.data) v = rd.get<float>();
    out.push_back(std::move(e));
  }
  if (!rd.done()) throw FormatError("checkpoint: trailing bytes");
  return out;
}

template <typename T>
std::vector<CheckpointEntry> snapshot(const ParameterStore<T>& store) {
  std::vector<CheckpointEntry> out;
  for (const auto& p : store.entries()) {
    CheckpointEntry e{p.name, p.tensor.shape(), {}};
    e.data.reserve(p.tensor.numel());
    for (T v : p.tensor.data()) e.data.push_back(static_cast<float>(v));
    out.push_back(std::move(e));
  }
  return out;
}

template <typename T>
void restore(ParameterStore<T>& store, const std::vector<CheckpointEntry>& entries) {
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  if (by_name.size() != store.entries().size()) {
    throw FormatError("checkpoint holds " + std::to_string(by_name.size()) + " entries, model expects " +
                      std::to_string(store.entries().size()));
  }
  for (auto& p : store.entries()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing " + p.name);
    if (!(it->second->shape == p.tensor.shape())) {
      throw FormatError("checkpoint shape " + it->second->shape.str() + " for " + p.name + ", model expects " +
                        p.tensor.shape().str());
    }
    auto dst = p.tensor.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second->data[i]);
  }
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model) {
  write_file(path, encode_checkpoint(snapshot(model.parameters())));
}

template <typename T>
void load_checkpoint(const std::filesystem::path& path, Model<T>& model) {
  restore(model.parameters(), decode_checkpoint(read_file(path)));
}

#define C4NET_INSTANTIATE(T)                                                               \
  template std::vector<CheckpointEntry> snapshot(const ParameterStore<T>&);               \
  template void restore(ParameterStore<T>&, const std::vector<CheckpointEntry>&);         \
  template void save_checkpoint(const std::filesystem::path&, const Model<T>&);           \
  template void load_checkpoint(const std::filesystem::path&, Model<T>&);

C4NET_INSTANTIATE(float)
C4NET_INSTANTIATE(double)

}  // namespace c4net
