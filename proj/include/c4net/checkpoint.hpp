#pragma once

// Binary checkpoints, little-endian:
//   "C4NT" | u32 version (1) | u32 count |
//   count x { u16 name length | name | u8 rank | u32 extents[rank] | f32 data }
// Entries follow the parameter store's registration order, BatchNorm running
// statistics included.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "c4net/autograd.hpp"
#include "c4net/model.hpp"

namespace c4net {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries);
// Throws FormatError on bad magic, unknown version or truncation.
std::vector<CheckpointEntry> decode_checkpoint(std::span<const std::uint8_t> bytes);

template <typename T>
std::vector<CheckpointEntry> snapshot(const ParameterStore<T>& store);

// Copies every entry into the store. Names and shapes must match exactly.
template <typename T>
void restore(ParameterStore<T>& store, const std::vector<CheckpointEntry>& entries);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model);
template <typename T>
void load_checkpoint(const std::filesystem::path& path, Model<T>& model);

}  // namespace c4net
