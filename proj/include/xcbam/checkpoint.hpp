#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xcbam/network.hpp"

namespace xcbam {

/// Binary layout, all integers u32 little-endian:
///   "XCBM" | version | echo length | echo bytes (UTF-8) | tensor count |
///   per tensor: name length | name | rank | dims[rank] | f32 LE payload
/// Conv weights are stored with rank 4 (out, in, kh, kw); biases, batch-norm
/// parameters and running statistics with rank 1.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

struct CheckpointData {
  std::uint32_t version = kCheckpointVersion;
  std::string config_echo;
  std::vector<CheckpointEntry> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const CheckpointData& data);
/// Throws DataError (bad magic, truncation, trailing bytes) naming the byte offset.
CheckpointData decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Parameters in visit order followed by buffers, values cast to f32.
template <typename T>
CheckpointData snapshot(CrossCbamNet<T>& model);

/// Written to a temporary file, then renamed into place.
template <typename T>
void save_checkpoint(CrossCbamNet<T>& model, const std::filesystem::path& path);

/// Validates everything before touching the model: a tensor name or shape
/// that differs from the model (or a differing config echo) is a ConfigError
/// naming the first mismatch; nothing is written on failure.
template <typename T>
void load_checkpoint(CrossCbamNet<T>& model, const std::filesystem::path& path);

template <typename T>
void restore(CrossCbamNet<T>& model, const CheckpointData& data);

/// The stored config echo, for rebuilding a model before loading.
std::string read_checkpoint_echo(const std::filesystem::path& path);

}  // namespace xcbam
