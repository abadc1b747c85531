#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "xcbam/data.hpp"
#include "xcbam/losses.hpp"
#include "xcbam/network.hpp"
#include "xcbam/optim.hpp"

namespace xcbam {

enum class DataSource { synthetic, directory, cityscapes, camvid };

std::string to_string(DataSource s);
DataSource parse_data_source(const std::string& name);

/// Everything a training run needs. Loaded from flat `key = value` text;
/// `#` starts a comment. See configs/ and the README for the key set.
struct RunConfig {
  NetworkConfig net;
  LossConfig loss;
  OptimConfig optim;
  AugmentConfig augment;
  int batch_size = 16;
  std::uint64_t seed = 1;

  DataSource data = DataSource::synthetic;
  SyntheticSceneSpec synth;
  std::uint64_t val_noise_seed = 0;  ///< synthetic validation: same scenes, other noise; 0 = seed + 1
  std::string train_dir;             ///< directory source
  std::string val_dir;
  std::string data_root;             ///< cityscapes / camvid source
  std::size_t data_limit = 0;        ///< cap on loaded samples, 0 = all

  std::string out_dir = "run";
  int val_interval = 0;         ///< iterations between validation passes, 0 = end only
  int checkpoint_interval = 0;  ///< iterations between checkpoints, 0 = end only

  /// Applies one key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  void validate() const;
  /// Canonical text that parses back to an equal config.
  std::string dump() const;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
};

/// "HxW" or "H,W".
std::pair<int, int> parse_size(const std::string& text);
/// "lo,hi".
std::pair<double, double> parse_range(const std::string& text);
bool parse_bool(const std::string& text);
double parse_double(const std::string& text);
std::int64_t parse_int(const std::string& text);

}  // namespace xcbam
