#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <utility>
#include <vector>

#include "xcbam/config.hpp"
#include "xcbam/metrics.hpp"

namespace xcbam {

struct LossLogRow {
  std::int64_t iter = 0;
  double lr = 0.0;
  float loss = 0.0f;
};

struct ValRecord {
  std::int64_t iter = 0;
  double miou = 0.0;
};

struct TrainOptions {
  std::ostream* progress = nullptr;  ///< one line per validation / log interval
  int log_interval = 50;
  /// Stop after this many iterations (0: run to max_iter). The schedule still
  /// follows max_iter, so a truncated run is a prefix of the full one.
  std::int64_t stop_after = 0;
  bool final_eval = true;
};

struct TrainSummary {
  std::vector<LossLogRow> losses;
  std::vector<ValRecord> val;
  double train_miou = -1.0;  ///< infer mode on the unaugmented training set
  double val_miou = -1.0;
  std::filesystem::path checkpoint;
  std::filesystem::path loss_log;
};

/// Training and validation sets described by the config. For synthetic data
/// the validation set repeats the training scenes with a different noise seed.
std::pair<Dataset, Dataset> load_datasets(const RunConfig& cfg);

/// Infer-mode confusion matrix over a dataset, in chunks of `batch_size`.
ConfusionMatrix evaluate(CrossCbamNet<float>& model, const Dataset& data, int batch_size,
                         int ignore_index);

/// SGD with the poly schedule on the composite loss. Writes <out_dir>/loss.csv,
/// val.csv, config.cfg, periodic checkpoint_<iter>.xcbm and the final model.xcbm.
/// Sample order, augmentation and initialization depend only on cfg.seed.
TrainSummary train(const RunConfig& cfg, const Dataset& train_set, const Dataset& val_set,
                   const TrainOptions& options = {});

/// Batch indices for iteration `iter`: a seeded permutation per epoch,
/// consumed in fixed-size batches with the remainder dropped.
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t dataset_size,
                                       int batch_size, std::int64_t iter);

}  // namespace xcbam
