#pragma once

#include <cstdint>
#include <vector>

#include "xcbam/losses.hpp"

namespace xcbam {

/// K x K pixel counts, rows indexed by ground truth and columns by prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes, int ignore_index = kDefaultIgnoreIndex);

  /// Pixels whose target equals ignore_index are skipped. Throws DataError for
  /// any other label or prediction outside [0, K).
  void accumulate(const LabelMap& pred, const LabelMap& target);
  void merge(const ConfusionMatrix& other);
  void reset();

  std::uint64_t at(int truth, int pred) const {
    return counts_[static_cast<std::size_t>(truth) * k_ + pred];
  }
  std::uint64_t total() const;
  int num_classes() const noexcept { return k_; }
  int ignore_index() const noexcept { return ignore_; }

  /// TP / (TP + FP + FN); negative when the class never occurs in either map.
  double class_iou(int c) const;
  /// Mean IoU over classes that occur. 0 for an empty matrix (see `empty`).
  double miou() const;
  bool empty() const { return total() == 0; }

 private:
  int k_;
  int ignore_;
  std::vector<std::uint64_t> counts_;
};

/// Per-pixel argmax over channels.
template <typename T>
LabelMap argmax_labels(const Tensor<T>& logits);

}  // namespace xcbam
