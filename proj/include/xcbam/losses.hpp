#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "xcbam/network.hpp"

namespace xcbam {

inline constexpr int kDefaultIgnoreIndex = 255;

/// Per-pixel class labels for a batch, stored n -> h -> w.
struct LabelMap {
  int n = 0;
  int h = 0;
  int w = 0;
  std::vector<std::int32_t> labels;

  LabelMap() = default;
  LabelMap(int n_, int h_, int w_, std::int32_t fill = 0)
      : n(n_), h(h_), w(w_), labels(static_cast<std::size_t>(n_) * h_ * w_, fill) {}

  std::size_t size() const noexcept { return labels.size(); }
  std::int32_t& at(int b, int y, int x) {
    return labels[(static_cast<std::size_t>(b) * h + y) * w + x];
  }
  std::int32_t at(int b, int y, int x) const {
    return labels[(static_cast<std::size_t>(b) * h + y) * w + x];
  }
  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

struct LossConfig {
  double alpha = 0.7;  ///< weight of cross-entropy; focal gets 1 - alpha
  double gamma = 2.0;
  int ignore_index = kDefaultIgnoreIndex;
  double aux_weight = 0.4;

  void validate() const;
};

template <typename T>
struct LossResult {
  Variable<T> loss;            ///< (1, 1, 1, 1)
  std::size_t counted = 0;     ///< non-ignored pixels
  bool all_ignored = false;    ///< loss defined as 0 because nothing was counted
};

/// Mean over non-ignored pixels of -log softmax(logits)[target].
template <typename T>
LossResult<T> cross_entropy(const Variable<T>& logits, const LabelMap& target,
                            int ignore_index = kDefaultIgnoreIndex);

/// Mean over non-ignored pixels of -(1 - p_t)^gamma log p_t, p_t the softmax
/// probability of the target class.
template <typename T>
LossResult<T> focal_loss(const Variable<T>& logits, const LabelMap& target, double gamma,
                         int ignore_index = kDefaultIgnoreIndex);

/// alpha CE + (1 - alpha) FL on `logits`.
template <typename T>
LossResult<T> mixed_loss(const Variable<T>& logits, const LabelMap& target, const LossConfig& cfg);

/// mixed_loss on the main logits plus aux_weight times the same on the aux
/// logits when they are present.
template <typename T>
LossResult<T> composite_loss(const ModelOutput<T>& out, const LabelMap& target,
                             const LossConfig& cfg);

}  // namespace xcbam
