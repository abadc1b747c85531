#include "xcbam/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "xcbam/error.hpp"

namespace xcbam {

ConfusionMatrix::ConfusionMatrix(int num_classes, int ignore_index)
    : k_(num_classes), ignore_(ignore_index) {
  if (num_classes < 1) throw ConfigError("confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(k_) * k_, 0);
}

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& target) {
  if (pred.n != target.n || pred.h != target.h || pred.w != target.w) {
    throw UsageError("confusion matrix: prediction and target shapes differ");
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto t = target.labels[i];
    if (t == ignore_) continue;
    const auto p = pred.labels[i];
    if (t < 0 || t >= k_) {
      throw DataError("target label " + std::to_string(t) + " at pixel " + std::to_string(i) +
                      " outside [0, " + std::to_string(k_) + ")");
    }
    if (p < 0 || p >= k_) {
      throw DataError("predicted label " + std::to_string(p) + " at pixel " + std::to_string(i) +
                      " outside [0, " + std::to_string(k_) + ")");
    }
    ++counts_[static_cast<std::size_t>(t) * k_ + p];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw UsageError("cannot merge confusion matrices of different size");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

void ConfusionMatrix::reset() { std::fill(counts_.begin(), counts_.end(), 0); }

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

double ConfusionMatrix::class_iou(int c) const {
  std::uint64_t row = 0;
  std::uint64_t col = 0;
  for (int j = 0; j < k_; ++j) {
    row += at(c, j);
    col += at(j, c);
  }
  const std::uint64_t tp = at(c, c);
  const std::uint64_t denom = row + col - tp;
  if (denom == 0) return -1.0;
  return static_cast<double>(tp) / static_cast<double>(denom);
}

double ConfusionMatrix::miou() const {
  double acc = 0.0;
  int present = 0;
  for (int c = 0; c < k_; ++c) {
    const double iou = class_iou(c);
    if (iou < 0.0) continue;
    acc += iou;
    ++present;
  }
  return present ? acc / present : 0.0;
}

template <typename T>
LabelMap argmax_labels(const Tensor<T>& logits) {
  const Shape s = logits.shape();
  LabelMap out(s.n, s.h, s.w);
  for (int b = 0; b < s.n; ++b) {
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        int best = 0;
        for (int c = 1; c < s.c; ++c) {
          if (logits.at(b, c, y, x) > logits.at(b, best, y, x)) best = c;
        }
        out.at(b, y, x) = best;
      }
    }
  }
  return out;
}

template LabelMap argmax_labels<float>(const Tensor<float>&);
template LabelMap argmax_labels<double>(const Tensor<double>&);

}  // namespace xcbam
