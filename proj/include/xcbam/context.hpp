#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace xcbam {

/// Operation counts accumulated while a CostRecorder is installed.
struct OpCost {
  std::uint64_t conv_macs = 0;    ///< multiply-accumulates inside convolutions
  std::uint64_t elementwise = 0;  ///< one per output element of every other pass

  OpCost& operator+=(const OpCost& o) {
    conv_macs += o.conv_macs;
    elementwise += o.elementwise;
    return *this;
  }
};

/// Collects per-scope operation counts. Scopes are the names pushed with
/// CostScope; the outermost one is used as the key.
class CostRecorder {
 public:
  void add_conv_macs(std::uint64_t macs);
  void add_elementwise(std::uint64_t count);

  OpCost total() const;
  const std::map<std::string, OpCost>& by_scope() const noexcept { return by_scope_; }

 private:
  std::map<std::string, OpCost> by_scope_;
};

namespace context {

bool grad_enabled() noexcept;
bool shape_only() noexcept;
CostRecorder* recorder() noexcept;
const std::string& scope() noexcept;

}  // namespace context

/// Disables tape recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Ops propagate shapes and record costs but compute no values.
class ShapeOnlyGuard {
 public:
  ShapeOnlyGuard();
  ~ShapeOnlyGuard();
  ShapeOnlyGuard(const ShapeOnlyGuard&) = delete;
  ShapeOnlyGuard& operator=(const ShapeOnlyGuard&) = delete;

 private:
  bool previous_;
};

/// Installs a recorder for the current thread while alive.
class RecordCostsGuard {
 public:
  explicit RecordCostsGuard(CostRecorder& recorder);
  ~RecordCostsGuard();
  RecordCostsGuard(const RecordCostsGuard&) = delete;
  RecordCostsGuard& operator=(const RecordCostsGuard&) = delete;

 private:
  CostRecorder* previous_;
};

/// Names the part of the model whose costs are being recorded.
class CostScope {
 public:
  explicit CostScope(std::string name);
  ~CostScope();
  CostScope(const CostScope&) = delete;
  CostScope& operator=(const CostScope&) = delete;
};

}  // namespace xcbam
