#include "xcbam/context.hpp"

#include <utility>

namespace xcbam {

namespace {

struct ThreadState {
  bool grad_enabled = true;
  bool shape_only = false;
  CostRecorder* recorder = nullptr;
  std::vector<std::string> scopes;
};

ThreadState& state() {
  thread_local ThreadState s;
  return s;
}

const std::string kUnscoped = "other";

}  // namespace

void CostRecorder::add_conv_macs(std::uint64_t macs) {
  by_scope_[context::scope()].conv_macs += macs;
}

void CostRecorder::add_elementwise(std::uint64_t count) {
  by_scope_[context::scope()].elementwise += count;
}

OpCost CostRecorder::total() const {
  OpCost t;
  for (const auto& [name, cost] : by_scope_) t += cost;
  return t;
}

namespace context {

bool grad_enabled() noexcept { return state().grad_enabled; }
bool shape_only() noexcept { return state().shape_only; }
CostRecorder* recorder() noexcept { return state().recorder; }
const std::string& scope() noexcept {
  const auto& scopes = state().scopes;
  return scopes.empty() ? kUnscoped : scopes.front();
}

}  // namespace context

NoGradGuard::NoGradGuard() : previous_(std::exchange(state().grad_enabled, false)) {}
NoGradGuard::~NoGradGuard() { state().grad_enabled = previous_; }

ShapeOnlyGuard::ShapeOnlyGuard() : previous_(std::exchange(state().shape_only, true)) {}
ShapeOnlyGuard::~ShapeOnlyGuard() { state().shape_only = previous_; }

RecordCostsGuard::RecordCostsGuard(CostRecorder& recorder)
    : previous_(std::exchange(state().recorder, &recorder)) {}
RecordCostsGuard::~RecordCostsGuard() { state().recorder = previous_; }

CostScope::CostScope(std::string name) { state().scopes.push_back(std::move(name)); }
CostScope::~CostScope() { state().scopes.pop_back(); }

}  // namespace xcbam
