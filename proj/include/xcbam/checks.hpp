#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "xcbam/tensor.hpp"

namespace xcbam {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

bool all_passed(const std::vector<CheckResult>& results);
/// "PASS name: detail" / "FAIL name: detail", one per line.
void print_results(std::ostream& os, const std::vector<CheckResult>& results);

struct GradcheckOptions {
  int seeds = 20;            ///< randomized cases per op
  double tolerance = 1e-4;   ///< on gradient_error
  double eps = 1e-5;         ///< central-difference step
  double floor = 1e-4;       ///< gradient_error floor: below it the error is absolute
  int max_coords = 48;       ///< coordinates probed per input tensor and case
  int e2e_params = 200;      ///< sampled parameter coordinates for the full network
  Shape e2e_input{1, 3, 64, 128};
  std::uint64_t seed = 1;
};

/// Double-precision central-difference checks of every differentiable op and
/// module, one result per op (worst error over all seeds).
std::vector<CheckResult> gradcheck_ops(const GradcheckOptions& opt, std::ostream* progress);

/// Composite loss (train mode, aux head on) of the M network on opt.e2e_input.
CheckResult gradcheck_end_to_end(const GradcheckOptions& opt, std::ostream* progress);

// Invariant groups used by `verify`. Each returns one result per property.
std::vector<CheckResult> check_model_structure();
std::vector<CheckResult> check_ccbam_invariants();
std::vector<CheckResult> check_losses_and_optim();
std::vector<CheckResult> check_metrics();
std::vector<CheckResult> check_data_and_io();
std::vector<CheckResult> check_determinism();

/// All invariant groups in order.
std::vector<CheckResult> verify_all(std::ostream* progress);

/// Worst deviations of the three CCBAM reductions over `trials` random cases:
/// joint swap of inputs and attention weights, equal inputs and weights
/// (out = 2 F S), all attention weights zero (out = (high + low) / 4).
struct CcbamInvariantErrors {
  double swap = 0.0;
  double equal_inputs = 0.0;
  double zero_weights = 0.0;
};
CcbamInvariantErrors measure_ccbam_invariants(int trials, std::uint64_t seed);

}  // namespace xcbam
