#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reference.hpp"
#include "xcbam/attention.hpp"

namespace xcbam::testing {

struct SweepResult {
  std::string name;
  double worst = 0.0;  ///< largest relative deviation from the oracle
  int cases = 0;
};

/// Optimized double-precision ops against the serial transcriptions over
/// randomized shapes, geometries and weights.
std::vector<SweepResult> reference_sweeps(int cases, std::uint64_t seed);

/// Bottleneck weights of a module, laid out for the reference code.
ref::Mlp to_mlp(Conv2d<double>& reduce, Conv2d<double>& expand);
ref::CcbamWeights to_ccbam_weights(Ccbam<double>& m);

/// Fills every parameter with N(0, stddev) values.
void randomize(Module<double>& m, std::uint64_t seed, double stddev = 0.5);

}  // namespace xcbam::testing
