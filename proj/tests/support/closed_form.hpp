#pragma once

#include <cstdint>
#include <vector>

namespace xcbam::testing {

/// Hand-derived parameter and multiply-accumulate totals of the segmentation
/// network, written independently of the library's own bookkeeping.
struct ClosedForm {
  std::int64_t params = 0;
  std::int64_t backbone_params = 0;
  std::uint64_t conv_macs = 0;
};

struct ClosedFormSpec {
  bool large = false;  ///< STDC2 stage depths instead of STDC1
  std::vector<int> dilations{1, 3};
  int channels = 256;
  int classes = 19;
  bool aux_head = true;
  int height = 512;
  int width = 1024;
};

ClosedForm closed_form(const ClosedFormSpec& spec);

/// conv k x k without bias followed by batch norm.
std::int64_t convx_params(int in_ch, int out_ch, int k);

}  // namespace xcbam::testing
