#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xcbam/attention.hpp"

namespace xcbam {

/// What the squeeze-excitation branch of the context head consumes.
enum class SeInput {
  module_input,  ///< the head input after a 1x1 ConvX reduction (default)
  atrous_sum,    ///< the summed atrous branch outputs
};

struct SeAsppConfig {
  int in_ch = 1024;
  int branch_ch = 256;
  std::vector<int> dilations{1, 3};
  int reduction = kAttentionReduction;
  SeInput se_input = SeInput::module_input;
};

/// Throws ConfigError for empty/non-positive dilations or widths that the SE
/// reduction cannot divide.
void validate(const SeAsppConfig& cfg);

/// Context head: parallel atrous ConvX branches (1x1 for rate 1, dilated 3x3
/// otherwise) are summed, concatenated with an SE-recalibrated branch, and
/// projected back to branch_ch by a 1x1 ConvX. Spatial size is preserved.
template <typename T>
class SeAspp : public Module<T> {
 public:
  SeAspp(SeAsppConfig cfg, Rng& rng);

  Variable<T> forward(const Variable<T>& x, Mode mode);
  void visit(const std::string& prefix, ParamVisitor<T>& visitor) override;

  const SeAsppConfig& config() const noexcept { return cfg_; }
  std::vector<ConvX<T>>& branches() noexcept { return branches_; }
  ConvX<T>& se_projection() noexcept { return se_projection_; }
  SEBlock<T>& se() noexcept { return se_; }
  ConvX<T>& output_projection() noexcept { return output_projection_; }

 private:
  SeAsppConfig cfg_;
  std::vector<ConvX<T>> branches_;
  ConvX<T> se_projection_;
  SEBlock<T> se_;
  ConvX<T> output_projection_;
};

/// Closed-form parameter count of the head described by `cfg`.
std::int64_t se_aspp_param_count(const SeAsppConfig& cfg);

std::vector<int> parse_int_list(const std::string& text);
std::string format_int_list(const std::vector<int>& values);

}  // namespace xcbam
