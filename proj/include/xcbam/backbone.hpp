#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "xcbam/layers.hpp"

namespace xcbam {

/// Blocks per STDC module unless configured otherwise.
inline constexpr int kStdcBlocks = 4;

struct StdcModuleSpec {
  int in_ch = 0;
  int out_ch = 0;
  int n_blocks = kStdcBlocks;
  int stride = 1;
};

/// Output widths of the blocks of one module: N/2, N/4, ..., N/2^(n-1), N/2^(n-1).
/// Throws ConfigError unless N is divisible by 2^(n-1) and n >= 2.
std::vector<int> stdc_block_channels(int out_ch, int n_blocks);

/// Short-term dense concatenate module. Block 1 is a 1x1 ConvX, the rest
/// 3x3 ConvX chained on the previous block's output; all block outputs are
/// concatenated. With stride 2, block 2 carries the stride and block 1's
/// output is average-pooled (3x3, stride 2, pad 1) before concatenation.
template <typename T>
class StdcModule : public Module<T> {
 public:
  StdcModule(StdcModuleSpec spec, Rng& rng);

  Variable<T> forward(const Variable<T>& x, Mode mode);
  void visit(const std::string& prefix, ParamVisitor<T>& visitor) override;

  const StdcModuleSpec& spec() const noexcept { return spec_; }
  std::vector<ConvX<T>>& blocks() noexcept { return blocks_; }

 private:
  StdcModuleSpec spec_;
  std::vector<ConvX<T>> blocks_;
};

enum class BackboneVariant { stdc1, stdc2 };

std::string to_string(BackboneVariant v);
BackboneVariant parse_backbone_variant(const std::string& name);

struct StageSpec {
  int extra_modules = 0;  ///< stride-1 modules after the leading stride-2 one
  int out_ch = 0;
};

/// Stem widths and stage layout of an STDC encoder.
struct BackboneSpec {
  BackboneVariant variant = BackboneVariant::stdc1;
  int stem1_ch = 32;
  int stem2_ch = 64;
  std::array<StageSpec, 3> stages{};
  int blocks_per_module = kStdcBlocks;

  static BackboneSpec stdc1();
  static BackboneSpec stdc2();
  static BackboneSpec for_variant(BackboneVariant v);
};

template <typename T>
struct BackboneFeatures {
  Variable<T> stage3;  ///< 1/8 resolution
  Variable<T> stage4;  ///< 1/16
  Variable<T> stage5;  ///< 1/32
};

template <typename T>
class StdcBackbone : public Module<T> {
 public:
  StdcBackbone(BackboneSpec spec, Rng& rng);

  /// Requires an (n, 3, h, w) image with h and w divisible by 32.
  BackboneFeatures<T> forward(const Variable<T>& image, Mode mode);
  void visit(const std::string& prefix, ParamVisitor<T>& visitor) override;

  const BackboneSpec& spec() const noexcept { return spec_; }

 private:
  BackboneSpec spec_;
  ConvX<T> stem1_;
  ConvX<T> stem2_;
  std::array<std::vector<StdcModule<T>>, 3> stages_;
};

std::int64_t stdc_module_param_count(const StdcModuleSpec& spec);
std::int64_t backbone_param_count(const BackboneSpec& spec);

}  // namespace xcbam
