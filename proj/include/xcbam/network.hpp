#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "xcbam/attention.hpp"
#include "xcbam/backbone.hpp"
#include "xcbam/se_aspp.hpp"

namespace xcbam {

/// M pairs the decoder with the STDC1 encoder, L with STDC2.
enum class ModelVariant { m, l };

std::string to_string(ModelVariant v);
ModelVariant parse_model_variant(const std::string& name);
BackboneVariant backbone_for(ModelVariant v);

struct NetworkConfig {
  ModelVariant variant = ModelVariant::m;
  int decoder_ch = 256;
  SeAsppConfig se_aspp{};
  int num_classes = 19;
  bool aux_head = true;
  // Ablation switches.
  bool use_se_aspp = true;  ///< off: 1x1 ConvX 1024 -> decoder_ch instead
  bool use_ccbam = true;    ///< off: elementwise sum of the two inputs
  bool shared_attention_bottleneck = true;

  /// Sets decoder and SE-ASPP widths together.
  void set_channels(int channels);
  void validate() const;
  /// Canonical single-line description, stored in checkpoints.
  std::string echo() const;
  /// Inverse of echo(); throws ConfigError on unknown or missing keys.
  static NetworkConfig from_echo(const std::string& echo);
};

template <typename T>
struct ModelOutput {
  Variable<T> logits;
  std::optional<Variable<T>> aux_logits;
};

/// 3x3 ConvX followed by a 1x1 classifier with bias.
template <typename T>
class SegHead : public Module<T> {
 public:
  SegHead() = default;
  SegHead(int in_ch, int num_classes, Rng& rng);

  Variable<T> forward(const Variable<T>& x, Mode mode);
  void visit(const std::string& prefix, ParamVisitor<T>& visitor) override;

 private:
  ConvX<T> conv_;
  Conv2d<T> classifier_;
};

/// Encoder, context head on stage 5, two resize + cross-fusion steps with
/// stage 4 and stage 3, and a segmentation head resized to the input.
template <typename T>
class CrossCbamNet : public Module<T> {
 public:
  CrossCbamNet(const NetworkConfig& cfg, std::uint64_t seed);

  /// Image (n, 3, h, w) with h, w divisible by 32. Batch-norm layers use batch
  /// statistics iff mode == train; aux logits are produced only in train mode.
  ModelOutput<T> forward(const Variable<T>& image, Mode mode);
  void visit(const std::string& prefix, ParamVisitor<T>& visitor) override;

  const NetworkConfig& config() const noexcept { return cfg_; }
  StdcBackbone<T>& backbone() noexcept { return backbone_; }
  Module<T>& context_head();
  Ccbam<T>& fuse4() noexcept { return *fuse4_; }
  Ccbam<T>& fuse3() noexcept { return *fuse3_; }

 private:
  NetworkConfig cfg_;
  Rng rng_;
  StdcBackbone<T> backbone_;
  std::optional<SeAspp<T>> se_aspp_;
  ConvX<T> context_projection_;  // used when SE-ASPP is disabled
  ConvX<T> proj4_;
  std::optional<Ccbam<T>> fuse4_;
  ConvX<T> proj3_;
  std::optional<Ccbam<T>> fuse3_;
  SegHead<T> head_;
  std::optional<SegHead<T>> aux_head_;
};

template <typename T>
std::unique_ptr<CrossCbamNet<T>> build_network(const NetworkConfig& cfg, std::uint64_t seed);

/// Closed-form parameter count for `cfg` (cross-checked against the model walk).
std::int64_t network_param_count(const NetworkConfig& cfg);

}  // namespace xcbam
