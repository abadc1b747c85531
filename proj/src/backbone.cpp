#include "xcbam/backbone.hpp"

#include "xcbam/error.hpp"

namespace xcbam {

std::vector<int> stdc_block_channels(int out_ch, int n_blocks) {
  if (n_blocks < 2) throw ConfigError("an STDC module needs at least 2 blocks");
  const int divisor = 1 << (n_blocks - 1);
  if (out_ch < divisor || out_ch % divisor != 0) {
    throw ConfigError("STDC output width " + std::to_string(out_ch) + " is not divisible by " +
                      std::to_string(divisor));
  }
  std::vector<int> widths;
  for (int i = 1; i < n_blocks; ++i) widths.push_back(out_ch >> i);
  widths.push_back(widths.back());
  return widths;
}

template <typename T>
StdcModule<T>::StdcModule(StdcModuleSpec spec, Rng& rng) : spec_(spec) {
  if (spec.stride != 1 && spec.stride != 2) {
    throw ConfigError("STDC module stride must be 1 or 2");
  }
  const auto widths = stdc_block_channels(spec.out_ch, spec.n_blocks);
  blocks_.reserve(widths.size());
  blocks_.emplace_back(spec.in_ch, widths[0], 1, rng);
  for (std::size_t i = 1; i < widths.size(); ++i) {
    const int stride = i == 1 ? spec.stride : 1;
    blocks_.emplace_back(widths[i - 1], widths[i], 3, rng, stride);
  }
}

template <typename T>
Variable<T> StdcModule<T>::forward(const Variable<T>& x, Mode mode) {
  if (x.shape().c != spec_.in_ch) {
    throw ConfigError("STDC module expects " + std::to_string(spec_.in_ch) +
                      " input channels, got " + std::to_string(x.shape().c));
  }
  std::vector<Variable<T>> outputs;
  outputs.reserve(blocks_.size());
  Variable<T> current = blocks_[0].forward(x, mode);
  outputs.push_back(spec_.stride == 2 ? pool2d(current, PoolKind::avg, 3, 2, 1) : current);
  for (std::size_t i = 1; i < blocks_.size(); ++i) {
    current = blocks_[i].forward(current, mode);
    outputs.push_back(current);
  }
  return concat_channels(std::span<const Variable<T>>(outputs));
}

template <typename T>
void StdcModule<T>::visit(const std::string& prefix, ParamVisitor<T>& visitor) {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].visit(join_name(prefix, "block" + std::to_string(i + 1)), visitor);
  }
}

std::string to_string(BackboneVariant v) { return v == BackboneVariant::stdc1 ? "stdc1" : "stdc2"; }

BackboneVariant parse_backbone_variant(const std::string& name) {
  if (name == "stdc1") return BackboneVariant::stdc1;
  if (name == "stdc2") return BackboneVariant::stdc2;
  throw ConfigError("unknown backbone variant '" + name + "' (expected stdc1 or stdc2)");
}

BackboneSpec BackboneSpec::stdc1() {
  BackboneSpec s;
  s.variant = BackboneVariant::stdc1;
  s.stages = {StageSpec{1, 256}, StageSpec{1, 512}, StageSpec{1, 1024}};
  return s;
}

BackboneSpec BackboneSpec::stdc2() {
  BackboneSpec s;
  s.variant = BackboneVariant::stdc2;
  s.stages = {StageSpec{3, 256}, StageSpec{4, 512}, StageSpec{2, 1024}};
  return s;
}

BackboneSpec BackboneSpec::for_variant(BackboneVariant v) {
  return v == BackboneVariant::stdc1 ? stdc1() : stdc2();
}

template <typename T>
StdcBackbone<T>::StdcBackbone(BackboneSpec spec, Rng& rng)
    : spec_(spec),
      stem1_(3, spec.stem1_ch, 3, rng, 2),
      stem2_(spec.stem1_ch, spec.stem2_ch, 3, rng, 2) {
  int in_ch = spec.stem2_ch;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const StageSpec& stage = spec.stages[s];
    for (int m = 0; m <= stage.extra_modules; ++m) {
      stages_[s].emplace_back(
          StdcModuleSpec{in_ch, stage.out_ch, spec.blocks_per_module, m == 0 ? 2 : 1}, rng);
      in_ch = stage.out_ch;
    }
  }
}

template <typename T>
BackboneFeatures<T> StdcBackbone<T>::forward(const Variable<T>& image, Mode mode) {
  const Shape s = image.shape();
  if (s.c != 3) throw UsageError("backbone expects a 3-channel image, got " + s.str());
  if (s.h % 32 != 0 || s.w % 32 != 0 || s.h == 0 || s.w == 0) {
    throw UsageError("input height and width must be positive multiples of 32, got " +
                     std::to_string(s.h) + "x" + std::to_string(s.w));
  }
  Variable<T> x = stem2_.forward(stem1_.forward(image, mode), mode);
  std::array<Variable<T>, 3> outs;
  for (std::size_t st = 0; st < stages_.size(); ++st) {
    for (auto& module : stages_[st]) x = module.forward(x, mode);
    outs[st] = x;
  }
  return {outs[0], outs[1], outs[2]};
}

template <typename T>
void StdcBackbone<T>::visit(const std::string& prefix, ParamVisitor<T>& visitor) {
  stem1_.visit(join_name(prefix, "convx1"), visitor);
  stem2_.visit(join_name(prefix, "convx2"), visitor);
  for (std::size_t st = 0; st < stages_.size(); ++st) {
    const std::string stage = join_name(prefix, "stage" + std::to_string(st + 3));
    for (std::size_t m = 0; m < stages_[st].size(); ++m) {
      stages_[st][m].visit(join_name(stage, std::to_string(m)), visitor);
    }
  }
}

std::int64_t stdc_module_param_count(const StdcModuleSpec& spec) {
  const auto widths = stdc_block_channels(spec.out_ch, spec.n_blocks);
  std::int64_t total = convx_param_count(spec.in_ch, widths[0], 1);
  for (std::size_t i = 1; i < widths.size(); ++i) {
    total += convx_param_count(widths[i - 1], widths[i], 3);
  }
  return total;
}

std::int64_t backbone_param_count(const BackboneSpec& spec) {
  std::int64_t total =
      convx_param_count(3, spec.stem1_ch, 3) + convx_param_count(spec.stem1_ch, spec.stem2_ch, 3);
  int in_ch = spec.stem2_ch;
  for (const StageSpec& stage : spec.stages) {
    for (int m = 0; m <= stage.extra_modules; ++m) {
      total += stdc_module_param_count(
          StdcModuleSpec{in_ch, stage.out_ch, spec.blocks_per_module, m == 0 ? 2 : 1});
      in_ch = stage.out_ch;
    }
  }
  return total;
}

template class StdcModule<float>;
template class StdcModule<double>;
template class StdcBackbone<float>;
template class StdcBackbone<double>;

}  // namespace xcbam
