#include "xcbam/network.hpp"

#include <map>
#include <sstream>

#include "xcbam/context.hpp"
#include "xcbam/error.hpp"

namespace xcbam {

std::string to_string(ModelVariant v) { return v == ModelVariant::m ? "m" : "l"; }

ModelVariant parse_model_variant(const std::string& name) {
  if (name == "m" || name == "M") return ModelVariant::m;
  if (name == "l" || name == "L") return ModelVariant::l;
  throw ConfigError("unknown model variant '" + name + "' (expected m or l)");
}

BackboneVariant backbone_for(ModelVariant v) {
  return v == ModelVariant::m ? BackboneVariant::stdc1 : BackboneVariant::stdc2;
}

void NetworkConfig::set_channels(int channels) {
  decoder_ch = channels;
  se_aspp.branch_ch = channels;
}

void NetworkConfig::validate() const {
  if (decoder_ch < kAttentionReduction || decoder_ch % kAttentionReduction != 0) {
    throw ConfigError("decoder width " + std::to_string(decoder_ch) + " must be divisible by " +
                      std::to_string(kAttentionReduction));
  }
  if (num_classes < 2) throw ConfigError("need at least 2 classes");
  if (use_se_aspp) {
    xcbam::validate(se_aspp);
    const int stage5 = BackboneSpec::for_variant(backbone_for(variant)).stages[2].out_ch;
    if (se_aspp.in_ch != stage5) {
      throw ConfigError("SE-ASPP input width " + std::to_string(se_aspp.in_ch) +
                        " does not match stage-5 width " + std::to_string(stage5));
    }
    if (se_aspp.branch_ch != decoder_ch) {
      throw ConfigError("SE-ASPP width " + std::to_string(se_aspp.branch_ch) +
                        " must equal decoder width " + std::to_string(decoder_ch));
    }
  }
}

std::string NetworkConfig::echo() const {
  std::ostringstream os;
  os << "variant=" << to_string(variant) << ";decoder_ch=" << decoder_ch
     << ";dilations=" << format_int_list(se_aspp.dilations)
     << ";se_input=" << (se_aspp.se_input == SeInput::module_input ? "module_input" : "atrous_sum")
     << ";num_classes=" << num_classes << ";aux_head=" << aux_head
     << ";use_se_aspp=" << use_se_aspp << ";use_ccbam=" << use_ccbam
     << ";shared_bottleneck=" << shared_attention_bottleneck;
  return os.str();
}

NetworkConfig NetworkConfig::from_echo(const std::string& echo) {
  std::map<std::string, std::string> kv;
  std::istringstream in(echo);
  for (std::string item; std::getline(in, item, ';');) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed config echo item '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  auto take = [&](const char* key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError(std::string("config echo lacks '") + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto flag = [&](const char* key) {
    const std::string v = take(key);
    if (v != "0" && v != "1") throw ConfigError(std::string("bad flag for ") + key + ": " + v);
    return v == "1";
  };
  auto integer = [&](const char* key) {
    const std::string v = take(key);
    try {
      return std::stoi(v);
    } catch (const std::logic_error&) {
      throw ConfigError(std::string("bad integer for ") + key + ": " + v);
    }
  };
  NetworkConfig cfg;
  cfg.variant = parse_model_variant(take("variant"));
  cfg.set_channels(integer("decoder_ch"));
  cfg.se_aspp.dilations = parse_int_list(take("dilations"));
  const std::string se_input = take("se_input");
  if (se_input == "module_input") {
    cfg.se_aspp.se_input = SeInput::module_input;
  } else if (se_input == "atrous_sum") {
    cfg.se_aspp.se_input = SeInput::atrous_sum;
  } else {
    throw ConfigError("unknown se_input '" + se_input + "'");
  }
  cfg.num_classes = integer("num_classes");
  cfg.aux_head = flag("aux_head");
  cfg.use_se_aspp = flag("use_se_aspp");
  cfg.use_ccbam = flag("use_ccbam");
  cfg.shared_attention_bottleneck = flag("shared_bottleneck");
  if (!kv.empty()) throw ConfigError("unknown config echo key '" + kv.begin()->first + "'");
  cfg.validate();
  return cfg;
}

template <typename T>
SegHead<T>::SegHead(int in_ch, int num_classes, Rng& rng)
    : conv_(in_ch, in_ch, 3, rng), classifier_(ConvSpec{in_ch, num_classes, 1, {}, true}, rng) {}

template <typename T>
Variable<T> SegHead<T>::forward(const Variable<T>& x, Mode mode) {
  return classifier_.forward(conv_.forward(x, mode));
}

template <typename T>
void SegHead<T>::visit(const std::string& prefix, ParamVisitor<T>& visitor) {
  conv_.visit(join_name(prefix, "conv"), visitor);
  classifier_.visit(join_name(prefix, "classifier"), visitor);
}

namespace {

const NetworkConfig& checked(const NetworkConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

// Members are initialized in declaration order from one generator, and the
// aux head is drawn last so that toggling it leaves every other tensor unchanged.
template <typename T>
CrossCbamNet<T>::CrossCbamNet(const NetworkConfig& cfg, std::uint64_t seed)
    : cfg_(checked(cfg)),
      rng_(seed),
      backbone_(BackboneSpec::for_variant(backbone_for(cfg.variant)), rng_) {
  const int stage5 = backbone_.spec().stages[2].out_ch;
  if (cfg_.use_se_aspp) {
    se_aspp_.emplace(cfg_.se_aspp, rng_);
  } else {
    context_projection_ = ConvX<T>(stage5, cfg_.decoder_ch, 1, rng_);
  }
  const int reduction = kAttentionReduction;
  const bool shared = cfg_.shared_attention_bottleneck;
  proj4_ = ConvX<T>(backbone_.spec().stages[1].out_ch, cfg_.decoder_ch, 1, rng_);
  fuse4_.emplace(cfg_.decoder_ch, rng_, reduction, shared);
  proj3_ = ConvX<T>(backbone_.spec().stages[0].out_ch, cfg_.decoder_ch, 1, rng_);
  fuse3_.emplace(cfg_.decoder_ch, rng_, reduction, shared);
  head_ = SegHead<T>(cfg_.decoder_ch, cfg_.num_classes, rng_);
  if (cfg_.aux_head) aux_head_.emplace(cfg_.decoder_ch, cfg_.num_classes, rng_);
}

template <typename T>
Module<T>& CrossCbamNet<T>::context_head() {
  if (se_aspp_) return *se_aspp_;
  return context_projection_;
}

template <typename T>
ModelOutput<T> CrossCbamNet<T>::forward(const Variable<T>& image, Mode mode) {
  const Shape in = image.shape();
  BackboneFeatures<T> f;
  {
    CostScope scope("backbone");
    f = backbone_.forward(image, mode);
  }
  CostScope scope("decoder");
  const Variable<T> context = se_aspp_ ? se_aspp_->forward(f.stage5, mode)
                                       : context_projection_.forward(f.stage5, mode);
  const Shape s4 = f.stage4.shape();
  const Shape s3 = f.stage3.shape();

  const Variable<T> high4 = bilinear_resize(context, s4.h, s4.w);
  const Variable<T> low4 = proj4_.forward(f.stage4, mode);
  const Variable<T> fused4 = cfg_.use_ccbam ? fuse4_->forward(high4, low4) : add(high4, low4);

  const Variable<T> high3 = bilinear_resize(fused4, s3.h, s3.w);
  const Variable<T> low3 = proj3_.forward(f.stage3, mode);
  const Variable<T> fused3 = cfg_.use_ccbam ? fuse3_->forward(high3, low3) : add(high3, low3);

  ModelOutput<T> out;
  out.logits = bilinear_resize(head_.forward(fused3, mode), in.h, in.w);
  if (mode == Mode::train && aux_head_) {
    out.aux_logits = bilinear_resize(aux_head_->forward(fused4, mode), in.h, in.w);
  }
  return out;
}

template <typename T>
void CrossCbamNet<T>::visit(const std::string& prefix, ParamVisitor<T>& visitor) {
  backbone_.visit(join_name(prefix, "backbone"), visitor);
  if (se_aspp_) {
    se_aspp_->visit(join_name(prefix, "se_aspp"), visitor);
  } else {
    context_projection_.visit(join_name(prefix, "context_proj"), visitor);
  }
  proj4_.visit(join_name(prefix, "proj4"), visitor);
  fuse4_->visit(join_name(prefix, "fuse4"), visitor);
  proj3_.visit(join_name(prefix, "proj3"), visitor);
  fuse3_->visit(join_name(prefix, "fuse3"), visitor);
  head_.visit(join_name(prefix, "head"), visitor);
  if (aux_head_) aux_head_->visit(join_name(prefix, "aux_head"), visitor);
}

template <typename T>
std::unique_ptr<CrossCbamNet<T>> build_network(const NetworkConfig& cfg, std::uint64_t seed) {
  return std::make_unique<CrossCbamNet<T>>(cfg, seed);
}

std::int64_t network_param_count(const NetworkConfig& cfg) {
  cfg.validate();
  const BackboneSpec bb = BackboneSpec::for_variant(backbone_for(cfg.variant));
  const int dc = cfg.decoder_ch;
  std::int64_t total = backbone_param_count(bb);
  total += cfg.use_se_aspp ? se_aspp_param_count(cfg.se_aspp)
                           : convx_param_count(bb.stages[2].out_ch, dc, 1);
  total += convx_param_count(bb.stages[1].out_ch, dc, 1);
  total += convx_param_count(bb.stages[0].out_ch, dc, 1);
  total += 2 * ccbam_param_count(dc, kAttentionReduction, cfg.shared_attention_bottleneck);
  const std::int64_t head = convx_param_count(dc, dc, 3) +
                            static_cast<std::int64_t>(dc) * cfg.num_classes + cfg.num_classes;
  total += cfg.aux_head ? 2 * head : head;
  return total;
}

template class SegHead<float>;
template class SegHead<double>;
template class CrossCbamNet<float>;
template class CrossCbamNet<double>;
template std::unique_ptr<CrossCbamNet<float>> build_network<float>(const NetworkConfig&,
                                                                   std::uint64_t);
template std::unique_ptr<CrossCbamNet<double>> build_network<double>(const NetworkConfig&,
                                                                     std::uint64_t);

}  // namespace xcbam
