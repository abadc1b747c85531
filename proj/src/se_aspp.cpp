#include "xcbam/se_aspp.hpp"

#include <sstream>

#include "xcbam/error.hpp"

namespace xcbam {

void validate(const SeAsppConfig& cfg) {
  if (cfg.in_ch < 1 || cfg.branch_ch < 1) throw ConfigError("SE-ASPP widths must be positive");
  if (cfg.dilations.empty()) throw ConfigError("SE-ASPP needs at least one atrous branch");
  for (int d : cfg.dilations) {
    if (d < 1) throw ConfigError("SE-ASPP dilation rates must be positive");
  }
  if (cfg.reduction < 1 || cfg.branch_ch % cfg.reduction != 0 || cfg.branch_ch < cfg.reduction) {
    throw ConfigError("SE-ASPP branch width " + std::to_string(cfg.branch_ch) +
                      " not divisible by SE reduction " + std::to_string(cfg.reduction));
  }
}

namespace {

int branch_kernel(int dilation) { return dilation == 1 ? 1 : 3; }

const SeAsppConfig& checked(const SeAsppConfig& cfg) {
  validate(cfg);
  return cfg;
}

}  // namespace

template <typename T>
SeAspp<T>::SeAspp(SeAsppConfig cfg, Rng& rng)
    : cfg_(checked(cfg)), se_(cfg.branch_ch, rng, cfg.reduction) {
  for (int d : cfg_.dilations) {
    branches_.emplace_back(cfg_.in_ch, cfg_.branch_ch, branch_kernel(d), rng, 1, d);
  }
  if (cfg_.se_input == SeInput::module_input) {
    se_projection_ = ConvX<T>(cfg_.in_ch, cfg_.branch_ch, 1, rng);
  }
  output_projection_ = ConvX<T>(2 * cfg_.branch_ch, cfg_.branch_ch, 1, rng);
}

template <typename T>
Variable<T> SeAspp<T>::forward(const Variable<T>& x, Mode mode) {
  if (x.shape().c != cfg_.in_ch) {
    throw ConfigError("SE-ASPP expects " + std::to_string(cfg_.in_ch) + " channels, got " +
                      x.shape().str());
  }
  Variable<T> atrous = branches_[0].forward(x, mode);
  for (std::size_t i = 1; i < branches_.size(); ++i) {
    atrous = add(atrous, branches_[i].forward(x, mode));
  }
  const Variable<T> se_in =
      cfg_.se_input == SeInput::module_input ? se_projection_.forward(x, mode) : atrous;
  const Variable<T> se_out = se_.forward(se_in);
  return output_projection_.forward(concat_channels<T>({atrous, se_out}), mode);
}

template <typename T>
void SeAspp<T>::visit(const std::string& prefix, ParamVisitor<T>& visitor) {
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    branches_[i].visit(join_name(prefix, "atrous" + std::to_string(i)), visitor);
  }
  if (cfg_.se_input == SeInput::module_input) {
    se_projection_.visit(join_name(prefix, "se_proj"), visitor);
  }
  se_.visit(join_name(prefix, "se"), visitor);
  output_projection_.visit(join_name(prefix, "project"), visitor);
}

std::int64_t se_aspp_param_count(const SeAsppConfig& cfg) {
  validate(cfg);
  std::int64_t total = 0;
  for (int d : cfg.dilations) total += convx_param_count(cfg.in_ch, cfg.branch_ch, branch_kernel(d));
  if (cfg.se_input == SeInput::module_input) {
    total += convx_param_count(cfg.in_ch, cfg.branch_ch, 1);
  }
  total += se_block_param_count(cfg.branch_ch, cfg.reduction);
  total += convx_param_count(2 * cfg.branch_ch, cfg.branch_ch, 1);
  return total;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("expected a comma-separated integer list, got '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

std::string format_int_list(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

template class SeAspp<float>;
template class SeAspp<double>;

}  // namespace xcbam
