#include "xcbam/config.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "xcbam/error.hpp"

namespace xcbam {

std::string to_string(DataSource s) {
  switch (s) {
    case DataSource::synthetic: return "synthetic";
    case DataSource::directory: return "directory";
    case DataSource::cityscapes: return "cityscapes";
    case DataSource::camvid: return "camvid";
  }
  return "?";
}

DataSource parse_data_source(const std::string& name) {
  if (name == "synthetic") return DataSource::synthetic;
  if (name == "directory") return DataSource::directory;
  if (name == "cityscapes") return DataSource::cityscapes;
  if (name == "camvid") return DataSource::camvid;
  throw ConfigError("unknown dataset '" + name + "' (synthetic, directory, cityscapes, camvid)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) parts.push_back(trim(item));
  return parts;
}

}  // namespace

double parse_double(const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::logic_error&) {
  }
  throw ConfigError("expected a number, got '" + text + "'");
}

std::int64_t parse_int(const std::string& text) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used == text.size()) return v;
  } catch (const std::logic_error&) {
  }
  throw ConfigError("expected an integer, got '" + text + "'");
}

bool parse_bool(const std::string& text) {
  if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
  if (text == "0" || text == "false" || text == "no" || text == "off") return false;
  throw ConfigError("expected a boolean, got '" + text + "'");
}

std::pair<int, int> parse_size(const std::string& text) {
  const char sep = text.find('x') != std::string::npos ? 'x' : ',';
  const auto parts = split(text, sep);
  if (parts.size() != 2) throw ConfigError("expected HxW, got '" + text + "'");
  return {static_cast<int>(parse_int(parts[0])), static_cast<int>(parse_int(parts[1]))};
}

std::pair<double, double> parse_range(const std::string& text) {
  const auto parts = split(text, ',');
  if (parts.size() != 2) throw ConfigError("expected lo,hi, got '" + text + "'");
  return {parse_double(parts[0]), parse_double(parts[1])};
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string& v = value;
  auto int_value = [&] { return static_cast<int>(parse_int(v)); };
  if (key == "variant") {
    net.variant = parse_model_variant(v);
  } else if (key == "channels") {
    net.set_channels(int_value());
  } else if (key == "dilations") {
    net.se_aspp.dilations = parse_int_list(v);
  } else if (key == "se_input") {
    if (v == "module_input") {
      net.se_aspp.se_input = SeInput::module_input;
    } else if (v == "atrous_sum") {
      net.se_aspp.se_input = SeInput::atrous_sum;
    } else {
      throw ConfigError("se_input must be module_input or atrous_sum");
    }
  } else if (key == "num_classes") {
    net.num_classes = int_value();
  } else if (key == "aux_head") {
    net.aux_head = parse_bool(v);
  } else if (key == "use_se_aspp") {
    net.use_se_aspp = parse_bool(v);
  } else if (key == "use_ccbam") {
    net.use_ccbam = parse_bool(v);
  } else if (key == "shared_bottleneck") {
    net.shared_attention_bottleneck = parse_bool(v);
  } else if (key == "alpha") {
    loss.alpha = parse_double(v);
  } else if (key == "gamma") {
    loss.gamma = parse_double(v);
  } else if (key == "aux_weight") {
    loss.aux_weight = parse_double(v);
  } else if (key == "ignore_index") {
    loss.ignore_index = int_value();
    augment.ignore_index = loss.ignore_index;
  } else if (key == "lr") {
    optim.base_lr = parse_double(v);
  } else if (key == "min_lr") {
    optim.min_lr = parse_double(v);
  } else if (key == "power") {
    optim.power = parse_double(v);
  } else if (key == "momentum") {
    optim.momentum = parse_double(v);
  } else if (key == "weight_decay") {
    optim.weight_decay = parse_double(v);
  } else if (key == "max_iter") {
    optim.max_iter = parse_int(v);
  } else if (key == "batch_size") {
    batch_size = int_value();
  } else if (key == "crop") {
    std::tie(augment.crop_h, augment.crop_w) = parse_size(v);
  } else if (key == "scale_range") {
    std::tie(augment.scale_min, augment.scale_max) = parse_range(v);
  } else if (key == "flip_prob") {
    augment.flip_prob = parse_double(v);
  } else if (key == "seed") {
    seed = static_cast<std::uint64_t>(parse_int(v));
  } else if (key == "dataset") {
    data = parse_data_source(v);
  } else if (key == "train_dir") {
    train_dir = v;
  } else if (key == "val_dir") {
    val_dir = v;
  } else if (key == "data_root") {
    data_root = v;
  } else if (key == "data_limit") {
    data_limit = static_cast<std::size_t>(parse_int(v));
  } else if (key == "out_dir") {
    out_dir = v;
  } else if (key == "synth_seed") {
    synth.seed = static_cast<std::uint64_t>(parse_int(v));
  } else if (key == "synth_samples") {
    synth.n_samples = int_value();
  } else if (key == "synth_classes") {
    synth.classes = int_value();
  } else if (key == "synth_size") {
    std::tie(synth.height, synth.width) = parse_size(v);
  } else if (key == "synth_kinds") {
    synth.kinds.clear();
    for (const auto& k : split(v, ',')) synth.kinds.push_back(parse_shape_kind(k));
  } else if (key == "synth_noise") {
    synth.noise = parse_double(v);
  } else if (key == "val_noise_seed") {
    val_noise_seed = static_cast<std::uint64_t>(parse_int(v));
  } else if (key == "val_interval") {
    val_interval = int_value();
  } else if (key == "checkpoint_interval") {
    checkpoint_interval = int_value();
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void RunConfig::validate() const {
  net.validate();
  loss.validate();
  optim.validate();
  augment.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (val_interval < 0 || checkpoint_interval < 0) throw ConfigError("intervals must be >= 0");
  if (data == DataSource::synthetic) {
    synth.validate();
    if (synth.classes != net.num_classes) {
      throw ConfigError("synth_classes (" + std::to_string(synth.classes) +
                        ") must equal num_classes (" + std::to_string(net.num_classes) + ")");
    }
    if (static_cast<int>(synth.n_samples) < batch_size) {
      throw ConfigError("batch_size exceeds the number of samples");
    }
  }
  if (data == DataSource::directory && train_dir.empty()) {
    throw ConfigError("dataset=directory needs train_dir");
  }
  if ((data == DataSource::cityscapes || data == DataSource::camvid) && data_root.empty()) {
    throw ConfigError("dataset=" + to_string(data) + " needs data_root");
  }
  if ((augment.crop_h == 0 || augment.crop_w == 0) && augment.scale_min != augment.scale_max) {
    throw ConfigError("a crop size is required when scale_range varies");
  }
  const int crop_h = augment.crop_h ? augment.crop_h : 32;
  const int crop_w = augment.crop_w ? augment.crop_w : 32;
  if (crop_h % 32 || crop_w % 32) throw ConfigError("crop size must be divisible by 32");
}

std::string RunConfig::dump() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "variant = " << to_string(net.variant) << "\n"
     << "channels = " << net.decoder_ch << "\n"
     << "dilations = " << format_int_list(net.se_aspp.dilations) << "\n"
     << "se_input = "
     << (net.se_aspp.se_input == SeInput::module_input ? "module_input" : "atrous_sum") << "\n"
     << "num_classes = " << net.num_classes << "\n"
     << "aux_head = " << net.aux_head << "\n"
     << "use_se_aspp = " << net.use_se_aspp << "\n"
     << "use_ccbam = " << net.use_ccbam << "\n"
     << "shared_bottleneck = " << net.shared_attention_bottleneck << "\n"
     << "alpha = " << loss.alpha << "\n"
     << "gamma = " << loss.gamma << "\n"
     << "aux_weight = " << loss.aux_weight << "\n"
     << "ignore_index = " << loss.ignore_index << "\n"
     << "lr = " << optim.base_lr << "\n"
     << "min_lr = " << optim.min_lr << "\n"
     << "power = " << optim.power << "\n"
     << "momentum = " << optim.momentum << "\n"
     << "weight_decay = " << optim.weight_decay << "\n"
     << "max_iter = " << optim.max_iter << "\n"
     << "batch_size = " << batch_size << "\n"
     << "crop = " << augment.crop_h << "x" << augment.crop_w << "\n"
     << "scale_range = " << augment.scale_min << "," << augment.scale_max << "\n"
     << "flip_prob = " << augment.flip_prob << "\n"
     << "seed = " << seed << "\n"
     << "dataset = " << to_string(data) << "\n";
  if (!train_dir.empty()) os << "train_dir = " << train_dir << "\n";
  if (!val_dir.empty()) os << "val_dir = " << val_dir << "\n";
  if (!data_root.empty()) os << "data_root = " << data_root << "\n";
  os << "data_limit = " << data_limit << "\n"
     << "out_dir = " << out_dir << "\n"
     << "synth_seed = " << synth.seed << "\n"
     << "synth_samples = " << synth.n_samples << "\n"
     << "synth_classes = " << synth.classes << "\n"
     << "synth_size = " << synth.height << "x" << synth.width << "\n"
     << "synth_kinds = ";
  for (std::size_t i = 0; i < synth.kinds.size(); ++i) {
    os << (i ? "," : "") << to_string(synth.kinds[i]);
  }
  os << "\n"
     << "synth_noise = " << synth.noise << "\n"
     << "val_noise_seed = " << val_noise_seed << "\n"
     << "val_interval = " << val_interval << "\n"
     << "checkpoint_interval = " << checkpoint_interval << "\n";
  return os.str();
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace xcbam
