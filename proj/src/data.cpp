#include "xcbam/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "xcbam/error.hpp"
#include "xcbam/kernels.hpp"

namespace xcbam {

namespace fs = std::filesystem;

std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::rectangle: return "rectangle";
    case ShapeKind::disc: return "disc";
    case ShapeKind::stripe: return "stripe";
  }
  return "?";
}

ShapeKind parse_shape_kind(const std::string& name) {
  if (name == "rectangle" || name == "rect") return ShapeKind::rectangle;
  if (name == "disc") return ShapeKind::disc;
  if (name == "stripe") return ShapeKind::stripe;
  throw ConfigError("unknown shape kind '" + name + "' (rectangle, disc, stripe)");
}

void SyntheticSceneSpec::validate() const {
  if (classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (n_samples < 1) throw ConfigError("synthetic data needs at least 1 sample");
  if (height < 8 || width < 8) throw ConfigError("synthetic canvas must be at least 8x8");
  if (kinds.empty()) throw ConfigError("no shape kinds enabled");
  if (!(noise >= 0.0)) throw ConfigError("noise must be non-negative");
}

Rgb class_color(int c) {
  const auto& p = street_palette();
  return p[static_cast<std::size_t>(c) % p.size()];
}

namespace {

constexpr std::uint64_t kSceneStream = 0x5343454e;
constexpr std::uint64_t kNoiseStream = 0x4e4f4953;

Rng stream(std::uint64_t seed, std::uint64_t index, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(tag)};
  return Rng(seq);
}

double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

bool covers(const SceneShape& s, int y, int x) {
  if (s.kind == ShapeKind::disc) {
    const double dy = y + 0.5 - s.cy;
    const double dx = x + 0.5 - s.cx;
    return dy * dy + dx * dx <= s.radius * s.radius;
  }
  return y >= s.y0 && y < s.y1 && x >= s.x0 && x < s.x1;
}

}  // namespace

Scene make_scene(const SyntheticSceneSpec& spec, int index) {
  spec.validate();
  Rng rng = stream(spec.seed, static_cast<std::uint64_t>(index), kSceneStream);
  Scene scene{spec.height, spec.width, {}};
  std::vector<int> labels;
  for (int c = 1; c < spec.classes; ++c) labels.push_back(c);
  std::shuffle(labels.begin(), labels.end(), rng);
  const int h = spec.height;
  const int w = spec.width;
  for (int label : labels) {
    SceneShape s;
    s.label = label;
    s.kind = spec.kinds[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<int>(spec.kinds.size()) - 1))];
    switch (s.kind) {
      case ShapeKind::rectangle: {
        const int sh = static_cast<int>(h * uniform(rng, 0.25, 0.6));
        const int sw = static_cast<int>(w * uniform(rng, 0.2, 0.5));
        s.y0 = uniform_int(rng, 0, h - sh);
        s.x0 = uniform_int(rng, 0, w - sw);
        s.y1 = s.y0 + sh;
        s.x1 = s.x0 + sw;
        break;
      }
      case ShapeKind::disc: {
        s.radius = std::min(h, w) * uniform(rng, 0.15, 0.35);
        s.cy = uniform(rng, s.radius, h - s.radius);
        s.cx = uniform(rng, s.radius, w - s.radius);
        break;
      }
      case ShapeKind::stripe: {
        const bool horizontal = uniform_int(rng, 0, 1) == 0;
        const int span = horizontal ? h : w;
        const int thick = std::max(2, static_cast<int>(span * uniform(rng, 0.12, 0.25)));
        const int start = uniform_int(rng, 0, span - thick);
        if (horizontal) {
          s.y0 = start, s.y1 = start + thick, s.x0 = 0, s.x1 = w;
        } else {
          s.x0 = start, s.x1 = start + thick, s.y0 = 0, s.y1 = h;
        }
        break;
      }
    }
    scene.shapes.push_back(s);
  }
  return scene;
}

Sample render_scene(const Scene& scene, double noise, Rng& noise_rng) {
  Sample out{Tensor<float>(Shape{1, 3, scene.h, scene.w}), LabelMap(1, scene.h, scene.w, 0)};
  for (const SceneShape& s : scene.shapes) {
    for (int y = 0; y < scene.h; ++y) {
      for (int x = 0; x < scene.w; ++x) {
        if (covers(s, y, x)) out.mask.at(0, y, x) = s.label;
      }
    }
  }
  std::normal_distribution<float> gauss(0.0f, static_cast<float>(noise));
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < scene.h; ++y) {
      for (int x = 0; x < scene.w; ++x) {
        float v = class_color(out.mask.at(0, y, x))[static_cast<std::size_t>(c)] / 255.0f;
        if (noise > 0.0) v = std::clamp(v + gauss(noise_rng), 0.0f, 1.0f);
        out.image.at(0, c, y, x) = v;
      }
    }
  }
  return out;
}

Dataset gen_synthetic(const SyntheticSceneSpec& spec) {
  spec.validate();
  Dataset data;
  data.num_classes = spec.classes;
  const std::uint64_t noise_seed = spec.noise_seed ? spec.noise_seed : spec.seed;
  for (int i = 0; i < spec.n_samples; ++i) {
    Rng noise = stream(noise_seed, static_cast<std::uint64_t>(i), kNoiseStream);
    data.samples.push_back(render_scene(make_scene(spec, i), spec.noise, noise));
  }
  return data;
}

void AugmentConfig::validate() const {
  if (!(scale_min > 0.0 && scale_min <= scale_max)) {
    throw ConfigError("scale range must satisfy 0 < min <= max");
  }
  if (crop_h < 0 || crop_w < 0) throw ConfigError("crop size must be non-negative");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob must lie in [0, 1]");
}

Sample resize_sample(const Sample& s, int h, int w) {
  const Shape in = s.image.shape();
  if (in.h == h && in.w == w) return s;
  Sample out{Tensor<float>(Shape{in.n, in.c, h, w}), LabelMap(s.mask.n, h, w)};
  kernels::bilinear_forward(s.image, out.image);
  for (int b = 0; b < s.mask.n; ++b) {
    for (int y = 0; y < h; ++y) {
      const int sy = std::min(static_cast<int>((y + 0.5) * in.h / h), in.h - 1);
      for (int x = 0; x < w; ++x) {
        const int sx = std::min(static_cast<int>((x + 0.5) * in.w / w), in.w - 1);
        out.mask.at(b, y, x) = s.mask.at(b, sy, sx);
      }
    }
  }
  return out;
}

Sample flip_horizontal(const Sample& s) {
  Sample out = s;
  const Shape sh = s.image.shape();
  for (int b = 0; b < sh.n; ++b) {
    for (int c = 0; c < sh.c; ++c) {
      for (int y = 0; y < sh.h; ++y) {
        for (int x = 0; x < sh.w; ++x) out.image.at(b, c, y, x) = s.image.at(b, c, y, sh.w - 1 - x);
      }
    }
  }
  for (int b = 0; b < s.mask.n; ++b) {
    for (int y = 0; y < s.mask.h; ++y) {
      for (int x = 0; x < s.mask.w; ++x) out.mask.at(b, y, x) = s.mask.at(b, y, s.mask.w - 1 - x);
    }
  }
  return out;
}

Sample crop_sample(const Sample& s, int y0, int x0, int h, int w, int ignore_index) {
  const Shape in = s.image.shape();
  Sample out{Tensor<float>(Shape{in.n, in.c, h, w}), LabelMap(s.mask.n, h, w, ignore_index)};
  for (int y = 0; y < h; ++y) {
    const int sy = y0 + y;
    if (sy < 0 || sy >= in.h) continue;
    for (int x = 0; x < w; ++x) {
      const int sx = x0 + x;
      if (sx < 0 || sx >= in.w) continue;
      for (int b = 0; b < in.n; ++b) {
        for (int c = 0; c < in.c; ++c) out.image.at(b, c, y, x) = s.image.at(b, c, sy, sx);
        out.mask.at(b, y, x) = s.mask.at(b, sy, sx);
      }
    }
  }
  return out;
}

Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u_scale = unit(rng);
  const double u_y = unit(rng);
  const double u_x = unit(rng);
  const double u_flip = unit(rng);

  const Shape in = s.image.shape();
  const double scale = cfg.scale_min + (cfg.scale_max - cfg.scale_min) * u_scale;
  const int h = std::max(1, static_cast<int>(std::lround(in.h * scale)));
  const int w = std::max(1, static_cast<int>(std::lround(in.w * scale)));
  Sample out = resize_sample(s, h, w);

  const int ch = cfg.crop_h ? cfg.crop_h : h;
  const int cw = cfg.crop_w ? cfg.crop_w : w;
  if ((ch > h || cw > w) && !cfg.pad_if_needed) {
    throw ConfigError("crop " + std::to_string(ch) + "x" + std::to_string(cw) +
                      " exceeds resized image " + std::to_string(h) + "x" + std::to_string(w));
  }
  if (ch != h || cw != w) {
    const int y0 = static_cast<int>(u_y * (std::max(h - ch, 0) + 1));
    const int x0 = static_cast<int>(u_x * (std::max(w - cw, 0) + 1));
    out = crop_sample(out, std::min(y0, std::max(h - ch, 0)), std::min(x0, std::max(w - cw, 0)),
                      ch, cw, cfg.ignore_index);
  }
  if (u_flip < cfg.flip_prob) out = flip_horizontal(out);
  return out;
}

Batch make_batch(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw UsageError("empty batch");
  const Shape s0 = samples.front()->image.shape();
  const int n = static_cast<int>(samples.size());
  Batch b{Tensor<float>(Shape{n, 3, s0.h, s0.w}), LabelMap(n, s0.h, s0.w)};
  const std::size_t img = static_cast<std::size_t>(3) * s0.plane();
  for (int i = 0; i < n; ++i) {
    const Sample& s = *samples[static_cast<std::size_t>(i)];
    if (s.image.shape() != s0) {
      throw UsageError("batch samples differ in size: " + s.image.shape().str() + " vs " + s0.str());
    }
    std::copy(s.image.data(), s.image.data() + img, b.images.data() + img * i);
    std::copy(s.mask.labels.begin(), s.mask.labels.end(), b.masks.labels.begin() + s0.plane() * i);
  }
  return b;
}

namespace {

std::string stem_name(std::size_t i) {
  std::string digits = std::to_string(i);
  return std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits;
}

Sample load_pair(const fs::path& image, const fs::path& mask) {
  Sample s;
  s.image = image_to_tensor(read_image(image));
  s.mask = gray_to_mask(read_image(mask));
  if (s.mask.h != s.image.shape().h || s.mask.w != s.image.shape().w) {
    throw DataError("mask " + mask.string() + " does not match image size");
  }
  return s;
}

void check_labels(const Sample& s, int num_classes, const fs::path& where) {
  for (auto v : s.mask.labels) {
    if (v != kDefaultIgnoreIndex && (v < 0 || v >= num_classes)) {
      throw DataError(where.string() + ": label " + std::to_string(v) + " outside [0, " +
                      std::to_string(num_classes) + ")");
    }
  }
}

std::vector<fs::path> sorted_files(const fs::path& dir, bool recursive) {
  if (!fs::is_directory(dir)) throw DataError("missing directory " + dir.string());
  std::vector<fs::path> files;
  if (recursive) {
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
  } else {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

void write_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const std::string stem = stem_name(i);
    write_image(dir / "images" / (stem + ".png"), tensor_to_image(data.samples[i].image));
    write_image(dir / "masks" / (stem + ".png"), mask_to_gray(data.samples[i].mask));
  }
}

Dataset read_dataset_dir(const fs::path& dir, int num_classes) {
  Dataset data;
  data.num_classes = num_classes;
  std::map<std::string, fs::path> masks;
  for (const auto& p : sorted_files(dir / "masks", false)) masks[p.stem().string()] = p;
  for (const auto& p : sorted_files(dir / "images", false)) {
    const auto it = masks.find(p.stem().string());
    if (it == masks.end()) throw DataError("no mask for " + p.string());
    Sample s = load_pair(p, it->second);
    check_labels(s, num_classes, it->second);
    data.samples.push_back(std::move(s));
  }
  if (data.samples.empty()) throw DataError("no images under " + (dir / "images").string());
  return data;
}

Dataset read_cityscapes(const fs::path& root, const std::string& split, std::size_t limit) {
  Dataset data;
  data.num_classes = 19;
  const std::string suffix = "_leftImg8bit.png";
  for (const auto& p : sorted_files(root / "leftImg8bit" / split, true)) {
    const std::string name = p.filename().string();
    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
      continue;
    }
    const std::string base = name.substr(0, name.size() - suffix.size());
    const fs::path mask = root / "gtFine" / split / p.parent_path().filename() /
                          (base + "_gtFine_labelTrainIds.png");
    Sample s = load_pair(p, mask);
    check_labels(s, data.num_classes, mask);
    data.samples.push_back(std::move(s));
    if (limit && data.samples.size() >= limit) break;
  }
  if (data.samples.empty()) throw DataError("no Cityscapes images for split " + split);
  return data;
}

Dataset read_camvid(const fs::path& root, const std::string& split, std::size_t limit) {
  Dataset data;
  data.num_classes = 11;
  for (const auto& p : sorted_files(root / split, false)) {
    if (p.extension() != ".png") continue;
    const fs::path mask = root / (split + "annot") / p.filename();
    Sample s = load_pair(p, mask);
    for (auto& v : s.mask.labels) {
      if (v == 11) v = kDefaultIgnoreIndex;
    }
    check_labels(s, data.num_classes, mask);
    data.samples.push_back(std::move(s));
    if (limit && data.samples.size() >= limit) break;
  }
  if (data.samples.empty()) throw DataError("no CamVid images for split " + split);
  return data;
}

}  // namespace xcbam
