#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xcbam/image_io.hpp"
#include "xcbam/layers.hpp"

namespace xcbam {

/// One image (1, 3, h, w) in [0, 1] and its (1, h, w) mask.
struct Sample {
  Tensor<float> image;
  LabelMap mask;
};

struct Dataset {
  std::vector<Sample> samples;
  int num_classes = 0;
};

enum class ShapeKind { rectangle, disc, stripe };

std::string to_string(ShapeKind k);
ShapeKind parse_shape_kind(const std::string& name);

/// Painted region. Rectangles and stripes fill [y0, y1) x [x0, x1); discs
/// fill the pixels whose centres lie within `radius` of (cy, cx).
struct SceneShape {
  ShapeKind kind = ShapeKind::rectangle;
  int label = 1;
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;
  double cy = 0, cx = 0, radius = 0;
};

/// Background class 0 with shapes painted in order.
struct Scene {
  int h = 0;
  int w = 0;
  std::vector<SceneShape> shapes;
};

struct SyntheticSceneSpec {
  std::uint64_t seed = 1;
  int n_samples = 8;
  int classes = 3;
  int height = 128;
  int width = 256;
  std::vector<ShapeKind> kinds{ShapeKind::rectangle, ShapeKind::disc, ShapeKind::stripe};
  double noise = 0.05;          ///< std of Gaussian pixel noise, image only
  std::uint64_t noise_seed = 0; ///< 0: derive from `seed`

  void validate() const;
};

/// Colour used for class c in synthetic images.
Rgb class_color(int c);

/// Layout of scene i: one shape per foreground class (distinct labels), in
/// random order. Depends only on (seed, i).
Scene make_scene(const SyntheticSceneSpec& spec, int index);

/// Renders a scene; noise is drawn from `noise_rng` when noise > 0.
Sample render_scene(const Scene& scene, double noise, Rng& noise_rng);

Dataset gen_synthetic(const SyntheticSceneSpec& spec);

struct AugmentConfig {
  double scale_min = 1.0;
  double scale_max = 1.0;
  int crop_h = 0;  ///< 0: keep the resized height
  int crop_w = 0;
  double flip_prob = 0.5;
  bool pad_if_needed = true;  ///< pad short images (zeros / ignore) up to the crop
  int ignore_index = kDefaultIgnoreIndex;

  void validate() const;
};

/// Random resize (image bilinear, mask nearest), random crop, horizontal flip.
/// Draws exactly four numbers from `rng` per call.
Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng);

Sample resize_sample(const Sample& s, int h, int w);
Sample flip_horizontal(const Sample& s);
/// Window of size (h, w) at (y, x); out-of-range pixels become 0 / ignore_index.
Sample crop_sample(const Sample& s, int y, int x, int h, int w, int ignore_index);

/// Stacks samples of equal size into one (n, 3, h, w) image and (n, h, w) mask.
struct Batch {
  Tensor<float> images;
  LabelMap masks;
};
Batch make_batch(const std::vector<const Sample*>& samples);

/// Writes images/NNNN.png and masks/NNNN.png (gray label values).
void write_dataset(const Dataset& data, const std::filesystem::path& dir);

/// Reads a directory written by write_dataset: every images/<stem>.(png|ppm)
/// paired with masks/<stem>.(png|pgm), sorted by stem.
Dataset read_dataset_dir(const std::filesystem::path& dir, int num_classes);

/// Cityscapes layout: leftImg8bit/<split>/<city>/*_leftImg8bit.png with
/// gtFine/<split>/<city>/*_gtFine_labelTrainIds.png.
Dataset read_cityscapes(const std::filesystem::path& root, const std::string& split,
                        std::size_t limit = 0);

/// CamVid layout: <split>/*.png with <split>annot/*.png (11 classes, 11 = void).
Dataset read_camvid(const std::filesystem::path& root, const std::string& split,
                    std::size_t limit = 0);

}  // namespace xcbam
