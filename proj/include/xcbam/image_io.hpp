#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "xcbam/losses.hpp"

namespace xcbam {

/// 8-bit interleaved raster with 1 (gray) or 3 (RGB) channels.
struct Image8 {
  int h = 0;
  int w = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(int h_, int w_, int channels_)
      : h(h_), w(w_), channels(channels_),
        pixels(static_cast<std::size_t>(h_) * w_ * channels_, 0) {}
  friend bool operator==(const Image8&, const Image8&) = default;
};

/// Format chosen by extension: .png (8-bit), .ppm/.pgm (reads P2, P3, P5, P6).
Image8 read_image(const std::filesystem::path& path);
/// .png, or ASCII .ppm (RGB) / .pgm (gray).
void write_image(const std::filesystem::path& path, const Image8& image);

/// Parses an in-memory PNM file. Errors name the byte offset.
Image8 parse_pnm(const std::vector<std::uint8_t>& bytes);

/// (1, 3, h, w) in [0, 1]; gray inputs are replicated.
Tensor<float> image_to_tensor(const Image8& image);
/// Image n of an (n, 3, h, w) tensor, clamped to [0, 1] and rounded to 8 bits.
Image8 tensor_to_image(const Tensor<float>& t, int n = 0);

/// Gray image whose values are the labels (ignore stays as its own value).
Image8 mask_to_gray(const LabelMap& mask, int n = 0);
LabelMap gray_to_mask(const Image8& gray);

using Rgb = std::array<std::uint8_t, 3>;

/// The 19-class street-scene palette (road, sidewalk, building, ...). Labels
/// past 18 wrap around; ignored pixels are black.
const std::array<Rgb, 19>& street_palette();

Image8 colorize_mask(const LabelMap& mask, int ignore_index = kDefaultIgnoreIndex, int n = 0);
/// Inverse of colorize_mask for masks with at most 19 classes. Black maps to
/// ignore_index; any other color not in the palette is a DataError.
LabelMap decolorize_mask(const Image8& rgb, int ignore_index = kDefaultIgnoreIndex);

}  // namespace xcbam
