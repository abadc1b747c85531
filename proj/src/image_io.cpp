#include "xcbam/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "xcbam/error.hpp"

namespace xcbam {

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (char& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image8 read_png(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw DataError(path.string() + ": malformed PNG signature at byte offset 0");
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw DataError(path.string() + ": " + image.message);
  }
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image8 out(static_cast<int>(image.height), static_cast<int>(image.width), gray ? 1 : 3);
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw DataError(path.string() + ": " + message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image8& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.w);
  image.height = static_cast<png_uint_32>(img.h);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw DataError(path.string() + ": " + image.message);
  }
}

class PnmReader {
 public:
  explicit PnmReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::size_t offset() const noexcept { return pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("PNM: " + what + " at byte offset " + std::to_string(pos_));
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(ch)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int integer(const char* what) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
      fail(std::string("expected ") + what);
    }
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_++] - '0');
      if (value > 1 << 24) fail(std::string(what) + " too large");
    }
    return static_cast<int>(value);
  }

  std::uint8_t raw_byte() {
    if (pos_ >= bytes_.size()) fail("unexpected end of pixel data");
    return bytes_[pos_++];
  }

  char magic() {
    if (bytes_.size() < 2 || bytes_[0] != 'P') fail("malformed header, expected 'P' magic");
    pos_ = 1;
    const char kind = static_cast<char>(bytes_[1]);
    if (kind != '2' && kind != '3' && kind != '5' && kind != '6') {
      fail(std::string("unsupported PNM type P") + kind);
    }
    pos_ = 2;
    return kind;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void write_pnm(const std::filesystem::path& path, const Image8& img) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << (img.channels == 1 ? "P2" : "P3") << "\n" << img.w << " " << img.h << "\n255\n";
  const int per_row = img.w * img.channels;
  for (int y = 0; y < img.h; ++y) {
    for (int i = 0; i < per_row; ++i) {
      out << static_cast<int>(img.pixels[static_cast<std::size_t>(y) * per_row + i])
          << (i + 1 == per_row ? '\n' : ' ');
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace

Image8 parse_pnm(const std::vector<std::uint8_t>& bytes) {
  PnmReader r(bytes);
  const char kind = r.magic();
  const int w = r.integer("width");
  const int h = r.integer("height");
  const int maxval = r.integer("maxval");
  if (w <= 0 || h <= 0) r.fail("non-positive image size");
  if (maxval <= 0 || maxval > 255) r.fail("maxval outside 1..255");
  const bool color = kind == '3' || kind == '6';
  const bool binary = kind == '5' || kind == '6';
  Image8 img(h, w, color ? 3 : 1);
  if (binary) {
    // Exactly one whitespace byte separates the header from the raster.
    if (!std::isspace(r.raw_byte())) r.fail("missing separator before raster");
  }
  for (auto& px : img.pixels) {
    const int v = binary ? r.raw_byte() : r.integer("sample");
    if (v > maxval) r.fail("sample exceeds maxval");
    px = static_cast<std::uint8_t>(maxval == 255 ? v : (v * 255 + maxval / 2) / maxval);
  }
  return img;
}

Image8 read_image(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
    try {
      return parse_pnm(read_bytes(path));
    } catch (const DataError& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  throw DataError("unsupported image extension '" + ext + "' for " + path.string());
}

void write_image(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw UsageError("write_image: need 1 or 3 channels");
  }
  const std::string ext = lower_extension(path);
  if (ext == ".png") return write_png(path, image);
  if ((ext == ".ppm" && image.channels == 3) || (ext == ".pgm" && image.channels == 1)) {
    return write_pnm(path, image);
  }
  throw UsageError("cannot write a " + std::to_string(image.channels) + "-channel image as '" +
                   ext + "'");
}

Tensor<float> image_to_tensor(const Image8& image) {
  Tensor<float> t(Shape{1, 3, image.h, image.w});
  for (int c = 0; c < 3; ++c) {
    const int src = image.channels == 1 ? 0 : c;
    for (int y = 0; y < image.h; ++y) {
      for (int x = 0; x < image.w; ++x) {
        const auto i = (static_cast<std::size_t>(y) * image.w + x) * image.channels + src;
        t.at(0, c, y, x) = static_cast<float>(image.pixels[i]) / 255.0f;
      }
    }
  }
  return t;
}

Image8 tensor_to_image(const Tensor<float>& t, int n) {
  const Shape s = t.shape();
  if (s.c != 3) throw UsageError("tensor_to_image expects 3 channels, got " + s.str());
  Image8 img(s.h, s.w, 3);
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(t.at(n, c, y, x), 0.0f, 1.0f);
        img.pixels[(static_cast<std::size_t>(y) * s.w + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  return img;
}

Image8 mask_to_gray(const LabelMap& mask, int n) {
  Image8 img(mask.h, mask.w, 1);
  for (int y = 0; y < mask.h; ++y) {
    for (int x = 0; x < mask.w; ++x) {
      const auto v = mask.at(n, y, x);
      if (v < 0 || v > 255) throw DataError("label " + std::to_string(v) + " does not fit 8 bits");
      img.pixels[static_cast<std::size_t>(y) * mask.w + x] = static_cast<std::uint8_t>(v);
    }
  }
  return img;
}

LabelMap gray_to_mask(const Image8& gray) {
  if (gray.channels != 1) throw DataError("mask images must be single-channel");
  LabelMap m(1, gray.h, gray.w);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) m.labels[i] = gray.pixels[i];
  return m;
}

const std::array<Rgb, 19>& street_palette() {
  static const std::array<Rgb, 19> palette{{
      {128, 64, 128}, {244, 35, 232}, {70, 70, 70},   {102, 102, 156}, {190, 153, 153},
      {153, 153, 153}, {250, 170, 30}, {220, 220, 0},  {107, 142, 35},  {152, 251, 152},
      {70, 130, 180},  {220, 20, 60},  {255, 0, 0},    {0, 0, 142},     {0, 0, 70},
      {0, 60, 100},    {0, 80, 100},   {0, 0, 230},    {119, 11, 32},
  }};
  return palette;
}

Image8 colorize_mask(const LabelMap& mask, int ignore_index, int n) {
  const auto& palette = street_palette();
  Image8 img(mask.h, mask.w, 3);
  for (int y = 0; y < mask.h; ++y) {
    for (int x = 0; x < mask.w; ++x) {
      const auto v = mask.at(n, y, x);
      Rgb color{0, 0, 0};
      if (v != ignore_index) {
        if (v < 0) throw DataError("negative label " + std::to_string(v));
        color = palette[static_cast<std::size_t>(v) % palette.size()];
      }
      std::copy(color.begin(), color.end(),
                img.pixels.begin() + (static_cast<std::ptrdiff_t>(y) * mask.w + x) * 3);
    }
  }
  return img;
}

LabelMap decolorize_mask(const Image8& rgb, int ignore_index) {
  if (rgb.channels != 3) throw DataError("color masks must have 3 channels");
  const auto& palette = street_palette();
  LabelMap m(1, rgb.h, rgb.w);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const Rgb px{rgb.pixels[3 * i], rgb.pixels[3 * i + 1], rgb.pixels[3 * i + 2]};
    if (px == Rgb{0, 0, 0}) {
      m.labels[i] = ignore_index;
      continue;
    }
    const auto it = std::find(palette.begin(), palette.end(), px);
    if (it == palette.end()) {
      throw DataError("color (" + std::to_string(px[0]) + ", " + std::to_string(px[1]) + ", " +
                      std::to_string(px[2]) + ") at pixel " + std::to_string(i) +
                      " is not in the palette");
    }
    m.labels[i] = static_cast<std::int32_t>(it - palette.begin());
  }
  return m;
}

}  // namespace xcbam
