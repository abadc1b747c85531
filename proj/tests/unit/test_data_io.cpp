#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "xcbam/checkpoint.hpp"
#include "xcbam/checks.hpp"
#include "xcbam/config.hpp"
#include "xcbam/data.hpp"
#include "xcbam/error.hpp"
#include "xcbam/image_io.hpp"
#include "xcbam/trainer.hpp"

namespace xcbam {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("xcbam-test-" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_str(std::vector<std::uint8_t>& b, const std::string& s) {
  put_u32(b, static_cast<std::uint32_t>(s.size()));
  b.insert(b.end(), s.begin(), s.end());
}

void expect_all_pass(const std::vector<CheckResult>& results) {
  ASSERT_FALSE(results.empty());
  for (const auto& r : results) EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
}

TEST(DataIo, VerifyChecks) { expect_all_pass(check_data_and_io()); }
TEST(Determinism, VerifyChecks) { expect_all_pass(check_determinism()); }

TEST(Checkpoint, ByteLayoutIsLittleEndianWithLengthPrefixedNames) {
  CheckpointData d;
  d.config_echo = "a=1";
  d.tensors.push_back({"w", {2, 1, 1, 1}, {1.0f, -2.5f}});
  d.tensors.push_back({"bn.\xce\xb3", {1}, {0.25f}});  // non-ASCII UTF-8 name

  std::vector<std::uint8_t> want = {'X', 'C', 'B', 'M'};
  put_u32(want, 1);
  put_str(want, "a=1");
  put_u32(want, 2);
  put_str(want, "w");
  put_u32(want, 4);
  for (std::uint32_t v : {2u, 1u, 1u, 1u}) put_u32(want, v);
  put_u32(want, 0x3F800000u);  // 1.0f
  put_u32(want, 0xC0200000u);  // -2.5f
  put_str(want, "bn.\xce\xb3");
  put_u32(want, 1);
  put_u32(want, 1);
  put_u32(want, 0x3E800000u);  // 0.25f

  EXPECT_EQ(encode_checkpoint(d), want);
  const CheckpointData back = decode_checkpoint(want);
  EXPECT_EQ(back.config_echo, d.config_echo);
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_EQ(back.tensors[1].name, d.tensors[1].name);
  EXPECT_EQ(back.tensors[0].values, d.tensors[0].values);
}

TEST(Checkpoint, EveryTruncationIsADataErrorNamingAnOffset) {
  CheckpointData d;
  d.config_echo = "x";
  d.tensors.push_back({"t", {3}, {1, 2, 3}});
  const auto bytes = encode_checkpoint(d);
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<long>(n));
    try {
      decode_checkpoint(cut);
      ADD_FAILURE() << "decoded " << n << " bytes";
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos) << e.what();
    }
  }
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(decode_checkpoint(longer), DataError);
}

TEST(Checkpoint, FileRoundTripIsBitExact) {
  TempDir dir;
  NetworkConfig cfg;
  cfg.set_channels(128);
  auto a = build_network<float>(cfg, 3);
  auto b = build_network<float>(cfg, 4);
  save_checkpoint(*a, dir.path() / "m.xcbm");
  load_checkpoint(*b, dir.path() / "m.xcbm");
  const auto pa = named_parameters<float>(*a);
  const auto pb = named_parameters<float>(*b);
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(bit_equal(pa[i].param.value(), pb[i].param.value())) << pa[i].name;
  }
  EXPECT_EQ(read_checkpoint_echo(dir.path() / "m.xcbm"), cfg.echo());
}

TEST(Synthetic, ThousandSampleClassHistogramRegenerates) {
  SyntheticSceneSpec spec;
  spec.seed = 11;
  spec.n_samples = 1000;
  spec.classes = 5;
  spec.height = 32;
  spec.width = 32;
  auto histogram = [](const Dataset& d) {
    std::vector<std::uint64_t> h(5, 0);
    for (const auto& s : d.samples) {
      for (const auto v : s.mask.labels) ++h.at(static_cast<std::size_t>(v));
    }
    return h;
  };
  const auto h1 = histogram(gen_synthetic(spec));
  const auto h2 = histogram(gen_synthetic(spec));
  EXPECT_EQ(h1, h2);
  for (const auto c : h1) EXPECT_GT(c, 0u);
  spec.seed = 12;
  EXPECT_NE(histogram(gen_synthetic(spec)), h1);
}

TEST(Synthetic, ForegroundLabelsAreDistinctWithinAScene) {
  SyntheticSceneSpec spec;
  spec.classes = 6;
  for (int i = 0; i < 50; ++i) {
    const Scene s = make_scene(spec, i);
    std::vector<int> seen;
    for (const auto& shape : s.shapes) {
      EXPECT_GE(shape.label, 1);
      EXPECT_LT(shape.label, 6);
      EXPECT_EQ(std::count(seen.begin(), seen.end(), shape.label), 0);
      seen.push_back(shape.label);
    }
  }
}

TEST(Synthetic, FewerThanTwoClassesIsAConfigError) {
  SyntheticSceneSpec spec;
  spec.classes = 1;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Augment, HundredRandomAugmentationsKeepTheLabelSet) {
  SyntheticSceneSpec spec;
  spec.height = 64;
  spec.width = 96;
  const Dataset d = gen_synthetic(spec);
  AugmentConfig cfg;
  cfg.scale_min = 0.5;
  cfg.scale_max = 2.0;
  cfg.crop_h = 64;
  cfg.crop_w = 64;
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const Sample& s = d.samples[static_cast<std::size_t>(i) % d.samples.size()];
    const Sample a = augment(s, cfg, rng);
    EXPECT_EQ(a.image.shape(), (Shape{1, 3, 64, 64}));
    for (const auto v : a.mask.labels) {
      const bool original =
          std::find(s.mask.labels.begin(), s.mask.labels.end(), v) != s.mask.labels.end();
      EXPECT_TRUE(original || v == kDefaultIgnoreIndex) << v;
    }
  }
}

Image8 solid(int h, int w, int channels, std::uint8_t v) {
  Image8 img(h, w, channels);
  std::fill(img.pixels.begin(), img.pixels.end(), v);
  return img;
}

TEST(Readers, CityscapesLayoutPairsImagesWithTrainIds) {
  TempDir dir;
  const fs::path img = dir.path() / "leftImg8bit" / "val" / "aachen";
  const fs::path gt = dir.path() / "gtFine" / "val" / "aachen";
  fs::create_directories(img);
  fs::create_directories(gt);
  for (int i = 0; i < 3; ++i) {
    const std::string base = "aachen_00000" + std::to_string(i) + "_000019";
    write_image(img / (base + "_leftImg8bit.png"), solid(4, 6, 3, 100));
    write_image(gt / (base + "_gtFine_labelTrainIds.png"), solid(4, 6, 1, i == 2 ? 255 : 18));
  }
  write_image(img / "notes.png", solid(4, 6, 3, 0));  // ignored: wrong suffix
  const Dataset d = read_cityscapes(dir.path(), "val");
  EXPECT_EQ(d.num_classes, 19);
  ASSERT_EQ(d.samples.size(), 3u);
  EXPECT_EQ(d.samples[0].mask.labels.front(), 18);
  EXPECT_EQ(d.samples[2].mask.labels.front(), kDefaultIgnoreIndex);
  EXPECT_EQ(read_cityscapes(dir.path(), "val", 2).samples.size(), 2u);
  EXPECT_THROW(read_cityscapes(dir.path(), "train"), DataError);

  write_image(gt / "aachen_000000_000019_gtFine_labelTrainIds.png", solid(4, 6, 1, 19));
  EXPECT_THROW(read_cityscapes(dir.path(), "val"), DataError);
}

TEST(Readers, CamvidVoidBecomesIgnore) {
  TempDir dir;
  fs::create_directories(dir.path() / "test");
  fs::create_directories(dir.path() / "testannot");
  write_image(dir.path() / "test" / "0001.png", solid(4, 4, 3, 10));
  Image8 mask = solid(4, 4, 1, 11);
  mask.pixels[0] = 3;
  write_image(dir.path() / "testannot" / "0001.png", mask);
  const Dataset d = read_camvid(dir.path(), "test");
  EXPECT_EQ(d.num_classes, 11);
  ASSERT_EQ(d.samples.size(), 1u);
  EXPECT_EQ(d.samples[0].mask.labels[0], 3);
  EXPECT_EQ(d.samples[0].mask.labels[1], kDefaultIgnoreIndex);
}

TEST(Readers, DirectoryRoundTripThroughWriteDataset) {
  TempDir dir;
  SyntheticSceneSpec spec;
  spec.n_samples = 3;
  spec.height = 32;
  spec.width = 64;
  spec.noise = 0.0;
  const Dataset d = gen_synthetic(spec);
  write_dataset(d, dir.path());
  const Dataset back = read_dataset_dir(dir.path(), spec.classes);
  ASSERT_EQ(back.samples.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.samples[i].mask, d.samples[i].mask);
}

TEST(Config, ParseErrorsNameTheLine) {
  try {
    RunConfig::parse("variant = m\n\nbogus_key = 3\n");
    ADD_FAILURE();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(RunConfig::parse("variant m\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("batch_size = four\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("variant = xl\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("dilations = 1,-3\n").validate(), ConfigError);
}

TEST(Config, ShippedConfigsLoadAndValidate) {
  for (const char* name : {"toy.cfg", "cityscapes.cfg", "camvid.cfg"}) {
    const fs::path p = fs::path(XCBAM_SOURCE_DIR) / "configs" / name;
    RunConfig cfg;
    ASSERT_NO_THROW(cfg = RunConfig::load(p)) << name;
    EXPECT_EQ(RunConfig::parse(cfg.dump()).dump(), cfg.dump()) << name;
  }
}

TEST(Config, CommentsAndWhitespaceAreIgnored) {
  const RunConfig cfg = RunConfig::parse("# header\n  alpha = 0.5   # inline\n\nchannels=128\n");
  EXPECT_EQ(cfg.loss.alpha, 0.5);
  EXPECT_EQ(cfg.net.decoder_ch, 128);
}

TEST(Batching, EpochsArePermutationsAndDropTheRemainder) {
  const std::size_t n = 10;
  const int batch = 3;
  std::vector<int> hits(n, 0);
  for (std::int64_t it = 0; it < 3; ++it) {
    for (const auto i : batch_indices(7, n, batch, it)) ++hits.at(i);
  }
  EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 9);
  EXPECT_EQ(batch_indices(7, n, batch, 5), batch_indices(7, n, batch, 5));
}

}  // namespace
}  // namespace xcbam
