#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome run(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / ("xcbam-cli-" + std::to_string(std::random_device{}()));
  const std::string cmd = std::string("'") + XCBAM_CLI + "' " + args + " >'" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  Outcome r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  fs::remove(log);
  return r;
}

TEST(Cli, UnknownSubcommandOrFlagIsAUsageError) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("count --no-such-flag").code, 2);
  EXPECT_EQ(run("train --set no_such_key=1").code, 2);
  EXPECT_EQ(run("count --channels 100").code, 2);
  EXPECT_EQ(run("bench --reps 3").code, 2);
}

TEST(Cli, HelpExitsCleanly) {
  const Outcome r = run("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"train", "infer", "bench", "count", "gradcheck", "verify", "gen-data"}) {
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  }
}

TEST(Cli, CountPrintsTotalsAndBreakdown) {
  const Outcome r = run("count --variant m --dilations 1,3 --channels 256");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("9755554"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("backbone"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("(matching convention)"), std::string::npos) << r.out;
}

TEST(Cli, FailedCheckExitsOne) {
  EXPECT_EQ(run("gradcheck --seeds 1 --tolerance 1e-30 --skip-network").code, 1);
}

TEST(Cli, BadCheckpointIsADataError) {
  const fs::path dir = fs::temp_directory_path() / ("xcbam-cli-ckpt-" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  std::ofstream(dir / "bad.xcbm") << "not a checkpoint";
  const Outcome r = run("infer --checkpoint '" + (dir / "bad.xcbm").string() + "' --input '" + dir.string() +
                    "' --out '" + (dir / "out").string() + "'");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("byte offset 0"), std::string::npos) << r.out;
  fs::remove_all(dir);
}

TEST(Cli, GenDataThenInferWritesOneMaskPerImage) {
  const fs::path dir = fs::temp_directory_path() / ("xcbam-cli-e2e-" + std::to_string(std::random_device{}()));
  const std::string d = dir.string();
  ASSERT_EQ(run("gen-data --samples 2 --classes 3 --size 64x64 --out '" + d + "/data'").code, 0);
  ASSERT_EQ(run("train --config '" XCBAM_SOURCE_DIR "/configs/toy.cfg' --set synth_size=64x64 --set crop=64x64"
                " --set max_iter=2 --set batch_size=2 --set val_interval=0 --quiet --set out_dir='" + d + "/run'")
                .code,
            0);
  const Outcome r = run("infer --checkpoint '" + d + "/run/model.xcbm' --input '" + d + "/data/images' --labels '" +
                    d + "/data/masks' --out '" + d + "/pred'");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("mIoU"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir / "pred" / "0000.png"));
  EXPECT_TRUE(fs::exists(dir / "pred" / "0001.png"));
  fs::remove_all(dir);
}

}  // namespace
