#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <omp.h>

#include "xcbam/checkpoint.hpp"
#include "xcbam/checks.hpp"
#include "xcbam/config.hpp"
#include "xcbam/data.hpp"
#include "xcbam/error.hpp"
#include "xcbam/image_io.hpp"
#include "xcbam/metrics.hpp"
#include "xcbam/profiler.hpp"
#include "xcbam/trainer.hpp"

namespace fs = std::filesystem;
using namespace xcbam;

namespace {

constexpr int kExitFailedCheck = 1;
constexpr int kExitUsage = 2;

// Config keys exposed as flags on every subcommand that builds a network.
struct NetFlags {
  std::string config;
  std::map<std::string, std::string> values;
  std::vector<std::string> overrides;

  void attach(CLI::App* app, bool with_config) {
    if (with_config) app->add_option("--config", config, "key = value run configuration")->check(CLI::ExistingFile);
    const std::vector<std::pair<std::string, std::string>> keys = {
        {"variant", "backbone variant: m or l"},
        {"dilations", "SE-ASPP rates, e.g. 1,3"},
        {"channels", "SE-ASPP and decoder width"},
        {"classes", "number of classes"},
        {"se-input", "module_input or atrous_sum"},
        {"aux-head", "auxiliary head on/off"},
        {"se-aspp", "SE-ASPP on/off (off: 1x1 projection)"},
        {"ccbam", "CCBAM fusion on/off (off: sum)"},
    };
    for (const auto& [flag, help] : keys) app->add_option("--" + flag, values[flag], help);
    app->add_option("--set", overrides, "extra config entry key=value (repeatable)");
  }

  RunConfig resolve() const {
    RunConfig cfg = config.empty() ? RunConfig{} : RunConfig::load(config);
    static const std::map<std::string, std::string> key_of = {
        {"variant", "variant"},   {"dilations", "dilations"},   {"channels", "channels"},
        {"classes", "num_classes"}, {"se-input", "se_input"},   {"aux-head", "aux_head"},
        {"se-aspp", "use_se_aspp"}, {"ccbam", "use_ccbam"},
    };
    for (const auto& [flag, value] : values) {
      if (!value.empty()) cfg.set(key_of.at(flag), value);
    }
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (cfg.synth.classes != cfg.net.num_classes && values.at("classes").size()) {
      cfg.synth.classes = cfg.net.num_classes;
    }
    cfg.net.validate();
    return cfg;
  }
};

std::string variant_label(const NetworkConfig& net) {
  std::string rates;
  for (const int d : net.se_aspp.dilations) rates += (rates.empty() ? "" : ",") + std::to_string(d);
  return "crosscbam-" + to_string(net.variant) + " ch=" + std::to_string(net.decoder_ch) + " rates=(" + rates +
         ") classes=" + std::to_string(net.num_classes);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  NetFlags net;
  std::string out;
  std::int64_t stop_after = 0;
  int log_interval = 50;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  RunConfig cfg = a.net.resolve();
  if (!a.out.empty()) cfg.out_dir = a.out;
  cfg.validate();
  const auto [train_set, val_set] = load_datasets(cfg);
  std::cout << "model " << variant_label(cfg.net) << "\n"
            << "data " << to_string(cfg.data) << ": " << train_set.samples.size() << " train, "
            << val_set.samples.size() << " val\n";
  TrainOptions opt;
  opt.progress = a.quiet ? nullptr : &std::cout;
  opt.log_interval = a.log_interval;
  opt.stop_after = a.stop_after;
  const TrainSummary s = train(cfg, train_set, val_set, opt);
  std::printf("final train mIoU %.4f, val mIoU %.4f\ncheckpoint %s\n", s.train_miou, s.val_miou,
              s.checkpoint.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------

struct InferArgs {
  std::string checkpoint;
  std::vector<std::string> inputs;
  std::string out = "masks";
  std::string labels;
  int ignore_index = kDefaultIgnoreIndex;
};

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        const auto ext = e.path().extension();
        if (e.is_regular_file() && (ext == ".png" || ext == ".ppm")) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(in)) {
      files.emplace_back(in);
    } else {
      throw UsageError("no such input: " + in);
    }
  }
  return files;
}

int round_up32(int v) { return (v + 31) / 32 * 32; }

int run_infer(const InferArgs& a) {
  const NetworkConfig net = NetworkConfig::from_echo(read_checkpoint_echo(a.checkpoint));
  auto model = build_network<float>(net, 0);
  load_checkpoint(*model, a.checkpoint);
  const auto files = expand_inputs(a.inputs);
  ConfusionMatrix cm(net.num_classes, a.ignore_index);
  NoGradGuard no_grad;
  for (const auto& file : files) {
    Sample s{image_to_tensor(read_image(file)), {}};
    const int h = s.image.shape().h, w = s.image.shape().w;
    s.mask = LabelMap(1, h, w, 0);
    // The network needs sizes divisible by 32; predict on a resized copy.
    const Sample net_in = resize_sample(s, round_up32(h), round_up32(w));
    const auto out = model->forward(Variable<float>(net_in.image), Mode::infer);
    Sample pred{net_in.image, argmax_labels(out.logits.value())};
    pred = resize_sample(pred, h, w);
    const fs::path dest = fs::path(a.out) / (file.stem().string() + ".png");
    fs::create_directories(dest.parent_path());
    write_image(dest, colorize_mask(pred.mask, a.ignore_index));
    if (!a.labels.empty()) {
      fs::path gt = fs::path(a.labels) / (file.stem().string() + ".png");
      if (!fs::exists(gt)) gt.replace_extension(".pgm");
      cm.accumulate(pred.mask, gray_to_mask(read_image(gt)));
    }
    std::cout << file.string() << " -> " << dest.string() << "\n";
  }
  if (!a.labels.empty() && cm.empty()) std::fprintf(stderr, "warning: every labelled pixel is ignored\n");
  if (!a.labels.empty()) std::printf("mIoU %.4f over %zu images\n", cm.miou(), files.size());
  return 0;
}

// ---------------------------------------------------------------------------

struct ProfileArgs {
  NetFlags net;
  int height = 512;
  int width = 1024;
  int batch = 1;
  int warmup = 2;
  int reps = 10;
  int threads = 0;
  std::string csv;
};

ProfileReport static_report(const NetworkConfig& net, Shape input, CrossCbamNet<float>& model) {
  ProfileReport r;
  r.model = variant_label(net);
  r.params = count_params(model);
  r.flops = count_flops(model, input);
  return r;
}

int run_count(const ProfileArgs& a) {
  const RunConfig cfg = a.net.resolve();
  auto model = build_network<float>(cfg.net, cfg.seed);
  const ProfileReport r = static_report(cfg.net, Shape{a.batch, 3, a.height, a.width}, *model);
  std::cout << r.table();
  if (!a.csv.empty()) write_text(a.csv, r.csv());
  return 0;
}

int run_bench(const ProfileArgs& a) {
  const RunConfig cfg = a.net.resolve();
  if (a.threads > 0) omp_set_num_threads(a.threads);
  auto model = build_network<float>(cfg.net, cfg.seed);
  const Shape input{a.batch, 3, a.height, a.width};
  ProfileReport r = static_report(cfg.net, input, *model);
  r.latency = bench_latency(*model, input, a.warmup, a.reps, cfg.seed);
  std::cout << r.table();
  if (!a.csv.empty()) write_text(a.csv, r.csv());
  return 0;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  GradcheckOptions opt;
  bool skip_network = false;
};

int run_gradcheck(const GradcheckArgs& a) {
  auto results = gradcheck_ops(a.opt, &std::cout);
  if (!a.skip_network) {
    results.push_back(gradcheck_end_to_end(a.opt, &std::cout));
  }
  const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.pass; });
  std::printf("%zu checks, %ld failed\n", results.size(), static_cast<long>(failed));
  return failed ? kExitFailedCheck : 0;
}

int run_verify() {
  const auto results = verify_all(&std::cout);
  const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.pass; });
  std::printf("%zu checks, %ld failed\n", results.size(), static_cast<long>(failed));
  return failed ? kExitFailedCheck : 0;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  SyntheticSceneSpec spec;
  std::string size = "128x256";
  std::string kinds = "rectangle,disc,stripe";
  std::string out = "synthetic";
};

int run_gen(GenArgs a) {
  RunConfig scratch;
  scratch.set("synth_size", a.size);
  scratch.set("synth_kinds", a.kinds);
  a.spec.height = scratch.synth.height;
  a.spec.width = scratch.synth.width;
  a.spec.kinds = scratch.synth.kinds;
  const Dataset d = gen_synthetic(a.spec);
  write_dataset(d, a.out);
  std::cout << "wrote " << d.samples.size() << " samples (" << a.spec.classes << " classes, " << a.spec.height
            << "x" << a.spec.width << ") to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-CBAM real-time segmentation: training, inference and profiling"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all subcommand help");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train with SGD and the poly schedule");
  train_args.net.attach(train_cmd, true);
  train_cmd->add_option("--out", train_args.out, "output directory (overrides out_dir)");
  train_cmd->add_option("--stop-after", train_args.stop_after, "stop after N iterations")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--log-interval", train_args.log_interval, "iterations between loss lines")
      ->check(CLI::PositiveNumber);
  train_cmd->add_flag("--quiet", train_args.quiet, "no progress lines");

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand("infer", "write colour-mapped masks for images");
  infer_cmd->add_option("--checkpoint", infer_args.checkpoint, "XCBM checkpoint")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--input", infer_args.inputs, "image files or directories")->required();
  infer_cmd->add_option("--out", infer_args.out, "output directory");
  infer_cmd->add_option("--labels", infer_args.labels, "directory of gray label masks; reports mIoU")
      ->check(CLI::ExistingDirectory);
  infer_cmd->add_option("--ignore-index", infer_args.ignore_index, "label ignored by mIoU");

  ProfileArgs count_args;
  auto* count_cmd = app.add_subcommand("count", "parameter and operation counts");
  ProfileArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "counts plus inference latency");
  for (auto [cmd, args] : {std::pair{count_cmd, &count_args}, std::pair{bench_cmd, &bench_args}}) {
    args->net.attach(cmd, true);
    cmd->add_option("--height", args->height, "input height")->check(CLI::PositiveNumber);
    cmd->add_option("--width", args->width, "input width")->check(CLI::PositiveNumber);
    cmd->add_option("--batch", args->batch, "batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--csv", args->csv, "also write the report as CSV");
  }
  bench_cmd->add_option("--warmup", bench_args.warmup, "discarded forwards")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--reps", bench_args.reps, "timed forwards (>= 10)")->check(CLI::Range(10, 1000000));
  bench_cmd->add_option("--threads", bench_args.threads, "OpenMP threads (0: runtime default)");
  bench_args.height = 256;
  bench_args.width = 512;

  GradcheckArgs grad_args;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference checks of every op and the network");
  grad_cmd->add_option("--seeds", grad_args.opt.seeds, "random cases per op")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--tolerance", grad_args.opt.tolerance, "max gradient error");
  grad_cmd->add_option("--eps", grad_args.opt.eps, "central difference step");
  grad_cmd->add_option("--params", grad_args.opt.e2e_params, "sampled network parameters")
      ->check(CLI::PositiveNumber);
  grad_cmd->add_option("--seed", grad_args.opt.seed, "base seed");
  grad_cmd->add_flag("--skip-network", grad_args.skip_network, "ops only");

  auto* verify_cmd = app.add_subcommand("verify", "run every invariant check");

  GenArgs gen_args;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic scene dataset");
  gen_cmd->add_option("--seed", gen_args.spec.seed, "scene seed");
  gen_cmd->add_option("--samples", gen_args.spec.n_samples, "number of scenes")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--classes", gen_args.spec.classes, "classes including background")->check(CLI::Range(2, 19));
  gen_cmd->add_option("--size", gen_args.size, "HxW canvas");
  gen_cmd->add_option("--kinds", gen_args.kinds, "shape kinds, comma separated");
  gen_cmd->add_option("--noise", gen_args.spec.noise, "image noise amplitude");
  gen_cmd->add_option("--out", gen_args.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train_cmd) return run_train(train_args);
    if (*infer_cmd) return run_infer(infer_args);
    if (*count_cmd) return run_count(count_args);
    if (*bench_cmd) return run_bench(bench_args);
    if (*grad_cmd) return run_gradcheck(grad_args);
    if (*verify_cmd) return run_verify();
    if (*gen_cmd) return run_gen(gen_args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitFailedCheck;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailedCheck;
  }
  return kExitUsage;
}
