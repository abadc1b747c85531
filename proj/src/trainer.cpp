#include "xcbam/trainer.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>

#include "xcbam/checkpoint.hpp"
#include "xcbam/context.hpp"
#include "xcbam/error.hpp"

namespace xcbam {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kShuffleStream = 0x53485546;
constexpr std::uint32_t kAugmentStream = 0x41554731;

Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), tag};
  return Rng(seq);
}

std::string format_row(const LossLogRow& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g\n", static_cast<long long>(r.iter), r.lr,
                static_cast<double>(r.loss));
  return buf;
}

}  // namespace

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t dataset_size,
                                       int batch_size, std::int64_t iter) {
  const std::size_t per_epoch = dataset_size / static_cast<std::size_t>(batch_size);
  if (per_epoch == 0) throw ConfigError("batch_size exceeds dataset size");
  const auto epoch = static_cast<std::uint64_t>(iter) / per_epoch;
  const auto slot = static_cast<std::size_t>(static_cast<std::uint64_t>(iter) % per_epoch);
  std::vector<std::size_t> order(dataset_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = stream(seed, epoch, 0, kShuffleStream);
  std::shuffle(order.begin(), order.end(), rng);
  const auto first = order.begin() + static_cast<std::ptrdiff_t>(slot * batch_size);
  return {first, first + batch_size};
}

std::pair<Dataset, Dataset> load_datasets(const RunConfig& cfg) {
  switch (cfg.data) {
    case DataSource::synthetic: {
      SyntheticSceneSpec val_spec = cfg.synth;
      val_spec.noise_seed = cfg.val_noise_seed ? cfg.val_noise_seed : cfg.synth.seed + 1;
      return {gen_synthetic(cfg.synth), gen_synthetic(val_spec)};
    }
    case DataSource::directory: {
      Dataset train_set = read_dataset_dir(cfg.train_dir, cfg.net.num_classes);
      Dataset val_set = cfg.val_dir.empty() ? Dataset{{}, cfg.net.num_classes}
                                            : read_dataset_dir(cfg.val_dir, cfg.net.num_classes);
      return {std::move(train_set), std::move(val_set)};
    }
    case DataSource::cityscapes:
      return {read_cityscapes(cfg.data_root, "train", cfg.data_limit),
              read_cityscapes(cfg.data_root, "val", cfg.data_limit)};
    case DataSource::camvid:
      return {read_camvid(cfg.data_root, "train", cfg.data_limit),
              read_camvid(cfg.data_root, "val", cfg.data_limit)};
  }
  throw InternalError("unhandled data source");
}

ConfusionMatrix evaluate(CrossCbamNet<float>& model, const Dataset& data, int batch_size,
                         int ignore_index) {
  ConfusionMatrix cm(model.config().num_classes, ignore_index);
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < data.samples.size(); i += static_cast<std::size_t>(batch_size)) {
    std::vector<const Sample*> chunk;
    for (std::size_t j = i; j < std::min(data.samples.size(), i + batch_size); ++j) {
      chunk.push_back(&data.samples[j]);
    }
    const Batch b = make_batch(chunk);
    const ModelOutput<float> out = model.forward(Variable<float>(b.images), Mode::infer);
    cm.accumulate(argmax_labels(out.logits.value()), b.masks);
  }
  return cm;
}

TrainSummary train(const RunConfig& cfg, const Dataset& train_set, const Dataset& val_set,
                   const TrainOptions& options) {
  cfg.validate();
  if (train_set.samples.empty()) throw DataError("empty training set");
  if (train_set.num_classes != cfg.net.num_classes) {
    throw ConfigError("dataset has " + std::to_string(train_set.num_classes) +
                      " classes, model " + std::to_string(cfg.net.num_classes));
  }
  const fs::path out_dir = cfg.out_dir;
  fs::create_directories(out_dir);
  {
    std::ofstream dump(out_dir / "config.cfg");
    dump << cfg.dump();
  }

  auto model = build_network<float>(cfg.net, cfg.seed);
  Sgd<float> sgd(named_parameters(*model), cfg.optim);

  TrainSummary summary;
  summary.loss_log = out_dir / "loss.csv";
  std::ofstream loss_log(summary.loss_log, std::ios::trunc);
  loss_log << "iter,lr,loss\n";
  std::ofstream val_log(out_dir / "val.csv", std::ios::trunc);
  val_log << "iter,miou\n";

  auto validate_now = [&](std::int64_t iter) {
    if (val_set.samples.empty()) return;
    const ConfusionMatrix cm = evaluate(*model, val_set, cfg.batch_size, cfg.loss.ignore_index);
    if (cm.empty() && options.progress) *options.progress << "warning: every validation pixel is ignored\n";
    const double miou = cm.miou();
    summary.val.push_back({iter, miou});
    val_log << iter << "," << miou << "\n";
    if (options.progress) *options.progress << "iter " << iter << " val mIoU " << miou << "\n";
  };

  const std::int64_t total =
      options.stop_after > 0 ? std::min(options.stop_after, cfg.optim.max_iter) : cfg.optim.max_iter;
  const std::size_t n = train_set.samples.size();
  for (std::int64_t it = 0; it < total; ++it) {
    const auto idx = batch_indices(cfg.seed, n, cfg.batch_size, it);
    const auto per_epoch = static_cast<std::uint64_t>(n / static_cast<std::size_t>(cfg.batch_size));
    const std::uint64_t epoch = static_cast<std::uint64_t>(it) / per_epoch;
    std::vector<Sample> augmented;
    augmented.reserve(idx.size());
    for (std::size_t i : idx) {
      Rng rng = stream(cfg.seed, epoch, i, kAugmentStream);
      augmented.push_back(augment(train_set.samples[i], cfg.augment, rng));
    }
    std::vector<const Sample*> ptrs;
    for (const auto& s : augmented) ptrs.push_back(&s);
    const Batch batch = make_batch(ptrs);

    const double lr = poly_lr(it, cfg.optim);
    const ModelOutput<float> out = model->forward(Variable<float>(batch.images), Mode::train);
    const LossResult<float> loss = composite_loss(out, batch.masks, cfg.loss);
    if (loss.loss.requires_grad()) backward(loss.loss);
    sgd.step(lr);
    sgd.zero_grad();

    const LossLogRow row{it, lr, loss.loss.value()[0]};
    summary.losses.push_back(row);
    loss_log << format_row(row);
    if (options.progress && options.log_interval > 0 && (it + 1) % options.log_interval == 0) {
      *options.progress << "iter " << it + 1 << "/" << total << " lr " << lr << " loss "
                        << row.loss << "\n";
    }
    if (cfg.val_interval > 0 && (it + 1) % cfg.val_interval == 0 && it + 1 < total) {
      validate_now(it + 1);
    }
    if (cfg.checkpoint_interval > 0 && (it + 1) % cfg.checkpoint_interval == 0 && it + 1 < total) {
      save_checkpoint(*model, out_dir / ("checkpoint_" + std::to_string(it + 1) + ".xcbm"));
    }
  }
  loss_log.flush();

  summary.checkpoint = out_dir / "model.xcbm";
  save_checkpoint(*model, summary.checkpoint);
  if (options.final_eval) {
    summary.train_miou =
        evaluate(*model, train_set, cfg.batch_size, cfg.loss.ignore_index).miou();
    validate_now(total);
    if (!summary.val.empty()) summary.val_miou = summary.val.back().miou;
  }
  return summary;
}

}  // namespace xcbam
