#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "xcbam/checks.hpp"
#include "xcbam/error.hpp"
#include "xcbam/losses.hpp"
#include "xcbam/metrics.hpp"
#include "xcbam/optim.hpp"
#include "xcbam/profiler.hpp"

namespace xcbam {
namespace {

void expect_all_pass(const std::vector<CheckResult>& results) {
  ASSERT_FALSE(results.empty());
  for (const auto& r : results) EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
}

TEST(Objectives, LossAndOptimizerChecks) { expect_all_pass(check_losses_and_optim()); }
TEST(Metrics, ConfusionAndMiouChecks) { expect_all_pass(check_metrics()); }

TEST(Losses, HalfIgnoredTargetAveragesOverCountedPixelsOnly) {
  // Pixel 0: uniform over 2 classes; pixel 1 ignored and would otherwise dominate.
  const Variable<double> logits(
      Tensor<double>(Shape{1, 2, 1, 2}, std::vector<double>{0.0, 50.0, 0.0, -50.0}));
  LabelMap target(1, 1, 2);
  target.at(0, 0, 0) = 1;
  target.at(0, 0, 1) = kDefaultIgnoreIndex;
  const auto ce = cross_entropy(logits, target);
  EXPECT_EQ(ce.counted, 1u);
  EXPECT_NEAR(ce.loss.value()[0], std::log(2.0), 1e-12);
}

TEST(Losses, AllIgnoredRaisesTheFlag) {
  const Variable<double> logits(Tensor<double>(Shape{1, 3, 2, 2}, 0.5));
  const LabelMap target(1, 2, 2, kDefaultIgnoreIndex);
  const auto r = mixed_loss(logits, target, LossConfig{});
  EXPECT_TRUE(r.all_ignored);
  EXPECT_EQ(r.loss.value()[0], 0.0);
}

TEST(Losses, OutOfRangeTargetIsADataError) {
  const Variable<double> logits(Tensor<double>(Shape{1, 3, 1, 1}, 0.0));
  const LabelMap target(1, 1, 1, 3);
  EXPECT_THROW(cross_entropy(logits, target), DataError);
}

TEST(Losses, InvalidMixingWeightIsAConfigError) {
  LossConfig cfg;
  cfg.alpha = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.alpha = 0.7;
  cfg.gamma = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Optim, PolyScheduleClampsPastTheEnd) {
  OptimConfig cfg;
  cfg.max_iter = 100;
  EXPECT_DOUBLE_EQ(poly_lr(0, cfg), 0.01);
  EXPECT_DOUBLE_EQ(poly_lr(100, cfg), 1e-4);
  EXPECT_DOUBLE_EQ(poly_lr(250, cfg), 1e-4);
  EXPECT_DOUBLE_EQ(poly_lr(10, cfg), std::max(0.01 * std::pow(0.9, 0.9), 1e-4));
}

TEST(Metrics, ClassAbsentFromBothMapsIsExcludedFromTheMean) {
  ConfusionMatrix cm(3);
  LabelMap pred(1, 1, 4), truth(1, 1, 4);
  pred.labels = {0, 0, 1, 1};
  truth.labels = {0, 1, 1, 1};
  cm.accumulate(pred, truth);
  // IoU0 = 1/2, IoU1 = 2/3, class 2 absent
  EXPECT_LT(cm.class_iou(2), 0.0);
  EXPECT_NEAR(cm.miou(), (0.5 + 2.0 / 3.0) / 2.0, 1e-15);
}

TEST(Metrics, EmptyMatrixIsFlagged) {
  ConfusionMatrix cm(4);
  EXPECT_TRUE(cm.empty());
  EXPECT_EQ(cm.miou(), 0.0);
}

TEST(Metrics, ArgmaxPicksTheFirstMaximum) {
  const Tensor<float> logits(Shape{1, 3, 1, 2}, std::vector<float>{1, 5, 3, 5, 3, 0});
  const LabelMap m = argmax_labels(logits);
  EXPECT_EQ(m.labels, (std::vector<std::int32_t>{1, 0}));
}

// Small conv stack whose cost grows with the input area.
std::function<void(const Variable<float>&)> conv_stack() {
  auto w = std::make_shared<Variable<float>>(random_normal<float>(Shape{16, 3, 3, 3}, 1, 0.1f));
  auto w2 = std::make_shared<Variable<float>>(random_normal<float>(Shape{16, 16, 3, 3}, 2, 0.1f));
  return [w, w2](const Variable<float>& x) {
    relu(conv2d(relu(conv2d(x, *w, Variable<float>(), ConvGeometry{1, 1, 1})), *w2,
                Variable<float>(), ConvGeometry{1, 1, 1}));
  };
}

TEST(Latency, TenRepetitionsGiveTenSamples) {
  const auto r = bench_latency<float>(conv_stack(), Shape{1, 3, 16, 16}, 1, 10);
  EXPECT_EQ(r.samples.size(), 10u);
  EXPECT_GT(r.fps, 0.0);
  EXPECT_NEAR(r.fps, 1.0 / r.mean, 1e-9 * r.fps);
  EXPECT_FALSE(r.environment.empty());
}

TEST(Latency, RejectsTooFewRepetitions) {
  EXPECT_THROW(bench_latency<float>(conv_stack(), Shape{1, 3, 8, 8}, 1, 9), UsageError);
  EXPECT_THROW(bench_latency<float>(conv_stack(), Shape{1, 3, 8, 8}, 0, 10), UsageError);
}

TEST(Latency, DoublingTheAreaIncreasesMeanLatency) {
  const auto model = conv_stack();
  int wins = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const double small = bench_latency<float>(model, Shape{1, 3, 64, 64}, 2, 10).mean;
    const double large = bench_latency<float>(model, Shape{1, 3, 64, 128}, 2, 10).mean;
    wins += large > small;
  }
  EXPECT_EQ(wins, 5);
}

TEST(Latency, RepeatedRunsAgreeOnTheMedian) {
  const auto model = conv_stack();
  const double a = bench_latency<float>(model, Shape{1, 3, 96, 96}, 3, 15).median;
  const double b = bench_latency<float>(model, Shape{1, 3, 96, 96}, 3, 15).median;
  EXPECT_LE(std::abs(a - b), 0.2 * std::min(a, b)) << a << " vs " << b;
}

TEST(Profiler, ReportsCarryBothConventions) {
  NetworkConfig cfg;
  auto m = build_network<float>(cfg, 1);
  ProfileReport report;
  report.model = "M";
  report.params = count_params(*m);
  report.flops = count_flops(*m, Shape{1, 3, 256, 512});
  EXPECT_EQ(report.flops->count(FlopConvention::flops2x),
            2 * report.flops->total.conv_macs + report.flops->total.elementwise);
  EXPECT_EQ(report.flops->count(FlopConvention::macs),
            report.flops->total.conv_macs + report.flops->total.elementwise);
  const std::string table = report.table();
  EXPECT_NE(table.find("macs"), std::string::npos);
  EXPECT_NE(table.find("flops2x"), std::string::npos);
  EXPECT_NE(report.csv().find(','), std::string::npos);
}

TEST(Profiler, GroupsPartitionTheTotal) {
  auto m = build_network<float>(NetworkConfig{}, 1);
  const ParamReport r = count_params(*m);
  std::int64_t sum = 0;
  for (const auto& g : r.groups) sum += g.count;
  EXPECT_EQ(sum, r.total);
  std::uint64_t macs = 0;
  const FlopReport f = count_flops(*m, Shape{2, 3, 64, 128});
  for (const auto& [scope, cost] : f.by_scope) macs += cost.conv_macs;
  EXPECT_EQ(macs, f.total.conv_macs);
}

}  // namespace
}  // namespace xcbam
