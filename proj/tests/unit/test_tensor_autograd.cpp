#include <gtest/gtest.h>

#include "oracle_sweep.hpp"
#include "reference.hpp"
#include "xcbam/autograd.hpp"
#include "xcbam/context.hpp"
#include "xcbam/error.hpp"
#include "xcbam/gradcheck.hpp"
#include "xcbam/layers.hpp"

namespace xcbam {
namespace {

using Var = Variable<double>;

TEST(Tensor, OffsetsAreRowMajorNchw) {
  Tensor<float> t(Shape{2, 3, 4, 5});
  EXPECT_EQ(t.offset(1, 2, 3, 4), t.numel() - 1);
  EXPECT_EQ(t.offset(0, 1, 0, 0), 20u);
  t.at(1, 0, 2, 1) = 7.0f;
  EXPECT_EQ(t[60 + 10 + 1], 7.0f);
}

TEST(Tensor, RandomTensorsAreReproducible) {
  EXPECT_TRUE(bit_equal(random_normal<float>(Shape{1, 2, 3, 4}, 9), random_normal<float>(Shape{1, 2, 3, 4}, 9)));
  EXPECT_FALSE(bit_equal(random_normal<float>(Shape{1, 2, 3, 4}, 9), random_normal<float>(Shape{1, 2, 3, 4}, 10)));
}

TEST(Autograd, FanOutAccumulatesGradients) {
  Var x(Tensor<double>(Shape{1, 1, 1, 3}, std::vector<double>{1.0, 2.0, 3.0}), true);
  // d/dx sum(x*x + x) = 2x + 1
  backward(sum(add(mul(x, x), x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 5.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 7.0);
}

TEST(Autograd, DiamondGraphVisitsEachNodeOnce) {
  Var x(Tensor<double>(Shape{1, 1, 1, 1}, 2.0), true);
  const Var y = scale(x, 3.0);
  // z = y*y + y with y shared; dz/dx = (2y + 1) * 3
  backward(add(mul(y, y), y));
  EXPECT_DOUBLE_EQ(x.grad()[0], (2.0 * 6.0 + 1.0) * 3.0);
}

TEST(Autograd, BackwardFromNonScalarIsAUsageError) {
  Var x(Tensor<double>(Shape{1, 1, 2, 2}, 1.0), true);
  EXPECT_THROW(backward(relu(x)), UsageError);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
  Var x(Tensor<double>(Shape{1, 1, 2, 2}, 1.0), true);
  Var y;
  {
    NoGradGuard guard;
    y = sum(x);
  }
  EXPECT_FALSE(y.requires_grad());
}

TEST(Autograd, ShapeOnlyForwardProducesMetaTensors) {
  ShapeOnlyGuard shapes;
  const Var x(Tensor<double>::meta(Shape{2, 3, 16, 16}));
  const Var w(Tensor<double>::meta(Shape{8, 3, 3, 3}));
  const Var y = conv2d(x, w, Var(), ConvGeometry{2, 1, 1});
  EXPECT_TRUE(y.value().is_meta());
  EXPECT_EQ(y.shape(), (Shape{2, 8, 8, 8}));
}

TEST(FiniteDifference, MatchesAnalyticDerivativeOfCubic) {
  Tensor<double> x(Shape{1, 1, 1, 2}, std::vector<double>{0.5, -1.5});
  const auto g = finite_diff_grad<double>(
      [](const Tensor<double>& t) { return t[0] * t[0] * t[0] + 2.0 * t[1]; }, x, 1e-5);
  EXPECT_NEAR(g[0], 0.75, 1e-9);
  EXPECT_NEAR(g[1], 2.0, 1e-9);
}

TEST(Kernels, GemmAgreesWithLoopOracleInEveryOrientation) {
  for (const auto& r : testing::reference_sweeps(40, 21)) {
    if (r.name == "gemm") {
      EXPECT_LE(r.worst, 1e-10) << r.cases << " cases";
    }
  }
}

TEST(Kernels, OptimizedOpsMatchReferenceTranscriptions) {
  for (const auto& r : testing::reference_sweeps(25, 5)) {
    EXPECT_LE(r.worst, 1e-10) << r.name << " over " << r.cases << " cases";
  }
}

TEST(Kernels, DilationWiderThanTheInputIsHandled) {
  // 2x2 map, 3x3 kernel at dilation 3 with matching padding: most taps fall outside.
  const Var x(random_normal<double>(Shape{1, 4, 2, 2}, 3));
  const Var w(random_normal<double>(Shape{5, 4, 3, 3}, 4));
  const auto got = conv2d(x, w, Var(), ConvGeometry{1, 3, 3}).value();
  EXPECT_LE(max_relative_difference(got, ref::conv2d(x.value(), w.value(), {}, 1, 3, 3), 1e-9), 1e-12);
}

TEST(Kernels, SinglePrecisionPathTracksReference) {
  Rng rng(8);
  const auto xd = random_normal<double>(Shape{2, 16, 33, 47}, rng());
  const auto wd = random_normal<double>(Shape{12, 16, 3, 3}, rng(), 0.2);
  const Variable<float> x(xd.cast<float>());
  const Variable<float> w(wd.cast<float>());
  const auto got = conv2d(x, w, Variable<float>(), ConvGeometry{2, 2, 2}).value().cast<double>();
  const auto want = ref::conv2d(xd.cast<float>().cast<double>(), wd.cast<float>().cast<double>(), {}, 2, 2, 2);
  EXPECT_LE(max_relative_difference(got, want, 1.0), 1e-5);
}

TEST(Kernels, WindowGeometryErrorsAreConfigErrors) {
  EXPECT_THROW(window_out_dim(2, 5, 1, 0, 1), ConfigError);
  EXPECT_THROW(window_out_dim(8, 3, 0, 1, 1), ConfigError);
  EXPECT_EQ(window_out_dim(8, 3, 2, 1, 1), 4);
}

TEST(Costs, ConvAndElementwiseCountsFollowTheClosedForm) {
  const Var x(Tensor<double>::meta(Shape{1, 4, 10, 10}));
  const Var w(Tensor<double>::meta(Shape{8, 4, 1, 1}));
  CostRecorder costs;
  {
    RecordCostsGuard recording(costs);
    ShapeOnlyGuard shapes;
    relu(conv2d(x, w, Var(), ConvGeometry{}));
  }
  EXPECT_EQ(costs.total().conv_macs, 3200u);
  EXPECT_EQ(costs.total().elementwise, 800u);
}

}  // namespace
}  // namespace xcbam
