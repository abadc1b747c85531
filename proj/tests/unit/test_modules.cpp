#include <gtest/gtest.h>

#include "closed_form.hpp"
#include "oracle_sweep.hpp"
#include "xcbam/backbone.hpp"
#include "xcbam/checks.hpp"
#include "xcbam/context.hpp"
#include "xcbam/error.hpp"
#include "xcbam/profiler.hpp"
#include "xcbam/se_aspp.hpp"

namespace xcbam {
namespace {

using Var = Variable<float>;

void expect_all_pass(const std::vector<CheckResult>& results) {
  for (const auto& r : results) EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
}

TEST(ConvX, ParameterCountMatchesHandCount) {
  Rng rng(1);
  ConvX<float> m(64, 128, 3, rng);
  EXPECT_EQ(count_params<float>(m).total, 64 * 128 * 9 + 2 * 128);
  EXPECT_EQ(convx_param_count(64, 128, 3), testing::convx_params(64, 128, 3));
}

TEST(Stdc, ModuleConcatenatesBlocksToOutputWidth) {
  Rng rng(2);
  for (const int stride : {1, 2}) {
    StdcModule<float> m(StdcModuleSpec{32, 64, 4, stride}, rng);
    NoGradGuard no_grad;
    const auto y = m.forward(Var(random_normal<float>(Shape{2, 32, 16, 24}, 3)), Mode::train);
    EXPECT_EQ(y.shape(), (Shape{2, 64, 16 / stride, 24 / stride}));
  }
}

TEST(Stdc, BackboneFeatureStridesAndWidths) {
  for (const auto spec : {BackboneSpec::stdc1(), BackboneSpec::stdc2()}) {
    Rng rng(3);
    StdcBackbone<float> b(spec, rng);
    ShapeOnlyGuard shapes;
    const auto f = b.forward(Var(Tensor<float>::meta(Shape{1, 3, 256, 512})), Mode::infer);
    EXPECT_EQ(f.stage3.shape(), (Shape{1, 256, 32, 64}));
    EXPECT_EQ(f.stage4.shape(), (Shape{1, 512, 16, 32}));
    EXPECT_EQ(f.stage5.shape(), (Shape{1, 1024, 8, 16}));
  }
}

TEST(Stdc, BackboneParameterCountMatchesClosedForm) {
  for (const bool large : {false, true}) {
    Rng rng(4);
    StdcBackbone<float> b(large ? BackboneSpec::stdc2() : BackboneSpec::stdc1(), rng);
    testing::ClosedFormSpec s;
    s.large = large;
    EXPECT_EQ(count_params<float>(b).total, testing::closed_form(s).backbone_params);
  }
}

TEST(Attention, GatesLieStrictlyInsideUnitInterval) {
  Rng rng(5);
  ChannelAttention<float> ca(32, rng);
  SpatialAttention<float> sa(rng);
  const Var x(random_normal<float>(Shape{2, 32, 6, 7}, 6, 3.0f));
  NoGradGuard no_grad;
  for (const auto& g : {ca.forward(x), sa.forward(x)}) {
    for (const float v : g.value().values()) {
      EXPECT_GT(v, 0.0f);
      EXPECT_LT(v, 1.0f);
    }
  }
  EXPECT_EQ(ca.forward(x).shape(), (Shape{2, 32, 1, 1}));
  EXPECT_EQ(sa.forward(x).shape(), (Shape{2, 1, 6, 7}));
}

TEST(Attention, SeparateBottlenecksAddParameters) {
  Rng rng(6);
  ChannelAttention<float> shared(64, rng, 16, true);
  ChannelAttention<float> separate(64, rng, 16, false);
  EXPECT_EQ(count_params<float>(separate).total - count_params<float>(shared).total,
            64 * 4 + 4 + 4 * 64 + 64);
  EXPECT_EQ(count_params<float>(separate).total, channel_attention_param_count(64, 16, false));
}

TEST(Attention, CcbamInvariantsHold) { expect_all_pass(check_ccbam_invariants()); }

TEST(Attention, CcbamReductionsAreExactToRoundoff) {
  const CcbamInvariantErrors e = measure_ccbam_invariants(30, 99);
  EXPECT_LE(e.swap, 1e-12);
  EXPECT_LE(e.equal_inputs, 1e-12);
  EXPECT_LE(e.zero_weights, 1e-12);
}

TEST(SeAspp, PreservesSpatialSizeForEveryRateSet) {
  for (const auto& rates : std::vector<std::vector<int>>{{1}, {1, 3}, {2, 4}, {1, 3, 5}, {6, 12, 18}}) {
    SeAsppConfig cfg;
    cfg.dilations = rates;
    Rng rng(7);
    SeAspp<float> m(cfg, rng);
    ShapeOnlyGuard shapes;
    EXPECT_EQ(m.forward(Var(Tensor<float>::meta(Shape{1, 1024, 16, 32})), Mode::infer).shape(),
              (Shape{1, 256, 16, 32}));
  }
}

TEST(SeAspp, RejectsEmptyOrNonPositiveRates) {
  SeAsppConfig cfg;
  cfg.dilations = {};
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg.dilations = {1, 0};
  EXPECT_THROW(validate(cfg), ConfigError);
}

TEST(Network, ParameterCountsMatchClosedFormAcrossConfigurations) {
  for (const auto v : {ModelVariant::m, ModelVariant::l}) {
    for (const auto& d : std::vector<std::vector<int>>{{1, 3}, {2, 4}, {3, 5}, {1, 3, 5}}) {
      for (const int ch : {128, 256, 512}) {
        NetworkConfig cfg;
        cfg.variant = v;
        cfg.se_aspp.dilations = d;
        cfg.set_channels(ch);
        testing::ClosedFormSpec s;
        s.large = v == ModelVariant::l;
        s.dilations = d;
        s.channels = ch;
        EXPECT_EQ(network_param_count(cfg), testing::closed_form(s).params) << cfg.echo();
      }
    }
  }
}

TEST(Network, ConvMacsMatchClosedForm) {
  for (const auto& d : std::vector<std::vector<int>>{{1, 3}, {2, 4}, {1, 3, 5}}) {
    NetworkConfig cfg;
    cfg.se_aspp.dilations = d;
    auto m = build_network<float>(cfg, 1);
    testing::ClosedFormSpec s;
    s.dilations = d;
    s.aux_head = false;  // not run at inference
    s.height = 256;
    s.width = 512;
    EXPECT_EQ(count_flops(*m, Shape{1, 3, 256, 512}).total.conv_macs, testing::closed_form(s).conv_macs);
  }
}

TEST(Network, StructureInvariantsHold) { expect_all_pass(check_model_structure()); }

TEST(Network, EchoRoundTripsAndRejectsUnknownKeys) {
  NetworkConfig cfg;
  cfg.variant = ModelVariant::l;
  cfg.se_aspp.dilations = {2, 4};
  cfg.set_channels(128);
  cfg.aux_head = false;
  EXPECT_EQ(NetworkConfig::from_echo(cfg.echo()).echo(), cfg.echo());
  EXPECT_THROW(NetworkConfig::from_echo(cfg.echo() + ";colour=blue"), ConfigError);
  EXPECT_THROW(NetworkConfig::from_echo("variant=m"), ConfigError);
}

}  // namespace
}  // namespace xcbam
