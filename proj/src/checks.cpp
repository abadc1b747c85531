#include "xcbam/checks.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <ostream>
#include <set>
#include <sstream>

#include "xcbam/checkpoint.hpp"
#include "xcbam/config.hpp"
#include "xcbam/error.hpp"
#include "xcbam/metrics.hpp"
#include "xcbam/optim.hpp"
#include "xcbam/profiler.hpp"
#include "xcbam/trainer.hpp"

namespace xcbam {

namespace fs = std::filesystem;

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
}

void print_results(std::ostream& os, const std::vector<CheckResult>& results) {
  for (const auto& r : results) {
    os << (r.pass ? "PASS " : "FAIL ") << r.name;
    if (!r.detail.empty()) os << ": " << r.detail;
    os << "\n";
  }
  os.flush();
}

namespace {

template <typename V>
std::string str(const V& v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

CheckResult expect(std::string name, bool ok, std::string detail = {}) {
  return {std::move(name), ok, std::move(detail)};
}

// Runs `body`; an exception becomes a failed result carrying its message.
template <typename Fn>
void guarded(std::vector<CheckResult>& out, const std::string& name, Fn body) {
  try {
    body();
  } catch (const std::exception& e) {
    out.push_back(expect(name, false, std::string("threw: ") + e.what()));
  }
}

template <typename E, typename Fn>
bool throws(Fn fn, std::string* message = nullptr) {
  try {
    fn();
  } catch (const E& e) {
    if (message) *message = e.what();
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

NetworkConfig net_config(ModelVariant v, std::vector<int> dilations, int channels = 256) {
  NetworkConfig cfg;
  cfg.variant = v;
  cfg.se_aspp.dilations = std::move(dilations);
  cfg.set_channels(channels);
  return cfg;
}

std::int64_t params_of(const NetworkConfig& cfg) {
  auto m = build_network<float>(cfg, 1);
  return count_params(*m).total;
}

std::uint64_t macs_of(const NetworkConfig& cfg, Shape input = {1, 3, 512, 1024}) {
  auto m = build_network<float>(cfg, 1);
  return count_flops(*m, input).count(FlopConvention::macs);
}

fs::path scratch_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() /
                       ("xcbam-" + tag + "-" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  return dir;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<CheckResult> check_model_structure() {
  std::vector<CheckResult> out;

  guarded(out, "params: walked count equals closed form", [&] {
    bool ok = true;
    std::string bad;
    for (const ModelVariant v : {ModelVariant::m, ModelVariant::l}) {
      for (const auto& d : std::vector<std::vector<int>>{{1, 3}, {2, 4}, {1, 3, 5}}) {
        for (const int ch : {128, 256}) {
          for (const bool aux : {false, true}) {
            NetworkConfig cfg = net_config(v, d, ch);
            cfg.aux_head = aux;
            cfg.shared_attention_bottleneck = ch == 128;
            cfg.use_se_aspp = !(aux && ch == 128);
            if (params_of(cfg) != network_param_count(cfg)) {
              ok = false;
              bad = cfg.echo();
            }
          }
        }
      }
    }
    out.push_back(expect("params: walked count equals closed form", ok, bad));
  });

  guarded(out, "params: groups sum to total", [&] {
    auto m = build_network<float>(NetworkConfig{}, 1);
    const ParamReport r = count_params(*m);
    std::int64_t sum = 0;
    for (const auto& g : r.groups) sum += g.count;
    const std::int64_t parts = count_params<float>(m->backbone()).total +
                               count_params<float>(m->context_head()).total;
    const bool ok = sum == r.total && r.groups.size() >= 8 && parts == r.groups[0].count + r.groups[1].count;
    out.push_back(expect("params: groups sum to total", ok, str(sum) + " vs " + str(r.total)));
  });

  guarded(out, "params: single 1x1 conv 4->8 with bias has 40", [&] {
    Rng rng(1);
    Conv2d<float> conv(ConvSpec{4, 8, 1, {}, true}, rng);
    const auto n = count_params<float>(conv).total;
    out.push_back(expect("params: single 1x1 conv 4->8 with bias has 40", n == 40, str(n)));
  });

  guarded(out, "params: L exceeds M", [&] {
    const auto m = params_of(net_config(ModelVariant::m, {1, 3}));
    const auto l = params_of(net_config(ModelVariant::l, {1, 3}));
    out.push_back(expect("params: L exceeds M", l > m, str(m) + " < " + str(l)));
  });

  guarded(out, "params: third branch adds one 3x3 ConvX 1024->256", [&] {
    const auto delta = params_of(net_config(ModelVariant::m, {1, 3, 5})) -
                       params_of(net_config(ModelVariant::m, {1, 3}));
    const auto want = convx_param_count(1024, 256, 3);
    out.push_back(expect("params: third branch adds one 3x3 ConvX 1024->256", delta == want,
                         str(delta) + " vs " + str(want)));
  });

  guarded(out, "params: rates (2,4) add a 3x3-minus-1x1 ConvX delta", [&] {
    const auto delta = params_of(net_config(ModelVariant::m, {2, 4})) -
                       params_of(net_config(ModelVariant::m, {1, 3}));
    const auto want = convx_param_count(1024, 256, 3) - convx_param_count(1024, 256, 1);
    out.push_back(expect("params: rates (2,4) add a 3x3-minus-1x1 ConvX delta", delta == want,
                         str(delta) + " vs " + str(want)));
  });

  guarded(out, "params and flops increase with width 128 < 256 < 512", [&] {
    std::vector<std::int64_t> p;
    std::vector<std::uint64_t> f;
    for (const int ch : {128, 256, 512}) {
      p.push_back(params_of(net_config(ModelVariant::m, {1, 3}, ch)));
      f.push_back(macs_of(net_config(ModelVariant::m, {1, 3}, ch)));
    }
    const bool ok = p[0] < p[1] && p[1] < p[2] && f[0] < f[1] && f[1] < f[2];
    out.push_back(expect("params and flops increase with width 128 < 256 < 512", ok,
                         "params " + str(p[0]) + " " + str(p[1]) + " " + str(p[2])));
  });

  guarded(out, "flops: (1,3) < (2,4) == (3,5)", [&] {
    const auto a = macs_of(net_config(ModelVariant::m, {1, 3}));
    const auto b = macs_of(net_config(ModelVariant::m, {2, 4}));
    const auto c = macs_of(net_config(ModelVariant::m, {3, 5}));
    out.push_back(expect("flops: (1,3) < (2,4) == (3,5)", a < b && b == c,
                         str(a) + " " + str(b) + " " + str(c)));
  });

  guarded(out, "flops: linear in batch size", [&] {
    const NetworkConfig cfg;
    const auto f1 = macs_of(cfg, {1, 3, 128, 256});
    const auto f2 = macs_of(cfg, {2, 3, 128, 256});
    const auto f3 = macs_of(cfg, {3, 3, 128, 256});
    out.push_back(expect("flops: linear in batch size", f2 == 2 * f1 && f3 == 3 * f1,
                         str(f1) + " " + str(f2) + " " + str(f3)));
  });

  guarded(out, "flops: 1x1 conv 4->8 on 1x4x10x10 is 3200 MACs", [&] {
    Rng rng(1);
    Conv2d<float> conv(ConvSpec{4, 8, 1, {}, false}, rng);
    const FlopReport r = count_flops<float>([&](const Variable<float>& x) { conv.forward(x); },
                                            Shape{1, 4, 10, 10});
    out.push_back(expect("flops: 1x1 conv 4->8 on 1x4x10x10 is 3200 MACs",
                         r.total.conv_macs == 3200, str(r.total.conv_macs)));
  });

  guarded(out, "shape contracts hold over the (h, w) grid", [&] {
    auto m = build_network<float>(NetworkConfig{}, 1);
    bool ok = true;
    std::string bad;
    ShapeOnlyGuard shapes;
    NoGradGuard no_grad;
    for (int h = 64; h <= 256; h += 32) {
      for (int w = 128; w <= 512; w += 32) {
        const Shape in{1, 3, h, w};
        const auto o = m->forward(Variable<float>(Tensor<float>::meta(in)), Mode::train);
        const Shape want{1, 19, h, w};
        if (!(o.logits.shape() == want) || !o.aux_logits || !(o.aux_logits->shape() == want)) {
          ok = false;
          bad = in.str();
        }
      }
    }
    out.push_back(expect("shape contracts hold over the (h, w) grid", ok, bad));
  });

  guarded(out, "forward rejects sizes not divisible by 32", [&] {
    auto m = build_network<float>(NetworkConfig{}, 1);
    const bool ok = throws<UsageError>([&] {
      m->forward(Variable<float>(Tensor<float>(Shape{1, 3, 48, 64})), Mode::infer);
    });
    out.push_back(expect("forward rejects sizes not divisible by 32", ok));
  });

  guarded(out, "aux head: absent in infer mode and does not change logits", [&] {
    NetworkConfig with = NetworkConfig{};
    NetworkConfig without = with;
    without.aux_head = false;
    auto a = build_network<float>(with, 5);
    auto b = build_network<float>(without, 5);
    const Variable<float> x(random_uniform<float>(Shape{1, 3, 64, 128}, 9, 0.0f, 1.0f));
    NoGradGuard no_grad;
    const auto oa = a->forward(x, Mode::infer);
    const auto ob = b->forward(x, Mode::infer);
    const bool ok = !oa.aux_logits && !ob.aux_logits && bit_equal(oa.logits.value(), ob.logits.value());
    out.push_back(expect("aux head: absent in infer mode and does not change logits", ok));
  });

  guarded(out, "train mode: aux logits match the logits shape", [&] {
    auto m = build_network<float>(NetworkConfig{}, 3);
    NoGradGuard no_grad;
    const auto o = m->forward(Variable<float>(random_uniform<float>(Shape{2, 3, 64, 128}, 2, 0.0f, 1.0f)),
                              Mode::train);
    const bool ok = o.aux_logits && o.aux_logits->shape() == o.logits.shape() &&
                    o.logits.shape() == Shape{2, 19, 64, 128};
    out.push_back(expect("train mode: aux logits match the logits shape", ok));
  });

  guarded(out, "disabling CCBAM changes the logits", [&] {
    NetworkConfig on = NetworkConfig{};
    NetworkConfig off = on;
    off.use_ccbam = false;
    auto a = build_network<float>(on, 4);
    auto b = build_network<float>(off, 4);
    const Variable<float> x(random_uniform<float>(Shape{1, 3, 64, 128}, 3, 0.0f, 1.0f));
    NoGradGuard no_grad;
    const double diff = max_relative_difference(a->forward(x, Mode::infer).logits.value(),
                                                b->forward(x, Mode::infer).logits.value(), 1e-6);
    out.push_back(expect("disabling CCBAM changes the logits", diff > 1e-3, "max rel diff " + str(diff)));
  });

  guarded(out, "disabling SE-ASPP replaces it with a 1x1 ConvX", [&] {
    NetworkConfig cfg;
    cfg.use_se_aspp = false;
    auto m = build_network<float>(cfg, 1);
    const auto r = count_params(*m);
    const bool ok = r.groups.size() > 1 && r.groups[1].name == "context_proj" &&
                    r.groups[1].count == convx_param_count(1024, 256, 1);
    out.push_back(expect("disabling SE-ASPP replaces it with a 1x1 ConvX", ok));
  });

  guarded(out, "invalid widths are configuration errors", [&] {
    NetworkConfig cfg;
    cfg.set_channels(100);
    const bool ok = throws<ConfigError>([&] { build_network<float>(cfg, 1); });
    out.push_back(expect("invalid widths are configuration errors", ok));
  });
  return out;
}

CcbamInvariantErrors measure_ccbam_invariants(int trials, std::uint64_t seed) {
  using Var = Variable<double>;
  CcbamInvariantErrors e;
  auto copy_params = [](Module<double>& from, Module<double>& to) {
    auto src = named_parameters(from);
    auto dst = named_parameters(to);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i].param.mutable_value() = src[i].param.value();
  };
  auto randomize = [](Module<double>& m, Rng& rng) {
    for (auto& p : named_parameters(m)) {
      p.param.mutable_value() = random_normal<double>(p.param.shape(), rng(), 0.5);
    }
  };
  NoGradGuard no_grad;
  for (int t = 0; t < trials; ++t) {
    Rng rng(seed + static_cast<std::uint64_t>(t));
    const int ch = 16 * (1 + static_cast<int>(rng() % 2));
    const Shape s{1 + static_cast<int>(rng() % 2), ch, 2 + static_cast<int>(rng() % 5),
                  2 + static_cast<int>(rng() % 5)};
    const Var high(random_normal<double>(s, rng()));
    const Var low(random_normal<double>(s, rng()));

    Ccbam<double> a(ch, rng);
    randomize(a, rng);
    Ccbam<double> b(ch, rng);
    copy_params(a.ca_high(), b.ca_low());
    copy_params(a.ca_low(), b.ca_high());
    copy_params(a.sa_high(), b.sa_low());
    copy_params(a.sa_low(), b.sa_high());
    e.swap = std::max(e.swap, max_relative_difference(a.forward(high, low).value(),
                                                      b.forward(low, high).value(), 1.0));

    Ccbam<double> c(ch, rng);
    randomize(c, rng);
    copy_params(c.ca_high(), c.ca_low());
    copy_params(c.sa_high(), c.sa_low());
    const Var f = mul(high, c.ca_high().forward(high));
    const Var twice = scale(mul(f, c.sa_high().forward(f)), 2.0);
    e.equal_inputs = std::max(e.equal_inputs, max_relative_difference(
                                                  c.forward(high, high).value(), twice.value(), 1.0));

    Ccbam<double> z(ch, rng);
    for (auto& p : named_parameters(z)) p.param.mutable_value().fill(0.0);
    const Var quarter = scale(add(high, low), 0.25);
    e.zero_weights = std::max(e.zero_weights, max_relative_difference(
                                                  z.forward(high, low).value(), quarter.value(), 1.0));
  }
  return e;
}

std::vector<CheckResult> check_ccbam_invariants() {
  std::vector<CheckResult> out;
  guarded(out, "ccbam invariants", [&] {
    const CcbamInvariantErrors e = measure_ccbam_invariants(20, 11);
    out.push_back(expect("ccbam: joint swap of inputs and attention weights", e.swap <= 1e-6, str(e.swap)));
    out.push_back(expect("ccbam: equal inputs give 2 F S", e.equal_inputs <= 1e-6, str(e.equal_inputs)));
    out.push_back(expect("ccbam: zero weights give (high + low) / 4", e.zero_weights <= 1e-6,
                         str(e.zero_weights)));
  });
  guarded(out, "ccbam: mismatched inputs are rejected", [&] {
    Rng rng(1);
    Ccbam<float> m(16, rng);
    const bool ok = throws<Error>([&] {
      m.forward(Variable<float>(Tensor<float>(Shape{1, 16, 4, 4})),
                Variable<float>(Tensor<float>(Shape{1, 16, 4, 5})));
    });
    out.push_back(expect("ccbam: mismatched inputs are rejected", ok));
  });
  return out;
}

std::vector<CheckResult> check_losses_and_optim() {
  using Var = Variable<double>;
  std::vector<CheckResult> out;

  guarded(out, "loss identities", [&] {
    const Var uniform(Tensor<double>(Shape{1, 4, 2, 2}, 0.3));
    const LabelMap t4(1, 2, 2, 2);
    const double ce_uniform = cross_entropy(uniform, t4).loss.value()[0];
    out.push_back(expect("cross entropy of uniform logits over 4 classes is ln 4",
                         std::abs(ce_uniform - std::log(4.0)) < 1e-12, str(ce_uniform)));

    Tensor<double> confident(Shape{1, 3, 1, 2}, 0.0);
    confident.at(0, 1, 0, 0) = 1000.0;
    confident.at(0, 2, 0, 1) = 1000.0;
    LabelMap t3(1, 1, 2);
    t3.labels = {1, 2};
    const double ce_conf = cross_entropy(Var(confident), t3).loss.value()[0];
    out.push_back(expect("cross entropy with a +1000 correct logit is 0", std::abs(ce_conf) < 1e-12,
                         str(ce_conf)));

    double worst = 0.0;
    for (int s = 0; s < 20; ++s) {
      const Var z(random_normal<double>(Shape{2, 5, 3, 3}, 100 + s, 3.0));
      LabelMap t(2, 3, 3);
      for (std::size_t i = 0; i < t.size(); ++i) t.labels[i] = static_cast<int>((i * 7 + s) % 5);
      t.labels[3] = kDefaultIgnoreIndex;
      worst = std::max(worst, std::abs(focal_loss(z, t, 0.0).loss.value()[0] -
                                       cross_entropy(z, t).loss.value()[0]));
    }
    out.push_back(expect("focal loss with gamma 0 equals cross entropy", worst <= 1e-12, str(worst)));

    const Var half(Tensor<double>(Shape{1, 2, 1, 1}, 0.0));
    const LabelMap t1(1, 1, 1, 0);
    const double fl_half = focal_loss(half, t1, 2.0).loss.value()[0];
    out.push_back(expect("focal loss at p_t = 0.5, gamma 2 is ln(2) / 4",
                         std::abs(fl_half - 0.25 * std::log(2.0)) < 1e-12, str(fl_half)));

    double previous = 1e9;
    bool monotone = true;
    for (const double pt : {0.9, 0.99, 0.999}) {
      Tensor<double> z(Shape{1, 2, 1, 1}, 0.0);
      z.at(0, 0, 0, 0) = std::log(pt / (1.0 - pt));
      const double v = focal_loss(Var(z), t1, 2.0).loss.value()[0];
      monotone = monotone && v < previous && v > 0.0;
      previous = v;
    }
    out.push_back(expect("focal loss decreases towards 0 as p_t -> 1", monotone && previous < 1e-8,
                         str(previous)));

    const Var z(random_normal<double>(Shape{2, 4, 3, 3}, 7, 2.0));
    LabelMap t(2, 3, 3);
    for (std::size_t i = 0; i < t.size(); ++i) t.labels[i] = static_cast<int>(i % 4);
    const double ce = cross_entropy(z, t).loss.value()[0];
    const double fl = focal_loss(z, t, 2.0).loss.value()[0];
    LossConfig cfg;
    cfg.alpha = 1.0;
    const double at1 = mixed_loss(z, t, cfg).loss.value()[0];
    cfg.alpha = 0.0;
    const double at0 = mixed_loss(z, t, cfg).loss.value()[0];
    cfg.alpha = 0.5;
    const double mid = mixed_loss(z, t, cfg).loss.value()[0];
    out.push_back(expect("composite loss: alpha 1 gives cross entropy", at1 == ce, str(at1 - ce)));
    out.push_back(expect("composite loss: alpha 0 gives focal loss", at0 == fl, str(at0 - fl)));
    out.push_back(expect("composite loss: alpha 0.5 averages the two",
                         std::abs(mid - (0.5 * ce + 0.5 * fl)) <= 1e-9, str(mid)));
    const Var aux(random_normal<double>(Shape{2, 4, 3, 3}, 8, 2.0));
    const double with_aux = composite_loss(ModelOutput<double>{z, aux}, t, cfg).loss.value()[0];
    const double expected = mid + cfg.aux_weight * mixed_loss(aux, t, cfg).loss.value()[0];
    out.push_back(expect("composite loss adds the weighted aux term",
                         std::abs(with_aux - expected) <= 1e-12, str(with_aux - expected)));
  });

  guarded(out, "ignore-only target: zero loss and zero gradients", [&] {
    auto m = build_network<double>(NetworkConfig{}, 2);
    const Var x(random_uniform<double>(Shape{1, 3, 64, 64}, 1, 0.0, 1.0));
    const LabelMap ignored(1, 64, 64, kDefaultIgnoreIndex);
    const LossResult<double> r = composite_loss(m->forward(x, Mode::train), ignored, LossConfig{});
    backward(r.loss);
    bool zero = true;
    for (auto& p : named_parameters(*m)) {
      if (!p.param.has_grad()) continue;
      for (double g : p.param.grad().values()) zero = zero && g == 0.0;
    }
    out.push_back(expect("ignore-only target: zero loss and zero gradients",
                         r.all_ignored && r.loss.value()[0] == 0.0 && zero));
  });

  guarded(out, "poly schedule", [&] {
    OptimConfig cfg;
    cfg.max_iter = 1000;
    const double start = poly_lr(0, cfg);
    const double end = poly_lr(cfg.max_iter, cfg);
    const double mid = poly_lr(cfg.max_iter / 2, cfg);
    out.push_back(expect("poly lr: start 0.01, end 1e-4", start == 0.01 && end == 1e-4,
                         str(start) + " " + str(end)));
    out.push_back(expect("poly lr: midpoint 0.01 * 0.5^0.9",
                         std::abs(mid - 0.01 * std::pow(0.5, 0.9)) < 1e-15, str(mid)));
    bool ok = true;
    double previous = start;
    for (std::int64_t it = 0; it <= cfg.max_iter + 5; ++it) {
      const double lr = poly_lr(it, cfg);
      ok = ok && lr <= previous && lr >= cfg.min_lr && lr <= cfg.base_lr;
      previous = lr;
    }
    out.push_back(expect("poly lr: non-increasing and within [min_lr, base_lr]", ok));
  });

  guarded(out, "sgd", [&] {
    auto param = [](double v, ParamRole role) {
      return NamedParameter<double>{"p", Variable<double>(Tensor<double>(Shape{1, 1, 1, 1}, v), true), role};
    };
    auto set_grad = [](NamedParameter<double>& p, double g) { p.param.grad_buffer()[0] = g; };

    OptimConfig plain;
    plain.momentum = 0.0;
    plain.weight_decay = 0.0;
    Sgd<double> gd({param(1.0, ParamRole::weight)}, plain);
    set_grad(const_cast<NamedParameter<double>&>(gd.params()[0]), 0.5);
    gd.step(0.1);
    out.push_back(expect("sgd: zero momentum and decay is gradient descent",
                         gd.params()[0].param.value()[0] == 1.0 - 0.1 * 0.5));

    Sgd<double> still({param(2.0, ParamRole::weight)}, plain);
    still.step(0.1);
    out.push_back(expect("sgd: zero gradient leaves parameters", still.params()[0].param.value()[0] == 2.0));

    // Scalar simulation of the velocity-form update on f(x) = x^2.
    OptimConfig cfg;
    cfg.weight_decay = 0.0;
    Sgd<double> opt({param(1.0, ParamRole::weight)}, cfg);
    double x = 1.0, v = 0.0;
    bool match = true;
    for (int step = 0; step < 2; ++step) {
      auto& p = const_cast<NamedParameter<double>&>(opt.params()[0]);
      set_grad(p, 2.0 * p.param.value()[0]);
      opt.step(0.1);
      opt.zero_grad();
      v = 0.9 * v + 2.0 * x;
      x -= 0.1 * v;
      match = match && p.param.value()[0] == x;
    }
    out.push_back(expect("sgd: two steps on x^2 match the scalar simulation", match, str(x)));

    OptimConfig defaults;
    Sgd<double> conv({param(1.0, ParamRole::weight)}, defaults);
    int steps = 0;
    for (; steps < 500; ++steps) {
      auto& p = const_cast<NamedParameter<double>&>(conv.params()[0]);
      if (std::abs(p.param.value()[0]) < 1e-6) break;
      set_grad(p, 2.0 * p.param.value()[0]);
      conv.step(defaults.base_lr);
      conv.zero_grad();
    }
    out.push_back(expect("sgd: converges on x^2 within 500 steps", steps < 500, str(steps) + " steps"));

    OptimConfig decay;
    decay.momentum = 0.0;
    decay.weight_decay = 0.1;
    Sgd<double> roles({param(1.0, ParamRole::weight), param(1.0, ParamRole::bias),
                       param(1.0, ParamRole::bn_scale), param(1.0, ParamRole::bn_shift)},
                      decay);
    roles.step(1.0);
    bool only_weights = roles.params()[0].param.value()[0] == 1.0 - 0.1;
    for (std::size_t i = 1; i < 4; ++i) only_weights = only_weights && roles.params()[i].param.value()[0] == 1.0;
    out.push_back(expect("sgd: weight decay applies to conv weights only", only_weights));
  });
  return out;
}

std::vector<CheckResult> check_metrics() {
  std::vector<CheckResult> out;
  guarded(out, "metrics", [&] {
    LabelMap a(1, 2, 5, 0);
    ConfusionMatrix cm(2);
    cm.accumulate(a, a);
    out.push_back(expect("confusion: 10 matching class-0 pixels", cm.at(0, 0) == 10 && cm.total() == 10));
    out.push_back(expect("miou: perfect prediction is 1", cm.miou() == 1.0));

    ConfusionMatrix unchanged(2);
    unchanged.accumulate(a, LabelMap(1, 2, 5, kDefaultIgnoreIndex));
    out.push_back(expect("confusion: ignored target leaves counts unchanged", unchanged.empty()));
    out.push_back(expect("miou: empty matrix is 0", unchanged.miou() == 0.0));

    LabelMap t(1, 1, 4), p(1, 1, 4);
    t.labels = {0, 0, 1, 1};
    p.labels = {1, 1, 0, 0};
    ConfusionMatrix wrong(2);
    wrong.accumulate(p, t);
    out.push_back(expect("miou: every pixel wrong is 0", wrong.miou() == 0.0));

    LabelMap t8(1, 1, 8), p8(1, 1, 8);
    t8.labels = {0, 0, 0, 0, 1, 1, 1, 1};
    p8.labels = {0, 0, 0, 1, 0, 1, 1, 1};
    ConfusionMatrix hand(2);
    hand.accumulate(p8, t8);
    out.push_back(expect("miou: [[3,1],[1,3]] gives 0.6", std::abs(hand.miou() - 0.6) < 1e-15,
                         str(hand.miou())));

    Rng rng(3);
    LabelMap rt(1, 4, 4), rp(1, 4, 4);
    for (std::size_t i = 0; i < rt.size(); ++i) {
      rt.labels[i] = static_cast<int>(rng() % 2);
      rp.labels[i] = static_cast<int>(rng() % 2);
    }
    ConfusionMatrix once(2);
    once.accumulate(rp, rt);
    std::uint64_t loop[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < rt.size(); ++i) ++loop[rt.labels[i]][rp.labels[i]];
    bool same = true;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) same = same && once.at(i, j) == loop[i][j];
    out.push_back(expect("confusion: random 2-class case matches the pixel loop", same));

    ConfusionMatrix twice = once;
    twice.accumulate(rp, rt);
    bool doubled = true;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) doubled = doubled && twice.at(i, j) == 2 * once.at(i, j);
    out.push_back(expect("confusion: accumulating twice doubles every entry", doubled));

    ConfusionMatrix merged = once;
    merged.merge(once);
    bool merge_ok = true;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) merge_ok = merge_ok && merged.at(i, j) == twice.at(i, j);
    out.push_back(expect("confusion: merge equals joint accumulation", merge_ok));

    LabelMap t5(1, 6, 6), p5(1, 6, 6);
    for (std::size_t i = 0; i < t5.size(); ++i) {
      t5.labels[i] = static_cast<int>(rng() % 5);
      p5.labels[i] = static_cast<int>(rng() % 5);
    }
    t5.labels[0] = kDefaultIgnoreIndex;
    const int perm[5] = {3, 0, 4, 1, 2};
    LabelMap tp = t5, pp = p5;
    for (auto& v : tp.labels) if (v != kDefaultIgnoreIndex) v = perm[v];
    for (auto& v : pp.labels) v = perm[v];
    ConfusionMatrix m1(5), m2(5);
    m1.accumulate(p5, t5);
    m2.accumulate(pp, tp);
    out.push_back(expect("miou: invariant under class relabeling",
                         std::abs(m1.miou() - m2.miou()) < 1e-15));

    LabelMap bad(1, 1, 1, 7);
    out.push_back(expect("confusion: out-of-range label is a data error",
                         throws<DataError>([&] { ConfusionMatrix(2).accumulate(bad, bad); })));
  });

  guarded(out, "latency report", [&] {
    Rng rng(1);
    Conv2d<float> conv(ConvSpec{3, 8, 3, {1, 1, 1}, true}, rng);
    const LatencyReport r = bench_latency<float>(
        [&](const Variable<float>& x) { conv.forward(x); }, Shape{1, 3, 32, 32}, 1, 10);
    out.push_back(expect("bench: 10 samples, fps = 1 / mean latency",
                         r.samples.size() == 10 && r.fps > 0.0 && std::abs(r.fps * r.mean - 1.0) < 1e-12));
  });
  return out;
}

std::vector<CheckResult> check_data_and_io() {
  std::vector<CheckResult> out;
  const fs::path dir = scratch_dir("verify");

  guarded(out, "synthetic data", [&] {
    SyntheticSceneSpec spec;
    spec.seed = 1;
    spec.n_samples = 4;
    spec.classes = 3;
    spec.height = spec.width = 64;
    const Dataset a = gen_synthetic(spec);
    const Dataset b = gen_synthetic(spec);
    bool same = a.samples.size() == 4;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
      same = same && bit_equal(a.samples[i].image, b.samples[i].image) && a.samples[i].mask == b.samples[i].mask;
    }
    out.push_back(expect("synthetic: identical spec gives identical data", same));

    SyntheticSceneSpec quiet = spec;
    quiet.noise = 0.0;
    const Dataset clean = gen_synthetic(quiet);
    bool masks_equal = true;
    for (std::size_t i = 0; i < a.samples.size(); ++i) masks_equal = masks_equal && a.samples[i].mask == clean.samples[i].mask;
    out.push_back(expect("synthetic: noise touches images only", masks_equal));

    Scene full{64, 64, {SceneShape{ShapeKind::rectangle, 1, 0, 0, 64, 64}}};
    Rng rng(1);
    const Sample s = render_scene(full, 0.0, rng);
    bool uniform = true;
    for (auto v : s.mask.labels) uniform = uniform && v == 1;
    out.push_back(expect("synthetic: full-canvas rectangle of class 1 gives a uniform mask", uniform));
  });

  guarded(out, "augmentation", [&] {
    SyntheticSceneSpec spec;
    spec.n_samples = 1;
    spec.height = 64;
    spec.width = 96;
    const Sample s = gen_synthetic(spec).samples[0];
    AugmentConfig identity;
    identity.crop_h = 64;
    identity.crop_w = 96;
    identity.flip_prob = 0.0;
    Rng rng(4);
    const Sample same = augment(s, identity, rng);
    out.push_back(expect("augment: unit scale, full crop, no flip is the identity",
                         bit_equal(same.image, s.image) && same.mask == s.mask));
    const Sample back = flip_horizontal(flip_horizontal(s));
    out.push_back(expect("augment: flipping twice is the identity",
                         bit_equal(back.image, s.image) && back.mask == s.mask));

    std::set<int> allowed(s.mask.labels.begin(), s.mask.labels.end());
    allowed.insert(kDefaultIgnoreIndex);
    AugmentConfig wild;
    wild.scale_min = 0.5;
    wild.scale_max = 2.5;
    wild.crop_h = 64;
    wild.crop_w = 64;
    bool subset = true;
    for (int i = 0; i < 100; ++i) {
      const Sample a = augment(s, wild, rng);
      for (auto v : a.mask.labels) subset = subset && allowed.count(v);
    }
    out.push_back(expect("augment: masks only hold original labels or ignore", subset));

    AugmentConfig strict = wild;
    strict.pad_if_needed = false;
    strict.scale_min = strict.scale_max = 0.5;
    out.push_back(expect("augment: crop larger than the image without padding is rejected",
                         throws<ConfigError>([&] { augment(s, strict, rng); })));
  });

  guarded(out, "image io", [&] {
    LabelMap mask(1, 5, 7);
    for (std::size_t i = 0; i < mask.size(); ++i) mask.labels[i] = static_cast<int>(i % 19);
    mask.labels[4] = kDefaultIgnoreIndex;
    bool round = true;
    for (const char* ext : {".png", ".pgm"}) {
      const fs::path p = dir / (std::string("mask") + ext);
      write_image(p, mask_to_gray(mask));
      round = round && gray_to_mask(read_image(p)) == mask;
    }
    out.push_back(expect("io: mask round trip through PNG and PGM", round));

    const fs::path color = dir / "color.png";
    write_image(color, colorize_mask(mask));
    out.push_back(expect("io: palette colours invert to labels", decolorize_mask(read_image(color)) == mask));

    const Tensor<float> img = image_to_tensor(tensor_to_image(random_uniform<float>(Shape{1, 3, 4, 6}, 2, 0.0f, 1.0f)));
    const fs::path ppm = dir / "img.ppm";
    write_image(ppm, tensor_to_image(img));
    out.push_back(expect("io: 8-bit images round trip through PPM",
                         bit_equal(image_to_tensor(read_image(ppm)), img)));

    std::string message;
    const std::string text = "P3\n4 x\n255\n";
    const bool bad = throws<DataError>(
        [&] { parse_pnm(std::vector<std::uint8_t>(text.begin(), text.end())); }, &message);
    out.push_back(expect("io: malformed header names the byte offset",
                         bad && message.find("byte offset 5") != std::string::npos, message));
  });

  guarded(out, "checkpoint", [&] {
    auto m = build_network<float>(NetworkConfig{}, 8);
    {
      // Non-trivial running statistics.
      NoGradGuard no_grad;
      m->forward(Variable<float>(random_uniform<float>(Shape{2, 3, 64, 64}, 5, 0.0f, 1.0f)), Mode::train);
    }
    const fs::path path = dir / "model.xcbm";
    save_checkpoint(*m, path);
    auto n = build_network<float>(NetworkConfig{}, 9);
    load_checkpoint(*n, path);
    const Variable<float> x(random_uniform<float>(Shape{1, 3, 64, 64}, 6, 0.0f, 1.0f));
    NoGradGuard no_grad;
    out.push_back(expect("checkpoint: save/load reproduces infer logits bit-exactly",
                         bit_equal(m->forward(x, Mode::infer).logits.value(),
                                   n->forward(x, Mode::infer).logits.value())));

    auto bytes = file_bytes(path);
    const fs::path cut = dir / "cut.xcbm";
    {
      std::ofstream f(cut, std::ios::binary);
      f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size() / 2));
    }
    auto fresh = build_network<float>(NetworkConfig{}, 10);
    const auto before = snapshot(*fresh);
    const bool truncated = throws<DataError>([&] { load_checkpoint(*fresh, cut); });
    const auto after = snapshot(*fresh);
    bool untouched = true;
    for (std::size_t i = 0; i < before.tensors.size(); ++i) untouched = untouched && before.tensors[i].values == after.tensors[i].values;
    out.push_back(expect("checkpoint: truncated file is a data error with no partial load", truncated && untouched));

    NetworkConfig other;
    other.variant = ModelVariant::l;
    auto l = build_network<float>(other, 1);
    std::string message;
    const bool mismatch = throws<ConfigError>([&] { load_checkpoint(*l, path); }, &message);
    out.push_back(expect("checkpoint: other variant is a configuration error naming a tensor",
                         mismatch && message.find("backbone.") != std::string::npos, message));

    bytes[4] = 99;
    const fs::path versioned = dir / "version.xcbm";
    {
      std::ofstream f(versioned, std::ios::binary);
      f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    message.clear();
    const bool version = throws<DataError>([&] { load_checkpoint(*n, versioned); }, &message);
    out.push_back(expect("checkpoint: unknown version is rejected",
                         version && message.find("version") != std::string::npos, message));
  });

  guarded(out, "config", [&] {
    RunConfig cfg;
    cfg.set("variant", "l");
    cfg.set("dilations", "2,4");
    cfg.set("scale_range", "0.5,2.5");
    cfg.set("crop", "64x96");
    const RunConfig again = RunConfig::parse(cfg.dump());
    out.push_back(expect("config: dump parses back to the same text", again.dump() == cfg.dump()));
    out.push_back(expect("config: unknown key is rejected",
                         throws<ConfigError>([] { RunConfig::parse("no_such_key = 1\n"); })));
  });

  std::error_code ignored;
  fs::remove_all(dir, ignored);
  return out;
}

std::vector<CheckResult> check_determinism() {
  std::vector<CheckResult> out;
  guarded(out, "determinism", [&] {
    auto a = build_network<float>(NetworkConfig{}, 42);
    auto b = build_network<float>(NetworkConfig{}, 42);
    const auto sa = snapshot(*a);
    const auto sb = snapshot(*b);
    bool same = sa.tensors.size() == sb.tensors.size();
    for (std::size_t i = 0; same && i < sa.tensors.size(); ++i) same = sa.tensors[i].values == sb.tensors[i].values;
    out.push_back(expect("determinism: same seed gives bit-identical parameters", same));

    const Variable<float> x(random_uniform<float>(Shape{1, 3, 64, 128}, 1, 0.0f, 1.0f));
    NoGradGuard no_grad;
    out.push_back(expect("determinism: repeated infer forward is bit-identical",
                         bit_equal(a->forward(x, Mode::infer).logits.value(),
                                   a->forward(x, Mode::infer).logits.value())));

    std::vector<int> seen(10, 0);
    for (std::int64_t it = 0; it < 5; ++it) {
      for (auto i : batch_indices(3, 10, 2, it)) ++seen[i];
    }
    const bool epoch = std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }) &&
                       batch_indices(3, 10, 2, 7) == batch_indices(3, 10, 2, 7);
    out.push_back(expect("determinism: each epoch visits every sample once", epoch));
  });

  guarded(out, "determinism: short training runs are byte-identical", [&] {
    const fs::path dir = scratch_dir("train");
    RunConfig cfg;
    cfg.net.num_classes = 3;
    cfg.net.set_channels(32);
    cfg.synth.classes = 3;
    cfg.synth.n_samples = 4;
    cfg.synth.height = cfg.synth.width = 64;
    cfg.augment.crop_h = cfg.augment.crop_w = 64;
    cfg.batch_size = 2;
    cfg.optim.max_iter = 3;
    const auto [train_set, val_set] = load_datasets(cfg);
    TrainOptions opt;
    opt.final_eval = false;
    cfg.out_dir = (dir / "a").string();
    const TrainSummary a = train(cfg, train_set, val_set, opt);
    cfg.out_dir = (dir / "b").string();
    const TrainSummary b = train(cfg, train_set, val_set, opt);
    const bool same = file_bytes(a.checkpoint) == file_bytes(b.checkpoint) &&
                      file_bytes(a.loss_log) == file_bytes(b.loss_log);
    std::error_code ignored;
    fs::remove_all(dir, ignored);
    out.push_back(expect("determinism: short training runs are byte-identical", same));
  });
  return out;
}

std::vector<CheckResult> verify_all(std::ostream* progress) {
  std::vector<CheckResult> all;
  using Group = std::vector<CheckResult> (*)();
  for (const Group g : {&check_model_structure, &check_ccbam_invariants, &check_losses_and_optim,
                        &check_metrics, &check_data_and_io, &check_determinism}) {
    auto part = g();
    if (progress) print_results(*progress, part);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

}  // namespace xcbam
