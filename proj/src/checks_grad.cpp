#include <algorithm>
#include <functional>
#include <ostream>
#include <sstream>

#include "xcbam/checks.hpp"
#include "xcbam/context.hpp"
#include "xcbam/gradcheck.hpp"
#include "xcbam/losses.hpp"

namespace xcbam {

namespace {

using Var = Variable<double>;

struct GradCase {
  std::vector<Var> inputs;
  std::function<Var()> forward;
};

Var leaf(Tensor<double> t) { return Var(std::move(t), true); }

Tensor<double> randn(Shape s, Rng& rng, double stddev = 1.0) {
  return random_normal<double>(s, rng(), stddev);
}

int pick(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng() % (hi - lo + 1)); }

// Randomizes every learnable tensor of a module (biases included) and
// appends them to the case inputs.
void adopt(Module<double>& m, GradCase& c, Rng& rng, double stddev = 0.5) {
  for (auto& p : named_parameters(m)) {
    p.param.mutable_value() = randn(p.param.shape(), rng, stddev);
    c.inputs.push_back(p.param);
  }
}

LabelMap random_labels(int n, int h, int w, int k, Rng& rng, double ignore_frac) {
  LabelMap m(n, h, w);
  for (auto& v : m.labels) {
    const double u = static_cast<double>(rng() % 10000) / 10000.0;
    v = u < ignore_frac ? kDefaultIgnoreIndex : static_cast<std::int32_t>(rng() % k);
  }
  return m;
}

struct ProbeStats {
  double worst = 0.0;
  std::size_t coords = 0;
  std::size_t retried = 0;  ///< coordinates that needed a smaller step

  void merge(const ProbeStats& o) {
    worst = std::max(worst, o.worst);
    coords += o.coords;
    retried += o.retried;
  }
};

// A coordinate within a step of a ReLU or max switch point gives a central
// difference that straddles the kink. Those are re-measured with steps 10x
// and 100x smaller; a wrong analytic gradient fails at every step.
void check_coordinate(const std::function<double()>& f, Tensor<double>& x, std::size_t idx,
                      double analytic, const GradcheckOptions& opt, ProbeStats& stats) {
  double err = gradient_error(analytic, finite_diff_at(f, x, idx, opt.eps), opt.floor);
  if (err > opt.tolerance) {
    ++stats.retried;
    for (const double step : {opt.eps / 10.0, opt.eps / 100.0}) {
      err = std::min(err, gradient_error(analytic, finite_diff_at(f, x, idx, step), opt.floor));
      if (err <= opt.tolerance) break;
    }
  }
  ++stats.coords;
  stats.worst = std::max(stats.worst, err);
}

// Worst gradient_error over the probed coordinates of all inputs. Tensor
// outputs are reduced with fixed random weights so every element matters.
ProbeStats probe(GradCase& c, std::uint64_t seed, const GradcheckOptions& opt) {
  Tensor<double> weights;
  auto objective = [&]() -> Var {
    Var out = c.forward();
    if (out.shape().is_scalar()) return out;
    if (weights.empty()) weights = random_normal<double>(out.shape(), seed ^ 0x5eedULL);
    return sum(mul(out, Var(weights)));
  };
  for (auto& v : c.inputs) v.zero_grad();
  backward(objective());
  std::vector<Tensor<double>> analytic;
  for (auto& v : c.inputs) {
    analytic.push_back(v.has_grad() ? v.grad() : Tensor<double>(v.shape()));
  }

  NoGradGuard no_grad;
  const std::function<double()> f = [&] { return objective().value()[0]; };
  Rng rng(seed);
  ProbeStats stats;
  for (std::size_t i = 0; i < c.inputs.size(); ++i) {
    Tensor<double>& x = c.inputs[i].mutable_value();
    const std::size_t n = x.numel();
    const bool all = n <= static_cast<std::size_t>(opt.max_coords);
    const std::size_t count = all ? n : static_cast<std::size_t>(opt.max_coords);
    for (std::size_t j = 0; j < count; ++j) {
      const std::size_t idx = all ? j : static_cast<std::size_t>(rng() % n);
      check_coordinate(f, x, idx, analytic[i][idx], opt, stats);
    }
  }
  return stats;
}

using CaseBuilder = std::function<GradCase(Rng&)>;

struct OpCase {
  std::string name;
  CaseBuilder build;
};

std::vector<OpCase> op_cases() {
  std::vector<OpCase> cases;

  cases.push_back({"conv2d", [](Rng& rng) {
    const int n = pick(rng, 1, 2), ci = pick(rng, 1, 4), co = pick(rng, 1, 4);
    const int k = pick(rng, 0, 1) ? 3 : 1;
    ConvGeometry g{pick(rng, 1, 2), pick(rng, 0, 2), pick(rng, 1, 2)};
    GradCase c;
    Var x = leaf(randn({n, ci, pick(rng, 5, 8), pick(rng, 5, 8)}, rng));
    Var w = leaf(randn({co, ci, k, k}, rng));
    Var b = pick(rng, 0, 1) ? leaf(randn({1, co, 1, 1}, rng)) : Var();
    c.inputs = {x, w};
    if (b.defined()) c.inputs.push_back(b);
    c.forward = [=] { return conv2d(x, w, b, g); };
    return c;
  }});

  for (const Mode mode : {Mode::train, Mode::infer}) {
    cases.push_back({mode == Mode::train ? "batch_norm/train" : "batch_norm/infer",
                     [mode](Rng& rng) {
      const int ch = pick(rng, 1, 3);
      const Shape s{pick(rng, 2, 3), ch, pick(rng, 2, 4), pick(rng, 2, 4)};
      GradCase c;
      Var x = leaf(randn(s, rng));
      Var gamma = leaf(randn({1, ch, 1, 1}, rng));
      Var beta = leaf(randn({1, ch, 1, 1}, rng));
      auto mean = std::make_shared<Tensor<double>>(randn({1, ch, 1, 1}, rng, 0.3));
      auto var = std::make_shared<Tensor<double>>(random_uniform<double>({1, ch, 1, 1}, rng(), 0.5, 2.0));
      c.inputs = {x, gamma, beta};
      c.forward = [=] { return batch_norm(x, gamma, beta, *mean, *var, BatchNormOptions{}, mode); };
      return c;
    }});
  }

  for (const PoolKind kind : {PoolKind::max, PoolKind::avg}) {
    const std::string tag = kind == PoolKind::max ? "max" : "avg";
    cases.push_back({"pool2d/" + tag, [kind](Rng& rng) {
      const int k = pick(rng, 2, 3);
      const int stride = pick(rng, 1, 2);
      const int pad = pick(rng, 0, k / 2);
      GradCase c;
      Var x = leaf(randn({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 4, 7), pick(rng, 4, 7)}, rng));
      c.inputs = {x};
      c.forward = [=] { return pool2d(x, kind, k, stride, pad); };
      return c;
    }});
    cases.push_back({"global_pool/" + tag, [kind](Rng& rng) {
      GradCase c;
      Var x = leaf(randn({pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 5), pick(rng, 1, 5)}, rng));
      c.inputs = {x};
      c.forward = [=] { return global_pool(x, kind); };
      return c;
    }});
    cases.push_back({"channelwise_reduce/" + tag, [kind](Rng& rng) {
      GradCase c;
      Var x = leaf(randn({pick(rng, 1, 2), pick(rng, 1, 5), pick(rng, 2, 5), pick(rng, 2, 5)}, rng));
      c.inputs = {x};
      c.forward = [=] { return channelwise_reduce(x, kind); };
      return c;
    }});
  }

  cases.push_back({"bilinear_resize", [](Rng& rng) {
    GradCase c;
    Var x = leaf(randn({1, pick(rng, 1, 2), pick(rng, 2, 6), pick(rng, 2, 6)}, rng));
    const int oh = pick(rng, 1, 12), ow = pick(rng, 1, 12);
    c.inputs = {x};
    c.forward = [=] { return bilinear_resize(x, oh, ow); };
    return c;
  }});

  for (const ElementwiseKind kind : {ElementwiseKind::add, ElementwiseKind::mul}) {
    cases.push_back({kind == ElementwiseKind::add ? "elementwise/add" : "elementwise/mul",
                     [kind](Rng& rng) {
      const Shape s{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)};
      Shape bs = s;
      switch (pick(rng, 0, 2)) {
        case 1: bs.h = bs.w = 1; break;
        case 2: bs.c = 1; break;
        default: break;
      }
      GradCase c;
      Var a = leaf(randn(s, rng));
      Var b = leaf(randn(bs, rng));
      c.inputs = {a, b};
      c.forward = [=] { return elementwise(a, b, kind); };
      return c;
    }});
  }

  for (const ActivationKind kind : {ActivationKind::relu, ActivationKind::sigmoid}) {
    cases.push_back({kind == ActivationKind::relu ? "activation/relu" : "activation/sigmoid",
                     [kind](Rng& rng) {
      GradCase c;
      Var x = leaf(randn({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)}, rng, 2.0));
      c.inputs = {x};
      c.forward = [=] { return activation(x, kind); };
      return c;
    }});
  }

  cases.push_back({"concat_channels", [](Rng& rng) {
    const int n = pick(rng, 1, 2), h = pick(rng, 1, 4), w = pick(rng, 1, 4);
    GradCase c;
    const int parts = pick(rng, 1, 3);
    for (int i = 0; i < parts; ++i) c.inputs.push_back(leaf(randn({n, pick(rng, 1, 3), h, w}, rng)));
    const std::vector<Var> xs = c.inputs;
    c.forward = [=] { return concat_channels<double>(std::span<const Var>(xs)); };
    return c;
  }});

  cases.push_back({"slice_channels", [](Rng& rng) {
    const int ch = pick(rng, 2, 6);
    const int begin = pick(rng, 0, ch - 1);
    const int end = pick(rng, begin + 1, ch);
    GradCase c;
    Var x = leaf(randn({pick(rng, 1, 2), ch, pick(rng, 1, 4), pick(rng, 1, 4)}, rng));
    c.inputs = {x};
    c.forward = [=] { return slice_channels(x, begin, end); };
    return c;
  }});

  cases.push_back({"scale", [](Rng& rng) {
    GradCase c;
    Var x = leaf(randn({1, pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)}, rng));
    const double factor = randn({1, 1, 1, 1}, rng)[0];
    c.inputs = {x};
    c.forward = [=] { return scale(x, factor); };
    return c;
  }});

  cases.push_back({"cross_entropy", [](Rng& rng) {
    const int n = pick(rng, 1, 2), k = pick(rng, 2, 5), h = pick(rng, 1, 4), w = pick(rng, 1, 4);
    GradCase c;
    Var z = leaf(randn({n, k, h, w}, rng, 2.0));
    const LabelMap t = random_labels(n, h, w, k, rng, 0.2);
    c.inputs = {z};
    c.forward = [=] { return cross_entropy(z, t).loss; };
    return c;
  }});

  cases.push_back({"focal_loss", [](Rng& rng) {
    const int n = pick(rng, 1, 2), k = pick(rng, 2, 5), h = pick(rng, 1, 4), w = pick(rng, 1, 4);
    GradCase c;
    Var z = leaf(randn({n, k, h, w}, rng, 2.0));
    const LabelMap t = random_labels(n, h, w, k, rng, 0.2);
    const double gamma = 5.0 * static_cast<double>(rng() % 1001) / 1000.0;
    c.inputs = {z};
    c.forward = [=] { return focal_loss(z, t, gamma).loss; };
    return c;
  }});

  cases.push_back({"composite_loss", [](Rng& rng) {
    const int n = pick(rng, 1, 2), k = pick(rng, 2, 5), h = pick(rng, 1, 4), w = pick(rng, 1, 4);
    GradCase c;
    Var z = leaf(randn({n, k, h, w}, rng, 2.0));
    Var aux = leaf(randn({n, k, h, w}, rng, 2.0));
    const LabelMap t = random_labels(n, h, w, k, rng, 0.2);
    LossConfig cfg;
    cfg.alpha = static_cast<double>(rng() % 1001) / 1000.0;
    cfg.gamma = 5.0 * static_cast<double>(rng() % 1001) / 1000.0;
    c.inputs = {z, aux};
    c.forward = [=] { return composite_loss(ModelOutput<double>{z, aux}, t, cfg).loss; };
    return c;
  }});

  cases.push_back({"channel_attention", [](Rng& rng) {
    const bool shared = pick(rng, 0, 1) == 1;
    auto m = std::make_shared<ChannelAttention<double>>(16, rng, 8, shared);
    GradCase c;
    Var x = leaf(randn({pick(rng, 1, 2), 16, pick(rng, 1, 4), pick(rng, 1, 4)}, rng));
    c.inputs = {x};
    adopt(*m, c, rng);
    c.forward = [=] { return m->forward(x); };
    return c;
  }});

  cases.push_back({"spatial_attention", [](Rng& rng) {
    auto m = std::make_shared<SpatialAttention<double>>(rng);
    GradCase c;
    Var x = leaf(randn({pick(rng, 1, 2), pick(rng, 1, 5), pick(rng, 2, 5), pick(rng, 2, 5)}, rng));
    c.inputs = {x};
    adopt(*m, c, rng);
    c.forward = [=] { return m->forward(x); };
    return c;
  }});

  cases.push_back({"se_block", [](Rng& rng) {
    auto m = std::make_shared<SEBlock<double>>(16, rng, 4);
    GradCase c;
    Var x = leaf(randn({pick(rng, 1, 2), 16, pick(rng, 1, 4), pick(rng, 1, 4)}, rng));
    c.inputs = {x};
    adopt(*m, c, rng);
    c.forward = [=] { return m->forward(x); };
    return c;
  }});

  cases.push_back({"ccbam", [](Rng& rng) {
    auto m = std::make_shared<Ccbam<double>>(16, rng, 8, pick(rng, 0, 1) == 1);
    const Shape s{pick(rng, 1, 2), 16, pick(rng, 2, 4), pick(rng, 2, 4)};
    GradCase c;
    Var high = leaf(randn(s, rng));
    Var low = leaf(randn(s, rng));
    c.inputs = {high, low};
    adopt(*m, c, rng);
    c.forward = [=] { return m->forward(high, low); };
    return c;
  }});

  cases.push_back({"convx", [](Rng& rng) {
    auto m = std::make_shared<ConvX<double>>(pick(rng, 1, 3), pick(rng, 1, 3), 3, rng,
                                             pick(rng, 1, 2), pick(rng, 1, 2));
    GradCase c;
    Var x = leaf(randn({2, m->conv().spec().in_ch, pick(rng, 5, 7), pick(rng, 5, 7)}, rng));
    c.inputs = {x};
    adopt(*m, c, rng);
    c.forward = [=] { return m->forward(x, Mode::train); };
    return c;
  }});

  cases.push_back({"stdc_module", [](Rng& rng) {
    const int stride = pick(rng, 1, 2);
    auto m = std::make_shared<StdcModule<double>>(StdcModuleSpec{3, 16, 4, stride}, rng);
    GradCase c;
    Var x = leaf(randn({2, 3, 6, 6}, rng));
    c.inputs = {x};
    adopt(*m, c, rng);
    c.forward = [=] { return m->forward(x, Mode::train); };
    return c;
  }});

  cases.push_back({"se_aspp", [](Rng& rng) {
    SeAsppConfig cfg;
    cfg.in_ch = 8;
    cfg.branch_ch = 16;
    cfg.reduction = 8;
    cfg.dilations = {1, pick(rng, 2, 3)};
    cfg.se_input = pick(rng, 0, 1) ? SeInput::module_input : SeInput::atrous_sum;
    auto m = std::make_shared<SeAspp<double>>(cfg, rng);
    GradCase c;
    Var x = leaf(randn({2, 8, 5, 5}, rng));
    c.inputs = {x};
    adopt(*m, c, rng);
    c.forward = [=] { return m->forward(x, Mode::train); };
    return c;
  }});

  return cases;
}

std::string format_error(double e) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << e;
  return os.str();
}

}  // namespace

std::vector<CheckResult> gradcheck_ops(const GradcheckOptions& opt, std::ostream* progress) {
  std::vector<CheckResult> results;
  const auto cases = op_cases();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    ProbeStats stats;
    for (int s = 0; s < opt.seeds; ++s) {
      const std::uint64_t seed = opt.seed * 1000003ULL + i * 1009ULL + static_cast<std::uint64_t>(s);
      Rng rng(seed);
      GradCase c = cases[i].build(rng);
      stats.merge(probe(c, seed, opt));
    }
    CheckResult r{"gradcheck " + cases[i].name, stats.worst <= opt.tolerance,
                  "worst error " + format_error(stats.worst) + " over " + std::to_string(opt.seeds) +
                      " seeds, " + std::to_string(stats.coords) + " coordinates (" +
                      std::to_string(stats.retried) + " near a kink)"};
    if (progress) print_results(*progress, {r});
    results.push_back(std::move(r));
  }
  return results;
}

CheckResult gradcheck_end_to_end(const GradcheckOptions& opt, std::ostream* progress) {
  NetworkConfig cfg;
  auto model = build_network<double>(cfg, opt.seed);
  Rng rng(opt.seed ^ 0xe2eULL);
  const Shape s = opt.e2e_input;
  const Var image(random_uniform<double>(s, rng(), 0.0, 1.0));
  const LabelMap target = random_labels(s.n, s.h, s.w, cfg.num_classes, rng, 0.1);
  const LossConfig loss_cfg;
  auto objective = [&] {
    return composite_loss(model->forward(image, Mode::train), target, loss_cfg).loss;
  };

  auto params = named_parameters(*model);
  backward(objective());
  NoGradGuard no_grad;
  const std::function<double()> f = [&] { return objective().value()[0]; };
  ProbeStats stats;
  std::string worst_name;
  for (int i = 0; i < opt.e2e_params; ++i) {
    auto& p = params[static_cast<std::size_t>(rng() % params.size())];
    const std::size_t idx = static_cast<std::size_t>(rng() % p.param.value().numel());
    const double analytic = p.param.has_grad() ? p.param.grad()[idx] : 0.0;
    const double before = stats.worst;
    check_coordinate(f, p.param.mutable_value(), idx, analytic, opt, stats);
    if (stats.worst > before) worst_name = p.name + "[" + std::to_string(idx) + "]";
  }
  CheckResult r{"gradcheck end-to-end composite loss", stats.worst <= opt.tolerance,
                "worst error " + format_error(stats.worst) + " at " + worst_name + " over " +
                    std::to_string(opt.e2e_params) + " parameters (" + std::to_string(stats.retried) +
                    " near a kink), input " + s.str()};
  if (progress) print_results(*progress, {r});
  return r;
}

}  // namespace xcbam
