#include "xcbam/losses.hpp"

#include <cmath>
#include <string>

#include "xcbam/error.hpp"

namespace xcbam {

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(gamma >= 0.0 && gamma <= 5.0)) throw ConfigError("gamma must lie in [0, 5]");
  if (!(aux_weight >= 0.0)) throw ConfigError("aux_weight must be non-negative");
}

namespace {

void check_target(const Shape& s, const LabelMap& target, int ignore_index) {
  if (s.n != target.n || s.h != target.h || s.w != target.w) {
    throw UsageError("loss: logits " + s.str() + " do not match target (" +
                     std::to_string(target.n) + ", " + std::to_string(target.h) + ", " +
                     std::to_string(target.w) + ")");
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto t = target.labels[i];
    if (t != ignore_index && (t < 0 || t >= s.c)) {
      throw DataError("loss: label " + std::to_string(t) + " at pixel " + std::to_string(i) +
                      " outside [0, " + std::to_string(s.c) + ")");
    }
  }
}

// Softmax over the channel axis at one pixel, written into q; returns the
// log-sum-exp of the logits.
template <typename T>
double pixel_softmax(const Tensor<T>& z, int b, int y, int x, std::vector<double>& q) {
  const int k = z.shape().c;
  double zmax = static_cast<double>(z.at(b, 0, y, x));
  for (int c = 1; c < k; ++c) zmax = std::max(zmax, static_cast<double>(z.at(b, c, y, x)));
  double denom = 0.0;
  for (int c = 0; c < k; ++c) {
    q[c] = std::exp(static_cast<double>(z.at(b, c, y, x)) - zmax);
    denom += q[c];
  }
  for (int c = 0; c < k; ++c) q[c] /= denom;
  return zmax + std::log(denom);
}

// Shared driver: `pixel` maps (log p_t, p_t) to (loss, dloss/dz coefficient g),
// where dloss/dz_j = g * (q_j - [j == t]).
template <typename T, typename PixelFn>
LossResult<T> softmax_loss(const Variable<T>& logits, const LabelMap& target, int ignore_index,
                           std::string_view op, PixelFn pixel) {
  if (logits.value().is_meta()) throw InternalError("loss evaluated in shape-only mode");
  const Shape s = logits.shape();
  check_target(s, target, ignore_index);

  std::vector<double> q(static_cast<std::size_t>(s.c));
  std::vector<double> coeff(target.size(), 0.0);
  double total = 0.0;
  std::size_t counted = 0;
  const Tensor<T>& z = logits.value();
  for (int b = 0; b < s.n; ++b) {
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        const auto t = target.at(b, y, x);
        if (t == ignore_index) continue;
        const double lse = pixel_softmax(z, b, y, x, q);
        const double log_pt = static_cast<double>(z.at(b, t, y, x)) - lse;
        const auto [loss, g] = pixel(log_pt, q[t]);
        total += loss;
        coeff[(static_cast<std::size_t>(b) * s.h + y) * s.w + x] = g;
        ++counted;
      }
    }
  }

  LossResult<T> result;
  result.counted = counted;
  result.all_ignored = counted == 0;
  Tensor<T> value(Shape{1, 1, 1, 1});
  value[0] = counted ? static_cast<T>(total / static_cast<double>(counted)) : T{0};
  const double inv = counted ? 1.0 / static_cast<double>(counted) : 0.0;

  auto zn = logits.node();
  result.loss = make_op_result<T>(
      std::move(value), op, {zn},
      [zn, target, ignore_index, coeff = std::move(coeff), inv](Node<T>& self) {
        if (inv == 0.0) return;
        const Shape s = zn->value.shape();
        Tensor<T>& dz = zn->grad_buffer();
        const double upstream = static_cast<double>(self.grad[0]) * inv;
        std::vector<double> q(static_cast<std::size_t>(s.c));
        for (int b = 0; b < s.n; ++b) {
          for (int y = 0; y < s.h; ++y) {
            for (int x = 0; x < s.w; ++x) {
              const auto t = target.at(b, y, x);
              if (t == ignore_index) continue;
              const double g = coeff[(static_cast<std::size_t>(b) * s.h + y) * s.w + x] * upstream;
              pixel_softmax(zn->value, b, y, x, q);
              for (int c = 0; c < s.c; ++c) {
                dz.at(b, c, y, x) += static_cast<T>(g * (q[c] - (c == t ? 1.0 : 0.0)));
              }
            }
          }
        }
      });
  return result;
}

}  // namespace

template <typename T>
LossResult<T> cross_entropy(const Variable<T>& logits, const LabelMap& target, int ignore_index) {
  return softmax_loss(logits, target, ignore_index, "cross_entropy",
                      [](double log_pt, double) { return std::pair{-log_pt, 1.0}; });
}

template <typename T>
LossResult<T> focal_loss(const Variable<T>& logits, const LabelMap& target, double gamma,
                         int ignore_index) {
  if (!(gamma >= 0.0)) throw ConfigError("focal gamma must be non-negative");
  return softmax_loss(logits, target, ignore_index, "focal_loss", [gamma](double log_pt, double p) {
    const double rest = 1.0 - p;
    const double weight = std::pow(rest, gamma);
    // d/dz_j of -(1-p)^g log p is -(g (1-p)^(g-1) p log p - (1-p)^g) (q_j - [j == t]).
    double slope = 0.0;
    if (gamma != 0.0 && rest > 0.0) slope = gamma * std::pow(rest, gamma - 1.0) * p * log_pt;
    return std::pair{-weight * log_pt, weight - slope};
  });
}

template <typename T>
LossResult<T> mixed_loss(const Variable<T>& logits, const LabelMap& target,
                         const LossConfig& cfg) {
  cfg.validate();
  LossResult<T> ce = cross_entropy(logits, target, cfg.ignore_index);
  LossResult<T> fl = focal_loss(logits, target, cfg.gamma, cfg.ignore_index);
  LossResult<T> out;
  out.counted = ce.counted;
  out.all_ignored = ce.all_ignored;
  out.loss = add(scale(ce.loss, static_cast<T>(cfg.alpha)),
                 scale(fl.loss, static_cast<T>(1.0 - cfg.alpha)));
  return out;
}

template <typename T>
LossResult<T> composite_loss(const ModelOutput<T>& out, const LabelMap& target,
                             const LossConfig& cfg) {
  LossResult<T> total = mixed_loss(out.logits, target, cfg);
  if (out.aux_logits) {
    LossResult<T> aux = mixed_loss(*out.aux_logits, target, cfg);
    total.loss = add(total.loss, scale(aux.loss, static_cast<T>(cfg.aux_weight)));
  }
  return total;
}

#define XCBAM_INSTANTIATE(T)                                                                     \
  template LossResult<T> cross_entropy<T>(const Variable<T>&, const LabelMap&, int);             \
  template LossResult<T> focal_loss<T>(const Variable<T>&, const LabelMap&, double, int);        \
  template LossResult<T> mixed_loss<T>(const Variable<T>&, const LabelMap&, const LossConfig&);  \
  template LossResult<T> composite_loss<T>(const ModelOutput<T>&, const LabelMap&,               \
                                           const LossConfig&);
XCBAM_INSTANTIATE(float)
XCBAM_INSTANTIATE(double)
#undef XCBAM_INSTANTIATE

}  // namespace xcbam
