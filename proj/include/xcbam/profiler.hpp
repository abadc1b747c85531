#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xcbam/context.hpp"
#include "xcbam/network.hpp"

namespace xcbam {

/// How operation counts are turned into one number. `macs` counts one per
/// convolution multiply-accumulate; `flops2x` counts two. Every other pass
/// (normalization, activation, pooling, resize, elementwise) adds one per
/// output element under both conventions.
enum class FlopConvention { macs, flops2x };

std::string to_string(FlopConvention c);
FlopConvention parse_flop_convention(const std::string& name);

struct ParamGroup {
  std::string name;
  std::int64_t count = 0;
};

struct ParamReport {
  std::int64_t total = 0;
  std::vector<ParamGroup> groups;  ///< by leading name component, in visit order
};

/// Learnable element counts; batch-norm running statistics are excluded.
template <typename T>
ParamReport count_params(Module<T>& module);

struct FlopReport {
  Shape input{};
  OpCost total{};
  std::map<std::string, OpCost> by_scope;

  std::uint64_t count(FlopConvention c) const;
  std::uint64_t count(const OpCost& cost, FlopConvention c) const;
};

/// Shapes are propagated through `forward` without computing values while
/// every op reports its cost.
template <typename T>
FlopReport count_flops(const std::function<void(const Variable<T>&)>& forward, Shape input);

/// Inference-mode forward of a full network.
template <typename T>
FlopReport count_flops(CrossCbamNet<T>& model, Shape input);

struct LatencyReport {
  Shape input{};
  std::vector<double> samples;  ///< seconds per forward, warmup excluded
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;
  double fps = 0.0;  ///< 1 / mean
  std::string environment;
};

/// Summary statistics of per-forward wall-clock samples.
LatencyReport summarize_latency(Shape input, std::vector<double> samples);

/// Times `forward` on a fixed random input with a monotonic clock.
/// Requires warmup >= 1 and reps >= 10.
template <typename T>
LatencyReport bench_latency(const std::function<void(const Variable<T>&)>& forward, Shape input,
                            int warmup, int reps, std::uint64_t seed = 0);

template <typename T>
LatencyReport bench_latency(CrossCbamNet<T>& model, Shape input, int warmup, int reps,
                            std::uint64_t seed = 0);

/// Compiler, CPU, thread and BLAS description of the running process.
std::string environment_descriptor();

struct ProfileReport {
  std::string model;
  std::optional<ParamReport> params;
  std::optional<FlopReport> flops;
  std::optional<LatencyReport> latency;
  FlopConvention matching_convention = FlopConvention::macs;

  std::string table() const;
  std::string csv() const;
};

}  // namespace xcbam
