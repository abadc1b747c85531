#include "xcbam/profiler.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/Core>

#include "xcbam/error.hpp"

namespace xcbam {

std::string to_string(FlopConvention c) { return c == FlopConvention::macs ? "macs" : "flops2x"; }

FlopConvention parse_flop_convention(const std::string& name) {
  if (name == "macs") return FlopConvention::macs;
  if (name == "flops2x") return FlopConvention::flops2x;
  throw ConfigError("unknown FLOP convention '" + name + "' (expected macs or flops2x)");
}

namespace {

template <typename T>
class CountingVisitor : public ParamVisitor<T> {
 public:
  void parameter(const std::string& name, Variable<T>& param, ParamRole) override {
    const auto count = static_cast<std::int64_t>(param.value().numel());
    report.total += count;
    const std::string group = name.substr(0, name.find('.'));
    if (report.groups.empty() || report.groups.back().name != group) {
      report.groups.push_back({group, 0});
    }
    report.groups.back().count += count;
  }
  ParamReport report;
};

}  // namespace

template <typename T>
ParamReport count_params(Module<T>& module) {
  CountingVisitor<T> visitor;
  module.visit("", visitor);
  return visitor.report;
}

std::uint64_t FlopReport::count(const OpCost& cost, FlopConvention c) const {
  const std::uint64_t per_mac = c == FlopConvention::macs ? 1 : 2;
  return per_mac * cost.conv_macs + cost.elementwise;
}

std::uint64_t FlopReport::count(FlopConvention c) const { return count(total, c); }

template <typename T>
FlopReport count_flops(const std::function<void(const Variable<T>&)>& forward, Shape input) {
  CostRecorder recorder;
  {
    NoGradGuard no_grad;
    ShapeOnlyGuard shapes;
    RecordCostsGuard record(recorder);
    forward(Variable<T>(Tensor<T>::meta(input)));
  }
  FlopReport report;
  report.input = input;
  report.total = recorder.total();
  report.by_scope = recorder.by_scope();
  return report;
}

template <typename T>
FlopReport count_flops(CrossCbamNet<T>& model, Shape input) {
  return count_flops<T>([&model](const Variable<T>& x) { model.forward(x, Mode::infer); }, input);
}

LatencyReport summarize_latency(Shape input, std::vector<double> samples) {
  if (samples.empty()) throw UsageError("no latency samples");
  LatencyReport r;
  r.input = input;
  r.samples = std::move(samples);
  std::vector<double> sorted = r.samples;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double s : sorted) sum += s;
  r.mean = sum / static_cast<double>(sorted.size());
  const std::size_t n = sorted.size();
  r.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  // Nearest-rank percentile.
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  r.p95 = sorted[std::max<std::size_t>(rank, 1) - 1];
  r.fps = r.mean > 0.0 ? 1.0 / r.mean : 0.0;
  return r;
}

template <typename T>
LatencyReport bench_latency(const std::function<void(const Variable<T>&)>& forward, Shape input,
                            int warmup, int reps, std::uint64_t seed) {
  if (warmup < 1) throw UsageError("bench: warmup must be at least 1");
  if (reps < 10) throw UsageError("bench: reps must be at least 10");
  const Variable<T> x(random_uniform<T>(input, seed, T{0}, T{1}));
  NoGradGuard no_grad;
  for (int i = 0; i < warmup; ++i) forward(x);
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(reps));
  using clock = std::chrono::steady_clock;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = clock::now();
    forward(x);
    const auto t1 = clock::now();
    samples.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  LatencyReport r = summarize_latency(input, std::move(samples));
  r.environment = environment_descriptor();
  return r;
}

template <typename T>
LatencyReport bench_latency(CrossCbamNet<T>& model, Shape input, int warmup, int reps,
                            std::uint64_t seed) {
  return bench_latency<T>([&model](const Variable<T>& x) { model.forward(x, Mode::infer); },
                          input, warmup, reps, seed);
}

std::string environment_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(colon + 2);
      break;
    }
  }
  std::ostringstream os;
  os << cpu << "; omp_threads=" << omp_get_max_threads()
     << "; gemm=Eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION
     << " (" << Eigen::SimdInstructionSetsInUse() << ")"
     << "; compiler=" << __VERSION__;
  return os.str();
}

namespace {

std::string giga(std::uint64_t v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << static_cast<double>(v) / 1e9 << "G";
  return os.str();
}

std::string mega(std::int64_t v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << static_cast<double>(v) / 1e6 << "M";
  return os.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::string ProfileReport::table() const {
  std::ostringstream os;
  os << "model: " << model << "\n";
  if (params) {
    os << "parameters: " << params->total << " (" << mega(params->total) << ")\n";
    for (const auto& g : params->groups) {
      os << "  " << std::left << std::setw(14) << g.name << std::right << std::setw(12)
         << g.count << "  " << mega(g.count) << "\n";
    }
  }
  if (flops) {
    const auto& f = *flops;
    os << "input: " << f.input.str() << "\n";
    for (FlopConvention c : {FlopConvention::macs, FlopConvention::flops2x}) {
      os << "flops[" << to_string(c) << "]: " << f.count(c) << " (" << giga(f.count(c)) << ")"
         << (c == matching_convention ? "  (matching convention)" : "")
         << "\n";
      for (const auto& [scope, cost] : f.by_scope) {
        os << "  " << std::left << std::setw(14) << scope << std::right << std::setw(16)
           << f.count(cost, c) << "  " << giga(f.count(cost, c)) << "\n";
      }
    }
    os << "conv macs: " << f.total.conv_macs << ", elementwise: " << f.total.elementwise << "\n";
  }
  if (latency) {
    const auto& l = *latency;
    os << std::setprecision(6) << "latency (s): mean " << l.mean << ", median " << l.median
       << ", p95 " << l.p95 << " over " << l.samples.size() << " runs; fps " << l.fps << "\n"
       << "environment: " << l.environment << "\n";
  }
  return os.str();
}

std::string ProfileReport::csv() const {
  std::ostringstream os;
  os << std::setprecision(10) << "metric,scope,value\n";
  if (params) {
    os << "params,total," << params->total << "\n";
    for (const auto& g : params->groups) os << "params," << csv_field(g.name) << "," << g.count << "\n";
  }
  if (flops) {
    for (FlopConvention c : {FlopConvention::macs, FlopConvention::flops2x}) {
      const std::string key = "flops_" + to_string(c);
      os << key << ",total," << flops->count(c) << "\n";
      for (const auto& [scope, cost] : flops->by_scope) {
        os << key << "," << csv_field(scope) << "," << flops->count(cost, c) << "\n";
      }
    }
    os << "flops_matching_convention,total," << to_string(matching_convention) << "\n";
  }
  if (latency) {
    os << "latency_mean_s,total," << latency->mean << "\n"
       << "latency_median_s,total," << latency->median << "\n"
       << "latency_p95_s,total," << latency->p95 << "\n"
       << "fps,total," << latency->fps << "\n"
       << "environment,total," << csv_field(latency->environment) << "\n";
  }
  return os.str();
}

#define XCBAM_INSTANTIATE(T)                                                                   \
  template ParamReport count_params<T>(Module<T>&);                                            \
  template FlopReport count_flops<T>(const std::function<void(const Variable<T>&)>&, Shape);   \
  template FlopReport count_flops<T>(CrossCbamNet<T>&, Shape);                                 \
  template LatencyReport bench_latency<T>(const std::function<void(const Variable<T>&)>&,      \
                                          Shape, int, int, std::uint64_t);                     \
  template LatencyReport bench_latency<T>(CrossCbamNet<T>&, Shape, int, int, std::uint64_t);
XCBAM_INSTANTIATE(float)
XCBAM_INSTANTIATE(double)
#undef XCBAM_INSTANTIATE

}  // namespace xcbam
