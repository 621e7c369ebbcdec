#include "hsgd/comm.hpp"

#include <algorithm>
#include <cmath>

#include "hsgd/error.hpp"
#include "hsgd/rng.hpp"

namespace hsgd {

double CommModel::latency_for(Index event_level) const {
  if (event_level == 0) return 0.0;
  if (event_level == 1) return global_latency;
  const Index slot = event_level - 2;
  if (slot < level_latencies.size()) return level_latencies[slot];
  return local_latency;
}

std::vector<std::string> CommModel::validate() const {
  auto bad = [](double v) { return !(v >= 0.0) || !std::isfinite(v); };
  if (bad(local_latency) || bad(global_latency) || bad(compute_per_iteration) || bad(jitter_sd))
    throw InvalidArgument("comm model '" + name + "' has a negative or non-finite entry");
  std::vector<std::string> warnings;
  double above = global_latency;
  for (Index i = 0; i < level_latencies.size(); ++i) {
    if (bad(level_latencies[i]))
      throw InvalidArgument("comm model '" + name + "' has a negative level latency");
    if (level_latencies[i] > above)
      warnings.push_back("comm model '" + name + "': level " + std::to_string(i + 1) +
                         " latency exceeds the level above it");
    above = level_latencies[i];
  }
  if (level_latencies.empty() && local_latency > global_latency)
    warnings.push_back("comm model '" + name + "': local latency exceeds global latency");
  return warnings;
}

CommModel builtin_model(const std::string& name) {
  CommModel m;
  m.name = name;
  if (name == "cnn-emnist") {
    m.local_latency = 0.29;
    m.global_latency = 4.53;
  } else if (name == "vgg11") {
    m.local_latency = 27.81;
    m.global_latency = 291.82;
    m.compute_per_iteration = 4.0;
  } else if (name == "vgg11-3level") {
    // Middle tier twice the bottom tier.
    m.local_latency = 27.81;
    m.global_latency = 291.82;
    m.level_latencies = {2.0 * 27.81, 27.81};
    m.compute_per_iteration = 4.0;
  } else if (name == "unit") {
    m.local_latency = 1.0;
    m.global_latency = 10.0;
  } else {
    throw UnknownModel("unknown comm model '" + name + "'");
  }
  return m;
}

std::vector<std::string> builtin_model_names() {
  return {"cnn-emnist", "unit", "vgg11", "vgg11-3level"};
}

std::vector<CommPoint> account(const RunTrace& trace, const CommModel& model) {
  std::vector<CommPoint> out;
  out.reserve(trace.records.size());
  CommPoint running;
  for (const TraceRecord& r : trace.records) {
    running.compute_ms += model.compute_per_iteration;
    if (r.event.any()) {
      double cost = model.latency_for(r.event.level);
      if (model.jitter_sd > 0.0) {
        CounterRng rng(model.jitter_seed, streams::kJitter, r.t);
        cost = std::max(0.0, cost + model.jitter_sd * rng.normal());
      }
      running.comm_ms += cost;
    }
    out.push_back(running);
  }
  return out;
}

std::optional<TargetHit> time_to_target(const RunTrace& trace, const CommModel& model,
                                        TargetMetric metric, double target) {
  const std::vector<CommPoint> series = account(trace, model);
  for (Index k = 0; k < trace.records.size(); ++k) {
    const TraceRecord& r = trace.records[k];
    const double v = metric == TargetMetric::loss ? r.loss : r.grad_norm_sq;
    if (std::isnan(v) || !(v <= target)) continue;
    TargetHit hit;
    hit.iteration = r.t;
    if (k > 0) hit.time = series[k - 1];
    return hit;
  }
  return std::nullopt;
}

}  // namespace hsgd
