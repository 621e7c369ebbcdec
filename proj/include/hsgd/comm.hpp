#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hsgd/engine.hpp"

namespace hsgd {

/// Per-round latencies in milliseconds. Event level 1 is global; event level
/// i >= 2 uses level_latencies[i - 2] when present, otherwise local_latency.
struct CommModel {
  std::string name;
  double local_latency = 0.0;
  double global_latency = 0.0;
  std::vector<double> level_latencies;
  double compute_per_iteration = 0.0;
  double jitter_sd = 0.0;  // 0: off
  std::uint64_t jitter_seed = 0;

  double latency_for(Index event_level) const;
  /// Warnings for latencies that grow away from the root. Throws InvalidArgument on negatives.
  std::vector<std::string> validate() const;
};

/// cnn-emnist, vgg11, vgg11-3level, unit. Throws UnknownModel.
CommModel builtin_model(const std::string& name);
std::vector<std::string> builtin_model_names();

struct CommPoint {
  double comm_ms = 0.0;
  double compute_ms = 0.0;
  double total() const { return comm_ms + compute_ms; }
};

/// Cumulative time through iteration t (its step and its aggregation), one
/// entry per trace record.
std::vector<CommPoint> account(const RunTrace& trace, const CommModel& model);

enum class TargetMetric { loss, grad_norm_sq };

struct TargetHit {
  Index iteration = 0;  // first t with metric(wbar^t) <= target
  CommPoint time;       // spent producing wbar^t, i.e. through iteration t-1
};

std::optional<TargetHit> time_to_target(const RunTrace& trace, const CommModel& model,
                                        TargetMetric metric, double target);

}  // namespace hsgd
