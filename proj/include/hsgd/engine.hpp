#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hsgd/kernels.hpp"
#include "hsgd/objectives.hpp"
#include "hsgd/topology.hpp"

namespace hsgd {

enum class LrPolicy { enforce, warn };
/// What non-sampled workers do during a partial-participation round.
enum class NonParticipantMode { frozen, step };

using Topology = std::variant<TwoLevelTopology, MultiLevelTopology>;

/// Largest period whose aggregation bounds the learning rate: G or P_1.
Index outer_period(const Topology& topology);
Index worker_count(const Topology& topology);

struct RunConfig {
  Topology topology;
  std::shared_ptr<const Objective> objective;
  NoiseModel noise = NoiseModel::exact();
  double gamma = 0.01;
  Index horizon = 1;
  std::uint64_t seed = 0;
  Vec initial;  // empty: the origin
  /// Fraction of each lowest-level group sampled per round. Absent: everyone.
  std::optional<double> participation;
  NonParticipantMode nonparticipants = NonParticipantMode::frozen;
  LrPolicy lr_policy = LrPolicy::enforce;
  /// Evaluate loss / gradient norm every k iterations (others are NaN).
  Index metric_stride = 1;
  /// Store the virtual average every k iterations (0: never).
  Index snapshot_stride = 0;
  Execution execution = Execution::parallel;
};

/// level 0: no aggregation; 1: global; i >= 2: the level-(i-1) servers
/// averaged their subtrees (two-level local aggregation is level 2).
struct AggregationEvent {
  Index level = 0;
  Index blocks = 0;  // number of servers that aggregated
  bool any() const { return level != 0; }
};

std::string event_label(const AggregationEvent& event);

struct TraceRecord {
  Index t = 0;
  double loss = 0.0;          // f(wbar^t)
  double grad_norm_sq = 0.0;  // ||grad f(wbar^t)||^2
  double upward_mse = 0.0;    // lowest server level
  double downward_mse = 0.0;
  std::vector<kernels::MsePair> level_mses;  // l = 1..M-1
  AggregationEvent event;                    // performed after the step at t
  Index cum_local = 0;
  Index cum_global = 0;
};

struct RunTrace {
  std::vector<TraceRecord> records;  // exactly `horizon` entries
  Vec final_average;
  std::vector<Vec> final_params;
  std::vector<std::pair<Index, Vec>> snapshots;
  double final_loss = 0.0;
  double lr_max = 0.0;
  /// Largest relative change of the worker mean across any full-participation
  /// aggregation step.
  double max_mean_drift = 0.0;
  std::vector<std::string> warnings;
  std::string mode;  // "two-level" or "multi-level"
};

/// Two-level H-SGD. Throws LrTooLarge (enforce), NonFiniteParameter, InvalidArgument.
RunTrace run_two_level(const RunConfig& config);
/// M-level H-SGD with break semantics: the highest firing level subsumes the rest.
RunTrace run_multi_level(const RunConfig& config);
/// Dispatch on the topology alternative.
RunTrace run(const RunConfig& config);

/// ceil(rho * |members|) members drawn uniformly without replacement,
/// returned in ascending order. Deterministic in (seed, group, round).
std::vector<Index> sample_participants(std::span<const Index> members, double rho,
                                       std::uint64_t seed, Index group, Index round);

/// Upward / downward parameter MSE of a live state against the given blocks.
kernels::MsePair measure_parameter_mses(const ParamMatrix& params,
                                        const std::vector<std::vector<Index>>& blocks);

/// Checks every recorded event against the topology's schedule. Returns a
/// description of the first mismatch, or nothing.
std::optional<std::string> check_schedule_fidelity(const RunTrace& trace, const Topology& topology);

/// (1/T) sum_t ||grad f(wbar^t)||^2 over evaluated records.
double mean_grad_norm_sq(const RunTrace& trace);

}  // namespace hsgd
