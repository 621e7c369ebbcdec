#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsgd/comm.hpp"
#include "hsgd/config.hpp"
#include "hsgd/engine.hpp"

namespace hsgd {

/// One concrete run after sweep and replicate expansion.
struct PlannedRun {
  std::string name;  // run name with sweep suffixes
  std::string file;  // CSV file name
  RunSpec spec;
  Index replicate = 0;
  std::uint64_t seed = 0;
};

std::vector<PlannedRun> expand_runs(const ExperimentSpec& spec);

/// Resolves fixtures, groupings and the learning rate. Topology and shape
/// problems are reported as ConfigError.
RunConfig build_run_config(const RunSpec& run, std::uint64_t seed, std::uint64_t grouping_seed);

struct HarnessOptions {
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<LrPolicy> lr_policy;
};

struct RunSummary {
  std::string name;
  std::string file;
  std::uint64_t seed = 0;
  double gamma = 0.0;
  double lr_max = 0.0;
  double final_loss = 0.0;
  double mean_grad_norm_sq = 0.0;
  double max_mean_drift = 0.0;
  std::optional<std::string> schedule_mismatch;
  CommPoint total_time;
  std::optional<TargetHit> target;
  std::vector<std::string> warnings;
};

struct ExperimentResult {
  std::string out_dir;
  std::vector<RunSummary> runs;
  nlohmann::json summary;
};

/// Executes every planned run, writing one CSV per run and summary.json.
ExperimentResult run_experiment(const ExperimentSpec& spec, const HarnessOptions& options);

/// Columns: t, loss, grad_norm_sq, upward_mse, downward_mse, per-level MSEs
/// (multi-level only), event, cum_comm_ms, cum_compute_ms.
void write_trace_csv(std::ostream& out, const RunTrace& trace, const std::vector<CommPoint>& comm);

/// Every bound requested in the bounds file, plus learning-rate limits, sandwich
/// endpoints and the period trade-off check. Throws LrTooLarge.
nlohmann::json bounds_report(const BoundsSpec& bounds);

struct DivergenceRequest {
  std::string fixture = "QF1";
  Index groups = 2;
  std::string grouping = "uniform_random";
  std::uint64_t seed = 0;
  Index probes_per_center = 16;
  double probe_radius = 1.0;
};

/// Pointwise divergences at the origin and the minimizer, sup estimates over
/// a probe set, and the random-grouping expectations.
nlohmann::json divergence_report(const DivergenceRequest& request);

}  // namespace hsgd
