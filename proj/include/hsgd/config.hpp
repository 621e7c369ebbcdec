#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hsgd/comm.hpp"
#include "hsgd/engine.hpp"

namespace hsgd {

struct TopologySpec {
  std::string kind;  // local | two-level | multi-level
  Index workers = 0;
  // local
  Index period = 0;
  // two-level
  Index groups = 0;
  std::string grouping = "contiguous";  // contiguous | uniform_random | group_iid | group_non_iid
  std::vector<Index> group_sizes;
  Index global_period = 0;
  Index local_period = 0;
  std::vector<Index> local_periods;
  std::optional<std::uint64_t> grouping_seed;
  // multi-level
  std::vector<Index> branching;
  std::vector<Index> periods;
};

struct ObjectiveSpec {
  std::string fixture;  // registered fixture name, or "logistic"
  LogisticSpec logistic;
};

struct RunSpec {
  std::string name;
  TopologySpec topology;
  ObjectiveSpec objective;
  NoiseModel noise;
  std::optional<double> gamma;
  std::optional<double> gamma_scale;  // multiple of the learning-rate limit
  Index horizon = 1000;
  std::optional<double> initial_fill;
  Vec initial;
  std::optional<double> participation;
  NonParticipantMode nonparticipants = NonParticipantMode::frozen;
  LrPolicy lr_policy = LrPolicy::enforce;
  Index metric_stride = 1;
  Execution execution = Execution::parallel;
  int line = 0;
};

struct BoundsSpec {
  double lipschitz = 1.0, sigma2 = 0.0, gamma = 0.0, horizon = 1.0, gap = 0.0;
  struct Theorem1 {
    std::vector<Index> group_sizes;
    std::vector<double> local_periods;
    double global_period = 1.0;
    double upward = 0.0;
    std::vector<double> downward;
  };
  struct Corollary1 {
    Index n = 1;
    double period = 1.0;
    double eps2 = 0.0;
  };
  struct Theorem2 {
    Index n = 1, groups = 1;
    double global_period = 1.0, local_period = 1.0, eps2 = 0.0;
  };
  struct Theorem3 {
    std::vector<Index> branching, periods;
    double eps2 = 0.0;
  };
  struct TheoremD1 {
    std::vector<Index> branching, periods;
    std::vector<double> upward, downward;
  };
  struct Remark5 {
    Index n = 0, groups = 0, global_period = 0, local_period = 0;
    double l = 1.0, q = 1.0;
  };
  std::optional<Theorem1> theorem1;
  std::optional<Corollary1> corollary1;
  std::optional<Theorem2> theorem2;
  std::optional<Theorem3> theorem3;
  std::optional<TheoremD1> theorem_d1;
  std::optional<Remark5> remark5;
};

struct ExperimentSpec {
  std::string name = "experiment";
  std::string output = "out";
  std::uint64_t seed = 0;
  Index replicates = 1;
  CommModel comm = builtin_model("unit");
  std::optional<double> target_loss;
  std::vector<RunSpec> runs;
  /// Axis name -> values. Each axis applies to the runs whose topology uses it.
  std::vector<std::pair<std::string, std::vector<double>>> sweep;
  std::vector<std::string> verify;
  std::optional<BoundsSpec> bounds;
};

/// Throws ConfigError naming the line and field at fault.
ExperimentSpec load_experiment(const std::string& path);
ExperimentSpec parse_experiment(const std::string& text, const std::string& origin = "<string>");
/// A file holding only a `bounds:` section (or a whole experiment with one).
BoundsSpec load_bounds(const std::string& path);

/// Sweep axes recognised by `expand_runs`.
const std::vector<std::string>& sweep_axes();

}  // namespace hsgd
