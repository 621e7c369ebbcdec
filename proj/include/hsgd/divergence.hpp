#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hsgd/kernels.hpp"
#include "hsgd/objectives.hpp"
#include "hsgd/topology.hpp"

namespace hsgd {

/// Worker gradients and their mean at one point, the input of every
/// divergence below.
struct GradientTable {
  Index n = 0;
  Index d = 0;
  std::vector<Vec> worker;  // grad F_j(w)
  Vec mean;                 // grad f(w)

  GradientTable(const Objective& objective, std::span<const double> w);
  Vec group_mean(std::span<const Index> members) const;
};

/// (1/n) sum_j ||grad F_j(w) - grad f(w)||^2. Also the pointwise eps_w^2 that
/// the grouping lemmas are stated against.
double global_divergence(const Objective& objective, std::span<const double> w);
double global_divergence(const GradientTable& table);

/// sum_i (n_i/n) ||grad f_i(w) - grad f(w)||^2.
double upward_divergence(const Objective& objective, const Grouping& grouping,
                         std::span<const double> w);
double upward_divergence(const GradientTable& table, const Grouping& grouping);

/// (1/n_i) sum_{j in V_i} ||grad F_j(w) - grad f_i(w)||^2. Throws UnknownGroup.
double downward_divergence(const Objective& objective, const Grouping& grouping, Index group,
                           std::span<const double> w);
std::vector<double> downward_divergences(const GradientTable& table, const Grouping& grouping);

struct PartitionCheck {
  double lhs = 0.0;  // global divergence
  double rhs = 0.0;  // upward + sum_i (n_i/n) downward_i
  double residual = 0.0;
  double upward = 0.0;
  std::vector<double> downward;
};

PartitionCheck check_partition_identity(const Objective& objective, const Grouping& grouping,
                                        std::span<const double> w);

struct LevelDivergences {
  Index level = 0;
  double upward = 0.0;               // (1/n_l) sum_paths ||grad f_path - grad f||^2
  std::vector<double> downward;      // per level-l path: (n_l/n) sum_desc ||grad f_path - grad F_k||^2
};

/// `assignment[slot] = worker` places workers on the tree's leaf slots
/// (empty: identity). Throws BadLevel unless 1 <= level <= M-1.
LevelDivergences level_divergences(const Objective& objective, const MultiLevelTopology& topology,
                                   std::span<const Index> assignment, Index level,
                                   std::span<const double> w);

struct SamplingMode {
  enum class Kind { enumerate, monte_carlo };
  Kind kind = Kind::enumerate;
  Index samples = 0;
  std::uint64_t seed = 0;
  Execution execution = Execution::parallel;

  static SamplingMode enumerate(Execution exec = Execution::parallel) {
    return {Kind::enumerate, 0, 0, exec};
  }
  static SamplingMode monte_carlo(Index samples, std::uint64_t seed,
                                  Execution exec = Execution::parallel) {
    return {Kind::monte_carlo, samples, seed, exec};
  }
};

struct LemmaCheck {
  double empirical = 0.0;
  double closed_form = 0.0;
  double gap = 0.0;
  double eps_w2 = 0.0;
  double std_error = 0.0;  // Monte Carlo only
  Index samples = 0;
  bool exhaustive = false;
};

/// Grouping-averaged upward divergence against (N-1)/(n-1) eps_w^2.
/// Throws SizeError, ExplosionError (enumerate beyond the guard).
LemmaCheck verify_lemma1(const Objective& objective, Index N, std::span<const double> w,
                         const SamplingMode& mode);
/// Grouping-averaged weighted downward divergence against (1-(N-1)/(n-1)) eps_w^2.
LemmaCheck verify_lemma2(const Objective& objective, Index N, std::span<const double> w,
                         const SamplingMode& mode);

struct Lemma3Check {
  LemmaCheck upward;
  LemmaCheck downward;                   // averaged over paths
  std::vector<double> downward_per_path; // expectation for each fixed level-l path
  double max_path_gap = 0.0;
};

/// Level-l version over uniformly random leaf assignments. Enumerate mode
/// visits all n! assignments and requires n <= 8.
Lemma3Check verify_lemma3(const Objective& objective, const MultiLevelTopology& topology,
                          Index level, std::span<const double> w, const SamplingMode& mode);

/// Expected level-l divergences under uniform grouping, as fractions of eps_w^2.
double lemma_upward_fraction(Index n, Index groups);
double lemma_downward_fraction(Index n, Index groups);

struct DivergenceReport {
  double global = 0.0;
  double upward = 0.0;
  std::vector<double> downward;           // per group
  std::vector<double> level_upward;       // multi-level, l = 1..M-1
  std::vector<double> level_downward;     // max over level-l paths
  Index probes = 0;
  bool exact = false;
  std::string note;
};

/// Maxima over the probe set. Exact for objectives whose divergences are
/// constant in w; otherwise a lower bound of the true supremum. Throws
/// InvalidArgument on an empty probe set.
DivergenceReport estimate_sup_divergences(const Objective& objective, const Grouping& grouping,
                                          std::span<const Vec> probes);
DivergenceReport estimate_sup_level_divergences(const Objective& objective,
                                                const MultiLevelTopology& topology,
                                                std::span<const Vec> probes);

/// The centers plus `per_center` Gaussian perturbations (std `radius`) of each.
std::vector<Vec> make_probe_set(std::span<const Vec> centers, Index per_center, double radius,
                                std::uint64_t seed);

}  // namespace hsgd
