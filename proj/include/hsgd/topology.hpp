#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hsgd {

using Index = std::size_t;

enum class GroupingOrigin { fixed, uniform_random, group_iid, group_non_iid };

std::string to_string(GroupingOrigin origin);

/// Worker -> group map. Group labels are dense in [0, group_count()).
struct Grouping {
  std::vector<Index> assignment;
  GroupingOrigin origin = GroupingOrigin::fixed;
  std::uint64_t seed = 0;

  Index worker_count() const { return assignment.size(); }
  Index group_count() const;
  /// Members of each group in ascending worker order.
  std::vector<std::vector<Index>> groups() const;

  /// Workers 0..n-1 assigned contiguously, group i holding sizes[i] workers.
  static Grouping contiguous(std::span<const Index> sizes);
};

/// Uniformly random partition of n workers into N groups of size n/N.
Grouping uniform_random_grouping(Index n, Index N, std::uint64_t seed);

/// Grouping driven by a per-worker similarity key (a class label, an anchor
/// coordinate). Workers are ordered by key; `group_non_iid` cuts the order
/// into contiguous equal blocks (similar workers together, large upward
/// divergence), `group_iid` deals it round-robin (each group sees the whole
/// key range, small upward divergence).
Grouping key_grouping(std::span<const double> keys, Index N, GroupingOrigin origin);

/// Two-level aggregation tree: N groups, per-group local period I_i, global period G.
class TwoLevelTopology {
 public:
  TwoLevelTopology() = default;
  Index worker_count() const { return worker_group_.size(); }
  Index group_count() const { return groups_.size(); }
  const std::vector<Index>& group(Index i) const { return groups_.at(i); }
  const std::vector<std::vector<Index>>& groups() const { return groups_; }
  Index group_size(Index i) const { return groups_.at(i).size(); }
  Index local_period(Index i) const { return local_periods_.at(i); }
  const std::vector<Index>& local_periods() const { return local_periods_; }
  Index global_period() const { return global_period_; }
  Index group_of(Index worker) const { return worker_group_.at(worker); }
  const Grouping& grouping() const { return grouping_; }

  /// True when every group uses the same local period.
  bool uniform_local_period() const;

  struct Event {
    bool global = false;
    std::vector<Index> local_groups;  // empty when global
    bool any() const { return global || !local_groups.empty(); }
  };
  /// Aggregations performed after local step t (i.e. at iteration t+1).
  Event schedule(Index t) const;

  friend TwoLevelTopology build_two_level(std::span<const Index>, std::span<const Index>, Index);
  friend TwoLevelTopology two_level_from_grouping(Grouping, std::span<const Index>, Index);

 private:
  std::vector<std::vector<Index>> groups_;
  std::vector<Index> worker_group_;
  std::vector<Index> local_periods_;
  Index global_period_ = 1;
  Grouping grouping_;
};

/// Contiguous worker indices per group. Throws EmptyGroupError, DivisibilityError.
TwoLevelTopology build_two_level(std::span<const Index> group_sizes,
                                 std::span<const Index> local_periods, Index global_period);

/// Same validation, arbitrary (e.g. randomly drawn) grouping.
TwoLevelTopology two_level_from_grouping(Grouping grouping, std::span<const Index> local_periods,
                                         Index global_period);

/// M-level uniform tree. Level 0 is the global server, level M the workers.
/// Worker k_1..k_M (zero-based digits) has index sum_l k_l * subtree_size(l),
/// so every server's descendants form a contiguous index range.
class MultiLevelTopology {
 public:
  Index level_count() const { return branching_.size(); }
  Index worker_count() const { return worker_count_; }
  const std::vector<Index>& branching() const { return branching_; }
  const std::vector<Index>& periods() const { return periods_; }
  /// N_l, P_l for l in 1..M.
  Index branching_at(Index level) const { return branching_.at(level - 1); }
  Index period_at(Index level) const { return periods_.at(level - 1); }
  /// n_l = N_1 * ... * N_l (n_0 = 1).
  Index servers_at_level(Index level) const;
  /// Number of workers under one level-l server: N_{l+1} * ... * N_M.
  Index subtree_size(Index level) const;

  std::vector<Index> path_of(Index worker) const;
  Index worker_of(std::span<const Index> path) const;

  /// Smallest level i with P_i | t+1; level-(i-1) servers aggregate their
  /// subtrees. Lower levels are subsumed.
  std::optional<Index> schedule_level(Index t) const;

  /// Contiguous worker blocks owned by the level-(i-1) servers, i.e. the
  /// blocks averaged when P_i fires.
  std::vector<std::vector<Index>> aggregation_blocks(Index level) const;

  friend MultiLevelTopology build_multi_level(std::span<const Index>, std::span<const Index>);

 private:
  MultiLevelTopology() = default;
  std::vector<Index> branching_;
  std::vector<Index> periods_;
  Index worker_count_ = 1;
};

/// Throws PeriodOrderError, DivisibilityError, SizeError.
MultiLevelTopology build_multi_level(std::span<const Index> branching,
                                     std::span<const Index> periods);

/// The equivalent two-level topology of an M = 2 tree.
TwoLevelTopology as_two_level(const MultiLevelTopology& topology);

/// Block-diagonal local-averaging matrix (block i filled with 1/n_i).
Eigen::MatrixXd aggregation_matrix(const TwoLevelTopology& topology);

/// Multiplicity of eigenvalue 1 as n - rank(A - I). Throws NonSquareError.
Index count_unit_eigenvalues(const Eigen::MatrixXd& matrix);

/// n! / ((n/N)!^N N!), saturating at UINT64_MAX. Throws SizeError if N does not divide n.
std::uint64_t equal_grouping_count(Index n, Index N);

inline constexpr std::uint64_t kEnumerationGuard = 10'000;

/// Lazily yields every unordered partition of {0..n-1} into N groups of
/// size n/N exactly once, as restricted-growth label strings in
/// lexicographic order.
class EqualGroupingEnumerator {
 public:
  /// Throws SizeError, ExplosionError (more than kEnumerationGuard partitions).
  EqualGroupingEnumerator(Index n, Index N);
  std::optional<Grouping> next();
  std::uint64_t size() const { return count_; }

 private:
  void fill_from(Index pos);
  bool advance();

  Index n_;
  Index groups_;
  Index group_size_;
  std::uint64_t count_;
  std::vector<Index> labels_;
  std::vector<Index> counts_;
  bool started_ = false;
  bool done_ = false;
};

std::vector<Grouping> enumerate_equal_groupings(Index n, Index N);

}  // namespace hsgd
