#include "hsgd/topology.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "hsgd/error.hpp"
#include "hsgd/rng.hpp"

namespace hsgd {

std::string to_string(GroupingOrigin origin) {
  switch (origin) {
    case GroupingOrigin::fixed: return "fixed";
    case GroupingOrigin::uniform_random: return "uniform-random";
    case GroupingOrigin::group_iid: return "group-iid";
    case GroupingOrigin::group_non_iid: return "group-non-iid";
  }
  return "unknown";
}

Index Grouping::group_count() const {
  if (assignment.empty()) return 0;
  return *std::max_element(assignment.begin(), assignment.end()) + 1;
}

std::vector<std::vector<Index>> Grouping::groups() const {
  std::vector<std::vector<Index>> out(group_count());
  for (Index j = 0; j < assignment.size(); ++j) out[assignment[j]].push_back(j);
  return out;
}

Grouping Grouping::contiguous(std::span<const Index> sizes) {
  Grouping g;
  for (Index i = 0; i < sizes.size(); ++i) g.assignment.insert(g.assignment.end(), sizes[i], i);
  return g;
}

Grouping uniform_random_grouping(Index n, Index N, std::uint64_t seed) {
  if (N == 0 || n % N != 0) throw SizeError("uniform grouping needs N | n");
  std::vector<Index> perm(n);
  std::iota(perm.begin(), perm.end(), Index{0});
  CounterRng rng(seed, streams::kGrouping, 0);
  for (Index i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  // Bin b holds perm[b]; bins [iK, (i+1)K) form group i.
  const Index k = n / N;
  Grouping g;
  g.assignment.resize(n);
  for (Index b = 0; b < n; ++b) g.assignment[perm[b]] = b / k;
  g.origin = GroupingOrigin::uniform_random;
  g.seed = seed;
  return g;
}

Grouping key_grouping(std::span<const double> keys, Index N, GroupingOrigin origin) {
  const Index n = keys.size();
  if (N == 0 || n % N != 0) throw SizeError("key grouping needs N | n");
  if (origin != GroupingOrigin::group_iid && origin != GroupingOrigin::group_non_iid)
    throw InvalidArgument("key grouping origin must be group-iid or group-non-iid");
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return keys[a] < keys[b]; });
  Grouping g;
  g.assignment.resize(n);
  const Index k = n / N;
  for (Index r = 0; r < n; ++r)
    g.assignment[order[r]] = origin == GroupingOrigin::group_non_iid ? r / k : r % N;
  g.origin = origin;
  return g;
}

// --- two-level ------------------------------------------------------------

bool TwoLevelTopology::uniform_local_period() const {
  return std::all_of(local_periods_.begin(), local_periods_.end(),
                     [&](Index p) { return p == local_periods_.front(); });
}

TwoLevelTopology::Event TwoLevelTopology::schedule(Index t) const {
  Event ev;
  if ((t + 1) % global_period_ == 0) {
    ev.global = true;
    return ev;
  }
  for (Index i = 0; i < local_periods_.size(); ++i)
    if ((t + 1) % local_periods_[i] == 0) ev.local_groups.push_back(i);
  return ev;
}

TwoLevelTopology two_level_from_grouping(Grouping grouping, std::span<const Index> local_periods,
                                         Index global_period) {
  const Index N = grouping.group_count();
  if (grouping.assignment.empty()) throw EmptyGroupError("no workers");
  if (local_periods.size() != N)
    throw InvalidArgument("expected " + std::to_string(N) + " local periods, got " +
                          std::to_string(local_periods.size()));
  if (global_period == 0) throw InvalidArgument("global period must be >= 1");
  TwoLevelTopology topo;
  topo.groups_ = grouping.groups();
  for (Index i = 0; i < N; ++i) {
    if (topo.groups_[i].empty()) throw EmptyGroupError("group " + std::to_string(i) + " is empty");
    if (local_periods[i] == 0) throw InvalidArgument("local periods must be >= 1");
    if (global_period % local_periods[i] != 0)
      throw DivisibilityError("G = " + std::to_string(global_period) +
                              " is not a multiple of I_" + std::to_string(i + 1) + " = " +
                              std::to_string(local_periods[i]));
  }
  topo.worker_group_ = grouping.assignment;
  topo.local_periods_.assign(local_periods.begin(), local_periods.end());
  topo.global_period_ = global_period;
  topo.grouping_ = std::move(grouping);
  return topo;
}

TwoLevelTopology build_two_level(std::span<const Index> group_sizes,
                                 std::span<const Index> local_periods, Index global_period) {
  if (group_sizes.empty()) throw InvalidArgument("group_sizes must be non-empty");
  if (group_sizes.size() != local_periods.size())
    throw InvalidArgument("group_sizes and local_periods differ in length");
  for (Index i = 0; i < group_sizes.size(); ++i)
    if (group_sizes[i] == 0) throw EmptyGroupError("group " + std::to_string(i) + " is empty");
  return two_level_from_grouping(Grouping::contiguous(group_sizes), local_periods, global_period);
}

// --- multi-level ------------------------------------------------------------

MultiLevelTopology build_multi_level(std::span<const Index> branching,
                                     std::span<const Index> periods) {
  if (branching.size() != periods.size())
    throw InvalidArgument("branching and periods differ in length");
  if (branching.size() < 2) throw SizeError("multi-level trees need M >= 2 levels");
  MultiLevelTopology topo;
  for (Index l = 0; l < branching.size(); ++l) {
    if (branching[l] == 0) throw EmptyGroupError("N_" + std::to_string(l + 1) + " must be >= 1");
    if (periods[l] == 0) throw InvalidArgument("periods must be >= 1");
    if (l > 0) {
      if (periods[l - 1] <= periods[l])
        throw PeriodOrderError("periods must be strictly decreasing: P_" + std::to_string(l) +
                               " = " + std::to_string(periods[l - 1]) + ", P_" +
                               std::to_string(l + 1) + " = " + std::to_string(periods[l]));
      if (periods[l - 1] % periods[l] != 0)
        throw DivisibilityError("P_" + std::to_string(l) + " must be a multiple of P_" +
                                std::to_string(l + 1));
    }
  }
  topo.branching_.assign(branching.begin(), branching.end());
  topo.periods_.assign(periods.begin(), periods.end());
  topo.worker_count_ = std::accumulate(branching.begin(), branching.end(), Index{1},
                                       std::multiplies<>());
  return topo;
}

Index MultiLevelTopology::servers_at_level(Index level) const {
  if (level > level_count()) throw BadLevel("level out of range");
  Index out = 1;
  for (Index l = 0; l < level; ++l) out *= branching_[l];
  return out;
}

Index MultiLevelTopology::subtree_size(Index level) const {
  if (level > level_count()) throw BadLevel("level out of range");
  Index out = 1;
  for (Index l = level; l < branching_.size(); ++l) out *= branching_[l];
  return out;
}

std::vector<Index> MultiLevelTopology::path_of(Index worker) const {
  std::vector<Index> path(level_count());
  for (Index l = level_count(); l-- > 0;) {
    path[l] = worker % branching_[l];
    worker /= branching_[l];
  }
  return path;
}

Index MultiLevelTopology::worker_of(std::span<const Index> path) const {
  Index w = 0;
  for (Index l = 0; l < level_count(); ++l) w = w * branching_[l] + path[l];
  return w;
}

std::optional<Index> MultiLevelTopology::schedule_level(Index t) const {
  for (Index i = 0; i < periods_.size(); ++i)
    if ((t + 1) % periods_[i] == 0) return i + 1;
  return std::nullopt;
}

std::vector<std::vector<Index>> MultiLevelTopology::aggregation_blocks(Index level) const {
  if (level < 1 || level > level_count()) throw BadLevel("aggregation level out of range");
  const Index size = subtree_size(level - 1);
  std::vector<std::vector<Index>> blocks(worker_count_ / size);
  for (Index b = 0; b < blocks.size(); ++b) {
    blocks[b].resize(size);
    std::iota(blocks[b].begin(), blocks[b].end(), b * size);
  }
  return blocks;
}

TwoLevelTopology as_two_level(const MultiLevelTopology& topology) {
  if (topology.level_count() != 2) throw SizeError("as_two_level needs an M = 2 tree");
  std::vector<Index> sizes(topology.branching_at(1), topology.branching_at(2));
  std::vector<Index> periods(sizes.size(), topology.period_at(2));
  return build_two_level(sizes, periods, topology.period_at(1));
}

// --- matrices ---------------------------------------------------------------

Eigen::MatrixXd aggregation_matrix(const TwoLevelTopology& topology) {
  const Index n = topology.worker_count();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (const auto& members : topology.groups()) {
    const double v = 1.0 / static_cast<double>(members.size());
    for (Index r : members)
      for (Index c : members) a(r, c) = v;
  }
  return a;
}

Index count_unit_eigenvalues(const Eigen::MatrixXd& matrix) {
  if (matrix.rows() != matrix.cols())
    throw NonSquareError("matrix is " + std::to_string(matrix.rows()) + "x" +
                         std::to_string(matrix.cols()));
  const auto n = matrix.rows();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(matrix - Eigen::MatrixXd::Identity(n, n));
  lu.setThreshold(1e-10);
  return static_cast<Index>(n - lu.rank());
}

// --- enumeration ------------------------------------------------------------

std::uint64_t equal_grouping_count(Index n, Index N) {
  if (N == 0 || n % N != 0) throw SizeError("N = " + std::to_string(N) + " does not divide n = " +
                                            std::to_string(n));
  // Product over groups of C(remaining - 1, K - 1): the first unplaced worker
  // opens the next group and picks K-1 companions.
  const Index k = n / N;
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  unsigned __int128 total = 1;
  Index remaining = n;
  for (Index g = 0; g < N; ++g) {
    unsigned __int128 c = 1;
    for (Index i = 1; i < k; ++i) c = c * (remaining - i) / i;
    total *= c;
    if (total > kMax) return kMax;
    remaining -= k;
  }
  return static_cast<std::uint64_t>(total);
}

EqualGroupingEnumerator::EqualGroupingEnumerator(Index n, Index N)
    : n_(n), groups_(N), group_size_(0), count_(equal_grouping_count(n, N)) {
  if (n == 0) throw SizeError("n must be >= 1");
  if (count_ > kEnumerationGuard)
    throw ExplosionError(std::to_string(count_) + " partitions exceed the enumeration guard of " +
                         std::to_string(kEnumerationGuard) + "; use Monte Carlo");
  group_size_ = n / N;
  labels_.assign(n, 0);
  counts_.assign(N, 0);
}

void EqualGroupingEnumerator::fill_from(Index pos) {
  Index opened = 0;
  for (Index i = 0; i < pos; ++i) opened = std::max(opened, labels_[i] + 1);
  for (Index i = pos; i < n_; ++i) {
    Index g = 0;
    while (counts_[g] == group_size_) ++g;  // smallest non-full label; never exceeds `opened`
    labels_[i] = g;
    ++counts_[g];
    opened = std::max(opened, g + 1);
  }
}

bool EqualGroupingEnumerator::advance() {
  for (Index pos = n_; pos-- > 1;) {
    --counts_[labels_[pos]];
    Index opened = 0;
    for (Index i = 0; i < pos; ++i) opened = std::max(opened, labels_[i] + 1);
    const Index hi = std::min(groups_ - 1, opened);
    for (Index g = labels_[pos] + 1; g <= hi; ++g) {
      if (counts_[g] < group_size_) {
        labels_[pos] = g;
        ++counts_[g];
        fill_from(pos + 1);
        return true;
      }
    }
  }
  return false;
}

std::optional<Grouping> EqualGroupingEnumerator::next() {
  if (done_) return std::nullopt;
  if (!started_) {
    started_ = true;
    fill_from(0);
  } else if (!advance()) {
    done_ = true;
    return std::nullopt;
  }
  Grouping g;
  g.assignment = labels_;
  g.origin = GroupingOrigin::fixed;
  return g;
}

std::vector<Grouping> enumerate_equal_groupings(Index n, Index N) {
  EqualGroupingEnumerator e(n, N);
  std::vector<Grouping> out;
  out.reserve(e.size());
  while (auto g = e.next()) out.push_back(std::move(*g));
  return out;
}

}  // namespace hsgd
