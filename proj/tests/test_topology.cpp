#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <set>

#include "hsgd/error.hpp"
#include "hsgd/topology.hpp"
#include "support/gen.hpp"

using namespace hsgd;

namespace {

std::vector<Index> v(std::initializer_list<Index> xs) { return xs; }

// Number of unordered equal partitions by the factorial formula.
double partition_count(Index n, Index N) {
  double r = std::tgamma(static_cast<double>(n) + 1.0);
  r /= std::pow(std::tgamma(static_cast<double>(n / N) + 1.0), static_cast<double>(N));
  r /= std::tgamma(static_cast<double>(N) + 1.0);
  return std::round(r);
}

}  // namespace

TEST(TwoLevel, BuildsContiguousGroups) {
  const auto t = build_two_level(v({5, 5}), v({5, 5}), 50);
  EXPECT_EQ(t.worker_count(), 10u);
  EXPECT_EQ(t.group_count(), 2u);
  EXPECT_EQ(t.group(1), v({5, 6, 7, 8, 9}));
  EXPECT_EQ(t.group_of(4), 0u);
  EXPECT_TRUE(t.uniform_local_period());
}

TEST(TwoLevel, SingleWorker) {
  const auto t = build_two_level(v({1}), v({1}), 1);
  EXPECT_EQ(t.worker_count(), 1u);
  EXPECT_TRUE(t.schedule(0).global);
}

TEST(TwoLevel, CommonMultipleOfMixedPeriods) {
  const auto t = build_two_level(v({2, 2}), v({2, 3}), 6);
  EXPECT_FALSE(t.uniform_local_period());
  EXPECT_EQ(t.schedule(1).local_groups, v({0}));
  EXPECT_EQ(t.schedule(2).local_groups, v({1}));
  EXPECT_TRUE(t.schedule(5).global);
  EXPECT_TRUE(t.schedule(5).local_groups.empty());
  EXPECT_FALSE(t.schedule(0).any());
}

TEST(TwoLevel, Rejections) {
  EXPECT_THROW(build_two_level(v({2, 2}), v({4, 5}), 10), DivisibilityError);
  EXPECT_THROW(build_two_level(v({2, 0}), v({1, 1}), 2), EmptyGroupError);
  EXPECT_THROW(build_two_level(v({2, 2}), v({1}), 2), InvalidArgument);
}

TEST(TwoLevel, FromRandomGrouping) {
  const Grouping g = uniform_random_grouping(12, 3, 99);
  const auto t = two_level_from_grouping(g, v({2, 2, 2}), 4);
  std::set<Index> seen;
  for (const auto& grp : t.groups()) {
    EXPECT_EQ(grp.size(), 4u);
    seen.insert(grp.begin(), grp.end());
  }
  EXPECT_EQ(seen.size(), 12u);
  EXPECT_EQ(uniform_random_grouping(12, 3, 99).assignment, g.assignment);
  EXPECT_NE(uniform_random_grouping(12, 3, 100).assignment, g.assignment);
}

TEST(Grouping, KeyGroupingSeparatesOrMixes) {
  const std::vector<double> keys = {0, 0, 1, 1, 2, 2, 3, 3};
  const Grouping non_iid = key_grouping(keys, 2, GroupingOrigin::group_non_iid);
  EXPECT_EQ(non_iid.groups()[0], v({0, 1, 2, 3}));
  const Grouping iid = key_grouping(keys, 2, GroupingOrigin::group_iid);
  for (const auto& grp : iid.groups()) {
    double sum = 0.0;
    for (Index j : grp) sum += keys[j];
    EXPECT_DOUBLE_EQ(sum, 6.0);
  }
}

TEST(MultiLevel, MatchesTwoLevelAtTwoLevels) {
  const auto ml = build_multi_level(v({2, 5}), v({50, 5}));
  EXPECT_EQ(ml.worker_count(), 10u);
  const auto two = as_two_level(ml);
  EXPECT_EQ(two.group_count(), 2u);
  EXPECT_EQ(two.global_period(), 50u);
  EXPECT_EQ(two.local_period(0), 5u);
  for (Index t = 0; t < 200; ++t) {
    const auto level = ml.schedule_level(t);
    const auto ev = two.schedule(t);
    EXPECT_EQ(level == Index{1}, ev.global);
    EXPECT_EQ(level == Index{2}, !ev.local_groups.empty());
  }
}

TEST(MultiLevel, ThreeLevelTree) {
  const auto ml = build_multi_level(v({2, 2, 3}), v({50, 10, 5}));
  EXPECT_EQ(ml.worker_count(), 12u);
  EXPECT_EQ(ml.servers_at_level(2), 4u);
  EXPECT_EQ(ml.subtree_size(1), 6u);
  EXPECT_EQ(ml.aggregation_blocks(3).size(), 4u);
  EXPECT_EQ(ml.aggregation_blocks(2)[1], v({6, 7, 8, 9, 10, 11}));
  for (Index w = 0; w < 12; ++w) EXPECT_EQ(ml.worker_of(ml.path_of(w)), w);
}

TEST(MultiLevel, Schedule) {
  const auto ml = build_multi_level(v({2, 2, 3}), v({50, 10, 5}));
  EXPECT_EQ(ml.schedule_level(49), Index{1});
  EXPECT_EQ(ml.schedule_level(9), Index{2});
  EXPECT_EQ(ml.schedule_level(4), Index{3});
  EXPECT_FALSE(ml.schedule_level(2).has_value());
}

TEST(MultiLevel, Rejections) {
  EXPECT_THROW(build_multi_level(v({2, 2}), v({4, 6})), PeriodOrderError);
  EXPECT_THROW(build_multi_level(v({2, 2}), v({4, 4})), PeriodOrderError);
  EXPECT_THROW(build_multi_level(v({2, 2}), v({10, 4})), DivisibilityError);
  EXPECT_THROW(build_multi_level(v({2}), v({4})), SizeError);
}

TEST(MultiLevel, SubsumedLevelsDivide) {
  gen::Gen g(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Index m = g.index(2, 4);
    std::vector<Index> br, pe(m);
    for (Index l = 0; l < m; ++l) br.push_back(g.index(1, 3));
    pe[m - 1] = g.index(1, 3);
    for (Index l = m - 1; l-- > 0;) pe[l] = pe[l + 1] * g.index(2, 3);
    const auto ml = build_multi_level(br, pe);
    for (Index t = 0; t < 3 * pe[0]; ++t) {
      const auto lvl = ml.schedule_level(t);
      if (!lvl) continue;
      for (Index j = *lvl; j <= m; ++j) EXPECT_EQ((t + 1) % pe[j - 1], 0u);
      for (Index j = 1; j < *lvl; ++j) EXPECT_NE((t + 1) % pe[j - 1], 0u);
    }
  }
}

TEST(AggregationMatrix, BlocksAndStochastic) {
  const auto m = aggregation_matrix(build_two_level(v({2, 2}), v({1, 1}), 1));
  Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(4, 4);
  expect.block(0, 0, 2, 2).setConstant(0.5);
  expect.block(2, 2, 2, 2).setConstant(0.5);
  EXPECT_EQ(m, expect);
  const auto one = aggregation_matrix(build_two_level(v({1}), v({1}), 1));
  EXPECT_EQ(one, Eigen::MatrixXd::Identity(1, 1));

  gen::Gen g(9);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = g.index(1, 12);
    const Index N = g.index(1, n);
    const auto sizes = g.composition(n, N);
    const auto a = aggregation_matrix(build_two_level(sizes, std::vector<Index>(N, 1), 1));
    EXPECT_LE((a.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-15);
    EXPECT_LE((a.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-15);
  }
}

TEST(AggregationMatrix, UnitEigenvalues) {
  EXPECT_EQ(count_unit_eigenvalues(aggregation_matrix(build_two_level(v({2, 2, 2}), v({1, 1, 1}), 1))), 3u);
  EXPECT_EQ(count_unit_eigenvalues(aggregation_matrix(build_two_level(v({3, 3}), v({1, 1}), 1))), 2u);
  EXPECT_EQ(count_unit_eigenvalues(Eigen::MatrixXd::Identity(5, 5)), 5u);
  EXPECT_EQ(count_unit_eigenvalues(aggregation_matrix(build_two_level(v({4}), v({1}), 1))), 1u);
  EXPECT_THROW(count_unit_eigenvalues(Eigen::MatrixXd::Zero(2, 3)), NonSquareError);
}

TEST(AggregationMatrix, AgreesWithEigenSolver) {
  gen::Gen g(21);
  for (int trial = 0; trial < 40; ++trial) {
    const Index n = g.index(1, 12);
    const Index N = g.index(1, n);
    const auto a = aggregation_matrix(build_two_level(g.composition(n, N), std::vector<Index>(N, 1), 1));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
    Index ones = 0;
    for (Index k = 0; k < n; ++k) ones += std::abs(solver.eigenvalues()(k) - 1.0) < 1e-9;
    EXPECT_EQ(count_unit_eigenvalues(a), ones);
    EXPECT_EQ(ones, N);
  }
}

TEST(Enumeration, Counts) {
  EXPECT_EQ(enumerate_equal_groupings(4, 2).size(), 3u);
  EXPECT_EQ(enumerate_equal_groupings(2, 2).size(), 1u);
  EXPECT_EQ(enumerate_equal_groupings(6, 3).size(), 15u);
  for (Index n = 1; n <= 10; ++n)
    for (Index N = 1; N <= n; ++N) {
      if (n % N) continue;
      EXPECT_EQ(static_cast<double>(equal_grouping_count(n, N)), partition_count(n, N)) << n << "/" << N;
      if (equal_grouping_count(n, N) <= kEnumerationGuard)
        EXPECT_EQ(enumerate_equal_groupings(n, N).size(), equal_grouping_count(n, N));
    }
}

TEST(Enumeration, DistinctAndBalanced) {
  const auto all = enumerate_equal_groupings(6, 2);
  std::set<std::set<std::set<Index>>> seen;
  for (const auto& g : all) {
    std::set<std::set<Index>> parts;
    for (const auto& grp : g.groups()) {
      EXPECT_EQ(grp.size(), 3u);
      parts.insert(std::set<Index>(grp.begin(), grp.end()));
    }
    seen.insert(parts);
  }
  EXPECT_EQ(seen.size(), all.size());
}

TEST(Enumeration, Rejections) {
  EXPECT_THROW(enumerate_equal_groupings(5, 2), SizeError);
  EXPECT_THROW(enumerate_equal_groupings(12, 4), ExplosionError);
}
