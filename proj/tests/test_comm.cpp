#include <gtest/gtest.h>

#include "hsgd/comm.hpp"
#include "hsgd/error.hpp"

using namespace hsgd;

namespace {

std::vector<Index> v(std::initializer_list<Index> xs) { return xs; }

RunTrace trace_for(Topology topo, Index T, std::shared_ptr<const Objective> obj = make_fixture("QF10-noniid")) {
  RunConfig c;
  c.topology = std::move(topo);
  c.objective = std::move(obj);
  c.gamma = 1e-3;
  c.horizon = T;
  c.initial = Vec(c.objective->dimension(), 1.0);
  return run(c);
}

}  // namespace

TEST(Builtin, PublishedLatencies) {
  const auto vgg = builtin_model("vgg11");
  EXPECT_EQ(vgg.local_latency, 27.81);
  EXPECT_EQ(vgg.global_latency, 291.82);
  EXPECT_EQ(vgg.compute_per_iteration, 4.0);
  const auto cnn = builtin_model("cnn-emnist");
  EXPECT_EQ(cnn.local_latency, 0.29);
  EXPECT_EQ(cnn.global_latency, 4.53);
  const auto unit = builtin_model("unit");
  EXPECT_EQ(unit.local_latency, 1.0);
  EXPECT_EQ(unit.global_latency, 10.0);
  EXPECT_EQ(unit.compute_per_iteration, 0.0);
  const auto three = builtin_model("vgg11-3level");
  EXPECT_DOUBLE_EQ(three.latency_for(2), 2.0 * three.latency_for(3));
  EXPECT_TRUE(three.validate().empty());
  EXPECT_THROW(builtin_model("gpt"), UnknownModel);
}

TEST(Account, LocalSgdOnlyGlobalRounds) {
  const auto tr = trace_for(build_two_level(v({10}), v({5}), 5), 50);
  const auto series = account(tr, builtin_model("unit"));
  ASSERT_EQ(series.size(), 50u);
  EXPECT_EQ(series.back().comm_ms, 100.0);
}

TEST(Account, HierarchicalRounds) {
  const auto tr = trace_for(build_two_level(v({5, 5}), v({5, 5}), 50), 50);
  const auto series = account(tr, builtin_model("unit"));
  EXPECT_EQ(series.back().comm_ms, 19.0);
  EXPECT_EQ(tr.records.back().cum_local, 9u);
  EXPECT_EQ(tr.records.back().cum_global, 1u);
}

TEST(Account, RoundCounts) {
  for (Index I : {Index{1}, Index{2}, Index{5}}) {
    const Index G = 10, T = 200;
    const auto tr = trace_for(build_two_level(v({5, 5}), v({I, I}), G), T);
    EXPECT_EQ(tr.records.back().cum_global, T / G);
    EXPECT_EQ(tr.records.back().cum_local, T / I - T / G);
  }
}

TEST(Account, ZeroModelAndMonotone) {
  const auto tr = trace_for(build_two_level(v({5, 5}), v({2, 2}), 10), 100);
  CommModel zero;
  for (const auto& p : account(tr, zero)) EXPECT_EQ(p.total(), 0.0);
  const auto series = account(tr, builtin_model("vgg11"));
  for (Index k = 1; k < series.size(); ++k) {
    EXPECT_GE(series[k].comm_ms, series[k - 1].comm_ms);
    EXPECT_EQ(series[k].compute_ms, 4.0 * static_cast<double>(k + 1));
  }
  EXPECT_EQ(account(tr, builtin_model("vgg11")).back().comm_ms, series.back().comm_ms);
}

TEST(Account, MultiLevelLatencies) {
  const auto tr = trace_for(build_multi_level(v({2, 2, 3}), v({12, 6, 3})), 12, make_fixture("QF12"));
  const auto m = builtin_model("vgg11-3level");
  // Level-3 rounds at t+1 = 3, 9; level-2 at 6; global at 12.
  EXPECT_NEAR(account(tr, m).back().comm_ms, 2 * 27.81 + 55.62 + 291.82, 1e-9);
}

TEST(Account, JitterSeeded) {
  const auto tr = trace_for(build_two_level(v({5, 5}), v({2, 2}), 10), 100);
  CommModel m = builtin_model("unit");
  m.jitter_sd = 0.3;
  m.jitter_seed = 4;
  const auto a = account(tr, m), b = account(tr, m);
  EXPECT_EQ(a.back().comm_ms, b.back().comm_ms);
  EXPECT_NE(a.back().comm_ms, account(tr, builtin_model("unit")).back().comm_ms);
  m.jitter_seed = 5;
  EXPECT_NE(account(tr, m).back().comm_ms, a.back().comm_ms);
}

TEST(Validate, WarnsAndRejects) {
  CommModel m;
  m.name = "odd";
  m.global_latency = 1.0;
  m.level_latencies = {2.0};
  EXPECT_EQ(m.validate().size(), 1u);
  m.local_latency = -1.0;
  EXPECT_THROW(m.validate(), InvalidArgument);
}

TEST(TimeToTarget, Cases) {
  const auto tr = trace_for(build_two_level(v({10}), v({5}), 5), 400);
  const auto unit = builtin_model("unit");
  const auto first = time_to_target(tr, unit, TargetMetric::loss, tr.records[0].loss + 1.0);
  ASSERT_TRUE(first);
  EXPECT_EQ(first->iteration, 0u);
  EXPECT_EQ(first->time.total(), 0.0);
  EXPECT_FALSE(time_to_target(tr, unit, TargetMetric::loss, -1.0));
  const auto mid = time_to_target(tr, unit, TargetMetric::grad_norm_sq, tr.records[100].grad_norm_sq);
  ASSERT_TRUE(mid);
  EXPECT_LE(mid->iteration, 100u);
  EXPECT_EQ(mid->time.comm_ms, 10.0 * static_cast<double>(mid->iteration / 5));
}
