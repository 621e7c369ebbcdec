#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <omp.h>

#include "hsgd/engine.hpp"
#include "hsgd/error.hpp"
#include "hsgd/reference.hpp"
#include "support/gen.hpp"

using namespace hsgd;

namespace {

std::vector<Index> v(std::initializer_list<Index> xs) { return xs; }

RunConfig base(std::shared_ptr<const Objective> obj, Topology topo, double gamma, Index T) {
  RunConfig c;
  c.topology = std::move(topo);
  c.objective = std::move(obj);
  c.gamma = gamma;
  c.horizon = T;
  return c;
}

bool bits_equal(const RunTrace& a, const RunTrace& b) {
  if (a.records.size() != b.records.size()) return false;
  auto same = [](double x, double y) { return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y); };
  for (Index t = 0; t < a.records.size(); ++t) {
    const auto& x = a.records[t];
    const auto& y = b.records[t];
    if (!same(x.loss, y.loss) || !same(x.grad_norm_sq, y.grad_norm_sq) || !same(x.upward_mse, y.upward_mse) ||
        !same(x.downward_mse, y.downward_mse) || x.event.level != y.event.level)
      return false;
  }
  for (Index j = 0; j < a.final_params.size(); ++j)
    for (Index k = 0; k < a.final_params[j].size(); ++k)
      if (!same(a.final_params[j][k], b.final_params[j][k])) return false;
  return true;
}

// Invariants asserted on every run in this file.
void check_invariants(const RunTrace& trace, const Topology& topo) {
  EXPECT_LE(trace.max_mean_drift, 1e-12);
  const auto mismatch = check_schedule_fidelity(trace, topo);
  EXPECT_FALSE(mismatch.has_value()) << *mismatch;
}

}  // namespace

TEST(Engine, ScalarContraction) {
  auto obj = std::make_shared<QuadraticObjective>("one", std::vector<Vec>{{0.0}});
  RunConfig c = base(obj, build_two_level(v({1}), v({1}), 1), 0.5, 3);
  c.initial = {1.0};
  c.snapshot_stride = 1;
  c.lr_policy = LrPolicy::warn;
  const RunTrace tr = run(c);
  ASSERT_EQ(tr.snapshots.size(), 3u);
  EXPECT_EQ(tr.snapshots[0].second[0], 1.0);
  EXPECT_EQ(tr.snapshots[1].second[0], 0.5);
  EXPECT_EQ(tr.snapshots[2].second[0], 0.25);
  EXPECT_EQ(tr.final_average[0], 0.125);
  EXPECT_EQ(tr.records[1].loss, 0.125);
  EXPECT_FALSE(tr.warnings.empty());
  check_invariants(tr, c.topology);
}

TEST(Engine, EnforcesLearningRate) {
  const auto obj = make_fixture("QF1");
  RunConfig c = base(obj, build_two_level(v({2, 2}), v({2, 2}), 4), 0.1, 10);
  try {
    run(c);
    FAIL() << "expected LrTooLarge";
  } catch (const LrTooLarge& e) {
    EXPECT_NE(std::string(e.what()).find("γ ≤ 1/(2√6·G·L)"), std::string::npos);
  }
  c.topology = build_multi_level(v({2, 2}), v({4, 2}));
  try {
    run(c);
    FAIL() << "expected LrTooLarge";
  } catch (const LrTooLarge& e) {
    EXPECT_NE(std::string(e.what()).find("P_1"), std::string::npos);
  }
}

TEST(Engine, ReducesToReferenceLocalSgd) {
  const auto obj = make_fixture("QF10-hetero");
  gen::Gen g(1);
  for (int trial = 0; trial < 6; ++trial) {
    const Index P = g.index(1, 12);
    RunConfig c = base(obj, build_two_level(v({10}), std::vector<Index>{P}, P), 0.01, 120);
    c.noise = NoiseModel::gaussian(g.real(0.0, 1.0));
    c.seed = g.index(0, 1000);
    c.initial = g.vec(10);
    c.lr_policy = LrPolicy::warn;
    const RunTrace tr = run(c);
    const auto ref = reference::local_sgd(obj, c.noise, c.seed, P, c.gamma, c.horizon, c.initial);
    for (Index t = 0; t < c.horizon; ++t) {
      ASSERT_EQ(std::bit_cast<std::uint64_t>(tr.records[t].loss), std::bit_cast<std::uint64_t>(ref.loss[t]));
      ASSERT_EQ(std::bit_cast<std::uint64_t>(tr.records[t].grad_norm_sq),
                std::bit_cast<std::uint64_t>(ref.grad_norm_sq[t]));
    }
    EXPECT_EQ(tr.final_params, ref.final_params);
    check_invariants(tr, c.topology);
  }
}

TEST(Engine, MultiLevelAtTwoLevelsMatchesTwoLevelEngine) {
  const auto obj = make_fixture("QF10-hetero");
  RunConfig a = base(obj, build_multi_level(v({2, 5}), v({50, 5})), 1e-3, 400);
  a.noise = NoiseModel::gaussian(0.5);
  a.seed = 8;
  a.initial = Vec(10, 2.0);
  RunConfig b = a;
  b.topology = build_two_level(v({5, 5}), v({5, 5}), 50);
  const RunTrace ta = run(a), tb = run(b);
  EXPECT_TRUE(bits_equal(ta, tb));
  check_invariants(ta, a.topology);
  check_invariants(tb, b.topology);
}

TEST(Engine, GlobalAggregationEqualizes) {
  const auto obj = make_fixture("QF12");
  RunConfig c = base(obj, build_multi_level(v({2, 2, 3}), v({12, 6, 3})), 1e-3, 12);
  c.initial = {1.0, -1.0};
  const RunTrace tr = run(c);
  for (const auto& w : tr.final_params) EXPECT_EQ(w, tr.final_params.front());
  EXPECT_EQ(tr.records[11].event.level, 1u);
  EXPECT_EQ(tr.records[5].event.level, 2u);
  EXPECT_EQ(tr.records[2].event.level, 3u);
  check_invariants(tr, c.topology);
}

TEST(Engine, SymmetricGroupsStayTogether) {
  const auto obj = make_fixture("QF1");
  RunConfig c = base(obj, build_two_level(v({2, 2}), v({2, 2}), 4), 0.05, 7);
  c.initial = {0.3};
  const RunTrace tr = run(c);
  EXPECT_EQ(tr.final_params[0], tr.final_params[1]);
  EXPECT_EQ(tr.final_params[2], tr.final_params[3]);
  for (const auto& r : tr.records) EXPECT_EQ(r.downward_mse, 0.0);
  check_invariants(tr, c.topology);
}

TEST(Engine, ParameterMses) {
  ParamMatrix p(2, 1, Vec{0.0});
  p.row(1)[0] = 2.0;
  const auto m = measure_parameter_mses(p, {{0, 1}});
  EXPECT_EQ(m.downward, 1.0);
  EXPECT_EQ(m.upward, 0.0);

  const auto obj = make_fixture("QF10-noniid");
  RunConfig c = base(obj, build_two_level(v({5, 5}), v({5, 5}), 20), 0.005, 60);
  c.noise = NoiseModel::gaussian(1.0);
  c.lr_policy = LrPolicy::warn;
  const RunTrace tr = run(c);
  // Record t+1 shows the state right after the aggregation at t.
  for (Index t = 0; t + 1 < tr.records.size(); ++t) {
    const auto& next = tr.records[t + 1];
    if (tr.records[t].event.level == 1) {
      EXPECT_LE(next.upward_mse, 1e-28);
      EXPECT_LE(next.downward_mse, 1e-28);
    } else if (tr.records[t].event.level == 2) {
      EXPECT_LE(next.downward_mse, 1e-28);
      EXPECT_GE(next.upward_mse, 0.0);
    }
  }
  check_invariants(tr, c.topology);
}

TEST(Engine, NoiseFreeConsensusIsGradientDescent) {
  const auto obj = make_fixture("QF10-hetero");
  RunConfig c = base(obj, build_two_level(std::vector<Index>(10, 1), std::vector<Index>(10, 1), 1), 0.1, 50);
  c.initial = Vec(10, 1.5);
  c.snapshot_stride = 1;
  const RunTrace tr = run(c);
  const auto gd = reference::gradient_descent(*obj, 0.1, 50, c.initial);
  for (Index t = 0; t < 50; ++t)
    for (Index k = 0; k < 10; ++k) EXPECT_NEAR(tr.snapshots[t].second[k], gd[t][k], 1e-13);
  check_invariants(tr, c.topology);
}

TEST(Engine, DeterministicAcrossThreadsAndExecution) {
  const auto obj = make_fixture("QF10-hetero");
  RunConfig c = base(obj, build_two_level(v({5, 5}), v({5, 5}), 20), 0.004, 300);
  c.noise = NoiseModel::gaussian(0.25);
  c.seed = 77;
  c.execution = Execution::serial;
  const RunTrace serial = run(c);
  c.execution = Execution::parallel;
  const int before = omp_get_max_threads();
  for (int threads : {1, 2, 4}) {
    omp_set_num_threads(threads);
    EXPECT_TRUE(bits_equal(serial, run(c))) << threads;
  }
  omp_set_num_threads(before);
}

TEST(Engine, RandomTopologiesKeepInvariants) {
  gen::Gen g(31);
  for (int trial = 0; trial < 25; ++trial) {
    const Index n = g.index(2, 12);
    const Index N = g.index(1, n);
    const auto sizes = g.composition(n, N);
    std::vector<Index> local;
    for (Index i = 0; i < N; ++i) local.push_back(g.index(1, 4));
    Index G = 12 * g.index(1, 2);
    const auto obj = g.quadratic(n, g.index(1, 3), g.coin());
    RunConfig c = base(obj, build_two_level(sizes, local, G), 0.01, 100);
    c.noise = NoiseModel::gaussian(0.3);
    c.seed = trial;
    c.lr_policy = LrPolicy::warn;
    check_invariants(run(c), c.topology);
  }
}

TEST(Participation, Sampling) {
  const std::vector<Index> members = {3, 4, 5, 6, 7};
  EXPECT_EQ(sample_participants(members, 1.0, 1, 0, 0), members);
  for (Index round = 0; round < 20; ++round) {
    const auto s = sample_participants(members, 0.2, 5, 1, round);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(sample_participants(members, 0.2, 5, 1, round), s);
  }
  EXPECT_EQ(sample_participants(members, 0.5, 5, 1, 0).size(), 3u);
  EXPECT_THROW(sample_participants(members, 0.0, 5, 1, 0), InvalidArgument);
}

TEST(Participation, FullParticipationMatchesDefault) {
  const auto obj = make_fixture("QF10-noniid");
  RunConfig a = base(obj, build_two_level(v({5, 5}), v({5, 5}), 20), 0.004, 200);
  a.noise = NoiseModel::gaussian(0.25);
  RunConfig b = a;
  b.participation = 1.0;
  EXPECT_TRUE(bits_equal(run(a), run(b)));
  RunConfig m = a;
  m.topology = build_multi_level(v({2, 5}), v({20, 5}));
  RunConfig mb = m;
  mb.participation = 1.0;
  EXPECT_TRUE(bits_equal(run(m), run(mb)));
}

TEST(Participation, PartialRunsAndConverges) {
  const auto obj = make_fixture("QF10-noniid");
  RunConfig c = base(obj, build_two_level(v({5, 5}), v({5, 5}), 20), 0.004, 3000);
  c.participation = 0.2;
  c.initial = Vec(10, 3.0);
  const RunTrace frozen = run(c);
  c.nonparticipants = NonParticipantMode::step;
  const RunTrace stepping = run(c);
  const double f0 = obj->loss(c.initial);
  EXPECT_LT(frozen.final_loss, f0);
  EXPECT_LT(stepping.final_loss, f0);
  EXPECT_FALSE(bits_equal(frozen, stepping));
  EXPECT_FALSE(check_schedule_fidelity(frozen, c.topology).has_value());
}

TEST(Engine, NonFiniteAborts) {
  auto obj = std::make_shared<QuadraticObjective>("steep", std::vector<Vec>{{0.0}}, 1.0);
  RunConfig c = base(obj, build_two_level(v({1}), v({1}), 1), 1e200, 5);
  c.initial = {1e200};
  c.lr_policy = LrPolicy::warn;
  EXPECT_THROW(run(c), NonFiniteParameter);
}

TEST(Engine, ConfigValidation) {
  const auto obj = make_fixture("QF1");
  RunConfig c = base(obj, build_two_level(v({3}), v({1}), 1), 0.01, 10);
  EXPECT_THROW(run(c), InvalidArgument);
  c.topology = build_two_level(v({4}), v({1}), 1);
  c.horizon = 0;
  EXPECT_THROW(run(c), InvalidArgument);
}

TEST(Engine, MetricStride) {
  const auto obj = make_fixture("QF1");
  RunConfig c = base(obj, build_two_level(v({2, 2}), v({1, 1}), 2), 0.01, 10);
  c.metric_stride = 3;
  const RunTrace tr = run(c);
  EXPECT_FALSE(std::isnan(tr.records[3].loss));
  EXPECT_TRUE(std::isnan(tr.records[4].loss));
  EXPECT_TRUE(std::isfinite(mean_grad_norm_sq(tr)));
}
