#include <gtest/gtest.h>

#include <cmath>

#include "hsgd/error.hpp"
#include "hsgd/objectives.hpp"
#include "support/gen.hpp"

using namespace hsgd;

namespace {

Vec grad(const Objective& o, Index j, const Vec& w) {
  Vec g(o.dimension());
  o.worker_gradient(j, w, g);
  return g;
}

double norm(const Vec& a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST(Quadratic, QF1ClosedForms) {
  const auto qf1 = make_quadratic_fixture("QF1");
  EXPECT_EQ(qf1.worker_count(), 4u);
  EXPECT_EQ(grad(qf1, 3, {0.0})[0], -2.0);
  EXPECT_EQ(qf1.gradient(Vec{0.3})[0], 0.3 - 1.0);
  EXPECT_DOUBLE_EQ(qf1.lipschitz(), 1.0);
  const MinimumReport m = f_star(qf1);
  EXPECT_TRUE(m.exact);
  EXPECT_DOUBLE_EQ(m.value, 0.5);
  EXPECT_DOUBLE_EQ(m.minimizer[0], 1.0);
}

TEST(Quadratic, ZeroAnchorsAndIdentical) {
  EXPECT_EQ(f_star(make_quadratic_fixture("QF-zero")).value, 0.0);
  const auto same = make_quadratic_fixture("QF-identical");
  const Vec w{4.0};
  for (Index j = 0; j < same.worker_count(); ++j) EXPECT_EQ(grad(same, j, w), same.gradient(w));
}

TEST(Quadratic, GradientVanishesAtAnchor) {
  const auto q = make_quadratic_fixture("QF12");
  for (Index j = 0; j < q.worker_count(); ++j) {
    const Vec g = grad(q, j, q.anchor(j));
    for (double x : g) EXPECT_EQ(x, 0.0);
  }
}

TEST(Quadratic, LipschitzOnRandomPairs) {
  gen::Gen g(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto q = g.quadratic(g.index(1, 8), g.index(1, 5), false);
    const Vec a = g.vec(q->dimension()), b = g.vec(q->dimension());
    const Index j = g.index(0, q->worker_count() - 1);
    Vec dg = grad(*q, j, a), dw = a;
    const Vec gb = grad(*q, j, b);
    for (Index k = 0; k < dg.size(); ++k) {
      dg[k] -= gb[k];
      dw[k] -= b[k];
    }
    EXPECT_NEAR(norm(dg), q->lipschitz() * norm(dw), 1e-12 * (1.0 + norm(dw)));
  }
}

TEST(Quadratic, HeterogeneousCurvatureMinimum) {
  const auto q = make_quadratic_fixture("QF10-hetero");
  EXPECT_TRUE(q.heterogeneous_curvature());
  EXPECT_FALSE(q.divergence_constant_in_w());
  const MinimumReport m = f_star(q);
  EXPECT_LE(norm(q.gradient(m.minimizer)), 1e-12);
  EXPECT_LE(q.lipschitz(), 1.0);
}

TEST(Fixtures, Registry) {
  for (const auto& name : fixture_names()) {
    const auto o = make_fixture(name);
    EXPECT_EQ(o->name(), name);
    EXPECT_GT(o->lipschitz(), 0.0);
    EXPECT_EQ(o->similarity_keys().size(), o->worker_count());
  }
  EXPECT_THROW(make_fixture("nope"), UnknownFixture);
}

TEST(Logistic, GradientMatchesFiniteDifferences) {
  const auto lg = make_fixture("LG1");
  gen::Gen g(17);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const Index j = g.index(0, lg->worker_count() - 1);
    const Vec w = g.vec(lg->dimension(), 0.5);
    const Vec an = grad(*lg, j, w);
    for (Index k = 0; k < w.size(); ++k) {
      Vec up = w, dn = w;
      up[k] += h;
      dn[k] -= h;
      const double fd = (lg->worker_loss(j, up) - lg->worker_loss(j, dn)) / (2.0 * h);
      EXPECT_NEAR(an[k], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Logistic, ZeroWeightsUnregularized) {
  LogisticSpec s;
  s.lambda = 0.0;
  const auto lg = make_logistic(s);
  const Vec w(lg->dimension(), 0.0);
  for (Index j = 0; j < lg->worker_count(); ++j) {
    const auto& data = lg->dataset(j);
    Vec expect(lg->dimension(), 0.0);
    for (Index i = 0; i < data.labels.size(); ++i)
      for (Index k = 0; k < expect.size(); ++k) expect[k] -= (data.labels[i] - 0.5) * data.features[i][k];
    for (double& x : expect) x /= static_cast<double>(data.labels.size());
    const Vec g = grad(*lg, j, w);
    for (Index k = 0; k < g.size(); ++k) EXPECT_NEAR(g[k], expect[k], 1e-12);
  }
}

TEST(Logistic, MinimumFromGradientDescent) {
  const auto lg = make_fixture("LG1");
  const MinimumReport m = f_star(*lg);
  EXPECT_FALSE(m.exact);
  EXPECT_LE(m.grad_norm, 1e-10);
  EXPECT_LE(m.value, lg->loss(Vec(lg->dimension(), 0.0)));
}

TEST(Logistic, DeterministicData) {
  LogisticSpec s;
  const auto a = make_logistic(s), b = make_logistic(s);
  EXPECT_EQ(a->dataset(2).features, b->dataset(2).features);
  s.seed += 1;
  EXPECT_NE(make_logistic(s)->dataset(2).features, a->dataset(2).features);
}

TEST(Oracle, ExactEqualsFullGradient) {
  const auto qf1 = make_fixture("QF1");
  GradientOracle o(qf1, NoiseModel::exact(), 1);
  EXPECT_EQ(o.sample(2, Vec{0.7}, 5), grad(*qf1, 2, Vec{0.7}));
  EXPECT_EQ(o.variance(), 0.0);
}

TEST(Oracle, GaussianMeanAndVariance) {
  const auto qf1 = make_fixture("QF1");
  GradientOracle o(qf1, NoiseModel::gaussian(0.04), 7);
  const Vec w{0.0};
  const double full = grad(*qf1, 3, w)[0];
  const Index draws = 100000;
  double sum = 0.0, sq = 0.0;
  for (Index t = 0; t < draws; ++t) {
    const double e = o.sample(3, w, t)[0] - full;
    sum += e;
    sq += e * e;
  }
  EXPECT_LE(std::abs(sum / draws), 3.0 * 0.2 / std::sqrt(static_cast<double>(draws)));
  EXPECT_NEAR(sq / draws, 0.04, 0.05 * 0.04);
  EXPECT_NEAR(estimate_gradient_variance(o, 3, w, draws), 0.04, 0.05 * 0.04);
}

TEST(Oracle, GaussianVarianceSplitsAcrossCoordinates) {
  const auto q = make_fixture("QF10-noniid");
  GradientOracle o(q, NoiseModel::gaussian(0.25), 3);
  EXPECT_NEAR(estimate_gradient_variance(o, 0, Vec(10, 0.0), 20000), 0.25, 0.02);
}

TEST(Oracle, StreamsDependOnlyOnSeedWorkerIteration) {
  const auto q = make_fixture("QF12");
  GradientOracle a(q, NoiseModel::gaussian(1.0), 42), b(q, NoiseModel::gaussian(1.0), 42);
  const Vec w(2, 0.1);
  const Vec late = a.sample(4, w, 100);
  (void)a.sample(1, w, 3);
  EXPECT_EQ(b.sample(4, w, 100), late);
  EXPECT_EQ(a.sample(4, w, 100), late);
  EXPECT_NE(a.sample(4, w, 101), late);
  EXPECT_NE(a.sample(5, w, 100), late);
}

TEST(Oracle, MinibatchUnbiased) {
  const auto lg = make_fixture("LG1");
  GradientOracle o(lg, NoiseModel::minibatch(5), 9);
  const Vec w(lg->dimension(), 0.2);
  const Vec full = grad(*lg, 1, w);
  Vec mean(w.size(), 0.0);
  const Index draws = 40000;
  for (Index t = 0; t < draws; ++t) {
    const Vec s = o.sample(1, w, t);
    for (Index k = 0; k < w.size(); ++k) mean[k] += s[k] / draws;
  }
  for (Index k = 0; k < w.size(); ++k) EXPECT_NEAR(mean[k], full[k], 0.01);
  EXPECT_TRUE(std::isnan(o.variance()));
  EXPECT_THROW(GradientOracle(make_fixture("QF1"), NoiseModel::minibatch(2), 1).sample(0, Vec{0.0}, 0),
               Unsupported);
}
