#include "hsgd/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hsgd/error.hpp"
#include "hsgd/rng.hpp"

namespace hsgd {

namespace {

double dist_sq(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (Index k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

/// Neumaier compensated sum in index order.
double compensated_sum(std::span<const double> values) {
  double sum = 0.0, c = 0.0;
  for (double v : values) {
    const double t = sum + v;
    c += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  return sum + c;
}

double compensated_mean(std::span<const double> values) {
  return compensated_sum(values) / static_cast<double>(values.size());
}

double std_error(std::span<const double> values, double mean) {
  if (values.size() < 2) return 0.0;
  double s = 0.0;
  for (double v : values) s += (v - mean) * (v - mean);
  return std::sqrt(s / static_cast<double>(values.size() - 1) /
                   static_cast<double>(values.size()));
}

template <class F>
void for_each_index(Execution exec, Index count, F&& f) {
  const auto m = static_cast<std::ptrdiff_t>(count);
  if (exec == Execution::serial) {
    for (std::ptrdiff_t i = 0; i < m; ++i) f(static_cast<Index>(i));
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i) f(static_cast<Index>(i));
}

/// Groupings to average over: every equal partition, or seeded uniform draws.
std::vector<Grouping> grouping_sample(Index n, Index N, const SamplingMode& mode) {
  if (mode.kind == SamplingMode::Kind::enumerate) return enumerate_equal_groupings(n, N);
  if (mode.samples == 0) throw InvalidArgument("Monte Carlo needs at least one sample");
  std::vector<Grouping> out(mode.samples);
  for (Index s = 0; s < mode.samples; ++s)
    out[s] = uniform_random_grouping(n, N, CounterRng(mode.seed, streams::kMonteCarlo, s).next_u64());
  return out;
}

LemmaCheck summarize(std::span<const double> values, double closed_form, double eps_w2,
                     bool exhaustive) {
  LemmaCheck c;
  c.empirical = compensated_mean(values);
  c.closed_form = closed_form;
  c.gap = std::abs(c.empirical - closed_form);
  c.eps_w2 = eps_w2;
  c.samples = values.size();
  c.exhaustive = exhaustive;
  if (!exhaustive) c.std_error = std_error(values, c.empirical);
  return c;
}

/// Lehmer-code unranking: the r-th permutation of 0..n-1 in lexicographic order.
std::vector<Index> unrank_permutation(Index n, std::uint64_t r) {
  std::vector<Index> pool(n);
  std::iota(pool.begin(), pool.end(), Index{0});
  std::vector<std::uint64_t> fact(n + 1, 1);
  for (Index i = 1; i <= n; ++i) fact[i] = fact[i - 1] * i;
  std::vector<Index> perm;
  perm.reserve(n);
  for (Index i = n; i > 0; --i) {
    const auto q = r / fact[i - 1];
    r %= fact[i - 1];
    perm.push_back(pool[q]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(q));
  }
  return perm;
}

void check_level(const MultiLevelTopology& topology, Index level) {
  if (level < 1 || level + 1 > topology.level_count())
    throw BadLevel("level " + std::to_string(level) + " outside 1.." +
                   std::to_string(topology.level_count() - 1));
}

LevelDivergences level_from_table(const GradientTable& table, const MultiLevelTopology& topology,
                                  std::span<const Index> assignment, Index level) {
  const Index paths = topology.servers_at_level(level);
  const Index k = topology.subtree_size(level);
  LevelDivergences out;
  out.level = level;
  out.downward.resize(paths);
  std::vector<Index> members(k);
  for (Index p = 0; p < paths; ++p) {
    for (Index s = 0; s < k; ++s) {
      const Index slot = p * k + s;
      members[s] = assignment.empty() ? slot : assignment[slot];
    }
    const Vec gp = table.group_mean(members);
    out.upward += dist_sq(gp, table.mean);
    double down = 0.0;
    for (Index j : members) down += dist_sq(gp, table.worker[j]);
    out.downward[p] = down / static_cast<double>(k);
  }
  out.upward /= static_cast<double>(paths);
  return out;
}

}  // namespace

// --- pointwise ---------------------------------------------------------------

GradientTable::GradientTable(const Objective& objective, std::span<const double> w)
    : n(objective.worker_count()), d(objective.dimension()), worker(n), mean(d, 0.0) {
  for (Index j = 0; j < n; ++j) {
    worker[j] = objective.worker_gradient(j, w);
    for (Index k = 0; k < d; ++k) mean[k] += worker[j][k];
  }
  for (double& m : mean) m /= static_cast<double>(n);
}

Vec GradientTable::group_mean(std::span<const Index> members) const {
  Vec g(d, 0.0);
  for (Index j : members)
    for (Index k = 0; k < d; ++k) g[k] += worker[j][k];
  for (double& v : g) v /= static_cast<double>(members.size());
  return g;
}

double global_divergence(const GradientTable& table) {
  double s = 0.0;
  for (const auto& g : table.worker) s += dist_sq(g, table.mean);
  return s / static_cast<double>(table.n);
}

double global_divergence(const Objective& objective, std::span<const double> w) {
  return global_divergence(GradientTable(objective, w));
}

double upward_divergence(const GradientTable& table, const Grouping& grouping) {
  if (grouping.worker_count() != table.n) throw InvalidArgument("grouping size mismatch");
  double s = 0.0;
  for (const auto& members : grouping.groups())
    s += static_cast<double>(members.size()) / static_cast<double>(table.n) *
         dist_sq(table.group_mean(members), table.mean);
  return s;
}

double upward_divergence(const Objective& objective, const Grouping& grouping,
                         std::span<const double> w) {
  return upward_divergence(GradientTable(objective, w), grouping);
}

std::vector<double> downward_divergences(const GradientTable& table, const Grouping& grouping) {
  if (grouping.worker_count() != table.n) throw InvalidArgument("grouping size mismatch");
  std::vector<double> out;
  for (const auto& members : grouping.groups()) {
    const Vec gi = table.group_mean(members);
    double s = 0.0;
    for (Index j : members) s += dist_sq(table.worker[j], gi);
    out.push_back(s / static_cast<double>(members.size()));
  }
  return out;
}

double downward_divergence(const Objective& objective, const Grouping& grouping, Index group,
                           std::span<const double> w) {
  if (group >= grouping.group_count())
    throw UnknownGroup("group " + std::to_string(group) + " does not exist (N = " +
                       std::to_string(grouping.group_count()) + ")");
  return downward_divergences(GradientTable(objective, w), grouping)[group];
}

PartitionCheck check_partition_identity(const Objective& objective, const Grouping& grouping,
                                        std::span<const double> w) {
  const GradientTable table(objective, w);
  PartitionCheck c;
  c.lhs = global_divergence(table);
  c.upward = upward_divergence(table, grouping);
  c.downward = downward_divergences(table, grouping);
  const auto groups = grouping.groups();
  c.rhs = c.upward;
  for (Index i = 0; i < groups.size(); ++i)
    c.rhs += static_cast<double>(groups[i].size()) / static_cast<double>(table.n) * c.downward[i];
  c.residual = std::abs(c.lhs - c.rhs);
  return c;
}

LevelDivergences level_divergences(const Objective& objective, const MultiLevelTopology& topology,
                                   std::span<const Index> assignment, Index level,
                                   std::span<const double> w) {
  check_level(topology, level);
  if (objective.worker_count() != topology.worker_count())
    throw InvalidArgument("objective and tree differ in worker count");
  if (!assignment.empty() && assignment.size() != topology.worker_count())
    throw InvalidArgument("leaf assignment has the wrong length");
  return level_from_table(GradientTable(objective, w), topology, assignment, level);
}

// --- lemmas ------------------------------------------------------------------

double lemma_upward_fraction(Index n, Index groups) {
  if (n < 2) return 0.0;
  return static_cast<double>(groups - 1) / static_cast<double>(n - 1);
}

double lemma_downward_fraction(Index n, Index groups) {
  return 1.0 - lemma_upward_fraction(n, groups);
}

LemmaCheck verify_lemma1(const Objective& objective, Index N, std::span<const double> w,
                         const SamplingMode& mode) {
  const Index n = objective.worker_count();
  const GradientTable table(objective, w);
  const auto groupings = grouping_sample(n, N, mode);
  std::vector<double> values(groupings.size());
  for_each_index(mode.execution, groupings.size(),
                 [&](Index s) { values[s] = upward_divergence(table, groupings[s]); });
  const double eps = global_divergence(table);
  return summarize(values, lemma_upward_fraction(n, N) * eps, eps,
                   mode.kind == SamplingMode::Kind::enumerate);
}

LemmaCheck verify_lemma2(const Objective& objective, Index N, std::span<const double> w,
                         const SamplingMode& mode) {
  const Index n = objective.worker_count();
  const GradientTable table(objective, w);
  const auto groupings = grouping_sample(n, N, mode);
  std::vector<double> values(groupings.size());
  for_each_index(mode.execution, groupings.size(), [&](Index s) {
    const auto down = downward_divergences(table, groupings[s]);
    const auto groups = groupings[s].groups();
    double v = 0.0;
    for (Index i = 0; i < groups.size(); ++i)
      v += static_cast<double>(groups[i].size()) / static_cast<double>(n) * down[i];
    values[s] = v;
  });
  const double eps = global_divergence(table);
  return summarize(values, lemma_downward_fraction(n, N) * eps, eps,
                   mode.kind == SamplingMode::Kind::enumerate);
}

Lemma3Check verify_lemma3(const Objective& objective, const MultiLevelTopology& topology,
                          Index level, std::span<const double> w, const SamplingMode& mode) {
  check_level(topology, level);
  const Index n = topology.worker_count();
  if (objective.worker_count() != n)
    throw InvalidArgument("objective and tree differ in worker count");
  const bool exhaustive = mode.kind == SamplingMode::Kind::enumerate;
  if (exhaustive && n > 8)
    throw ExplosionError("exhaustive leaf enumeration is limited to n <= 8; use Monte Carlo");
  if (!exhaustive && mode.samples == 0) throw InvalidArgument("Monte Carlo needs samples");

  std::uint64_t count = mode.samples;
  if (exhaustive) {
    count = 1;
    for (Index i = 2; i <= n; ++i) count *= i;
  }
  const Index paths = topology.servers_at_level(level);
  const GradientTable table(objective, w);
  std::vector<double> up(count);
  std::vector<std::vector<double>> down(paths, std::vector<double>(count));
  std::vector<double> down_avg(count);
  for_each_index(mode.execution, count, [&](Index s) {
    std::vector<Index> perm;
    if (exhaustive) {
      perm = unrank_permutation(n, s);
    } else {
      perm.resize(n);
      std::iota(perm.begin(), perm.end(), Index{0});
      CounterRng rng(mode.seed, streams::kMonteCarlo, s);
      for (Index i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    }
    const auto lv = level_from_table(table, topology, perm, level);
    up[s] = lv.upward;
    double avg = 0.0;
    for (Index p = 0; p < paths; ++p) {
      down[p][s] = lv.downward[p];
      avg += lv.downward[p];
    }
    down_avg[s] = avg / static_cast<double>(paths);
  });

  const double eps = global_divergence(table);
  const Index nl = topology.servers_at_level(level);
  Lemma3Check out;
  out.upward = summarize(up, lemma_upward_fraction(n, nl) * eps, eps, exhaustive);
  out.downward = summarize(down_avg, lemma_downward_fraction(n, nl) * eps, eps, exhaustive);
  for (Index p = 0; p < paths; ++p) {
    const double m = compensated_mean(down[p]);
    out.downward_per_path.push_back(m);
    out.max_path_gap = std::max(out.max_path_gap, std::abs(m - out.downward.closed_form));
  }
  return out;
}

// --- supremum estimates ----------------------------------------------------------

DivergenceReport estimate_sup_divergences(const Objective& objective, const Grouping& grouping,
                                          std::span<const Vec> probes) {
  if (probes.empty()) throw InvalidArgument("probe set is empty");
  DivergenceReport r;
  r.downward.assign(grouping.group_count(), 0.0);
  for (const auto& w : probes) {
    const GradientTable table(objective, w);
    r.global = std::max(r.global, global_divergence(table));
    r.upward = std::max(r.upward, upward_divergence(table, grouping));
    const auto down = downward_divergences(table, grouping);
    for (Index i = 0; i < down.size(); ++i) r.downward[i] = std::max(r.downward[i], down[i]);
  }
  r.probes = probes.size();
  r.exact = objective.divergence_constant_in_w();
  r.note = r.exact ? "exact: divergences are constant in w"
                   : "estimate, not sup: maxima over the probe set bound the supremum from below";
  return r;
}

DivergenceReport estimate_sup_level_divergences(const Objective& objective,
                                                const MultiLevelTopology& topology,
                                                std::span<const Vec> probes) {
  if (probes.empty()) throw InvalidArgument("probe set is empty");
  const Index m = topology.level_count();
  DivergenceReport r;
  r.level_upward.assign(m - 1, 0.0);
  r.level_downward.assign(m - 1, 0.0);
  // The lowest server level doubles as the two-level grouping.
  Grouping lowest;
  lowest.assignment.resize(topology.worker_count());
  for (Index j = 0; j < topology.worker_count(); ++j)
    lowest.assignment[j] = j / topology.subtree_size(m - 1);
  r.downward.assign(lowest.group_count(), 0.0);
  for (const auto& w : probes) {
    const GradientTable table(objective, w);
    r.global = std::max(r.global, global_divergence(table));
    r.upward = std::max(r.upward, upward_divergence(table, lowest));
    const auto down = downward_divergences(table, lowest);
    for (Index i = 0; i < down.size(); ++i) r.downward[i] = std::max(r.downward[i], down[i]);
    for (Index l = 1; l < m; ++l) {
      const auto lv = level_from_table(table, topology, {}, l);
      r.level_upward[l - 1] = std::max(r.level_upward[l - 1], lv.upward);
      for (double v : lv.downward) r.level_downward[l - 1] = std::max(r.level_downward[l - 1], v);
    }
  }
  r.probes = probes.size();
  r.exact = objective.divergence_constant_in_w();
  r.note = r.exact ? "exact: divergences are constant in w"
                   : "estimate, not sup: maxima over the probe set bound the supremum from below";
  return r;
}

std::vector<Vec> make_probe_set(std::span<const Vec> centers, Index per_center, double radius,
                                std::uint64_t seed) {
  std::vector<Vec> out(centers.begin(), centers.end());
  for (Index c = 0; c < centers.size(); ++c) {
    CounterRng rng(seed, substream(streams::kProbe, c), 0);
    for (Index i = 0; i < per_center; ++i) {
      Vec w = centers[c];
      for (double& v : w) v += radius * rng.normal();
      out.push_back(std::move(w));
    }
  }
  return out;
}

}  // namespace hsgd
