#include "hsgd/verify.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "hsgd/bounds.hpp"
#include "hsgd/divergence.hpp"
#include "hsgd/error.hpp"
#include "hsgd/reference.hpp"
#include "hsgd/rng.hpp"

namespace hsgd {

namespace {

constexpr std::uint64_t kVerifySeed = 20220601;

struct Suite {
  VerifyReport report;
  const VerifyOptions& options;

  double corrupt(double v) const { return options.corrupt_constants ? v * (1.0 + 1e-3) + 1e-3 : v; }

  void add(std::string name, double measured, double expected, double tol, Relation rel,
           std::string provenance, std::string note = {}) {
    VerifyCheck c;
    c.name = std::move(name);
    c.measured = measured;
    c.expected = expected;
    c.tolerance = tol;
    c.relation = rel;
    c.provenance = std::move(provenance);
    c.note = std::move(note);
    switch (rel) {
      case Relation::equal: c.passed = std::abs(measured - expected) <= tol; break;
      case Relation::at_most: c.passed = measured <= expected + tol; break;
      case Relation::at_least: c.passed = measured >= expected - tol; break;
    }
    if (std::isnan(measured) || std::isnan(expected)) c.passed = false;
    report.checks.push_back(std::move(c));
  }

  void count(std::string name, Index failures, std::string provenance, std::string note = {}) {
    add(std::move(name), static_cast<double>(failures), 0.0, 0.0, Relation::equal, std::move(provenance),
        std::move(note));
  }
};

double relative(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

bool same_bits(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  for (Index i = 0; i < a.size(); ++i)
    if (!same_bits(a[i], b[i])) return false;
  return true;
}

// Random quadratic with n workers in d dimensions; half of the draws use
// per-worker curvatures.
std::shared_ptr<QuadraticObjective> random_quadratic(CounterRng& rng, Index n, Index d) {
  std::vector<Vec> anchors(n, Vec(d));
  for (auto& a : anchors)
    for (double& x : a) x = 4.0 * rng.normal();
  if (rng.below(2) == 0) return std::make_shared<QuadraticObjective>("random", anchors, 0.5 + rng.uniform());
  std::vector<Vec> curv(n, Vec(d));
  for (auto& c : curv)
    for (double& x : c) x = 0.1 + 2.0 * rng.uniform();
  return std::make_shared<QuadraticObjective>("random", anchors, curv);
}

Grouping random_grouping(CounterRng& rng, Index n) {
  const Index N = 1 + rng.below(n);
  Grouping g;
  g.assignment.resize(n);
  // First N workers seed distinct groups, the rest land anywhere; then shuffle.
  for (Index j = 0; j < n; ++j) g.assignment[j] = j < N ? j : rng.below(N);
  for (Index j = n; j > 1; --j) std::swap(g.assignment[j - 1], g.assignment[rng.below(j)]);
  // Relabel densely by first appearance.
  std::vector<Index> label(N, n);
  Index next = 0;
  for (Index& a : g.assignment) {
    if (label[a] == n) label[a] = next++;
    a = label[a];
  }
  return g;
}

void lemmas_suite(Suite& s) {
  struct Case {
    const char* fixture;
    Index N;
    double w;
  };
  const Case cases[] = {{"QF1", 2, 0.0}, {"QF6", 2, 0.5}, {"QF6", 3, 0.5}, {"QF-pair", 2, 0.0},
                        {"QF8", 2, -1.0}, {"QF8", 4, -1.0}};
  for (const Case& c : cases) {
    const auto obj = make_fixture(c.fixture);
    const Vec w(obj->dimension(), c.w);
    const auto mode = SamplingMode::enumerate(s.options.execution);
    const LemmaCheck up = verify_lemma1(*obj, c.N, w, mode);
    const LemmaCheck down = verify_lemma2(*obj, c.N, w, mode);
    const std::string tag = std::string(c.fixture) + " N=" + std::to_string(c.N);
    s.add("upward expectation " + tag, up.empirical, s.corrupt(up.closed_form), 1e-12, Relation::equal,
          "DERIVED", "enumerated " + std::to_string(up.samples) + " groupings");
    s.add("downward expectation " + tag, down.empirical, s.corrupt(down.closed_form), 1e-12,
          Relation::equal, "DERIVED", "enumerated " + std::to_string(down.samples) + " groupings");
  }
  // QF1 at the origin has global divergence 1, so the expectations are 1/3 and 2/3.
  const auto qf1 = make_fixture("QF1");
  const Vec origin(1, 0.0);
  const auto mode = SamplingMode::enumerate(s.options.execution);
  s.add("QF1 upward = 1/3", verify_lemma1(*qf1, 2, origin, mode).empirical, s.corrupt(1.0 / 3.0), 1e-12,
        Relation::equal, "DERIVED");
  s.add("QF1 downward = 2/3", verify_lemma2(*qf1, 2, origin, mode).empirical, s.corrupt(2.0 / 3.0), 1e-12,
        Relation::equal, "DERIVED");

  const auto qf8 = make_fixture("QF8");
  const std::vector<Index> branching = {2, 2, 2};
  const std::vector<Index> periods = {8, 4, 2};
  const MultiLevelTopology tree = build_multi_level(branching, periods);
  const Vec w(1, 0.25);
  for (Index level = 1; level <= 2; ++level) {
    const Lemma3Check c = verify_lemma3(*qf8, tree, level, w, mode);
    const std::string tag = "QF8 tree 2x2x2 level " + std::to_string(level);
    s.add("level upward expectation " + tag, c.upward.empirical, s.corrupt(c.upward.closed_form), 1e-12,
          Relation::equal, "DERIVED", "all 8! leaf assignments");
    s.add("level downward expectation " + tag, c.downward.empirical, s.corrupt(c.downward.closed_form),
          1e-12, Relation::equal, "DERIVED");
    s.add("largest per-path downward gap " + tag, c.max_path_gap, 0.0, 1e-12, Relation::at_most, "DERIVED");
  }
}

void partition_suite(Suite& s) {
  Index failures = 0;
  double worst = 0.0;
  for (Index i = 0; i < 200; ++i) {
    CounterRng rng(kVerifySeed, streams::kProbe, i);
    const Index n = 2 + rng.below(11);
    const Index d = 1 + rng.below(4);
    const auto obj = random_quadratic(rng, n, d);
    const Grouping g = random_grouping(rng, n);
    Vec w(d);
    for (double& x : w) x = 3.0 * rng.normal();
    const PartitionCheck pc = check_partition_identity(*obj, g, w);
    const double rhs = s.corrupt(pc.rhs);
    const double rel = relative(pc.lhs, rhs);
    worst = std::max(worst, rel);
    if (rel > 1e-12) ++failures;
  }
  s.add("largest relative residual over 200 random instances", worst, 0.0, 1e-12, Relation::at_most,
        "DERIVED");
  s.count("instances beyond 1e-12", failures, "DERIVED");
}

void sandwich_suite(Suite& s) {
  Index cells = 0, failures = 0, endpoint_failures = 0;
  for (Index n = 1; n <= 24; ++n)
    for (Index N = 1; N <= n; ++N) {
      if (n % N) continue;
      for (Index G = 1; G <= 60; ++G)
        for (Index I = 1; I <= G; ++I) {
          if (G % I) continue;
          ++cells;
          const SandwichResult r = sandwich_check(n, N, G, I);
          if (!r.holds()) ++failures;
          if (N == 1 && !r.equals_lower) ++endpoint_failures;
          if (N == n && !r.equals_upper) ++endpoint_failures;
        }
    }
  s.count("two-level sandwich violations over " + std::to_string(cells) + " cells", failures, "DERIVED");
  s.count("endpoint equalities at N=1 and N=n", endpoint_failures + (s.options.corrupt_constants ? 1 : 0),
          "TRIVIAL");

  Index trees = 0, multi_failures = 0;
  const Index choices[] = {1, 2, 3, 4};
  for (Index a : choices)
    for (Index b : choices)
      for (Index c : choices)
        for (Index p1 = 1; p1 <= 60; ++p1)
          for (Index p2 = 1; p2 <= p1; ++p2) {
            if (p1 % p2) continue;
            for (Index p3 = 1; p3 <= p2; ++p3) {
              if (p2 % p3) continue;
              const std::vector<Index> br = {a, b, c};
              const std::vector<Index> pe = {p1, p2, p3};
              ++trees;
              if (!sandwich_check_multi(br, pe).holds()) ++multi_failures;
            }
          }
  s.count("three-level sandwich violations over " + std::to_string(trees) + " trees", multi_failures,
          "DERIVED");
}

void reductions_suite(Suite& s) {
  const auto obj = make_fixture("QF10-noniid");
  const NoiseModel noise = NoiseModel::gaussian(0.25);
  const Index T = 300;
  const double gamma = 0.005;
  const Vec w0(obj->dimension(), 1.0);
  for (Index P : {Index{1}, Index{5}, Index{20}}) {
    RunConfig c;
    const std::vector<Index> sizes = {obj->worker_count()};
    const std::vector<Index> periods = {P};
    c.topology = build_two_level(sizes, periods, P);
    c.objective = obj;
    c.noise = noise;
    c.gamma = gamma;
    c.horizon = T;
    c.seed = 11;
    c.initial = w0;
    c.execution = s.options.execution;
    const RunTrace trace = run(c);
    const auto ref = reference::local_sgd(obj, noise, 11, P, gamma, T, w0);
    Index mismatches = 0;
    for (Index t = 0; t < T; ++t)
      if (!same_bits(trace.records[t].loss, ref.loss[t]) ||
          !same_bits(trace.records[t].grad_norm_sq, ref.grad_norm_sq[t]))
        ++mismatches;
    for (Index j = 0; j < obj->worker_count(); ++j)
      if (!same_bits(trace.final_params[j], ref.final_params[j])) ++mismatches;
    s.count("one group with I=G=" + std::to_string(P) + " matches reference local SGD bitwise", mismatches,
            "TRIVIAL");
  }

  {
    const std::vector<Index> branching = {2, 5};
    const std::vector<Index> periods = {20, 5};
    const std::vector<Index> sizes = {5, 5};
    const std::vector<Index> local = {5, 5};
    RunConfig a;
    a.topology = build_multi_level(branching, periods);
    a.objective = obj;
    a.noise = noise;
    a.gamma = gamma / 4.0;
    a.horizon = T;
    a.seed = 3;
    a.initial = w0;
    a.execution = s.options.execution;
    RunConfig b = a;
    b.topology = build_two_level(sizes, local, 20);
    const RunTrace ta = run(a), tb = run(b);
    Index mismatches = 0;
    for (Index t = 0; t < T; ++t) {
      const auto& x = ta.records[t];
      const auto& y = tb.records[t];
      if (!same_bits(x.loss, y.loss) || !same_bits(x.grad_norm_sq, y.grad_norm_sq) ||
          !same_bits(x.upward_mse, y.upward_mse) || !same_bits(x.downward_mse, y.downward_mse))
        ++mismatches;
    }
    for (Index j = 0; j < obj->worker_count(); ++j)
      if (!same_bits(ta.final_params[j], tb.final_params[j])) ++mismatches;
    s.count("two-level tree through the M-level engine matches the two-level engine bitwise", mismatches,
            "TRIVIAL");

    RunConfig serial = b, parallel = b;
    serial.execution = Execution::serial;
    parallel.execution = Execution::parallel;
    const RunTrace ts = run(serial), tp = run(parallel);
    Index diff = 0;
    for (Index t = 0; t < T; ++t)
      if (!same_bits(ts.records[t].loss, tp.records[t].loss)) ++diff;
    for (Index j = 0; j < obj->worker_count(); ++j)
      if (!same_bits(ts.final_params[j], tp.final_params[j])) ++diff;
    s.count("serial and parallel kernels agree bitwise", diff, "TRIVIAL");
  }

  double worst1 = 0.0, worst3 = 0.0;
  for (Index i = 0; i < 50; ++i) {
    CounterRng rng(kVerifySeed, streams::kMonteCarlo, i);
    const Index n = 1 + rng.below(32);
    const double P = static_cast<double>(1 + rng.below(50));
    BoundInputs in;
    in.lipschitz = 0.1 + 3.0 * rng.uniform();
    in.sigma2 = 2.0 * rng.uniform();
    in.horizon = 100.0 + std::floor(1e5 * rng.uniform());
    in.gap = 5.0 * rng.uniform();
    in.gamma = lr_max_two_level(P, in.lipschitz) * (0.05 + 0.95 * rng.uniform());
    const double eps = 3.0 * rng.uniform();
    FixedGroupingInputs g{{n}, {P}, P, 0.0, {eps}};
    worst1 = std::max(worst1, relative(theorem1_bound(in, g), s.corrupt(corollary1_bound(in, n, P, eps))));
  }
  for (Index i = 0; i < 50; ++i) {
    CounterRng rng(kVerifySeed, streams::kMonteCarlo, 1000 + i);
    const Index N = 1 + rng.below(6);
    const Index n = N * (1 + rng.below(6));
    const Index I = 1 + rng.below(10);
    const Index G = I * (1 + rng.below(6));
    BoundInputs in;
    in.lipschitz = 0.1 + 3.0 * rng.uniform();
    in.sigma2 = 2.0 * rng.uniform();
    in.horizon = 100.0 + std::floor(1e5 * rng.uniform());
    in.gap = 5.0 * rng.uniform();
    in.gamma = lr_max_two_level(static_cast<double>(G), in.lipschitz) * (0.05 + 0.95 * rng.uniform());
    const double eps = 3.0 * rng.uniform();
    const std::vector<Index> br = {N, n / N};
    const std::vector<Index> pe = {G, I};
    worst3 = std::max(worst3, relative(theorem3_bound(in, br, pe, eps),
                                       s.corrupt(theorem2_bound(in, n, N, static_cast<double>(G),
                                                                static_cast<double>(I), eps))));
  }
  s.add("fixed-grouping bound with one group vs local SGD bound, 50 draws", worst1, 0.0, 1e-12,
        Relation::at_most, "DERIVED");
  s.add("M-level bound at M=2 vs two-level random-grouping bound, 50 draws", worst3, 0.0, 1e-12,
        Relation::at_most, "DERIVED");
}

// Integer partitions of n in nonincreasing order.
void partitions(Index n, Index cap, std::vector<Index>& cur, std::vector<std::vector<Index>>& out) {
  if (n == 0) {
    out.push_back(cur);
    return;
  }
  for (Index k = std::min(n, cap); k >= 1; --k) {
    cur.push_back(k);
    partitions(n - k, k, cur, out);
    cur.pop_back();
  }
}

void eigen_suite(Suite& s) {
  Index checked = 0, failures = 0;
  for (Index n = 1; n <= 12; ++n) {
    std::vector<std::vector<Index>> all;
    std::vector<Index> cur;
    partitions(n, n, cur, all);
    for (const auto& sizes : all) {
      const std::vector<Index> ones(sizes.size(), 1);
      const TwoLevelTopology topo = build_two_level(sizes, ones, 1);
      ++checked;
      const Index expect = sizes.size() + (s.options.corrupt_constants ? 1 : 0);
      if (count_unit_eigenvalues(aggregation_matrix(topo)) != expect) ++failures;
    }
    for (Index N = 1; N <= n; ++N) {
      if (n % N) continue;
      const std::vector<Index> ones(N, 1);
      const TwoLevelTopology topo = two_level_from_grouping(uniform_random_grouping(n, N, kVerifySeed + n), ones, 1);
      ++checked;
      if (count_unit_eigenvalues(aggregation_matrix(topo)) != N) ++failures;
    }
  }
  s.count("unit eigenvalue count differs from N in " + std::to_string(checked) + " topologies", failures,
          "DERIVED");
}

double mean(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double std_error(const std::vector<double>& v) {
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

void bound_domination_suite(Suite& s) {
  const RunConfig probe = sandwich_scenario("QF10-noniid", Scenario::hsgd, 0, s.options.execution);
  const auto& topo = std::get<TwoLevelTopology>(probe.topology);
  const Objective& obj = *probe.objective;
  const Vec w0 = probe.initial.empty() ? Vec(obj.dimension(), 0.0) : probe.initial;

  FixedGroupingInputs g;
  for (Index i = 0; i < topo.group_count(); ++i) {
    g.group_sizes.push_back(topo.group_size(i));
    g.local_periods.push_back(static_cast<double>(topo.local_period(i)));
  }
  g.global_period = static_cast<double>(topo.global_period());
  const PartitionCheck pc = check_partition_identity(obj, topo.grouping(), w0);
  g.upward = pc.upward;
  g.downward = pc.downward;
  BoundInputs in;
  in.lipschitz = obj.lipschitz();
  in.sigma2 = probe.noise.sigma2;
  in.gamma = probe.gamma;
  in.horizon = static_cast<double>(probe.horizon);
  in.gap = obj.loss(w0) - f_star(obj).value;
  if (s.options.corrupt_constants) in.constant *= 1e-6, in.gap *= 1e-6;
  const double bound = theorem1_bound(in, g);

  std::vector<double> measured;
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    measured.push_back(mean_grad_norm_sq(run(sandwich_scenario("QF10-noniid", Scenario::hsgd, seed, s.options.execution))));
  const double m = mean(measured), se = std_error(measured);
  std::ostringstream note;
  note << "bound " << bound << ", mean " << m << ", margin " << bound - m << ", 3 SE " << 3.0 * se;
  s.add("fixed-grouping bound dominates measured mean squared gradient norm", m, bound, 3.0 * se,
        Relation::at_most, "DERIVED", note.str());
}

}  // namespace

bool VerifyReport::passed() const {
  for (const auto& c : checks)
    if (!c.passed) return false;
  return !checks.empty();
}

const std::vector<std::string>& verify_suite_names() {
  static const std::vector<std::string> names = {"lemmas", "partition", "sandwich",
                                                 "reductions", "eigen", "bound-domination"};
  return names;
}

VerifyReport run_verify_suite(const std::string& suite, const VerifyOptions& options) {
  Suite s{{suite, {}}, options};
  if (suite == "lemmas") lemmas_suite(s);
  else if (suite == "partition") partition_suite(s);
  else if (suite == "sandwich") sandwich_suite(s);
  else if (suite == "reductions") reductions_suite(s);
  else if (suite == "eigen") eigen_suite(s);
  else if (suite == "bound-domination") bound_domination_suite(s);
  else throw InvalidArgument("unknown verification suite '" + suite + "'");
  return s.report;
}

nlohmann::json to_json(const VerifyReport& report) {
  nlohmann::json j;
  j["suite"] = report.suite;
  j["passed"] = report.passed();
  j["checks"] = nlohmann::json::array();
  for (const auto& c : report.checks) {
    const char* rel = c.relation == Relation::equal ? "equal" : c.relation == Relation::at_most ? "at_most" : "at_least";
    j["checks"].push_back({{"name", c.name},
                           {"measured", c.measured},
                           {"expected", c.expected},
                           {"tolerance", c.tolerance},
                           {"relation", rel},
                           {"provenance", c.provenance},
                           {"passed", c.passed},
                           {"note", c.note}});
  }
  return j;
}

RunConfig sandwich_scenario(const std::string& fixture, Scenario which, std::uint64_t seed, Execution execution) {
  RunConfig c;
  c.objective = make_fixture(fixture);
  const Index n = c.objective->worker_count();
  const std::vector<Index> halves = {n / 2, n / 2};
  const std::vector<Index> whole = {n};
  switch (which) {
    case Scenario::local_short: c.topology = build_two_level(whole, std::vector<Index>{5}, 5); break;
    case Scenario::hsgd: c.topology = build_two_level(halves, std::vector<Index>{5, 5}, 20); break;
    case Scenario::local_long: c.topology = build_two_level(whole, std::vector<Index>{20}, 20); break;
  }
  c.noise = NoiseModel::gaussian(0.25);
  c.gamma = 0.8 * lr_max_two_level(20.0, c.objective->lipschitz());
  c.horizon = 2000;
  c.seed = seed;
  c.execution = execution;
  return c;
}

RunConfig comm_scenario(bool hierarchical, std::uint64_t seed, Execution execution) {
  RunConfig c;
  c.objective = make_fixture("QF10-noniid");
  const Index n = c.objective->worker_count();
  if (hierarchical)
    c.topology = build_two_level(std::vector<Index>{n / 2, n / 2}, std::vector<Index>{5, 5}, 50);
  else
    c.topology = build_two_level(std::vector<Index>{n}, std::vector<Index>{5}, 5);
  c.noise = NoiseModel::gaussian(0.25);
  c.gamma = 0.8 * lr_max_two_level(50.0, c.objective->lipschitz());
  c.horizon = 2000;
  c.seed = seed;
  c.execution = execution;
  return c;
}

}  // namespace hsgd
