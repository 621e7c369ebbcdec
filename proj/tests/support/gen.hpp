#pragma once

// Small seeded generators for property tests.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "hsgd/objectives.hpp"
#include "hsgd/topology.hpp"

namespace gen {

using hsgd::Index;
using hsgd::Vec;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}

  Index index(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(eng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(eng_); }
  bool coin() { return index(0, 1) == 1; }

  Vec vec(Index d, double sd = 1.0) {
    Vec v(d);
    for (double& x : v) x = normal(sd);
    return v;
  }

  std::vector<Index> divisors(Index n) {
    std::vector<Index> out;
    for (Index k = 1; k <= n; ++k)
      if (n % k == 0) out.push_back(k);
    return out;
  }

  Index divisor_of(Index n) {
    const auto d = divisors(n);
    return d[index(0, d.size() - 1)];
  }

  /// Random composition of n into k positive parts.
  std::vector<Index> composition(Index n, Index k) {
    std::vector<Index> parts(k, 1);
    for (Index r = n - k; r > 0; --r) ++parts[index(0, k - 1)];
    return parts;
  }

  std::shared_ptr<hsgd::QuadraticObjective> quadratic(Index n, Index d, bool hetero) {
    std::vector<Vec> anchors;
    for (Index j = 0; j < n; ++j) anchors.push_back(vec(d, 2.0));
    if (!hetero) return std::make_shared<hsgd::QuadraticObjective>("gen", anchors, real(0.2, 2.0));
    std::vector<Vec> curv(n, Vec(d));
    for (auto& c : curv)
      for (double& x : c) x = real(0.1, 2.0);
    return std::make_shared<hsgd::QuadraticObjective>("gen", anchors, curv);
  }

  /// Arbitrary grouping (unequal sizes allowed) with dense labels.
  hsgd::Grouping grouping(Index n, Index N) {
    const auto sizes = composition(n, N);
    hsgd::Grouping g;
    for (Index i = 0; i < N; ++i)
      for (Index k = 0; k < sizes[i]; ++k) g.assignment.push_back(i);
    std::shuffle(g.assignment.begin(), g.assignment.end(), eng_);
    std::vector<Index> label(N, n);
    Index next = 0;
    for (Index& a : g.assignment) {
      if (label[a] == n) label[a] = next++;
      a = label[a];
    }
    return g;
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace gen
