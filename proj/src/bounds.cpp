#include "hsgd/bounds.hpp"

#include <boost/rational.hpp>

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "hsgd/error.hpp"

namespace hsgd {

namespace {

using Rational = boost::rational<long long>;

double to_double(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    std::ostringstream os;
    os << what << " must be positive and finite, got " << v;
    throw NonPositive(os.str());
  }
}

void check_inputs(const BoundInputs& in) {
  require_positive(in.lipschitz, "L");
  require_positive(in.gamma, "gamma");
  require_positive(in.horizon, "T");
  if (in.sigma2 < 0.0 || in.gap < 0.0 || in.constant <= 0.0)
    throw InvalidArgument("sigma2 and f0 - f* must be nonnegative, C positive");
}

void enforce_lr(const BoundInputs& in, double period, const char* symbol) {
  const double lr = lr_max_two_level(period, in.lipschitz);
  if (in.gamma > lr * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "learning rate " << in.gamma << " violates \xCE\xB3 \xE2\x89\xA4 1/(2\xE2\x88\x9A" "6\xC2\xB7"
       << symbol << "\xC2\xB7L) = " << lr << " (" << symbol << "=" << period
       << ", L=" << in.lipschitz << ")";
    throw LrTooLarge(os.str());
  }
}

double sgd_part(const BoundInputs& in, double n) {
  return 2.0 * in.gap / (in.gamma * in.horizon) + in.gamma * in.lipschitz * in.sigma2 / n;
}

double gl2(const BoundInputs& in) {
  return in.constant * in.gamma * in.gamma * in.lipschitz * in.lipschitz;
}

struct Tree {
  Index levels = 0;
  Index n = 1;
};

Tree check_tree(std::span<const Index> branching, std::span<const Index> periods) {
  if (branching.size() < 2 || branching.size() != periods.size())
    throw SizeError("need M >= 2 levels with one period per level");
  Tree tree{branching.size(), 1};
  for (Index j = 0; j < branching.size(); ++j) {
    if (branching[j] == 0 || periods[j] == 0) throw InvalidArgument("branching and periods must be >= 1");
    tree.n *= branching[j];
    if (j > 0) {
      if (periods[j] > periods[j - 1]) throw PeriodOrderError("periods must be nonincreasing");
      if (periods[j - 1] % periods[j] != 0) throw DivisibilityError("P_{l+1} must divide P_l");
    }
  }
  return tree;
}

// K_l = N_{l+1} ... N_M and n_l = N_1 ... N_l for 1-based l.
Index below(std::span<const Index> branching, Index level) {
  Index k = 1;
  for (Index j = level; j < branching.size(); ++j) k *= branching[j];
  return k;
}

Index servers(std::span<const Index> branching, Index level) {
  Index k = 1;
  for (Index j = 0; j < level; ++j) k *= branching[j];
  return k;
}

Rational pair_fraction(Index servers_l, Index n) {
  if (n <= 1) return Rational(0);
  return Rational(static_cast<long long>(servers_l) - 1, static_cast<long long>(n) - 1);
}

Rational a1_exact(std::span<const Index> branching, std::span<const Index> periods, Index level) {
  const auto n = static_cast<long long>(servers(branching, branching.size()));
  const auto k = static_cast<long long>(below(branching, level));
  const auto p1 = static_cast<long long>(periods[0]);
  const auto pl = static_cast<long long>(periods[level]);
  return Rational(p1) * (Rational(1, k) - Rational(1, n)) + Rational(pl) * (Rational(1) - Rational(1, k));
}

Rational a2_exact(std::span<const Index> branching, std::span<const Index> periods, Index level) {
  const Index n = servers(branching, branching.size());
  const Rational f = pair_fraction(servers(branching, level), n);
  const auto p1 = static_cast<long long>(periods[0]);
  const auto pl = static_cast<long long>(periods[level]);
  return Rational(p1 * p1) * f + Rational(pl * pl) * (Rational(1) - f);
}

void check_level(std::span<const Index> branching, Index level) {
  if (level < 1 || level >= branching.size()) {
    std::ostringstream os;
    os << "level " << level << " outside 1.." << branching.size() - 1;
    throw BadLevel(os.str());
  }
}

}  // namespace

double lr_max_two_level(double global_period, double lipschitz) {
  require_positive(global_period, "G");
  require_positive(lipschitz, "L");
  return 1.0 / (2.0 * std::sqrt(6.0) * global_period * lipschitz);
}

double lr_max_multi(double top_period, double lipschitz) {
  require_positive(top_period, "P_1");
  require_positive(lipschitz, "L");
  return 1.0 / (2.0 * std::sqrt(6.0) * top_period * lipschitz);
}

double theorem1_bound(const BoundInputs& in, const FixedGroupingInputs& g) {
  check_inputs(in);
  const Index groups = g.group_sizes.size();
  if (groups == 0 || g.local_periods.size() != groups || g.downward.size() != groups)
    throw SizeError("group sizes, local periods and downward divergences must align");
  enforce_lr(in, g.global_period, "G");
  double n = 0.0;
  for (Index s : g.group_sizes) {
    if (s == 0) throw EmptyGroupError("group of size 0");
    n += static_cast<double>(s);
  }
  const double k = gl2(in);
  const double G = g.global_period;
  double noise_down = 0.0;
  double div_down = 0.0;
  for (Index i = 0; i < groups; ++i) {
    const double ni = static_cast<double>(g.group_sizes[i]);
    const double Ii = g.local_periods[i];
    noise_down += (ni - 1.0) * Ii / n;
    div_down += (ni / n) * Ii * Ii * g.downward[i];
  }
  const double N = static_cast<double>(groups);
  return sgd_part(in, n) + 2.0 * k * G * ((N - 1.0) / n) * in.sigma2 + 3.0 * k * G * G * g.upward +
         2.0 * k * in.sigma2 * noise_down + 3.0 * k * div_down;
}

double corollary1_bound(const BoundInputs& in, Index n, double period, double eps2) {
  check_inputs(in);
  if (n == 0) throw SizeError("n must be >= 1");
  enforce_lr(in, period, "P");
  const double k = gl2(in);
  const double nn = static_cast<double>(n);
  return sgd_part(in, nn) + 2.0 * k * in.sigma2 * (1.0 - 1.0 / nn) * period +
         3.0 * k * period * period * eps2;
}

double theorem2_noise_coefficient(Index n, Index N, double G, double I) {
  const double nn = static_cast<double>(n);
  const double NN = static_cast<double>(N);
  return ((NN - 1.0) / nn) * G + (1.0 - NN / nn) * I;
}

double theorem2_divergence_coefficient(Index n, Index N, double G, double I) {
  const double f = n <= 1 ? 0.0 : (static_cast<double>(N) - 1.0) / (static_cast<double>(n) - 1.0);
  return f * G * G + (1.0 - f) * I * I;
}

double theorem2_bound(const BoundInputs& in, Index n, Index N, double G, double I, double eps2) {
  check_inputs(in);
  if (n == 0 || N == 0 || N > n || n % N != 0) {
    std::ostringstream os;
    os << "N=" << N << " must divide n=" << n;
    throw SizeError(os.str());
  }
  enforce_lr(in, G, "G");
  const double k = gl2(in);
  return sgd_part(in, static_cast<double>(n)) +
         2.0 * k * theorem2_noise_coefficient(n, N, G, I) * in.sigma2 +
         3.0 * k * theorem2_divergence_coefficient(n, N, G, I) * eps2;
}

double multi_a1(std::span<const Index> branching, std::span<const Index> periods, Index level) {
  check_tree(branching, periods);
  check_level(branching, level);
  const double n = static_cast<double>(servers(branching, branching.size()));
  const double k = static_cast<double>(below(branching, level));
  const double p1 = static_cast<double>(periods[0]);
  const double pl = static_cast<double>(periods[level]);
  return p1 * (1.0 / k - 1.0 / n) + pl * (1.0 - 1.0 / k);
}

double multi_a2(std::span<const Index> branching, std::span<const Index> periods, Index level) {
  check_tree(branching, periods);
  check_level(branching, level);
  const Index n = servers(branching, branching.size());
  const double f = n <= 1 ? 0.0
                          : (static_cast<double>(servers(branching, level)) - 1.0) /
                                (static_cast<double>(n) - 1.0);
  const double p1 = static_cast<double>(periods[0]);
  const double pl = static_cast<double>(periods[level]);
  return p1 * p1 * f + pl * pl * (1.0 - f);
}

double theorem3_bound(const BoundInputs& in, std::span<const Index> branching,
                      std::span<const Index> periods, double eps2) {
  check_inputs(in);
  const Tree tree = check_tree(branching, periods);
  enforce_lr(in, static_cast<double>(periods[0]), "P_1");
  double sum = 0.0;
  for (Index l = 1; l < tree.levels; ++l)
    sum += 2.0 * multi_a1(branching, periods, l) * in.sigma2 +
           3.0 * multi_a2(branching, periods, l) * eps2;
  return sgd_part(in, static_cast<double>(tree.n)) +
         gl2(in) / static_cast<double>(tree.levels - 1) * sum;
}

double theoremD1_raw_bound(const BoundInputs& in, std::span<const Index> branching,
                           std::span<const Index> periods, std::span<const double> upward,
                           std::span<const double> downward) {
  check_inputs(in);
  const Tree tree = check_tree(branching, periods);
  if (upward.size() != tree.levels - 1 || downward.size() != tree.levels - 1)
    throw SizeError("need one upward and one downward divergence per level 1..M-1");
  enforce_lr(in, static_cast<double>(periods[0]), "P_1");
  const double g2l2 = in.gamma * in.gamma * in.lipschitz * in.lipschitz;
  const double p1 = static_cast<double>(periods[0]);
  const double n = static_cast<double>(tree.n);
  const double d1 = 1.0 - 12.0 * g2l2 * p1 * p1;
  double sum = 0.0;
  for (Index l = 1; l < tree.levels; ++l) {
    const double k = static_cast<double>(below(branching, l));
    const double pl = static_cast<double>(periods[l]);
    const double dl = 1.0 - 12.0 * g2l2 * pl * pl;
    const double up = 8.0 * g2l2 * p1 * (1.0 / k - 1.0 / n) * in.sigma2 / d1 +
                      12.0 * g2l2 * p1 * p1 * upward[l - 1] / d1;
    const double down = 4.0 * g2l2 * pl * (1.0 - 1.0 / k) * in.sigma2 / dl +
                        12.0 * g2l2 * pl * pl * downward[l - 1] / dl;
    sum += up + (1.0 + 8.0 * g2l2 * p1 * p1 / d1) * down;
  }
  return sgd_part(in, n) + sum / static_cast<double>(tree.levels - 1);
}

SandwichResult sandwich_check(Index n, Index N, Index G, Index I) {
  if (n == 0 || N == 0 || N > n || n % N != 0 || I == 0 || I > G)
    throw InvalidArgument("sandwich requires 1 <= N <= n, N | n, 1 <= I <= G");
  const auto nn = static_cast<long long>(n);
  const auto NN = static_cast<long long>(N);
  const auto g = static_cast<long long>(G);
  const auto i = static_cast<long long>(I);
  const Rational shrink = Rational(1) - Rational(1, nn);
  const Rational noise_lo = shrink * i;
  const Rational noise_mid = Rational(NN - 1, nn) * g + (Rational(1) - Rational(NN, nn)) * i;
  const Rational noise_hi = shrink * g;
  const Rational f = pair_fraction(N, n);
  // A single worker has no divergence at all; every coefficient collapses to 0.
  const bool single = nn == 1;
  const Rational div_lo = single ? Rational(0) : Rational(i * i);
  const Rational div_mid = single ? Rational(0) : f * (g * g) + (Rational(1) - f) * (i * i);
  const Rational div_hi = single ? Rational(0) : Rational(g * g);

  SandwichResult r;
  r.noise_lower = to_double(noise_lo);
  r.noise_middle = to_double(noise_mid);
  r.noise_upper = to_double(noise_hi);
  r.divergence_lower = to_double(div_lo);
  r.divergence_middle = to_double(div_mid);
  r.divergence_upper = to_double(div_hi);
  r.noise_holds = noise_lo <= noise_mid && noise_mid <= noise_hi;
  r.divergence_holds = div_lo <= div_mid && div_mid <= div_hi;
  r.equals_lower = noise_mid == noise_lo && div_mid == div_lo;
  r.equals_upper = noise_mid == noise_hi && div_mid == div_hi;
  return r;
}

SandwichResult sandwich_check_multi(std::span<const Index> branching, std::span<const Index> periods) {
  const Tree tree = check_tree(branching, periods);
  const auto n = static_cast<long long>(tree.n);
  const auto p1 = static_cast<long long>(periods.front());
  const auto pm = static_cast<long long>(periods.back());
  Rational a1(0), a2(0);
  for (Index l = 1; l < tree.levels; ++l) {
    a1 += a1_exact(branching, periods, l);
    a2 += a2_exact(branching, periods, l);
  }
  const auto levels = static_cast<long long>(tree.levels - 1);
  a1 /= levels;
  a2 /= levels;
  const Rational shrink = Rational(1) - Rational(1, n);
  const Rational noise_lo = shrink * pm, noise_hi = shrink * p1;
  const Rational div_lo(pm * pm), div_hi(p1 * p1);

  SandwichResult r;
  r.noise_lower = to_double(noise_lo);
  r.noise_middle = to_double(a1);
  r.noise_upper = to_double(noise_hi);
  r.divergence_lower = to_double(div_lo);
  r.divergence_middle = to_double(a2);
  r.divergence_upper = to_double(div_hi);
  r.noise_holds = noise_lo <= a1 && a1 <= noise_hi;
  r.divergence_holds = div_lo <= a2 && a2 <= div_hi;
  r.equals_lower = a1 == noise_lo && a2 == div_lo;
  r.equals_upper = a1 == noise_hi && a2 == div_hi;
  return r;
}

Remark5Result remark5_region(Index n, Index N, Index G, Index I, double l, double q) {
  if (N <= 1 || N >= n) {
    std::ostringstream os;
    os << "N=" << N << " is not a nontrivial grouping of n=" << n;
    throw NotNonTrivialGrouping(os.str());
  }
  if (I == 0 || G % I != 0) throw DivisibilityError("I must divide G");
  if (!(l >= 1.0) || !(q > 0.0)) throw InvalidArgument("need l >= 1 and q > 0");
  const double m = static_cast<double>(G / I);
  const double nn = static_cast<double>(n);
  const double NN = static_cast<double>(N);
  Remark5Result r;
  r.l_limit = std::sqrt((nn - NN) / NN / (m * m) + 1.0);
  const double inner = 1.0 - m * m * (l * l - 1.0) * NN / (nn - NN);
  r.q_limit = l < r.l_limit ? std::sqrt(inner) : std::numeric_limits<double>::quiet_NaN();
  r.admissible = l < r.l_limit && q <= r.q_limit;
  const double g = static_cast<double>(G);
  const double i = static_cast<double>(I);
  r.divergence_before = theorem2_divergence_coefficient(n, N, g, i);
  r.divergence_after = theorem2_divergence_coefficient(n, N, l * g, q * i);
  r.noise_before = theorem2_noise_coefficient(n, N, g, i);
  r.noise_after = theorem2_noise_coefficient(n, N, l * g, q * i);
  r.improved = r.divergence_after <= r.divergence_before && r.noise_after <= r.noise_before;
  return r;
}

std::vector<SpeedupPoint> speedup_profile(std::span<const Index> workers, const SpeedupInputs& in) {
  std::vector<SpeedupPoint> out;
  out.reserve(workers.size());
  for (Index n : workers) {
    BoundInputs b;
    b.lipschitz = in.lipschitz;
    b.sigma2 = in.sigma2;
    b.horizon = in.horizon;
    b.gap = in.gap;
    b.gamma = std::sqrt(static_cast<double>(n) / in.horizon);
    SpeedupPoint p;
    p.n = n;
    p.gamma = b.gamma;
    p.total = theorem2_bound(b, n, in.groups, in.global_period, in.local_period, in.eps2);
    p.leading = sgd_part(b, static_cast<double>(n));
    const double k = gl2(b);
    p.remainder = 2.0 * k * theorem2_noise_coefficient(n, in.groups, in.global_period, in.local_period) * b.sigma2 +
                  3.0 * k * theorem2_divergence_coefficient(n, in.groups, in.global_period, in.local_period) * in.eps2;
    out.push_back(p);
  }
  return out;
}

}  // namespace hsgd
