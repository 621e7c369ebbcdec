#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hsgd/topology.hpp"

namespace hsgd {

/// The constant multiplying every gamma^2 term of the simplified bounds.
inline constexpr double kBoundConstant = 40.0 / 3.0;

/// Shared scalars of every bound: (1/T) sum_t E||grad f(wbar^t)||^2 <= ...
struct BoundInputs {
  double lipschitz = 1.0;  // L
  double sigma2 = 0.0;     // gradient noise variance
  double gamma = 0.0;      // learning rate
  double horizon = 1.0;    // T
  double gap = 0.0;        // f^0 - f^*
  double constant = kBoundConstant;
};

/// 1/(2 sqrt(6) G L). Throws NonPositive.
double lr_max_two_level(double global_period, double lipschitz);
/// 1/(2 sqrt(6) P_1 L). Throws NonPositive.
double lr_max_multi(double top_period, double lipschitz);

/// Fixed-grouping inputs: group sizes n_i, local periods I_i, G, the upward
/// divergence bound and one downward bound per group.
struct FixedGroupingInputs {
  std::vector<Index> group_sizes;
  std::vector<double> local_periods;
  double global_period = 1.0;
  double upward = 0.0;
  std::vector<double> downward;
};

/// Fixed-grouping bound with L^2 on every gamma^2 term. Throws LrTooLarge
/// when gamma > 1/(2 sqrt(6) G L).
double theorem1_bound(const BoundInputs& in, const FixedGroupingInputs& grouping);

/// Local SGD with period P over n workers and global divergence eps2.
double corollary1_bound(const BoundInputs& in, Index n, double period, double eps2);

/// Uniform random grouping, equal group sizes n/N and common local period I.
/// G and I may be fractional (period scaling studies). Throws LrTooLarge, SizeError.
double theorem2_bound(const BoundInputs& in, Index n, Index N, double global_period,
                      double local_period, double eps2);
double theorem2_noise_coefficient(Index n, Index N, double global_period, double local_period);
double theorem2_divergence_coefficient(Index n, Index N, double global_period,
                                       double local_period);

/// A_1(l), A_2(l) for l = 1..M-1 with K_l = N_{l+1}...N_M and P_{l+1} as
/// the downward period (the indexing that reduces to the two-level bound at M = 2).
double multi_a1(std::span<const Index> branching, std::span<const Index> periods, Index level);
double multi_a2(std::span<const Index> branching, std::span<const Index> periods, Index level);

/// Uniform random grouping on an M-level tree. Throws LrTooLarge.
double theorem3_bound(const BoundInputs& in, std::span<const Index> branching,
                      std::span<const Index> periods, double eps2);

/// Fixed-grouping M-level bound before simplification: each level keeps its
/// 1/(1 - 12 gamma^2 L^2 P^2) denominators. `upward[l-1]`, `downward[l-1]`
/// bound the level-l divergences. Enforces gamma <= 1/(2 sqrt(6) P_1 L).
double theoremD1_raw_bound(const BoundInputs& in, std::span<const Index> branching,
                           std::span<const Index> periods, std::span<const double> upward,
                           std::span<const double> downward);

struct SandwichResult {
  double noise_lower = 0.0, noise_middle = 0.0, noise_upper = 0.0;
  double divergence_lower = 0.0, divergence_middle = 0.0, divergence_upper = 0.0;
  bool noise_holds = false;
  bool divergence_holds = false;
  bool equals_lower = false;  // both middles equal the lower endpoints exactly
  bool equals_upper = false;  // both middles equal the upper endpoints exactly
  bool holds() const { return noise_holds && divergence_holds; }
};

/// (1-1/n) I <= ((N-1)/n) G + (1-N/n) I <= (1-1/n) G and
/// I^2 <= ((N-1)/(n-1)) G^2 + (1-(N-1)/(n-1)) I^2 <= G^2, decided in exact
/// rational arithmetic. Requires 1 <= N <= n, N | n, I <= G.
SandwichResult sandwich_check(Index n, Index N, Index global_period, Index local_period);

/// (1-1/n) P_M <= mean_l A_1(l) <= (1-1/n) P_1 and P_M^2 <= mean_l A_2(l) <= P_1^2.
SandwichResult sandwich_check_multi(std::span<const Index> branching,
                                    std::span<const Index> periods);

struct Remark5Result {
  bool admissible = false;
  double l_limit = 0.0;  // sqrt((1/m^2)(n-N)/N + 1)
  double q_limit = 0.0;  // sqrt(1 - m^2 (l^2-1) N/(n-N)); NaN when l >= l_limit
  double divergence_before = 0.0, divergence_after = 0.0;
  double noise_before = 0.0, noise_after = 0.0;
  bool improved = false;  // both coefficients nonincreasing at (lG, qI)
};

/// Period trade-off: scale G by l and I by q. Throws NotNonTrivialGrouping
/// unless 1 < N < n, DivisibilityError unless I | G, InvalidArgument for
/// l < 1 or q <= 0.
Remark5Result remark5_region(Index n, Index N, Index global_period, Index local_period, double l,
                             double q);

struct SpeedupPoint {
  Index n = 0;
  double gamma = 0.0;
  double leading = 0.0;    // 2 gap/(gamma T) + gamma L sigma^2/n = (2 gap + L sigma^2)/sqrt(nT)
  double remainder = 0.0;  // the gamma^2 terms
  double total = 0.0;
};

struct SpeedupInputs {
  double horizon = 1.0;
  double sigma2 = 1.0;
  double lipschitz = 1.0;
  double gap = 1.0;
  Index groups = 1;  // N; must divide every n
  double global_period = 1.0;
  double local_period = 1.0;
  double eps2 = 0.0;
};

/// theorem2_bound at gamma = sqrt(n/T) for each n, split into leading and
/// remainder parts. Throws LrTooLarge when some gamma is invalid.
std::vector<SpeedupPoint> speedup_profile(std::span<const Index> workers, const SpeedupInputs& in);

}  // namespace hsgd
