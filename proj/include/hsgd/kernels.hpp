#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hsgd/objectives.hpp"

namespace hsgd {

/// Every kernel has a serial reference and an OpenMP version. Per-worker
/// work is independent and every reduction runs in ascending worker order
/// on one thread, so both versions produce bit-identical results for any
/// thread count.
enum class Execution { serial, parallel };

/// Worker parameters stored row-major: row j is w_j.
struct ParamMatrix {
  Index rows = 0;
  Index cols = 0;
  std::vector<double> data;

  ParamMatrix() = default;
  ParamMatrix(Index n, Index d, std::span<const double> init);
  std::span<double> row(Index j) { return {data.data() + j * cols, cols}; }
  std::span<const double> row(Index j) const { return {data.data() + j * cols, cols}; }
};

/// Participation mask: empty means every worker participates.
using Mask = std::vector<std::uint8_t>;

namespace kernels {

/// w_j <- w_j - gamma * g(w_j, zeta_j^t) for every worker with mask[j] set.
void step_workers(Execution exec, const GradientOracle& oracle, ParamMatrix& params, Index t,
                  double gamma, const Mask& active, ParamMatrix& scratch);

/// Average each block over its participating members (ascending order,
/// sum then divide) and write the average to `out` and to every
/// participating member.
void aggregate_blocks(Execution exec, ParamMatrix& params,
                      const std::vector<std::vector<Index>>& blocks, const Mask& participants,
                      std::vector<Vec>* out = nullptr);

/// Mean of the listed rows (all rows when `members` is empty).
void mean_rows(const ParamMatrix& params, std::span<const Index> members, std::span<double> out);

/// f(w) and ||grad f(w)||^2 with worker terms evaluated concurrently and
/// summed in ascending order. `scratch` holds n*d doubles.
double loss(Execution exec, const Objective& objective, std::span<const double> w,
            std::vector<double>& scratch);
double grad_norm_sq(Execution exec, const Objective& objective, std::span<const double> w,
                    std::vector<double>& scratch);

struct MsePair {
  double upward = 0.0;
  double downward = 0.0;
};

/// upward = sum_b (|b|/n) ||wbar - wbar_b||^2,
/// downward = (1/n) sum_b sum_{k in b} ||wbar_b - w_k||^2.
MsePair parameter_mses(const ParamMatrix& params, const std::vector<std::vector<Index>>& blocks);

}  // namespace kernels
}  // namespace hsgd
