#include "hsgd/kernels.hpp"

#include <algorithm>

#include "hsgd/error.hpp"

namespace hsgd {

ParamMatrix::ParamMatrix(Index n, Index d, std::span<const double> init)
    : rows(n), cols(d), data(n * d) {
  if (init.size() != d) throw InvalidArgument("initial point has the wrong dimension");
  for (Index j = 0; j < n; ++j) std::copy(init.begin(), init.end(), row(j).begin());
}

namespace kernels {

namespace {

inline bool is_active(const Mask& mask, Index j) { return mask.empty() || mask[j] != 0; }

void step_one(const GradientOracle& oracle, ParamMatrix& params, Index j, Index t, double gamma,
              ParamMatrix& scratch) {
  auto w = params.row(j);
  auto g = scratch.row(j);
  oracle.sample(j, w, t, g);
  for (Index k = 0; k < w.size(); ++k) w[k] -= gamma * g[k];
}

void aggregate_one(ParamMatrix& params, const std::vector<Index>& members, const Mask& mask,
                   std::span<double> avg) {
  std::fill(avg.begin(), avg.end(), 0.0);
  Index count = 0;
  for (Index j : members) {
    if (!is_active(mask, j)) continue;
    const auto w = params.row(j);
    for (Index k = 0; k < avg.size(); ++k) avg[k] += w[k];
    ++count;
  }
  if (count == 0) return;
  const double c = static_cast<double>(count);
  for (Index k = 0; k < avg.size(); ++k) avg[k] /= c;
  for (Index j : members)
    if (is_active(mask, j)) std::copy(avg.begin(), avg.end(), params.row(j).begin());
}

}  // namespace

void step_workers(Execution exec, const GradientOracle& oracle, ParamMatrix& params, Index t,
                  double gamma, const Mask& active, ParamMatrix& scratch) {
  const auto n = static_cast<std::ptrdiff_t>(params.rows);
  if (exec == Execution::serial) {
    for (std::ptrdiff_t j = 0; j < n; ++j)
      if (is_active(active, j)) step_one(oracle, params, j, t, gamma, scratch);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < n; ++j)
    if (is_active(active, j)) step_one(oracle, params, j, t, gamma, scratch);
}

void aggregate_blocks(Execution exec, ParamMatrix& params,
                      const std::vector<std::vector<Index>>& blocks, const Mask& participants,
                      std::vector<Vec>* out) {
  std::vector<Vec> local;
  std::vector<Vec>& avgs = out ? *out : local;
  avgs.assign(blocks.size(), Vec(params.cols));
  const auto nb = static_cast<std::ptrdiff_t>(blocks.size());
  if (exec == Execution::serial || nb == 1) {
    for (std::ptrdiff_t b = 0; b < nb; ++b) aggregate_one(params, blocks[b], participants, avgs[b]);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < nb; ++b) aggregate_one(params, blocks[b], participants, avgs[b]);
}

void mean_rows(const ParamMatrix& params, std::span<const Index> members, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  Index count = 0;
  auto add = [&](Index j) {
    const auto w = params.row(j);
    for (Index k = 0; k < out.size(); ++k) out[k] += w[k];
    ++count;
  };
  if (members.empty()) {
    for (Index j = 0; j < params.rows; ++j) add(j);
  } else {
    for (Index j : members) add(j);
  }
  const double c = static_cast<double>(count);
  for (Index k = 0; k < out.size(); ++k) out[k] /= c;
}

double loss(Execution exec, const Objective& objective, std::span<const double> w,
            std::vector<double>& scratch) {
  const auto n = static_cast<std::ptrdiff_t>(objective.worker_count());
  scratch.resize(std::max<std::size_t>(scratch.size(), n));
  if (exec == Execution::serial) {
    for (std::ptrdiff_t j = 0; j < n; ++j) scratch[j] = objective.worker_loss(j, w);
  } else {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < n; ++j) scratch[j] = objective.worker_loss(j, w);
  }
  double s = 0.0;
  for (std::ptrdiff_t j = 0; j < n; ++j) s += scratch[j];
  return s / static_cast<double>(n);
}

double grad_norm_sq(Execution exec, const Objective& objective, std::span<const double> w,
                    std::vector<double>& scratch) {
  const auto n = static_cast<std::ptrdiff_t>(objective.worker_count());
  const Index d = objective.dimension();
  scratch.resize(std::max<std::size_t>(scratch.size(), n * d));
  auto worker = [&](std::ptrdiff_t j) {
    objective.worker_gradient(j, w, std::span<double>(scratch.data() + j * d, d));
  };
  if (exec == Execution::serial) {
    for (std::ptrdiff_t j = 0; j < n; ++j) worker(j);
  } else {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < n; ++j) worker(j);
  }
  // Same arithmetic as Objective::gradient: ascending sum, then divide by n.
  Vec g(d, 0.0);
  for (std::ptrdiff_t j = 0; j < n; ++j)
    for (Index k = 0; k < d; ++k) g[k] += scratch[j * d + k];
  double s = 0.0;
  for (Index k = 0; k < d; ++k) {
    g[k] /= static_cast<double>(n);
    s += g[k] * g[k];
  }
  return s;
}

MsePair parameter_mses(const ParamMatrix& params, const std::vector<std::vector<Index>>& blocks) {
  const Index d = params.cols;
  const double n = static_cast<double>(params.rows);
  Vec wbar(d), wb(d);
  mean_rows(params, {}, wbar);
  MsePair out;
  for (const auto& members : blocks) {
    mean_rows(params, members, wb);
    double up = 0.0;
    for (Index k = 0; k < d; ++k) up += (wbar[k] - wb[k]) * (wbar[k] - wb[k]);
    out.upward += static_cast<double>(members.size()) / n * up;
    for (Index j : members) {
      const auto w = params.row(j);
      double down = 0.0;
      for (Index k = 0; k < d; ++k) down += (wb[k] - w[k]) * (wb[k] - w[k]);
      out.downward += down;
    }
  }
  out.downward /= n;
  return out;
}

}  // namespace kernels
}  // namespace hsgd
