#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "hsgd/objectives.hpp"

namespace hsgd::reference {

struct LocalSgdResult {
  std::vector<double> loss;          // f(wbar^t), t = 0..T-1
  std::vector<double> grad_norm_sq;  // ||grad f(wbar^t)||^2
  std::vector<Vec> final_params;
};

/// Plain single-level local SGD: every worker steps, and every P iterations
/// all workers are replaced by their mean. Written independently of the
/// engine (no shared kernels), with the same arithmetic conventions: the
/// update is w -= gamma * g and averages sum in ascending worker order
/// before dividing. Serves as the oracle for the N = 1 reduction.
LocalSgdResult local_sgd(std::shared_ptr<const Objective> objective, NoiseModel noise,
                         std::uint64_t seed, Index period, double gamma, Index horizon,
                         const Vec& initial);

/// Centralized gradient descent on f: w <- w - gamma * grad f(w).
/// Returns the iterates w^0..w^T.
std::vector<Vec> gradient_descent(const Objective& objective, double gamma, Index horizon,
                                  const Vec& initial);

}  // namespace hsgd::reference
