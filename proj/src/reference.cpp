#include "hsgd/reference.hpp"

namespace hsgd::reference {

LocalSgdResult local_sgd(std::shared_ptr<const Objective> objective, NoiseModel noise,
                         std::uint64_t seed, Index period, double gamma, Index horizon,
                         const Vec& initial) {
  const Index n = objective->worker_count();
  const Index d = objective->dimension();
  const GradientOracle oracle(objective, noise, seed);
  std::vector<Vec> w(n, initial.empty() ? Vec(d, 0.0) : initial);
  LocalSgdResult out;

  auto average = [&] {
    Vec avg(d, 0.0);
    for (Index j = 0; j < n; ++j)
      for (Index k = 0; k < d; ++k) avg[k] += w[j][k];
    for (Index k = 0; k < d; ++k) avg[k] /= static_cast<double>(n);
    return avg;
  };

  for (Index t = 0; t < horizon; ++t) {
    const Vec wbar = average();
    out.loss.push_back(objective->loss(wbar));
    const Vec g = objective->gradient(wbar);
    double s = 0.0;
    for (double x : g) s += x * x;
    out.grad_norm_sq.push_back(s);

    for (Index j = 0; j < n; ++j) {
      const Vec gj = oracle.sample(j, w[j], t);
      for (Index k = 0; k < d; ++k) w[j][k] -= gamma * gj[k];
    }
    if ((t + 1) % period == 0) {
      const Vec avg = average();
      for (auto& wj : w) wj = avg;
    }
  }
  out.final_params = w;
  return out;
}

std::vector<Vec> gradient_descent(const Objective& objective, double gamma, Index horizon,
                                  const Vec& initial) {
  std::vector<Vec> iterates{initial};
  Vec w = initial;
  for (Index t = 0; t < horizon; ++t) {
    const Vec g = objective.gradient(w);
    for (Index k = 0; k < w.size(); ++k) w[k] -= gamma * g[k];
    iterates.push_back(w);
  }
  return iterates;
}

}  // namespace hsgd::reference
