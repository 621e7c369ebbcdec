#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "hsgd/topology.hpp"

namespace hsgd {

using Vec = std::vector<double>;

struct MinimumReport {
  double value = 0.0;
  double grad_norm = 0.0;  // ||grad f|| at the reported minimizer
  Index iterations = 0;    // 0 for closed forms
  bool exact = false;
  Vec minimizer;
};

/// A family of per-worker losses F_j on R^d with exact gradients.
/// f = (1/n) sum_j F_j.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::string name() const = 0;
  virtual Index worker_count() const = 0;
  virtual Index dimension() const = 0;
  virtual double worker_loss(Index j, std::span<const double> w) const = 0;
  virtual void worker_gradient(Index j, std::span<const double> w, std::span<double> out) const = 0;
  /// Lipschitz constant of every grad F_j.
  virtual double lipschitz() const = 0;
  /// True when all gradient differences grad F_j - grad F_k are constant in w,
  /// so pointwise divergences equal their supremum.
  virtual bool divergence_constant_in_w() const { return false; }
  /// Throws Unsupported when no minimization oracle exists.
  virtual MinimumReport minimum() const;

  /// Per-sample access for minibatch oracles. Defaults throw Unsupported.
  virtual Index sample_count(Index j) const;
  virtual void sample_gradient(Index j, Index sample, std::span<const double> w,
                               std::span<double> out) const;

  /// Scalar per worker used to build group-iid / group-non-iid groupings.
  virtual Vec similarity_keys() const = 0;

  /// f(w): mean of worker losses in ascending worker order.
  double loss(std::span<const double> w) const;
  /// grad f(w): ascending-order sum of worker gradients divided by n.
  void gradient(std::span<const double> w, std::span<double> out) const;
  Vec gradient(std::span<const double> w) const;
  Vec worker_gradient(Index j, std::span<const double> w) const;
};

/// F_j(w) = 1/2 sum_k c_jk (w_k - a_jk)^2 with c_jk = q unless per-worker
/// curvatures are given. With a shared scalar curvature every divergence is
/// constant in w.
class QuadraticObjective final : public Objective {
 public:
  /// anchors: n rows of length d.
  QuadraticObjective(std::string name, std::vector<Vec> anchors, double curvature = 1.0);
  /// Per-worker diagonal curvatures, same shape as anchors, entries > 0.
  QuadraticObjective(std::string name, std::vector<Vec> anchors, std::vector<Vec> curvatures);

  std::string name() const override { return name_; }
  Index worker_count() const override { return anchors_.size(); }
  Index dimension() const override { return dim_; }
  double worker_loss(Index j, std::span<const double> w) const override;
  void worker_gradient(Index j, std::span<const double> w, std::span<double> out) const override;
  double lipschitz() const override { return lipschitz_; }
  bool divergence_constant_in_w() const override { return curvatures_.empty(); }
  MinimumReport minimum() const override;
  Vec similarity_keys() const override;

  const Vec& anchor(Index j) const { return anchors_.at(j); }
  bool heterogeneous_curvature() const { return !curvatures_.empty(); }
  double curvature(Index j, Index k) const {
    return curvatures_.empty() ? scale_ : curvatures_[j][k];
  }

 private:
  std::string name_;
  std::vector<Vec> anchors_;
  std::vector<Vec> curvatures_;
  double scale_ = 1.0;
  Index dim_ = 0;
  double lipschitz_ = 1.0;
};

struct LogisticDataset {
  std::vector<Vec> features;  // one row per sample
  std::vector<double> labels; // 0 or 1
};

/// F_j(w) = mean_i [log(1 + exp(x_i.w)) - y_i x_i.w] + (lambda/2)||w||^2.
class LogisticObjective final : public Objective {
 public:
  LogisticObjective(std::string name, std::vector<LogisticDataset> data, double lambda);

  std::string name() const override { return name_; }
  Index worker_count() const override { return data_.size(); }
  Index dimension() const override { return dim_; }
  double worker_loss(Index j, std::span<const double> w) const override;
  void worker_gradient(Index j, std::span<const double> w, std::span<double> out) const override;
  /// lambda + max_i ||x_i||^2 / 4 over all samples.
  double lipschitz() const override { return lipschitz_; }
  /// Full-batch gradient descent with step 1/L, stopping at ||grad f|| <= 1e-10
  /// or 1e5 steps. Computed once and cached.
  MinimumReport minimum() const override;
  Index sample_count(Index j) const override { return data_.at(j).labels.size(); }
  void sample_gradient(Index j, Index sample, std::span<const double> w,
                       std::span<double> out) const override;
  Vec similarity_keys() const override;

  double lambda() const { return lambda_; }
  const LogisticDataset& dataset(Index j) const { return data_.at(j); }

 private:
  std::string name_;
  std::vector<LogisticDataset> data_;
  double lambda_;
  Index dim_ = 0;
  double lipschitz_ = 0.0;
  mutable std::once_flag minimum_once_;
  mutable MinimumReport minimum_;
};

struct LogisticSpec {
  Index workers = 4;
  Index dimension = 3;
  Index samples_per_worker = 50;
  /// 0 = every worker has balanced labels; 1 = worker label rates sweep 0..1.
  double label_skew = 0.8;
  double lambda = 0.01;
  std::uint64_t seed = 7;
};

/// Deterministic synthetic binary classification data. Worker j draws labels
/// with P(y = 1) = 0.5 + skew * (j/(n-1) - 0.5); features are a label-signed
/// mean direction plus standard normal noise.
std::shared_ptr<const LogisticObjective> make_logistic(const LogisticSpec& spec,
                                                       std::string name = "logistic");

/// Registered fixtures:
///   QF1            d=1, anchors [0,0,2,2]
///   QF-pair        d=1, anchors [-1,1]
///   QF-identical   d=1, four workers with anchor 1
///   QF-zero        d=1, four workers with anchor 0
///   QF6            d=1, anchors [0,0,0,2,2,2]
///   QF8            d=1, anchors [0,0,0,0,2,2,2,2]
///   QF12           d=2, twelve seeded anchors
///   QF10-noniid    d=10, ten workers, shared curvature 1, label-shifted anchors
///   QF10-hetero    QF10-noniid anchors with per-worker curvatures in [0.1, 1]
/// Throws UnknownFixture.
QuadraticObjective make_quadratic_fixture(const std::string& name);

/// Any registered fixture: the quadratic ones above plus
///   LG1   four-worker logistic, d=3, skew 0.8, lambda 0.01
///   LG10  ten-worker logistic, d=5, skew 0.9, lambda 0.01
std::shared_ptr<const Objective> make_fixture(const std::string& name);
std::vector<std::string> fixture_names();

/// f* through the objective's minimization oracle. Throws Unsupported.
MinimumReport f_star(const Objective& objective);

struct NoiseModel {
  enum class Kind { exact, gaussian, minibatch };
  Kind kind = Kind::exact;
  double sigma2 = 0.0;  // gaussian only
  Index batch = 1;      // minibatch only

  static NoiseModel exact() { return {}; }
  static NoiseModel gaussian(double sigma2) { return {Kind::gaussian, sigma2, 1}; }
  static NoiseModel minibatch(Index batch) { return {Kind::minibatch, 0.0, batch}; }
};

std::string to_string(NoiseModel::Kind kind);

/// Stochastic gradient g(w, zeta) for worker j at iteration t. Draws are a
/// pure function of (seed, j, t), so samples can be requested concurrently
/// and in any order.
class GradientOracle {
 public:
  GradientOracle(std::shared_ptr<const Objective> objective, NoiseModel noise, std::uint64_t seed);

  void sample(Index j, std::span<const double> w, Index t, std::span<double> out) const;
  Vec sample(Index j, std::span<const double> w, Index t) const;

  const Objective& objective() const { return *objective_; }
  const std::shared_ptr<const Objective>& objective_ptr() const { return objective_; }
  const NoiseModel& noise() const { return noise_; }
  std::uint64_t seed() const { return seed_; }
  /// sigma^2 where it is known exactly (exact: 0, gaussian: sigma2); NaN for minibatch.
  double variance() const;

 private:
  std::shared_ptr<const Objective> objective_;
  NoiseModel noise_;
  std::uint64_t seed_;
};

/// Monte-Carlo estimate of E||g - grad F_j||^2 at w over `draws` iterations.
double estimate_gradient_variance(const GradientOracle& oracle, Index j,
                                  std::span<const double> w, Index draws);

}  // namespace hsgd
