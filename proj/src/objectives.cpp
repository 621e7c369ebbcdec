#include "hsgd/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hsgd/error.hpp"
#include "hsgd/rng.hpp"

namespace hsgd {

namespace {

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (Index k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void check_rows(const std::vector<Vec>& rows, const char* what) {
  if (rows.empty()) throw InvalidArgument(std::string(what) + " must be non-empty");
  const Index d = rows.front().size();
  if (d == 0) throw InvalidArgument(std::string(what) + " rows must be non-empty");
  for (const auto& r : rows)
    if (r.size() != d) throw InvalidArgument(std::string(what) + " rows differ in length");
}

}  // namespace

// --- Objective defaults ------------------------------------------------------

MinimumReport Objective::minimum() const {
  throw Unsupported("objective '" + name() + "' has no minimization oracle");
}

Index Objective::sample_count(Index) const {
  throw Unsupported("objective '" + name() + "' has no per-sample data");
}

void Objective::sample_gradient(Index, Index, std::span<const double>, std::span<double>) const {
  throw Unsupported("objective '" + name() + "' has no per-sample data");
}

double Objective::loss(std::span<const double> w) const {
  double s = 0.0;
  for (Index j = 0; j < worker_count(); ++j) s += worker_loss(j, w);
  return s / static_cast<double>(worker_count());
}

void Objective::gradient(std::span<const double> w, std::span<double> out) const {
  const Index d = dimension();
  Vec g(d);
  std::fill(out.begin(), out.end(), 0.0);
  for (Index j = 0; j < worker_count(); ++j) {
    worker_gradient(j, w, g);
    for (Index k = 0; k < d; ++k) out[k] += g[k];
  }
  const double n = static_cast<double>(worker_count());
  for (Index k = 0; k < d; ++k) out[k] /= n;
}

Vec Objective::gradient(std::span<const double> w) const {
  Vec out(dimension());
  gradient(w, out);
  return out;
}

Vec Objective::worker_gradient(Index j, std::span<const double> w) const {
  Vec out(dimension());
  worker_gradient(j, w, out);
  return out;
}

// --- quadratic ---------------------------------------------------------------

QuadraticObjective::QuadraticObjective(std::string name, std::vector<Vec> anchors,
                                       double curvature)
    : name_(std::move(name)), anchors_(std::move(anchors)), scale_(curvature) {
  check_rows(anchors_, "anchors");
  if (!(curvature > 0.0)) throw InvalidArgument("curvature must be > 0");
  dim_ = anchors_.front().size();
  lipschitz_ = curvature;
}

QuadraticObjective::QuadraticObjective(std::string name, std::vector<Vec> anchors,
                                       std::vector<Vec> curvatures)
    : name_(std::move(name)), anchors_(std::move(anchors)), curvatures_(std::move(curvatures)) {
  check_rows(anchors_, "anchors");
  check_rows(curvatures_, "curvatures");
  if (curvatures_.size() != anchors_.size() || curvatures_.front().size() != anchors_.front().size())
    throw InvalidArgument("curvatures must match the anchors' shape");
  dim_ = anchors_.front().size();
  lipschitz_ = 0.0;
  for (const auto& row : curvatures_)
    for (double c : row) {
      if (!(c > 0.0)) throw InvalidArgument("curvatures must be > 0");
      lipschitz_ = std::max(lipschitz_, c);
    }
}

double QuadraticObjective::worker_loss(Index j, std::span<const double> w) const {
  const Vec& a = anchors_[j];
  double s = 0.0;
  for (Index k = 0; k < dim_; ++k) {
    const double r = w[k] - a[k];
    s += curvature(j, k) * r * r;
  }
  return 0.5 * s;
}

void QuadraticObjective::worker_gradient(Index j, std::span<const double> w,
                                         std::span<double> out) const {
  const Vec& a = anchors_[j];
  for (Index k = 0; k < dim_; ++k) out[k] = curvature(j, k) * (w[k] - a[k]);
}

MinimumReport QuadraticObjective::minimum() const {
  // Coordinate-wise: w*_k = sum_j c_jk a_jk / sum_j c_jk (the anchor mean for shared curvature).
  MinimumReport r;
  r.minimizer.assign(dim_, 0.0);
  for (Index k = 0; k < dim_; ++k) {
    double num = 0.0, den = 0.0;
    for (Index j = 0; j < anchors_.size(); ++j) {
      num += curvature(j, k) * anchors_[j][k];
      den += curvature(j, k);
    }
    r.minimizer[k] = num / den;
  }
  r.value = loss(r.minimizer);
  r.grad_norm = std::sqrt(squared_norm(gradient(r.minimizer)));
  r.exact = true;
  return r;
}

Vec QuadraticObjective::similarity_keys() const {
  Vec keys(anchors_.size());
  for (Index j = 0; j < anchors_.size(); ++j)
    keys[j] = std::accumulate(anchors_[j].begin(), anchors_[j].end(), 0.0) /
              static_cast<double>(dim_);
  return keys;
}

// --- logistic ----------------------------------------------------------------

LogisticObjective::LogisticObjective(std::string name, std::vector<LogisticDataset> data,
                                     double lambda)
    : name_(std::move(name)), data_(std::move(data)), lambda_(lambda) {
  if (data_.empty()) throw InvalidArgument("logistic objective needs at least one worker");
  if (lambda < 0.0) throw InvalidArgument("lambda must be >= 0");
  dim_ = data_.front().features.empty() ? 0 : data_.front().features.front().size();
  if (dim_ == 0) throw InvalidArgument("logistic datasets must be non-empty");
  double max_sq = 0.0;
  for (const auto& ds : data_) {
    if (ds.features.empty() || ds.features.size() != ds.labels.size())
      throw InvalidArgument("every worker needs matching, non-empty features and labels");
    for (const auto& x : ds.features) {
      if (x.size() != dim_) throw InvalidArgument("feature rows differ in length");
      max_sq = std::max(max_sq, squared_norm(x));
    }
  }
  lipschitz_ = lambda_ + 0.25 * max_sq;
}

double LogisticObjective::worker_loss(Index j, std::span<const double> w) const {
  const auto& ds = data_[j];
  double s = 0.0;
  for (Index i = 0; i < ds.labels.size(); ++i) {
    const double z = dot(ds.features[i], w);
    // log(1 + e^z) computed stably.
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    s += softplus - ds.labels[i] * z;
  }
  return s / static_cast<double>(ds.labels.size()) + 0.5 * lambda_ * squared_norm(w);
}

void LogisticObjective::sample_gradient(Index j, Index sample, std::span<const double> w,
                                        std::span<double> out) const {
  const auto& ds = data_[j];
  const auto& x = ds.features.at(sample);
  const double p = 1.0 / (1.0 + std::exp(-dot(x, w)));
  const double r = p - ds.labels[sample];
  for (Index k = 0; k < dim_; ++k) out[k] = r * x[k] + lambda_ * w[k];
}

void LogisticObjective::worker_gradient(Index j, std::span<const double> w,
                                        std::span<double> out) const {
  const auto& ds = data_[j];
  std::fill(out.begin(), out.end(), 0.0);
  for (Index i = 0; i < ds.labels.size(); ++i) {
    const auto& x = ds.features[i];
    const double p = 1.0 / (1.0 + std::exp(-dot(x, w)));
    const double r = p - ds.labels[i];
    for (Index k = 0; k < dim_; ++k) out[k] += r * x[k];
  }
  const double m = static_cast<double>(ds.labels.size());
  for (Index k = 0; k < dim_; ++k) out[k] = out[k] / m + lambda_ * w[k];
}

MinimumReport LogisticObjective::minimum() const {
  std::call_once(minimum_once_, [this] {
    constexpr Index kMaxSteps = 100'000;
    constexpr double kTol = 1e-10;
    const double step = 1.0 / lipschitz_;
    Vec w(dim_, 0.0), g(dim_);
    Index it = 0;
    double gn = 0.0;
    for (;; ++it) {
      gradient(w, g);
      gn = std::sqrt(squared_norm(g));
      if (gn <= kTol || it == kMaxSteps) break;
      for (Index k = 0; k < dim_; ++k) w[k] -= step * g[k];
    }
    minimum_.value = loss(w);
    minimum_.grad_norm = gn;
    minimum_.iterations = it;
    minimum_.exact = false;
    minimum_.minimizer = w;
  });
  return minimum_;
}

Vec LogisticObjective::similarity_keys() const {
  Vec keys(data_.size());
  for (Index j = 0; j < data_.size(); ++j)
    keys[j] = std::accumulate(data_[j].labels.begin(), data_[j].labels.end(), 0.0) /
              static_cast<double>(data_[j].labels.size());
  return keys;
}

std::shared_ptr<const LogisticObjective> make_logistic(const LogisticSpec& spec, std::string name) {
  if (spec.workers == 0 || spec.dimension == 0 || spec.samples_per_worker == 0)
    throw InvalidArgument("logistic spec sizes must be >= 1");
  CounterRng dir_rng(spec.seed, streams::kDataset, 0);
  Vec mean_dir(spec.dimension);
  for (double& v : mean_dir) v = dir_rng.normal();
  const double norm = std::sqrt(squared_norm(mean_dir));
  for (double& v : mean_dir) v /= norm;

  std::vector<LogisticDataset> data(spec.workers);
  for (Index j = 0; j < spec.workers; ++j) {
    CounterRng rng(spec.seed, substream(streams::kDataset, j + 1), 0);
    const double frac = spec.workers > 1 ? static_cast<double>(j) / (spec.workers - 1) : 0.5;
    const double p_pos = 0.5 + spec.label_skew * (frac - 0.5);
    auto& ds = data[j];
    for (Index i = 0; i < spec.samples_per_worker; ++i) {
      const double y = rng.uniform() < p_pos ? 1.0 : 0.0;
      Vec x(spec.dimension);
      for (Index k = 0; k < spec.dimension; ++k)
        x[k] = (y > 0.5 ? 1.0 : -1.0) * mean_dir[k] + rng.normal();
      ds.features.push_back(std::move(x));
      ds.labels.push_back(y);
    }
  }
  return std::make_shared<LogisticObjective>(std::move(name), std::move(data), spec.lambda);
}

// --- fixtures ----------------------------------------------------------------

namespace {

std::vector<Vec> scalar_anchors(std::initializer_list<double> values) {
  std::vector<Vec> rows;
  for (double v : values) rows.push_back(Vec{v});
  return rows;
}

std::vector<Vec> noniid10_anchors() {
  // Five "classes" of two workers each; class means are well separated.
  constexpr Index kWorkers = 10, kDim = 10, kClasses = 5;
  CounterRng rng(20220601, streams::kDataset, 0);
  std::vector<Vec> class_mean(kClasses, Vec(kDim));
  for (auto& m : class_mean)
    for (double& v : m) v = 2.0 * rng.normal();
  std::vector<Vec> anchors(kWorkers, Vec(kDim));
  for (Index j = 0; j < kWorkers; ++j)
    for (Index k = 0; k < kDim; ++k) anchors[j][k] = class_mean[j / 2][k] + 0.5 * rng.normal();
  return anchors;
}

}  // namespace

QuadraticObjective make_quadratic_fixture(const std::string& name) {
  if (name == "QF1") return {name, scalar_anchors({0, 0, 2, 2})};
  if (name == "QF-pair") return {name, scalar_anchors({-1, 1})};
  if (name == "QF-identical") return {name, scalar_anchors({1, 1, 1, 1})};
  if (name == "QF-zero") return {name, scalar_anchors({0, 0, 0, 0})};
  if (name == "QF6") return {name, scalar_anchors({0, 0, 0, 2, 2, 2})};
  if (name == "QF8") return {name, scalar_anchors({0, 0, 0, 0, 2, 2, 2, 2})};
  if (name == "QF12") {
    CounterRng rng(12, streams::kDataset, 0);
    std::vector<Vec> anchors(12, Vec(2));
    for (auto& a : anchors)
      for (double& v : a) v = rng.normal();
    return {name, std::move(anchors)};
  }
  if (name == "QF10-noniid") return {name, noniid10_anchors()};
  if (name == "QF10-hetero") {
    auto anchors = noniid10_anchors();
    CounterRng rng(20220602, streams::kDataset, 0);
    std::vector<Vec> curv(anchors.size(), Vec(anchors.front().size()));
    for (auto& row : curv)
      for (double& c : row) c = 0.1 + 0.9 * rng.uniform();
    return {name, std::move(anchors), std::move(curv)};
  }
  throw UnknownFixture("unknown fixture '" + name + "'");
}

std::shared_ptr<const Objective> make_fixture(const std::string& name) {
  if (name == "LG1") return make_logistic({4, 3, 50, 0.8, 0.01, 7}, name);
  if (name == "LG10") return make_logistic({10, 5, 40, 0.9, 0.01, 11}, name);
  return std::make_shared<QuadraticObjective>(make_quadratic_fixture(name));
}

std::vector<std::string> fixture_names() {
  return {"QF1", "QF-pair", "QF-identical", "QF-zero", "QF6", "QF8", "QF12",
          "QF10-noniid", "QF10-hetero", "LG1", "LG10"};
}

MinimumReport f_star(const Objective& objective) { return objective.minimum(); }

// --- gradient oracle -------------------------------------------------------------

std::string to_string(NoiseModel::Kind kind) {
  switch (kind) {
    case NoiseModel::Kind::exact: return "exact";
    case NoiseModel::Kind::gaussian: return "gaussian";
    case NoiseModel::Kind::minibatch: return "minibatch";
  }
  return "unknown";
}

GradientOracle::GradientOracle(std::shared_ptr<const Objective> objective, NoiseModel noise,
                               std::uint64_t seed)
    : objective_(std::move(objective)), noise_(noise), seed_(seed) {
  if (!objective_) throw InvalidArgument("oracle needs an objective");
  if (noise_.kind == NoiseModel::Kind::gaussian && !(noise_.sigma2 >= 0.0))
    throw InvalidArgument("sigma2 must be >= 0");
  if (noise_.kind == NoiseModel::Kind::minibatch) {
    if (noise_.batch == 0) throw InvalidArgument("batch size must be >= 1");
    (void)objective_->sample_count(0);  // throws Unsupported for objectives without samples
  }
}

void GradientOracle::sample(Index j, std::span<const double> w, Index t,
                            std::span<double> out) const {
  const Index d = objective_->dimension();
  switch (noise_.kind) {
    case NoiseModel::Kind::exact:
      objective_->worker_gradient(j, w, out);
      return;
    case NoiseModel::Kind::gaussian: {
      objective_->worker_gradient(j, w, out);
      if (noise_.sigma2 == 0.0) return;
      const double sd = std::sqrt(noise_.sigma2 / static_cast<double>(d));
      CounterRng rng(seed_, substream(streams::kGradientNoise, j), t);
      for (Index k = 0; k < d; ++k) out[k] += sd * rng.normal();
      return;
    }
    case NoiseModel::Kind::minibatch: {
      CounterRng rng(seed_, substream(streams::kMinibatch, j), t);
      const Index m = objective_->sample_count(j);
      Vec g(d);
      std::fill(out.begin(), out.end(), 0.0);
      for (Index b = 0; b < noise_.batch; ++b) {
        objective_->sample_gradient(j, rng.below(m), w, g);
        for (Index k = 0; k < d; ++k) out[k] += g[k];
      }
      for (Index k = 0; k < d; ++k) out[k] /= static_cast<double>(noise_.batch);
      return;
    }
  }
}

Vec GradientOracle::sample(Index j, std::span<const double> w, Index t) const {
  Vec out(objective_->dimension());
  sample(j, w, t, out);
  return out;
}

double GradientOracle::variance() const {
  switch (noise_.kind) {
    case NoiseModel::Kind::exact: return 0.0;
    case NoiseModel::Kind::gaussian: return noise_.sigma2;
    case NoiseModel::Kind::minibatch: return std::numeric_limits<double>::quiet_NaN();
  }
  return 0.0;
}

double estimate_gradient_variance(const GradientOracle& oracle, Index j,
                                  std::span<const double> w, Index draws) {
  if (draws == 0) throw InvalidArgument("draws must be >= 1");
  const Vec full = oracle.objective().worker_gradient(j, w);
  Vec g(full.size());
  double s = 0.0;
  for (Index t = 0; t < draws; ++t) {
    oracle.sample(j, w, t, g);
    for (Index k = 0; k < g.size(); ++k) s += (g[k] - full[k]) * (g[k] - full[k]);
  }
  return s / static_cast<double>(draws);
}

}  // namespace hsgd
