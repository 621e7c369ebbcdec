#include "hsgd/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "hsgd/error.hpp"

namespace hsgd {

namespace {

[[noreturn]] void fail(const std::string& origin, const YAML::Node& node, const std::string& field,
                       const std::string& message) {
  std::ostringstream os;
  os << origin;
  if (node.IsDefined() && node.Mark().line >= 0) os << ":" << node.Mark().line + 1;
  os << ": field '" << field << "': " << message;
  throw ConfigError(os.str());
}

// A mapping section whose keys are all consumed by the reader; leftovers are
// reported as unknown fields.
class Section {
 public:
  Section(const YAML::Node& node, std::string path, const std::string& origin)
      : node_(node), path_(std::move(path)), origin_(origin) {
    if (!node_.IsMap()) fail(origin_, node_, path_, "expected a mapping");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return static_cast<bool>(node_[key]);
  }

  YAML::Node get(const std::string& key) {
    seen_.insert(key);
    return node_[key];
  }

  template <class T>
  T required(const std::string& key) {
    if (!has(key)) fail(origin_, node_, field(key), "missing");
    return as<T>(node_[key], field(key));
  }

  template <class T>
  T optional(const std::string& key, T fallback) {
    return has(key) ? as<T>(node_[key], field(key)) : fallback;
  }

  template <class T>
  std::vector<T> list(const std::string& key) {
    if (!has(key)) return {};
    const YAML::Node n = node_[key];
    if (!n.IsSequence()) fail(origin_, n, field(key), "expected a list");
    std::vector<T> out;
    for (std::size_t i = 0; i < n.size(); ++i)
      out.push_back(as<T>(n[i], field(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      const std::string key = it->first.as<std::string>();
      if (!seen_.count(key)) fail(origin_, it->first, field(key), "unknown field");
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const std::string& origin() const { return origin_; }
  const YAML::Node& node() const { return node_; }

  template <class T>
  T as(const YAML::Node& n, const std::string& name) const {
    if (!n.IsScalar()) fail(origin_, n, name, "expected a scalar");
    if constexpr (std::is_same_v<T, Index> || std::is_same_v<T, std::uint64_t>) {
      // Accept 1e5-style literals when they are exact integers.
      double v = 0.0;
      try {
        v = n.as<double>();
      } catch (const YAML::Exception&) {
        fail(origin_, n, name, "expected a nonnegative integer, got '" + n.Scalar() + "'");
      }
      if (!(v >= 0.0) || v != static_cast<double>(static_cast<std::uint64_t>(v)))
        fail(origin_, n, name, "expected a nonnegative integer, got '" + n.Scalar() + "'");
      return static_cast<T>(v);
    } else {
      try {
        return n.as<T>();
      } catch (const YAML::Exception&) {
        fail(origin_, n, name, "cannot parse '" + n.Scalar() + "'");
      }
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  const std::string& origin_;
  std::set<std::string> seen_;
};

TopologySpec parse_topology(Section& parent, const std::string& key) {
  if (!parent.has(key)) fail(parent.origin(), parent.node(), parent.field(key), "missing");
  Section s(parent.get(key), parent.field(key), parent.origin());
  TopologySpec t;
  t.kind = s.required<std::string>("kind");
  if (t.kind == "local") {
    t.workers = s.required<Index>("workers");
    t.period = s.required<Index>("period");
  } else if (t.kind == "two-level") {
    t.workers = s.optional<Index>("workers", 0);
    t.groups = s.optional<Index>("groups", 0);
    t.group_sizes = s.list<Index>("group_sizes");
    t.grouping = s.optional<std::string>("grouping", "contiguous");
    static const std::set<std::string> groupings = {"contiguous", "uniform_random", "group_iid",
                                                   "group_non_iid"};
    if (!groupings.count(t.grouping))
      fail(s.origin(), s.get("grouping"), s.field("grouping"), "unknown grouping '" + t.grouping + "'");
    t.global_period = s.required<Index>("global_period");
    t.local_period = s.optional<Index>("local_period", 0);
    t.local_periods = s.list<Index>("local_periods");
    if (s.has("grouping_seed")) t.grouping_seed = s.required<std::uint64_t>("grouping_seed");
    if (t.group_sizes.empty() && (t.workers == 0 || t.groups == 0))
      fail(s.origin(), s.node(), s.field("groups"), "give group_sizes or both workers and groups");
    if (t.local_period == 0 && t.local_periods.empty())
      fail(s.origin(), s.node(), s.field("local_period"), "missing");
  } else if (t.kind == "multi-level") {
    t.branching = s.list<Index>("branching");
    t.periods = s.list<Index>("periods");
    if (t.branching.empty()) fail(s.origin(), s.node(), s.field("branching"), "missing");
  } else {
    fail(s.origin(), s.get("kind"), s.field("kind"), "unknown topology kind '" + t.kind + "'");
  }
  s.finish();
  return t;
}

ObjectiveSpec parse_objective(Section& parent, const std::string& key) {
  ObjectiveSpec o;
  if (!parent.has(key)) fail(parent.origin(), parent.node(), parent.field(key), "missing");
  const YAML::Node n = parent.get(key);
  if (n.IsScalar()) {
    o.fixture = n.as<std::string>();
    const auto names = fixture_names();
    if (std::find(names.begin(), names.end(), o.fixture) == names.end())
      fail(parent.origin(), n, parent.field(key), "unknown fixture '" + o.fixture + "'");
    return o;
  }
  Section s(n, parent.field(key), parent.origin());
  o.fixture = s.required<std::string>("kind");
  if (o.fixture != "logistic")
    fail(s.origin(), s.get("kind"), s.field("kind"), "only 'logistic' may be configured inline");
  o.logistic.workers = s.optional<Index>("workers", o.logistic.workers);
  o.logistic.dimension = s.optional<Index>("dimension", o.logistic.dimension);
  o.logistic.samples_per_worker = s.optional<Index>("samples_per_worker", o.logistic.samples_per_worker);
  o.logistic.label_skew = s.optional<double>("label_skew", o.logistic.label_skew);
  o.logistic.lambda = s.optional<double>("lambda", o.logistic.lambda);
  o.logistic.seed = s.optional<std::uint64_t>("seed", o.logistic.seed);
  s.finish();
  return o;
}

NoiseModel parse_noise(Section& parent, const std::string& key) {
  if (!parent.has(key)) return NoiseModel::exact();
  const YAML::Node n = parent.get(key);
  if (n.IsScalar()) {
    if (n.as<std::string>() == "exact") return NoiseModel::exact();
    fail(parent.origin(), n, parent.field(key), "scalar noise must be 'exact'");
  }
  Section s(n, parent.field(key), parent.origin());
  const auto kind = s.required<std::string>("kind");
  NoiseModel m;
  if (kind == "exact") {
    m = NoiseModel::exact();
  } else if (kind == "gaussian") {
    m = NoiseModel::gaussian(s.required<double>("sigma2"));
    if (m.sigma2 < 0.0) fail(s.origin(), s.get("sigma2"), s.field("sigma2"), "must be >= 0");
  } else if (kind == "minibatch") {
    m = NoiseModel::minibatch(s.required<Index>("batch"));
    if (m.batch == 0) fail(s.origin(), s.get("batch"), s.field("batch"), "must be >= 1");
  } else {
    fail(s.origin(), s.get("kind"), s.field("kind"), "unknown noise kind '" + kind + "'");
  }
  s.finish();
  return m;
}

CommModel parse_comm(Section& parent, const std::string& key) {
  const YAML::Node n = parent.get(key);
  if (n.IsScalar()) {
    try {
      return builtin_model(n.as<std::string>());
    } catch (const UnknownModel& e) {
      fail(parent.origin(), n, parent.field(key), e.what());
    }
  }
  Section s(n, parent.field(key), parent.origin());
  CommModel m;
  if (s.has("base")) {
    try {
      m = builtin_model(s.required<std::string>("base"));
    } catch (const UnknownModel& e) {
      fail(s.origin(), s.get("base"), s.field("base"), e.what());
    }
  } else {
    m.name = "custom";
  }
  m.name = s.optional<std::string>("name", m.name);
  m.local_latency = s.optional<double>("local", m.local_latency);
  m.global_latency = s.optional<double>("global", m.global_latency);
  if (s.has("levels")) m.level_latencies = s.list<double>("levels");
  m.compute_per_iteration = s.optional<double>("compute", m.compute_per_iteration);
  m.jitter_sd = s.optional<double>("jitter", m.jitter_sd);
  m.jitter_seed = s.optional<std::uint64_t>("jitter_seed", m.jitter_seed);
  s.finish();
  try {
    m.validate();
  } catch (const InvalidArgument& e) {
    fail(s.origin(), n, parent.field(key), e.what());
  }
  return m;
}

void parse_run_fields(Section& s, RunSpec& r) {
  if (s.has("topology")) r.topology = parse_topology(s, "topology");
  if (s.has("objective")) r.objective = parse_objective(s, "objective");
  if (s.has("noise")) r.noise = parse_noise(s, "noise");
  if (s.has("gamma")) r.gamma = s.required<double>("gamma");
  if (s.has("gamma_scale")) r.gamma_scale = s.required<double>("gamma_scale");
  if (r.gamma && r.gamma_scale)
    fail(s.origin(), s.node(), s.field("gamma"), "give gamma or gamma_scale, not both");
  r.horizon = s.optional<Index>("horizon", r.horizon);
  if (s.has("initial")) {
    const YAML::Node n = s.get("initial");
    if (n.IsScalar()) {
      r.initial_fill = s.required<double>("initial");
      r.initial.clear();
    } else {
      r.initial = s.list<double>("initial");
      r.initial_fill.reset();
    }
  }
  if (s.has("participation")) {
    const double rho = s.required<double>("participation");
    if (!(rho > 0.0 && rho <= 1.0))
      fail(s.origin(), s.get("participation"), s.field("participation"), "must lie in (0, 1]");
    r.participation = rho;
  }
  if (s.has("nonparticipants")) {
    const auto v = s.required<std::string>("nonparticipants");
    if (v == "frozen") r.nonparticipants = NonParticipantMode::frozen;
    else if (v == "step") r.nonparticipants = NonParticipantMode::step;
    else fail(s.origin(), s.get("nonparticipants"), s.field("nonparticipants"), "expected frozen or step");
  }
  if (s.has("lr_policy")) {
    const auto v = s.required<std::string>("lr_policy");
    if (v == "enforce") r.lr_policy = LrPolicy::enforce;
    else if (v == "warn") r.lr_policy = LrPolicy::warn;
    else fail(s.origin(), s.get("lr_policy"), s.field("lr_policy"), "expected enforce or warn");
  }
  r.metric_stride = s.optional<Index>("metric_stride", r.metric_stride);
  if (r.metric_stride == 0) fail(s.origin(), s.get("metric_stride"), s.field("metric_stride"), "must be >= 1");
  if (s.has("execution")) {
    const auto v = s.required<std::string>("execution");
    if (v == "serial") r.execution = Execution::serial;
    else if (v == "parallel") r.execution = Execution::parallel;
    else fail(s.origin(), s.get("execution"), s.field("execution"), "expected serial or parallel");
  }
}

BoundsSpec parse_bounds(Section& parent, const std::string& key) {
  Section s(parent.get(key), parent.field(key), parent.origin());
  BoundsSpec b;
  b.lipschitz = s.optional<double>("L", 1.0);
  b.sigma2 = s.optional<double>("sigma2", 0.0);
  b.gamma = s.required<double>("gamma");
  b.horizon = s.required<double>("T");
  b.gap = s.optional<double>("gap", 0.0);
  if (s.has("theorem1")) {
    Section t(s.get("theorem1"), s.field("theorem1"), s.origin());
    BoundsSpec::Theorem1 v;
    v.group_sizes = t.list<Index>("group_sizes");
    v.local_periods = t.list<double>("local_periods");
    v.global_period = t.required<double>("G");
    v.upward = t.optional<double>("upward", 0.0);
    v.downward = t.list<double>("downward");
    t.finish();
    b.theorem1 = v;
  }
  if (s.has("corollary1")) {
    Section t(s.get("corollary1"), s.field("corollary1"), s.origin());
    BoundsSpec::Corollary1 v;
    v.n = t.required<Index>("n");
    v.period = t.required<double>("P");
    v.eps2 = t.optional<double>("eps2", 0.0);
    t.finish();
    b.corollary1 = v;
  }
  if (s.has("theorem2")) {
    Section t(s.get("theorem2"), s.field("theorem2"), s.origin());
    BoundsSpec::Theorem2 v;
    v.n = t.required<Index>("n");
    v.groups = t.required<Index>("N");
    v.global_period = t.required<double>("G");
    v.local_period = t.required<double>("I");
    v.eps2 = t.optional<double>("eps2", 0.0);
    t.finish();
    b.theorem2 = v;
  }
  if (s.has("theorem3")) {
    Section t(s.get("theorem3"), s.field("theorem3"), s.origin());
    BoundsSpec::Theorem3 v;
    v.branching = t.list<Index>("branching");
    v.periods = t.list<Index>("periods");
    v.eps2 = t.optional<double>("eps2", 0.0);
    t.finish();
    b.theorem3 = v;
  }
  if (s.has("theoremD1")) {
    Section t(s.get("theoremD1"), s.field("theoremD1"), s.origin());
    BoundsSpec::TheoremD1 v;
    v.branching = t.list<Index>("branching");
    v.periods = t.list<Index>("periods");
    v.upward = t.list<double>("upward");
    v.downward = t.list<double>("downward");
    t.finish();
    b.theorem_d1 = v;
  }
  if (s.has("remark5")) {
    Section t(s.get("remark5"), s.field("remark5"), s.origin());
    BoundsSpec::Remark5 v;
    v.n = t.required<Index>("n");
    v.groups = t.required<Index>("N");
    v.global_period = t.required<Index>("G");
    v.local_period = t.required<Index>("I");
    v.l = t.optional<double>("l", 1.0);
    v.q = t.optional<double>("q", 1.0);
    t.finish();
    b.remark5 = v;
  }
  s.finish();
  return b;
}

YAML::Node load_yaml(const std::string& text, const std::string& origin) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    std::ostringstream os;
    os << origin << ":" << e.mark.line + 1 << ": " << e.msg;
    throw ConfigError(os.str());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes = {"period",     "groups",      "global_period",
                                                "local_period", "gamma_scale", "horizon"};
  return axes;
}

ExperimentSpec parse_experiment(const std::string& text, const std::string& origin) {
  const YAML::Node root = load_yaml(text, origin);
  if (!root.IsDefined() || root.IsNull()) throw ConfigError(origin + ": empty document");
  Section top(root, "", origin);
  ExperimentSpec spec;
  spec.name = top.optional<std::string>("name", spec.name);
  spec.output = top.optional<std::string>("output", spec.output);
  spec.seed = top.optional<std::uint64_t>("seed", spec.seed);
  spec.replicates = top.optional<Index>("replicates", spec.replicates);
  if (spec.replicates == 0) fail(origin, top.get("replicates"), "replicates", "must be >= 1");
  if (top.has("comm")) spec.comm = parse_comm(top, "comm");
  if (top.has("target_loss")) spec.target_loss = top.required<double>("target_loss");
  spec.verify = top.list<std::string>("verify");
  if (top.has("bounds")) spec.bounds = parse_bounds(top, "bounds");

  RunSpec defaults;
  if (top.has("defaults")) {
    Section d(top.get("defaults"), "defaults", origin);
    parse_run_fields(d, defaults);
    d.finish();
  }

  if (top.has("sweep")) {
    Section sw(top.get("sweep"), "sweep", origin);
    for (auto it = sw.node().begin(); it != sw.node().end(); ++it) {
      const std::string axis = it->first.as<std::string>();
      const auto& axes = sweep_axes();
      if (std::find(axes.begin(), axes.end(), axis) == axes.end())
        fail(origin, it->first, "sweep." + axis, "unknown sweep axis");
      auto values = sw.list<double>(axis);
      if (values.empty()) fail(origin, it->second, "sweep." + axis, "needs at least one value");
      spec.sweep.emplace_back(axis, std::move(values));
    }
    sw.finish();
  }

  if (top.has("runs")) {
    const YAML::Node runs = top.get("runs");
    if (!runs.IsSequence()) fail(origin, runs, "runs", "expected a list");
    std::set<std::string> names;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      Section s(runs[i], "runs[" + std::to_string(i) + "]", origin);
      RunSpec r = defaults;
      r.line = runs[i].Mark().line + 1;
      r.name = s.required<std::string>("name");
      if (!names.insert(r.name).second) fail(origin, s.get("name"), s.field("name"), "duplicate run name");
      parse_run_fields(s, r);
      s.finish();
      if (r.topology.kind.empty()) fail(origin, runs[i], s.field("topology"), "missing");
      if (r.objective.fixture.empty()) fail(origin, runs[i], s.field("objective"), "missing");
      if (!r.gamma && !r.gamma_scale) fail(origin, runs[i], s.field("gamma"), "give gamma or gamma_scale");
      spec.runs.push_back(std::move(r));
    }
  }
  top.finish();
  if (spec.runs.empty() && !spec.bounds && spec.verify.empty())
    fail(origin, root, "runs", "no runs to execute");
  return spec;
}

ExperimentSpec load_experiment(const std::string& path) { return parse_experiment(read_file(path), path); }

BoundsSpec load_bounds(const std::string& path) {
  const ExperimentSpec spec = load_experiment(path);
  if (!spec.bounds) throw ConfigError(path + ": field 'bounds': missing");
  return *spec.bounds;
}

}  // namespace hsgd
