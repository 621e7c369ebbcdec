#include "hsgd/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hsgd/bounds.hpp"
#include "hsgd/divergence.hpp"
#include "hsgd/error.hpp"

namespace hsgd {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

bool axis_applies(const RunSpec& r, const std::string& axis) {
  const std::string& kind = r.topology.kind;
  if (axis == "period") return kind == "local";
  if (axis == "groups") return kind == "two-level" && r.topology.group_sizes.empty();
  if (axis == "global_period") return kind == "two-level";
  if (axis == "local_period") return kind == "two-level" && r.topology.local_periods.empty();
  if (axis == "gamma_scale") return !r.gamma;
  return axis == "horizon";
}

Index as_index(double v, const std::string& axis) {
  if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("sweep." + axis + ": value " + short_num(v) + " is not a positive integer");
  return static_cast<Index>(v);
}

void apply_axis(RunSpec& r, const std::string& axis, double v) {
  if (axis == "period") r.topology.period = as_index(v, axis);
  else if (axis == "groups") r.topology.groups = as_index(v, axis);
  else if (axis == "global_period") r.topology.global_period = as_index(v, axis);
  else if (axis == "local_period") r.topology.local_period = as_index(v, axis);
  else if (axis == "gamma_scale") r.gamma_scale = v;
  else if (axis == "horizon") r.horizon = as_index(v, axis);
}

std::string where(const RunSpec& r) {
  std::ostringstream os;
  os << "line " << r.line << ": run '" << r.name << "'";
  return os.str();
}

std::shared_ptr<const Objective> resolve_objective(const ObjectiveSpec& o) {
  if (o.fixture == "logistic") return make_logistic(o.logistic);
  return make_fixture(o.fixture);
}

Topology resolve_topology(const TopologySpec& t, const Objective& objective, std::uint64_t grouping_seed) {
  if (t.kind == "local") {
    const std::vector<Index> sizes = {t.workers};
    const std::vector<Index> periods = {t.period};
    return build_two_level(sizes, periods, t.period);
  }
  if (t.kind == "multi-level") return build_multi_level(t.branching, t.periods);

  std::vector<Index> sizes = t.group_sizes;
  if (sizes.empty()) {
    if (t.workers % t.groups != 0)
      throw DivisibilityError("groups=" + std::to_string(t.groups) + " must divide workers=" +
                              std::to_string(t.workers));
    sizes.assign(t.groups, t.workers / t.groups);
  }
  std::vector<Index> local = t.local_periods;
  if (local.empty()) local.assign(sizes.size(), t.local_period);
  if (t.grouping == "contiguous") return build_two_level(sizes, local, t.global_period);

  Index n = 0;
  for (Index s : sizes) n += s;
  for (Index s : sizes)
    if (s != sizes.front()) throw InvalidArgument("grouping '" + t.grouping + "' needs equal group sizes");
  const Index N = sizes.size();
  Grouping g;
  if (t.grouping == "uniform_random") {
    g = uniform_random_grouping(n, N, t.grouping_seed.value_or(grouping_seed));
  } else {
    const Vec keys = objective.similarity_keys();
    g = key_grouping(keys, N, t.grouping == "group_iid" ? GroupingOrigin::group_iid
                                                        : GroupingOrigin::group_non_iid);
  }
  return two_level_from_grouping(std::move(g), local, t.global_period);
}

nlohmann::json topology_json(const Topology& topology) {
  nlohmann::json j;
  if (const auto* two = std::get_if<TwoLevelTopology>(&topology)) {
    j["kind"] = "two-level";
    j["workers"] = two->worker_count();
    j["global_period"] = two->global_period();
    j["local_periods"] = two->local_periods();
    j["groups"] = two->groups();
    j["grouping"] = to_string(two->grouping().origin);
  } else {
    const auto& ml = std::get<MultiLevelTopology>(topology);
    j["kind"] = "multi-level";
    j["workers"] = ml.worker_count();
    j["branching"] = ml.branching();
    j["periods"] = ml.periods();
  }
  return j;
}

}  // namespace

std::vector<PlannedRun> expand_runs(const ExperimentSpec& spec) {
  std::vector<PlannedRun> out;
  for (const RunSpec& base : spec.runs) {
    std::vector<std::pair<RunSpec, std::string>> variants = {{base, base.name}};
    for (const auto& [axis, values] : spec.sweep) {
      if (!axis_applies(base, axis)) continue;
      std::vector<std::pair<RunSpec, std::string>> next;
      for (const auto& [r, name] : variants)
        for (double v : values) {
          RunSpec copy = r;
          apply_axis(copy, axis, v);
          next.emplace_back(std::move(copy), name + "-" + axis + short_num(v));
        }
      variants = std::move(next);
    }
    for (auto& [r, name] : variants)
      for (Index rep = 0; rep < spec.replicates; ++rep) {
        PlannedRun p;
        p.name = name;
        p.spec = r;
        p.spec.name = name;
        p.replicate = rep;
        p.seed = spec.seed + rep;
        p.file = spec.replicates == 1 ? name + ".csv" : name + "-seed" + std::to_string(p.seed) + ".csv";
        out.push_back(std::move(p));
      }
  }
  return out;
}

RunConfig build_run_config(const RunSpec& run, std::uint64_t seed, std::uint64_t grouping_seed) {
  RunConfig c;
  try {
    c.objective = resolve_objective(run.objective);
    c.topology = resolve_topology(run.topology, *c.objective, grouping_seed);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(where(run) + ": " + e.kind() + ": " + e.what());
  }
  if (worker_count(c.topology) != c.objective->worker_count())
    throw ConfigError(where(run) + ": topology has " + std::to_string(worker_count(c.topology)) +
                      " workers but objective '" + c.objective->name() + "' has " +
                      std::to_string(c.objective->worker_count()));
  if (run.objective.fixture != "logistic" && run.noise.kind == NoiseModel::Kind::minibatch)
    throw ConfigError(where(run) + ": minibatch noise needs a sample-based objective");
  c.noise = run.noise;
  const double lr = lr_max_two_level(static_cast<double>(outer_period(c.topology)), c.objective->lipschitz());
  c.gamma = run.gamma ? *run.gamma : *run.gamma_scale * lr;
  if (!(c.gamma > 0.0)) throw ConfigError(where(run) + ": learning rate must be positive");
  c.horizon = run.horizon;
  if (c.horizon == 0) throw ConfigError(where(run) + ": horizon must be >= 1");
  c.seed = seed;
  const Index d = c.objective->dimension();
  if (run.initial_fill) c.initial.assign(d, *run.initial_fill);
  else if (!run.initial.empty()) {
    if (run.initial.size() != d)
      throw ConfigError(where(run) + ": initial has " + std::to_string(run.initial.size()) +
                        " entries, objective dimension is " + std::to_string(d));
    c.initial = run.initial;
  }
  c.participation = run.participation;
  c.nonparticipants = run.nonparticipants;
  c.lr_policy = run.lr_policy;
  c.metric_stride = run.metric_stride;
  c.execution = run.execution;
  return c;
}

void write_trace_csv(std::ostream& out, const RunTrace& trace, const std::vector<CommPoint>& comm) {
  const Index levels = trace.records.empty() ? 0 : trace.records.front().level_mses.size();
  const bool per_level = levels > 1;
  out << "t,loss,grad_norm_sq,upward_mse,downward_mse";
  if (per_level)
    for (Index l = 1; l <= levels; ++l)
      out << ",level" << l << "_upward_mse,level" << l << "_downward_mse";
  out << ",event,cum_comm_ms,cum_compute_ms\n";
  for (Index k = 0; k < trace.records.size(); ++k) {
    const TraceRecord& r = trace.records[k];
    out << r.t << ',' << num(r.loss) << ',' << num(r.grad_norm_sq) << ',' << num(r.upward_mse) << ','
        << num(r.downward_mse);
    if (per_level)
      for (const auto& m : r.level_mses) out << ',' << num(m.upward) << ',' << num(m.downward);
    out << ',' << event_label(r.event) << ',' << num(comm[k].comm_ms) << ',' << num(comm[k].compute_ms)
        << '\n';
  }
}

ExperimentResult run_experiment(const ExperimentSpec& input, const HarnessOptions& options) {
  ExperimentSpec spec = input;
  if (options.seed) spec.seed = *options.seed;
  if (spec.runs.empty()) throw ConfigError("experiment '" + spec.name + "': field 'runs': no runs to execute");
  const std::vector<PlannedRun> plan = expand_runs(spec);

  ExperimentResult result;
  result.out_dir = options.out_dir.value_or(spec.output);
  std::filesystem::create_directories(result.out_dir);

  nlohmann::json summary;
  summary["experiment"] = spec.name;
  summary["base_seed"] = spec.seed;
  summary["replicates"] = spec.replicates;
  summary["comm_model"] = {{"name", spec.comm.name},
                           {"local_ms", spec.comm.local_latency},
                           {"global_ms", spec.comm.global_latency},
                           {"level_ms", spec.comm.level_latencies},
                           {"compute_ms", spec.comm.compute_per_iteration},
                           {"jitter_sd", spec.comm.jitter_sd},
                           {"jitter_seed", spec.comm.jitter_seed}};
  summary["comm_warnings"] = spec.comm.validate();
  summary["runs"] = nlohmann::json::array();

  for (const PlannedRun& p : plan) {
    RunSpec rs = p.spec;
    if (options.lr_policy) rs.lr_policy = *options.lr_policy;
    const RunConfig config = build_run_config(rs, p.seed, spec.seed);
    const RunTrace trace = run(config);
    const std::vector<CommPoint> comm = account(trace, spec.comm);

    {
      std::ofstream csv(std::filesystem::path(result.out_dir) / p.file, std::ios::binary);
      if (!csv) throw ConfigError("cannot write " + p.file + " in " + result.out_dir);
      write_trace_csv(csv, trace, comm);
    }

    RunSummary s;
    s.name = p.name;
    s.file = p.file;
    s.seed = p.seed;
    s.gamma = config.gamma;
    s.lr_max = trace.lr_max;
    s.final_loss = trace.final_loss;
    s.mean_grad_norm_sq = mean_grad_norm_sq(trace);
    s.max_mean_drift = trace.max_mean_drift;
    s.schedule_mismatch = check_schedule_fidelity(trace, config.topology);
    if (!comm.empty()) s.total_time = comm.back();
    if (spec.target_loss) s.target = time_to_target(trace, spec.comm, TargetMetric::loss, *spec.target_loss);
    s.warnings = trace.warnings;

    nlohmann::json j;
    j["name"] = s.name;
    j["file"] = s.file;
    j["replicate"] = p.replicate;
    j["seed"] = s.seed;
    j["objective"] = config.objective->name();
    j["noise"] = {{"kind", to_string(config.noise.kind)}, {"sigma2", config.noise.sigma2}, {"batch", config.noise.batch}};
    j["topology"] = topology_json(config.topology);
    j["mode"] = trace.mode;
    j["gamma"] = s.gamma;
    j["lr_max"] = s.lr_max;
    j["horizon"] = config.horizon;
    if (config.participation) j["participation"] = *config.participation;
    j["final_loss"] = s.final_loss;
    j["mean_grad_norm_sq"] = s.mean_grad_norm_sq;
    j["max_mean_drift"] = s.max_mean_drift;
    j["schedule_fidelity"] = s.schedule_mismatch ? *s.schedule_mismatch : std::string("ok");
    j["cum_comm_ms"] = s.total_time.comm_ms;
    j["cum_compute_ms"] = s.total_time.compute_ms;
    if (spec.target_loss) {
      if (s.target)
        j["time_to_target"] = {{"iteration", s.target->iteration},
                               {"comm_ms", s.target->time.comm_ms},
                               {"compute_ms", s.target->time.compute_ms}};
      else
        j["time_to_target"] = nullptr;
    }
    j["warnings"] = s.warnings;
    summary["runs"].push_back(std::move(j));
    result.runs.push_back(std::move(s));
  }

  std::ofstream out(std::filesystem::path(result.out_dir) / "summary.json", std::ios::binary);
  out << summary.dump(2) << '\n';
  result.summary = std::move(summary);
  return result;
}

nlohmann::json bounds_report(const BoundsSpec& b) {
  BoundInputs in;
  in.lipschitz = b.lipschitz;
  in.sigma2 = b.sigma2;
  in.gamma = b.gamma;
  in.horizon = b.horizon;
  in.gap = b.gap;
  nlohmann::json j;
  j["inputs"] = {{"L", in.lipschitz}, {"sigma2", in.sigma2}, {"gamma", in.gamma},
                 {"T", in.horizon},   {"gap", in.gap},       {"C", in.constant}};
  if (b.theorem1) {
    const auto& t = *b.theorem1;
    FixedGroupingInputs g{t.group_sizes, t.local_periods, t.global_period, t.upward, t.downward};
    j["theorem1"] = {{"value", theorem1_bound(in, g)},
                     {"lr_max", lr_max_two_level(t.global_period, in.lipschitz)}};
  }
  if (b.corollary1) {
    const auto& t = *b.corollary1;
    j["corollary1"] = {{"value", corollary1_bound(in, t.n, t.period, t.eps2)},
                       {"lr_max", lr_max_two_level(t.period, in.lipschitz)}};
  }
  if (b.theorem2) {
    const auto& t = *b.theorem2;
    nlohmann::json r;
    r["value"] = theorem2_bound(in, t.n, t.groups, t.global_period, t.local_period, t.eps2);
    r["lr_max"] = lr_max_two_level(t.global_period, in.lipschitz);
    r["noise_coefficient"] = theorem2_noise_coefficient(t.n, t.groups, t.global_period, t.local_period);
    r["divergence_coefficient"] =
        theorem2_divergence_coefficient(t.n, t.groups, t.global_period, t.local_period);
    // Local SGD with periods I and G bracket the value.
    BoundInputs lo = in;
    r["local_sgd_period_I"] = corollary1_bound(lo, t.n, t.local_period, t.eps2);
    r["local_sgd_period_G"] = corollary1_bound(lo, t.n, t.global_period, t.eps2);
    const bool integral = t.global_period == std::floor(t.global_period) &&
                          t.local_period == std::floor(t.local_period) && t.local_period >= 1.0 &&
                          t.local_period <= t.global_period;
    if (integral) {
      const SandwichResult s = sandwich_check(t.n, t.groups, static_cast<Index>(t.global_period),
                                              static_cast<Index>(t.local_period));
      r["sandwich"] = {{"noise", {s.noise_lower, s.noise_middle, s.noise_upper}},
                       {"divergence", {s.divergence_lower, s.divergence_middle, s.divergence_upper}},
                       {"holds", s.holds()}};
    }
    j["theorem2"] = std::move(r);
  }
  if (b.theorem3) {
    const auto& t = *b.theorem3;
    nlohmann::json r;
    r["value"] = theorem3_bound(in, t.branching, t.periods, t.eps2);
    r["lr_max"] = lr_max_multi(static_cast<double>(t.periods.front()), in.lipschitz);
    std::vector<double> a1, a2;
    for (Index l = 1; l < t.branching.size(); ++l) {
      a1.push_back(multi_a1(t.branching, t.periods, l));
      a2.push_back(multi_a2(t.branching, t.periods, l));
    }
    r["A1"] = a1;
    r["A2"] = a2;
    const SandwichResult s = sandwich_check_multi(t.branching, t.periods);
    r["sandwich"] = {{"noise", {s.noise_lower, s.noise_middle, s.noise_upper}},
                     {"divergence", {s.divergence_lower, s.divergence_middle, s.divergence_upper}},
                     {"holds", s.holds()}};
    j["theorem3"] = std::move(r);
  }
  if (b.theorem_d1) {
    const auto& t = *b.theorem_d1;
    j["theoremD1_raw"] = {{"value", theoremD1_raw_bound(in, t.branching, t.periods, t.upward, t.downward)},
                          {"lr_max", lr_max_multi(static_cast<double>(t.periods.front()), in.lipschitz)}};
  }
  if (b.remark5) {
    const auto& t = *b.remark5;
    const Remark5Result r = remark5_region(t.n, t.groups, t.global_period, t.local_period, t.l, t.q);
    j["remark5"] = {{"l", t.l},
                    {"q", t.q},
                    {"admissible", r.admissible},
                    {"l_limit", r.l_limit},
                    {"q_limit", std::isnan(r.q_limit) ? nlohmann::json(nullptr) : nlohmann::json(r.q_limit)},
                    {"divergence_before", r.divergence_before},
                    {"divergence_after", r.divergence_after},
                    {"noise_before", r.noise_before},
                    {"noise_after", r.noise_after},
                    {"improved", r.improved}};
  }
  return j;
}

nlohmann::json divergence_report(const DivergenceRequest& req) {
  const auto objective = make_fixture(req.fixture);
  const Index n = objective->worker_count();
  if (req.groups == 0 || n % req.groups != 0)
    throw ConfigError("groups=" + std::to_string(req.groups) + " must divide the " + std::to_string(n) +
                      " workers of " + req.fixture);
  Grouping g;
  if (req.grouping == "uniform_random") g = uniform_random_grouping(n, req.groups, req.seed);
  else if (req.grouping == "contiguous") g = Grouping::contiguous(std::vector<Index>(req.groups, n / req.groups));
  else if (req.grouping == "group_iid" || req.grouping == "group_non_iid")
    g = key_grouping(objective->similarity_keys(), req.groups,
                     req.grouping == "group_iid" ? GroupingOrigin::group_iid : GroupingOrigin::group_non_iid);
  else
    throw ConfigError("unknown grouping '" + req.grouping + "'");

  nlohmann::json j;
  j["fixture"] = req.fixture;
  j["workers"] = n;
  j["groups"] = g.groups();
  j["grouping"] = to_string(g.origin);
  j["seed"] = req.seed;

  std::vector<Vec> centers = {Vec(objective->dimension(), 0.0)};
  try {
    centers.push_back(f_star(*objective).minimizer);
  } catch (const Unsupported&) {
  }
  nlohmann::json points = nlohmann::json::array();
  for (const Vec& w : centers) {
    const PartitionCheck pc = check_partition_identity(*objective, g, w);
    points.push_back({{"w", w},
                      {"global", pc.lhs},
                      {"upward", pc.upward},
                      {"downward", pc.downward},
                      {"partition_residual", pc.residual}});
  }
  j["points"] = std::move(points);

  const auto probes = make_probe_set(centers, req.probes_per_center, req.probe_radius, req.seed);
  const DivergenceReport sup = estimate_sup_divergences(*objective, g, probes);
  j["sup"] = {{"global", sup.global}, {"upward", sup.upward}, {"downward", sup.downward},
              {"probes", sup.probes}, {"exact", sup.exact},   {"note", sup.note}};
  j["random_grouping_fractions"] = {{"upward", lemma_upward_fraction(n, req.groups)},
                                    {"downward", lemma_downward_fraction(n, req.groups)}};
  return j;
}

}  // namespace hsgd
