#include "hsgd/engine.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "hsgd/error.hpp"
#include "hsgd/rng.hpp"

namespace hsgd {

Index outer_period(const Topology& topology) {
  return std::visit(
      [](const auto& t) -> Index {
        if constexpr (std::is_same_v<std::decay_t<decltype(t)>, TwoLevelTopology>)
          return t.global_period();
        else
          return t.period_at(1);
      },
      topology);
}

Index worker_count(const Topology& topology) {
  return std::visit([](const auto& t) { return t.worker_count(); }, topology);
}

std::string event_label(const AggregationEvent& event) {
  if (event.level == 0) return "none";
  if (event.level == 1) return "global";
  return "level" + std::to_string(event.level);
}

std::vector<Index> sample_participants(std::span<const Index> members, double rho,
                                       std::uint64_t seed, Index group, Index round) {
  if (!(rho > 0.0 && rho <= 1.0)) throw InvalidArgument("participation must lie in (0, 1]");
  const Index size = members.size();
  const auto want = static_cast<Index>(std::ceil(rho * static_cast<double>(size) - 1e-12));
  std::vector<Index> pool(members.begin(), members.end());
  if (want >= size) return pool;
  CounterRng rng(seed, substream(streams::kParticipation, group), round);
  for (Index i = 0; i < want; ++i) std::swap(pool[i], pool[i + rng.below(size - i)]);
  pool.resize(want);
  std::sort(pool.begin(), pool.end());
  return pool;
}

kernels::MsePair measure_parameter_mses(const ParamMatrix& params,
                                        const std::vector<std::vector<Index>>& blocks) {
  return kernels::parameter_mses(params, blocks);
}

double mean_grad_norm_sq(const RunTrace& trace) {
  double s = 0.0;
  Index count = 0;
  for (const auto& r : trace.records)
    if (!std::isnan(r.grad_norm_sq)) {
      s += r.grad_norm_sq;
      ++count;
    }
  return count ? s / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

namespace {

/// The tree as the engine sees it: aggregation blocks per level and a
/// schedule mapping t to (level, blocks).
struct Plan {
  std::vector<std::vector<std::vector<Index>>> level_blocks;  // [level-1] -> blocks
  std::vector<std::vector<Index>> lowest_groups;              // sampling units
  std::vector<Index> lowest_group_period;                     // round length per group
  std::vector<std::vector<std::vector<Index>>> mse_blocks;    // server levels 1..M-1
  std::vector<Index> group_of;                                // worker -> lowest group
  std::function<std::pair<AggregationEvent, std::vector<std::vector<Index>>>(Index)> schedule;
};

Plan plan_for(const TwoLevelTopology& topo) {
  Plan p;
  std::vector<Index> all(topo.worker_count());
  std::iota(all.begin(), all.end(), Index{0});
  p.level_blocks = {{all}, topo.groups()};
  p.lowest_groups = topo.groups();
  p.lowest_group_period = topo.local_periods();
  p.mse_blocks = {topo.groups()};
  p.group_of.resize(topo.worker_count());
  for (Index j = 0; j < topo.worker_count(); ++j) p.group_of[j] = topo.group_of(j);
  p.schedule = [&topo, all](Index t) {
    std::pair<AggregationEvent, std::vector<std::vector<Index>>> out;
    const auto ev = topo.schedule(t);
    if (ev.global) {
      out.first = {1, 1};
      out.second = {all};
    } else if (!ev.local_groups.empty()) {
      out.first = {2, ev.local_groups.size()};
      for (Index i : ev.local_groups) out.second.push_back(topo.group(i));
    }
    return out;
  };
  return p;
}

Plan plan_for(const MultiLevelTopology& topo) {
  Plan p;
  const Index m = topo.level_count();
  for (Index i = 1; i <= m; ++i) p.level_blocks.push_back(topo.aggregation_blocks(i));
  p.lowest_groups = topo.aggregation_blocks(m);
  p.lowest_group_period.assign(p.lowest_groups.size(), topo.period_at(m));
  for (Index l = 1; l < m; ++l) p.mse_blocks.push_back(topo.aggregation_blocks(l + 1));
  p.group_of.resize(topo.worker_count());
  for (Index g = 0; g < p.lowest_groups.size(); ++g)
    for (Index j : p.lowest_groups[g]) p.group_of[j] = g;
  const auto blocks = p.level_blocks;
  p.schedule = [&topo, blocks](Index t) {
    std::pair<AggregationEvent, std::vector<std::vector<Index>>> out;
    if (auto level = topo.schedule_level(t)) {
      out.second = blocks[*level - 1];
      out.first = {*level, out.second.size()};
    }
    return out;
  };
  return p;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

RunTrace execute(const RunConfig& cfg, const Plan& plan, const std::string& mode) {
  if (!cfg.objective) throw InvalidArgument("run config has no objective");
  const Objective& obj = *cfg.objective;
  const Index n = worker_count(cfg.topology);
  const Index d = obj.dimension();
  if (obj.worker_count() != n)
    throw InvalidArgument("objective has " + std::to_string(obj.worker_count()) +
                          " workers, topology has " + std::to_string(n));
  if (cfg.horizon < 1) throw InvalidArgument("horizon T must be >= 1");
  if (!(cfg.gamma > 0.0)) throw InvalidArgument("learning rate must be > 0");
  if (cfg.metric_stride < 1) throw InvalidArgument("metric stride must be >= 1");
  if (cfg.participation && !(*cfg.participation > 0.0 && *cfg.participation <= 1.0))
    throw InvalidArgument("participation must lie in (0, 1]");

  RunTrace trace;
  trace.mode = mode;
  const Index outer = outer_period(cfg.topology);
  const double L = obj.lipschitz();
  trace.lr_max = 1.0 / (2.0 * std::sqrt(6.0) * static_cast<double>(outer) * L);
  if (cfg.gamma > trace.lr_max) {
    std::ostringstream msg;
    msg.precision(6);
    msg << "learning rate " << cfg.gamma << " violates γ ≤ 1/(2√6·"
        << (mode == "two-level" ? "G" : "P_1") << "·L) = " << trace.lr_max << " (period "
        << outer << ", L = " << L << ")";
    if (cfg.lr_policy == LrPolicy::enforce) throw LrTooLarge(msg.str());
    trace.warnings.push_back(msg.str());
  }

  const Vec init = cfg.initial.empty() ? Vec(d, 0.0) : cfg.initial;
  ParamMatrix params(n, d, init);
  ParamMatrix scratch(n, d, Vec(d, 0.0));
  std::vector<double> eval_scratch;
  const GradientOracle oracle(cfg.objective, cfg.noise, cfg.seed);

  const bool partial = cfg.participation.has_value();
  const double rho = cfg.participation.value_or(1.0);
  // Server copy held by each lowest-level group; participants load it when a round starts.
  std::vector<Vec> group_model(plan.lowest_groups.size(), init);
  Mask participants(n, 1);
  Mask steppers;  // empty: everyone steps

  Vec wbar(d), before(d), after(d);
  trace.records.reserve(cfg.horizon);
  Index cum_local = 0, cum_global = 0;

  for (Index t = 0; t < cfg.horizon; ++t) {
    TraceRecord rec;
    rec.t = t;
    kernels::mean_rows(params, {}, wbar);
    if (t % cfg.metric_stride == 0) {
      rec.loss = kernels::loss(cfg.execution, obj, wbar, eval_scratch);
      rec.grad_norm_sq = kernels::grad_norm_sq(cfg.execution, obj, wbar, eval_scratch);
    } else {
      rec.loss = rec.grad_norm_sq = std::numeric_limits<double>::quiet_NaN();
    }
    for (const auto& blocks : plan.mse_blocks)
      rec.level_mses.push_back(kernels::parameter_mses(params, blocks));
    rec.upward_mse = rec.level_mses.back().upward;
    rec.downward_mse = rec.level_mses.back().downward;
    if (cfg.snapshot_stride && t % cfg.snapshot_stride == 0) trace.snapshots.emplace_back(t, wbar);

    if (partial) {
      for (Index g = 0; g < plan.lowest_groups.size(); ++g) {
        const Index period = plan.lowest_group_period[g];
        if (t % period != 0) continue;
        const auto& members = plan.lowest_groups[g];
        for (Index j : members) participants[j] = 0;
        for (Index j : sample_participants(members, rho, cfg.seed, g, t / period)) {
          participants[j] = 1;
          std::copy(group_model[g].begin(), group_model[g].end(), params.row(j).begin());
        }
      }
      steppers = cfg.nonparticipants == NonParticipantMode::frozen ? participants : Mask{};
    }

    kernels::step_workers(cfg.execution, oracle, params, t, cfg.gamma, steppers, scratch);
    for (Index j = 0; j < n; ++j) {
      if (!all_finite(params.row(j))) {
        std::ostringstream msg;
        msg << "worker " << j << " has a non-finite parameter after step t = " << t
            << " (gamma = " << cfg.gamma << ", last f(wbar) = " << rec.loss << ")";
        throw NonFiniteParameter(msg.str());
      }
    }

    auto [event, blocks] = plan.schedule(t);
    if (event.any()) {
      const bool full = !partial || rho >= 1.0;
      if (full) kernels::mean_rows(params, {}, before);
      std::vector<Vec> averages;
      kernels::aggregate_blocks(cfg.execution, params, blocks, partial ? participants : Mask{},
                                &averages);
      if (full) {
        kernels::mean_rows(params, {}, after);
        double num = 0.0, den = 0.0;
        for (Index k = 0; k < d; ++k) {
          num = std::max(num, std::abs(after[k] - before[k]));
          den = std::max(den, std::abs(before[k]));
        }
        trace.max_mean_drift = std::max(trace.max_mean_drift, num / std::max(den, 1.0));
      }
      if (partial) {
        for (Index b = 0; b < blocks.size(); ++b) {
          // Every lowest-level group inside the block now holds the block average.
          std::vector<Index> seen;
          for (Index j : blocks[b]) {
            const Index g = plan.group_of[j];
            if (seen.empty() || seen.back() != g) {
              group_model[g] = averages[b];
              seen.push_back(g);
            }
          }
        }
      }
      if (event.level == 1)
        ++cum_global;
      else
        ++cum_local;
    }
    rec.event = event;
    rec.cum_local = cum_local;
    rec.cum_global = cum_global;
    trace.records.push_back(std::move(rec));
  }

  kernels::mean_rows(params, {}, wbar);
  trace.final_average = wbar;
  trace.final_loss = kernels::loss(cfg.execution, obj, wbar, eval_scratch);
  trace.final_params.reserve(n);
  for (Index j = 0; j < n; ++j) {
    auto r = params.row(j);
    trace.final_params.emplace_back(r.begin(), r.end());
  }
  return trace;
}

}  // namespace

RunTrace run_two_level(const RunConfig& config) {
  const auto* topo = std::get_if<TwoLevelTopology>(&config.topology);
  if (!topo) throw InvalidArgument("run_two_level needs a two-level topology");
  return execute(config, plan_for(*topo), "two-level");
}

RunTrace run_multi_level(const RunConfig& config) {
  const auto* topo = std::get_if<MultiLevelTopology>(&config.topology);
  if (!topo) throw InvalidArgument("run_multi_level needs a multi-level topology");
  return execute(config, plan_for(*topo), "multi-level");
}

RunTrace run(const RunConfig& config) {
  return std::holds_alternative<TwoLevelTopology>(config.topology) ? run_two_level(config)
                                                                   : run_multi_level(config);
}

std::optional<std::string> check_schedule_fidelity(const RunTrace& trace,
                                                   const Topology& topology) {
  for (const auto& r : trace.records) {
    const Index s = r.t + 1;
    std::ostringstream msg;
    if (const auto* two = std::get_if<TwoLevelTopology>(&topology)) {
      const bool global_due = s % two->global_period() == 0;
      Index local_due = 0;
      for (Index p : two->local_periods()) local_due += s % p == 0;
      if (r.event.level == 1 && !global_due) msg << "global event without G | t+1";
      else if (global_due && r.event.level != 1) msg << "missing global event";
      else if (r.event.level == 2 && r.event.blocks != local_due)
        msg << "local event covers " << r.event.blocks << " groups, " << local_due << " due";
      else if (r.event.level == 0 && local_due > 0) msg << "missing local event";
      else if (r.event.level > 2) msg << "two-level trace has level " << r.event.level;
    } else {
      const auto& multi = std::get<MultiLevelTopology>(topology);
      const auto due = multi.schedule_level(r.t);
      const Index want = due.value_or(0);
      if (r.event.level != want)
        msg << "event level " << r.event.level << ", schedule says " << want;
      else if (due)
        for (Index j = *due; j <= multi.level_count(); ++j)
          if (s % multi.period_at(j) != 0) msg << "subsumed level " << j << " is not due";
    }
    if (!msg.str().empty()) return "t = " + std::to_string(r.t) + ": " + msg.str();
  }
  return std::nullopt;
}

}  // namespace hsgd
