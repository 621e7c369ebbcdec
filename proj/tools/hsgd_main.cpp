#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "hsgd/config.hpp"
#include "hsgd/error.hpp"
#include "hsgd/harness.hpp"
#include "hsgd/verify.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kVerifyFailure = 1;
constexpr int kConfigError = 2;

void write_json(const std::optional<std::string>& dir, const std::string& file, const nlohmann::json& j) {
  std::cout << j.dump(2) << '\n';
  if (!dir) return;
  std::filesystem::create_directories(*dir);
  std::ofstream out(std::filesystem::path(*dir) / file, std::ios::binary);
  out << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical SGD simulator, bound calculator and verifier"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string spec_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string lr_policy;
  app.add_option("--spec", spec_path, "Experiment or bounds file (YAML)");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--seed", seed, "Base seed override");
  app.add_option("--threads", threads, "OpenMP threads (0: runtime default)")->check(CLI::NonNegativeNumber);
  app.add_option("--lr-policy", lr_policy, "Learning-rate policy")->check(CLI::IsMember({"enforce", "warn"}));

  auto* run_cmd = app.add_subcommand("run", "Execute every run of an experiment");
  auto* sweep_cmd = app.add_subcommand("sweep", "Same as run; sweeps come from the experiment file");

  auto* bounds_cmd = app.add_subcommand("bounds", "Evaluate convergence bounds");
  hsgd::BoundsSpec::Theorem2 t2;
  double L = 1.0, sigma2 = 0.0, gamma = 0.0, T = 0.0, gap = 0.0;
  std::optional<double> l_scale, q_scale;
  bounds_cmd->add_option("--n", t2.n, "Workers");
  bounds_cmd->add_option("--groups", t2.groups, "Groups N");
  bounds_cmd->add_option("--G", t2.global_period, "Global period");
  bounds_cmd->add_option("--I", t2.local_period, "Local period");
  bounds_cmd->add_option("--eps2", t2.eps2, "Global divergence bound");
  bounds_cmd->add_option("--L", L, "Lipschitz constant");
  bounds_cmd->add_option("--sigma2", sigma2, "Gradient noise variance");
  bounds_cmd->add_option("--gamma", gamma, "Learning rate");
  bounds_cmd->add_option("--T", T, "Iterations");
  bounds_cmd->add_option("--gap", gap, "f(w0) - f*");
  bounds_cmd->add_option("--l", l_scale, "Global period scale for the trade-off check");
  bounds_cmd->add_option("--q", q_scale, "Local period scale for the trade-off check");

  auto* verify_cmd = app.add_subcommand("verify", "Run verification suites");
  std::vector<std::string> suites;
  bool inject_fault = false;
  verify_cmd->add_option("--suite", suites, "Suite name (repeatable; default: all)")
      ->check(CLI::IsMember(hsgd::verify_suite_names()));
  verify_cmd->add_flag("--inject-fault", inject_fault, "Corrupt closed-form constants (self-test)")
      ->group("");

  auto* div_cmd = app.add_subcommand("divergence", "Divergence report for a fixture and grouping");
  hsgd::DivergenceRequest dreq;
  div_cmd->add_option("--fixture", dreq.fixture, "Fixture name");
  div_cmd->add_option("--groups", dreq.groups, "Groups N");
  div_cmd->add_option("--grouping", dreq.grouping, "uniform_random, contiguous, group_iid, group_non_iid");
  div_cmd->add_option("--probes", dreq.probes_per_center, "Probe points per center");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (threads > 0) omp_set_num_threads(threads);

  try {
    if (run_cmd->parsed() || sweep_cmd->parsed()) {
      if (spec_path.empty()) throw hsgd::ConfigError("--spec is required");
      const hsgd::ExperimentSpec spec = hsgd::load_experiment(spec_path);
      hsgd::HarnessOptions opts;
      opts.out_dir = out_dir;
      opts.seed = seed;
      if (!lr_policy.empty())
        opts.lr_policy = lr_policy == "warn" ? hsgd::LrPolicy::warn : hsgd::LrPolicy::enforce;
      const hsgd::ExperimentResult result = hsgd::run_experiment(spec, opts);
      int status = kOk;
      for (const auto& r : result.runs) {
        std::cout << r.name << " seed=" << r.seed << " final_loss=" << r.final_loss
                  << " mean_grad_norm_sq=" << r.mean_grad_norm_sq << " comm_ms=" << r.total_time.comm_ms
                  << '\n';
        for (const auto& w : r.warnings) std::cerr << "warning: " << r.name << ": " << w << '\n';
        if (r.schedule_mismatch) {
          std::cerr << "error: " << r.name << ": " << *r.schedule_mismatch << '\n';
          status = kVerifyFailure;
        }
      }
      std::cout << "wrote " << result.runs.size() << " traces and summary.json to " << result.out_dir << '\n';
      return status;
    }

    if (bounds_cmd->parsed()) {
      hsgd::BoundsSpec b;
      if (!spec_path.empty()) {
        b = hsgd::load_bounds(spec_path);
      } else {
        if (gamma <= 0.0 || T <= 0.0) throw hsgd::ConfigError("bounds: give --spec or at least --gamma and --T");
        b.lipschitz = L;
        b.sigma2 = sigma2;
        b.gamma = gamma;
        b.horizon = T;
        b.gap = gap;
        b.theorem2 = t2;
        if (t2.groups == 1) {
          // One group: the fixed-grouping bound is local SGD with period I = G.
          b.theorem1 = hsgd::BoundsSpec::Theorem1{{t2.n}, {t2.global_period}, t2.global_period, 0.0, {t2.eps2}};
          b.corollary1 = hsgd::BoundsSpec::Corollary1{t2.n, t2.global_period, t2.eps2};
        }
        if (l_scale || q_scale)
          b.remark5 = hsgd::BoundsSpec::Remark5{t2.n, t2.groups, static_cast<hsgd::Index>(t2.global_period),
                                                static_cast<hsgd::Index>(t2.local_period), l_scale.value_or(1.0),
                                                q_scale.value_or(1.0)};
      }
      write_json(out_dir, "bounds.json", hsgd::bounds_report(b));
      return kOk;
    }

    if (verify_cmd->parsed()) {
      if (suites.empty() && !spec_path.empty()) suites = hsgd::load_experiment(spec_path).verify;
      if (suites.empty()) suites = hsgd::verify_suite_names();
      hsgd::VerifyOptions opts;
      opts.corrupt_constants = inject_fault;
      nlohmann::json all = nlohmann::json::array();
      bool ok = true;
      for (const auto& name : suites) {
        const hsgd::VerifyReport report = hsgd::run_verify_suite(name, opts);
        ok = ok && report.passed();
        all.push_back(hsgd::to_json(report));
        std::cerr << (report.passed() ? "PASS " : "FAIL ") << name << '\n';
      }
      write_json(out_dir, "verify.json", {{"passed", ok}, {"suites", all}});
      return ok ? kOk : kVerifyFailure;
    }

    if (div_cmd->parsed()) {
      if (seed) dreq.seed = *seed;
      write_json(out_dir, "divergence.json", hsgd::divergence_report(dreq));
      return kOk;
    }
  } catch (const hsgd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const hsgd::LrTooLarge& e) {
    std::cerr << "LrTooLarge: " << e.what() << '\n';
    return kConfigError;
  } catch (const hsgd::NonFiniteParameter& e) {
    std::cerr << "NonFiniteParameter: " << e.what() << '\n';
    return kVerifyFailure;
  } catch (const hsgd::Error& e) {
    std::cerr << e.kind() << ": " << e.what() << '\n';
    return kConfigError;
  }
  return kOk;
}
