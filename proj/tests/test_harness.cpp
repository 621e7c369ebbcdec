#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "hsgd/config.hpp"
#include "hsgd/error.hpp"
#include "hsgd/harness.hpp"
#include "hsgd/verify.hpp"

using namespace hsgd;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(
name: small
seed: 3
replicates: 2
comm: unit
defaults:
  objective: QF10-noniid
  noise: {kind: gaussian, sigma2: 0.25}
  gamma: 0.002
  horizon: 120
runs:
  - name: local
    topology: {kind: local, workers: 10, period: 5}
  - name: tree
    topology: {kind: multi-level, branching: [2, 5], periods: [20, 5]}
)";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hsgd_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(HSGD_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config_error(const std::string& text) {
  try {
    parse_experiment(text, "spec.yaml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, ParsesSmallSpec) {
  const auto spec = parse_experiment(kSmall);
  EXPECT_EQ(spec.runs.size(), 2u);
  EXPECT_EQ(spec.replicates, 2u);
  EXPECT_EQ(spec.runs[1].topology.branching, (std::vector<Index>{2, 5}));
  EXPECT_EQ(spec.runs[0].noise.sigma2, 0.25);
  EXPECT_EQ(spec.comm.global_latency, 10.0);
  EXPECT_GT(spec.runs[1].line, spec.runs[0].line);
}

TEST(Config, Diagnostics) {
  EXPECT_NE(config_error("name: x\nruns: []\n").find("runs"), std::string::npos);
  const std::string unknown = config_error(std::string(kSmall) + "colour: red\n");
  EXPECT_NE(unknown.find("colour"), std::string::npos);
  EXPECT_NE(unknown.find("spec.yaml:"), std::string::npos);
  const std::string bad_fixture = config_error(
      "runs:\n  - name: a\n    objective: QF99\n    gamma: 0.1\n    topology: {kind: local, workers: 4, period: 1}\n");
  EXPECT_NE(bad_fixture.find("spec.yaml:3"), std::string::npos);
  EXPECT_NE(bad_fixture.find("objective"), std::string::npos);
  EXPECT_NE(config_error("runs: [\n").find("spec.yaml"), std::string::npos);
  const std::string kind = config_error(
      "runs:\n  - name: a\n    objective: QF1\n    gamma: 0.1\n    topology: {kind: ring}\n");
  EXPECT_NE(kind.find("topology.kind"), std::string::npos);
  EXPECT_NE(config_error("comm: carrier-pigeon\nverify: [lemmas]\n").find("comm"), std::string::npos);
}

TEST(Config, TopologyErrorsBecomeConfigErrors) {
  auto spec = parse_experiment(
      "runs:\n  - name: a\n    objective: QF10-noniid\n    gamma: 0.001\n"
      "    topology: {kind: two-level, workers: 10, groups: 3, global_period: 10, local_period: 5}\n");
  try {
    build_run_config(spec.runs[0], 0, 0);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Harness, Fig3aGridHasSevenRuns) {
  const auto spec = load_experiment(std::string(HSGD_CONFIG_DIR) + "/fig3a.yaml");
  const auto plan = expand_runs(spec);
  ASSERT_EQ(plan.size(), 7u);
  std::set<std::string> files;
  for (const auto& p : plan) files.insert(p.file);
  EXPECT_EQ(files.size(), 7u);
  EXPECT_TRUE(files.count("local-period50.csv"));
  EXPECT_TRUE(files.count("hsgd-I10-groups5.csv"));
}

TEST(Harness, RunWritesDeterministicArtifacts) {
  const auto spec = parse_experiment(kSmall);
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  HarnessOptions oa, ob;
  oa.out_dir = a.string();
  ob.out_dir = b.string();
  const auto ra = run_experiment(spec, oa);
  run_experiment(spec, ob);
  ASSERT_EQ(ra.runs.size(), 4u);
  for (const auto& r : ra.runs) {
    EXPECT_EQ(slurp(a / r.file), slurp(b / r.file)) << r.file;
    EXPECT_FALSE(r.schedule_mismatch.has_value());
    EXPECT_LE(r.max_mean_drift, 1e-12);
  }
  EXPECT_EQ(slurp(a / "summary.json"), slurp(b / "summary.json"));
  const auto summary = nlohmann::json::parse(slurp(a / "summary.json"));
  EXPECT_EQ(summary["runs"].size(), 4u);
  EXPECT_EQ(summary["runs"][1]["seed"], 4);

  std::ifstream csv(a / ra.runs[0].file);
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "t,loss,grad_norm_sq,upward_mse,downward_mse,event,cum_comm_ms,cum_compute_ms");
  Index lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  EXPECT_EQ(lines, 120u);
}

TEST(Harness, MultiLevelCsvHasLevelColumns) {
  std::ostringstream out;
  auto spec = parse_experiment(
      "runs:\n  - name: t\n    objective: QF12\n    gamma_scale: 0.5\n    horizon: 10\n"
      "    topology: {kind: multi-level, branching: [2, 2, 3], periods: [10, 5, 1]}\n");
  const RunConfig c = build_run_config(spec.runs[0], 0, 0);
  const RunTrace tr = run(c);
  write_trace_csv(out, tr, account(tr, builtin_model("unit")));
  const std::string header = out.str().substr(0, out.str().find('\n'));
  EXPECT_EQ(header,
            "t,loss,grad_norm_sq,upward_mse,downward_mse,level1_upward_mse,level1_downward_mse,"
            "level2_upward_mse,level2_downward_mse,event,cum_comm_ms,cum_compute_ms");
}

TEST(Harness, SeedOverrideChangesTraces) {
  const auto spec = parse_experiment(kSmall);
  const fs::path a = scratch("seed_a"), b = scratch("seed_b");
  HarnessOptions oa, ob;
  oa.out_dir = a.string();
  ob.out_dir = b.string();
  ob.seed = 99;
  const auto ra = run_experiment(spec, oa);
  const auto rb = run_experiment(spec, ob);
  EXPECT_NE(slurp(a / ra.runs[0].file), slurp(b / rb.runs[0].file));
}

TEST(Bounds, ReportFromFile) {
  const auto j = bounds_report(load_bounds(std::string(HSGD_CONFIG_DIR) + "/bounds.yaml"));
  EXPECT_NEAR(j["theorem2"]["value"].get<double>(), 0.0323400, 1e-9);
  EXPECT_TRUE(j["theorem2"]["sandwich"]["holds"].get<bool>());
  EXPECT_TRUE(j["remark5"]["admissible"].get<bool>());
  EXPECT_TRUE(j.contains("theoremD1_raw"));
  EXPECT_LE(j["theorem2"]["local_sgd_period_I"].get<double>(), j["theorem2"]["value"].get<double>());
  EXPECT_GE(j["theorem2"]["local_sgd_period_G"].get<double>(), j["theorem2"]["value"].get<double>());
}

TEST(Divergence, Report) {
  DivergenceRequest r;
  r.fixture = "QF1";
  r.groups = 2;
  r.grouping = "group_non_iid";
  const auto j = divergence_report(r);
  EXPECT_DOUBLE_EQ(j["points"][0]["upward"].get<double>(), 1.0);
  EXPECT_TRUE(j["sup"]["exact"].get<bool>());
  EXPECT_NEAR(j["random_grouping_fractions"]["upward"].get<double>(), 1.0 / 3.0, 1e-15);
}

TEST(Verify, SuitesPassAndFaultFails) {
  for (const auto& suite : verify_suite_names()) {
    const auto r = run_verify_suite(suite);
    EXPECT_TRUE(r.passed()) << to_json(r).dump(2);
    for (const auto& c : r.checks) EXPECT_FALSE(c.provenance.empty());
  }
  VerifyOptions bad;
  bad.corrupt_constants = true;
  EXPECT_FALSE(run_verify_suite("lemmas", bad).passed());
  EXPECT_FALSE(run_verify_suite("eigen", bad).passed());
  EXPECT_THROW(run_verify_suite("nonsense"), InvalidArgument);
}

TEST(Cli, ExitCodes) {
  const fs::path out = scratch("cli");
  const std::string cfg = HSGD_CONFIG_DIR;
  EXPECT_EQ(cli("bounds --spec " + cfg + "/bounds.yaml"), 0);
  EXPECT_EQ(cli("bounds --n 10 --groups 2 --G 50 --I 5 --gamma 0.001 --T 100000 --sigma2 1 --gap 1 --eps2 1"), 0);
  EXPECT_EQ(cli("bounds --n 10 --groups 2 --G 50 --I 5 --gamma 0.1 --T 100000"), 2);
  EXPECT_EQ(cli("verify --suite lemmas --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "verify.json"));
  EXPECT_EQ(cli("verify --suite lemmas --inject-fault"), 1);
  EXPECT_EQ(cli("run --spec /nonexistent.yaml"), 2);
  EXPECT_EQ(cli("run"), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("divergence --fixture QF6 --groups 3"), 0);

  std::ofstream(out / "tiny.yaml") << "runs:\n  - name: a\n    objective: QF1\n    gamma: 0.05\n    horizon: 20\n"
                                      "    topology: {kind: two-level, workers: 4, groups: 2, global_period: 4, local_period: 2}\n";
  EXPECT_EQ(cli("run --spec " + (out / "tiny.yaml").string() + " --out " + (out / "a").string() + " --threads 2"), 0);
  EXPECT_EQ(cli("sweep --spec " + (out / "tiny.yaml").string() + " --out " + (out / "b").string() + " --threads 1"), 0);
  EXPECT_EQ(slurp(out / "a" / "a.csv"), slurp(out / "b" / "a.csv"));
  EXPECT_EQ(cli("run --spec " + (out / "tiny.yaml").string() + " --out " + (out / "c").string() + " --lr-policy bogus"), 2);

  std::ofstream(out / "fast.yaml") << "runs:\n  - name: a\n    objective: QF1\n    gamma: 0.5\n    horizon: 20\n"
                                      "    topology: {kind: local, workers: 4, period: 4}\n";
  EXPECT_EQ(cli("run --spec " + (out / "fast.yaml").string() + " --out " + (out / "d").string()), 2);
  EXPECT_EQ(cli("run --spec " + (out / "fast.yaml").string() + " --out " + (out / "d").string() + " --lr-policy warn"), 0);
}
