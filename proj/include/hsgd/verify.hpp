#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "hsgd/engine.hpp"

namespace hsgd {

enum class Relation { equal, at_most, at_least };

struct VerifyCheck {
  std::string name;
  double measured = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  Relation relation = Relation::equal;
  std::string provenance;  // DERIVED, TRIVIAL or PUBLISHED
  std::string note;
  bool passed = false;
};

struct VerifyReport {
  std::string suite;
  std::vector<VerifyCheck> checks;
  bool passed() const;
};

struct VerifyOptions {
  Execution execution = Execution::parallel;
  /// Test hook: perturbs the closed-form constants so the suites must fail.
  bool corrupt_constants = false;
};

/// lemmas, partition, sandwich, reductions, eigen, bound-domination.
const std::vector<std::string>& verify_suite_names();
/// Throws InvalidArgument for an unknown suite.
VerifyReport run_verify_suite(const std::string& suite, const VerifyOptions& options = {});

nlohmann::json to_json(const VerifyReport& report);

/// Runs on the d = 10, n = 10 quadratics used by the behavioral checks:
/// N = 2 contiguous groups, sigma^2 = 0.25, gamma = 0.8 / (2 sqrt(6) G_ref L)
/// with G_ref = 20, T = 2000, start at the origin.
enum class Scenario { local_short, hsgd, local_long };
RunConfig sandwich_scenario(const std::string& fixture, Scenario which, std::uint64_t seed,
                            Execution execution = Execution::parallel);

/// Unit comm trend runs on QF10-noniid: local SGD with P = 5 or H-SGD with
/// G = 50, I = 5, N = 2.
RunConfig comm_scenario(bool hierarchical, std::uint64_t seed, Execution execution = Execution::parallel);

}  // namespace hsgd
