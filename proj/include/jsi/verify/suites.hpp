#pragma once

#include <functional>
#include <string>
#include <vector>

namespace jsi::verify {

struct SuiteOutcome {
  bool passed = false;
  std::string detail;  // measured quantities, human readable
};

struct Suite {
  std::string name;
  std::function<SuiteOutcome()> run;
};

struct SuiteResult {
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  std::string detail;
};

// Individual invariant checks, each against an independent reference.
SuiteOutcome check_trie_exactness(std::size_t models = 20);
SuiteOutcome check_worked_example();
SuiteOutcome check_sbs(std::size_t trials = 10'000);
SuiteOutcome check_advantage_identities();
SuiteOutcome check_gradients(std::size_t seeds = 10);
SuiteOutcome check_reinvent_identity(std::size_t instances = 20);
SuiteOutcome check_gibbs();
SuiteOutcome check_tilt_monotonicity();
SuiteOutcome check_metrics();

std::vector<Suite> all_suites();

// Exceptions thrown by a suite count as failures and land in `detail`.
SuiteResult run_suite(const Suite& s);

// {"passed": bool, "suites": [{"name", "passed", "seconds", "detail"}...]}
std::string results_json(const std::vector<SuiteResult>& results);

}  // namespace jsi::verify
