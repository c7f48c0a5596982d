#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace coco {

struct SelfCheckOptions {
  std::uint64_t seed = 12345;
  // Test hook: corrupts one analytic gradient per instance so the gradient
  // suites must report failures.
  bool inject_gradient_fault = false;
};

struct SuiteResult {
  std::string name;
  int passed = 0;
  int failed = 0;
};

struct SelfCheckReport {
  std::vector<SuiteResult> suites;
  bool ok() const;
  int total_passed() const;
  int total_failed() const;
};

// Runs three verification families against independent oracles:
//  - gradient checks: every differentiable op and loss against central finite
//    differences (h = 1e-6), relative error < 1e-5, 20 random instances each;
//  - kernel checks: the refinement kernel against a string-relabeling feature
//    map (exact integer equality) plus Gram positive semidefiniteness;
//  - identity checks: the maximization objective against the negated
//    cross-domain loss, and pseudo-label distributions against a naive
//    double-loop evaluation, both to 1e-9.
SelfCheckReport run_selfcheck(const SelfCheckOptions& options);

}  // namespace coco
