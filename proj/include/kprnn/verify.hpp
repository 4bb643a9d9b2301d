#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kprnn {

struct VerifyOptions {
    std::size_t trials = 1000;  // Kronecker oracle trials; other suites scale from this
    std::uint64_t seed = 0;
    bool inject_fault = false;  // negative control: forces one oracle mismatch
};

struct SuiteResult {
    std::string name;
    std::size_t checks = 0;
    std::size_t failures = 0;
    std::string first_failure;  // serialized counterexample, empty when green
};

/// Runs the oracle-equivalence, gradient, rank-multiplicativity and
/// quantization suites. Exit gate: every suite must report zero failures.
std::vector<SuiteResult> run_verification(const VerifyOptions& opts);

bool all_passed(const std::vector<SuiteResult>& results);

std::string verification_report(const std::vector<SuiteResult>& results);

}  // namespace kprnn
