#pragma once

#include <random>
#include <string>
#include <vector>

namespace more {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Brute-force / closed-form oracles, kept independent of the implementations
// they check.
std::vector<CheckResult> verify_oracles(std::mt19937_64& rng);
std::vector<CheckResult> verify_gradients(std::mt19937_64& rng, bool inject_fault = false);
std::vector<CheckResult> verify_threshold_properties(std::mt19937_64& rng);
std::vector<CheckResult> verify_closed_forms();

// Everything above, seeded deterministically.
std::vector<CheckResult> run_verification(bool inject_gradient_fault = false);

}  // namespace more
