#pragma once

// Randomized property suites checked against the oracles. Each suite
// returns one verdict; counts and tolerances are the arguments.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace llb::oracle {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

SuiteResult projection_suite(std::size_t pairs = 10000, std::uint64_t seed = 1);
SuiteResult qp_suite(std::size_t instances = 1000, std::uint64_t seed = 2);
SuiteResult equivalence_suite(std::size_t steps = 100, std::uint64_t seed = 3);
SuiteResult gradient_suite(std::size_t models = 20, std::uint64_t seed = 4);
SuiteResult metrics_suite(std::size_t tensors = 500, std::uint64_t seed = 5);
SuiteResult kernel_suite(std::size_t cases = 50, std::uint64_t seed = 6);

std::vector<SuiteResult> all_suites();

}  // namespace llb::oracle
