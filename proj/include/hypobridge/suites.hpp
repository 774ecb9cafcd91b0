#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hypobridge/verify.hpp"

namespace hypobridge {

struct SuiteOptions {
  std::uint64_t seed = 42;
};

struct SuiteResult {
  std::string name;
  std::vector<VerificationReport> reports;

  bool pass() const {
    for (const auto& r : reports)
      if (!r.pass) return false;
    return !reports.empty();
  }
};

/// Named verification suites: "baseline" (elliptic torus), "grushin",
/// "heisenberg", "su2", "full".
SuiteResult run_suite(const std::string& name, const SuiteOptions& opts);
std::vector<std::string> known_suites();

/// Stored-time grid used by the suite kernels: geometric below 0.2 for
/// small-time queries, then every 0.025 up to 1 (so the expectation-identity
/// s grid and 1-s counterparts are stored exactly).
std::vector<double> dense_time_grid();

}  // namespace hypobridge
