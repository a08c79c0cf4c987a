#pragma once

// Property suites behind `hbnn verify`: randomized checks of the geometry,
// the layers and their gradients, each reported as a worst-case error
// against a tolerance.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hbnn {

struct PropertyResult {
  std::string suite;
  std::string name;
  std::string anchor;  ///< the mathematical statement being checked
  double error = 0.0;
  double tolerance = 0.0;
  double seconds = 0.0;

  bool pass() const { return error < tolerance; }
};

/// manifold, gyro, busemann, layers, grads, limits.
const std::vector<std::string>& verify_suites();

/// Runs one suite, or every suite for "all". Throws UsageError on an unknown selector.
std::vector<PropertyResult> run_verify(std::string_view selector, std::uint64_t seed = 0);

/// Fixed-width table, one row per property, plus a summary line.
std::string format_verify_report(const std::vector<PropertyResult>& results);

}  // namespace hbnn
