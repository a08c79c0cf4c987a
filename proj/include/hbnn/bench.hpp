#pragma once

// Wall-clock comparison of classification heads on a random batch:
// matmul-shaped heads versus the per-class baselines, plus the transient
// memory of evaluating a per-class baseline for all classes at once.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hbnn/layers.hpp"

namespace hbnn {

struct BenchConfig {
  std::size_t n = 512;
  std::vector<std::size_t> classes{100, 1000};
  std::size_t batch = 128;
  std::size_t repeats = 11;
  std::size_t warmup = 3;
  double k = -1.0;
  std::uint64_t seed = 0;
  /// Broadcast paths whose [B, C, n] tensor exceeds this many doubles are not
  /// run; their transient size is still reported.
  std::size_t broadcast_limit = std::size_t{1} << 24;
  /// Heads to time; empty means every head kind.
  std::vector<LayerKind> heads;
};

struct BenchRow {
  LayerKind kind = LayerKind::euclidean_mlr;
  std::string path;  ///< "matmul", "loop" or "broadcast"
  std::size_t n = 0;
  std::size_t classes = 0;
  std::size_t batch = 0;
  std::optional<double> median_seconds;  ///< empty when skipped
  std::optional<double> min_seconds;
  std::optional<std::int64_t> flops_per_sample;
  std::optional<std::size_t> transient_floats;  ///< broadcast rows only
};

/// Median of `values` (mean of the middle two for even counts).
double median(std::vector<double> values);

/// Throws UsageError if a dimension is zero or repeats < 1.
std::vector<BenchRow> run_bench(const BenchConfig& cfg);

/// Header plus one line per row; skipped timings are empty fields.
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace hbnn
