#pragma once

// Labelled Euclidean feature datasets: CSV I/O and the synthetic generators.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hbnn/autodiff.hpp"

namespace hbnn {

struct Dataset {
  ad::Tensor features;  ///< [N, n]
  std::vector<int> labels;
  std::vector<std::string> feature_names;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.rank() == 2 ? features.dim(1) : 0; }
};

/// Header row required; the column named "label" holds 0-based contiguous
/// class ids, every other column is a float64 feature. Throws UsageError
/// naming the offending column/line.
Dataset read_csv(const std::filesystem::path& path);
Dataset parse_csv(const std::string& text);
/// Features printed with 17 significant digits so a round trip is exact.
void write_csv(const std::filesystem::path& path, const Dataset& data);
std::string format_csv(const Dataset& data);

struct BlobsConfig {
  std::size_t classes = 2;
  std::size_t points = 200;
  std::size_t dim = 2;
  double radius = 1.0;  ///< distance of each class center from the origin
  double noise = 0.25;  ///< per-coordinate standard deviation
  std::uint64_t seed = 0;
};

/// Isotropic Gaussian clusters. Centers sit at +/- radius along the
/// coordinate axes while 2 * dim suffices, random directions beyond that.
Dataset make_blobs(const BlobsConfig& cfg);

struct TreeConfig {
  std::size_t classes = 5;  ///< children of the root; one label per subtree
  std::size_t depth = 4;    ///< levels below the root
  std::size_t points = 500;
  std::size_t dim = 2;
  std::size_t max_branching = 3;  ///< children per internal node, drawn from [1, max_branching]
  double step = 0.25;             ///< radial length of one tree edge
  double angle_noise = 0.2;       ///< perturbation of a child's direction relative to its parent
  double noise = 0.02;            ///< per-coordinate jitter of a sample around its node
  std::uint64_t seed = 0;
};

/// Samples a random rooted tree, places node u at depth d at
/// d * step * dir(u) where dir(u) is a noisy copy of its parent's direction,
/// and draws class-balanced points around uniformly chosen nodes of each
/// root subtree.
Dataset make_tree(const TreeConfig& cfg);

/// The listed rows, in order.
Dataset subset(const Dataset& data, const std::vector<std::size_t>& rows);

}  // namespace hbnn
