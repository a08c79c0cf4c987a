#pragma once

// Seeded random inputs and parameters for property checks, benchmarks and
// synthetic datasets.

#include <random>

#include "hbnn/autodiff.hpp"
#include "hbnn/busemann.hpp"
#include "hbnn/layers.hpp"
#include "hbnn/manifold.hpp"

namespace hbnn {

using Rng = std::mt19937_64;

Vec gaussian(Rng& rng, std::size_t n, double sigma = 1.0);
Direction random_direction(Rng& rng, std::size_t n);

/// Tangent vector at `x` with Riemannian norm `speed` and a random direction.
Vec random_tangent(const Space& space, Rng& rng, ConstSpan x, double speed);

/// Point at geodesic distance uniform in [0, max_dist] from the origin.
Vec random_point(const Space& space, Rng& rng, double max_dist);

/// Rows stacked into a [rows, width] tensor.
ad::Tensor stack_rows(const std::vector<Vec>& rows);

/// `batch` random points of `space` as a [batch, ambient] tensor.
ad::Tensor random_batch(const Space& space, std::size_t batch, Rng& rng, double max_dist);

/// Batch of valid inputs for `layer`: manifold points, or Gaussian features
/// for the Euclidean head.
ad::Tensor random_input(const Layer& layer, std::size_t batch, Rng& rng, double max_dist = 2.0);

/// Replaces every raw parameter by Gaussian draws: N(0, scale^2) for scalars
/// and offsets, half that for tangent-type points, unit variance for
/// direction and weight rows. Moves tests away from the symmetric init.
void randomize_params(Layer& layer, Rng& rng, double scale = 0.5);

}  // namespace hbnn
