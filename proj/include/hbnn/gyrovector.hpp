#pragma once

// Gyrovector algebra on both hyperbolic models: Möbius operations on the
// Poincaré ball and their closed-form Lorentz counterparts. All functions take
// the Space the points live on so mismatched operands are rejected.

#include "hbnn/manifold.hpp"

namespace hbnn {

Vec mobius_add(const Space& ball, ConstSpan x, ConstSpan y);
Vec mobius_scalar(const Space& ball, double t, ConstSpan x);

Vec lorentz_gyro_add(const Space& hyperboloid, ConstSpan x, ConstSpan y);
Vec lorentz_gyro_scalar(const Space& hyperboloid, double t, ConstSpan x);

/// Model-dispatching forms.
Vec gyro_add(const Space& space, ConstSpan x, ConstSpan y);
Vec gyro_scalar(const Space& space, double t, ConstSpan x);
Vec gyro_inverse(const Space& space, ConstSpan x);

/// gyr[x, y] z, evaluated by its defining composition
/// (-(x + y)) + (x + (y + z)).
Vec gyration(const Space& space, ConstSpan x, ConstSpan y, ConstSpan z);

}  // namespace hbnn
