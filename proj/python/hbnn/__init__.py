"""Busemann classification heads and FC layers on hyperbolic space."""

from ._hbnn import (
    Layer,
    Network,
    NumericError,
    Space,
    UsageError,
    bfc_horosphere_feasibility,
    busemann,
    busemann_gradient,
    busemann_ray_oracle,
    flop_count,
    gyration,
    gyro_add,
    gyro_scalar,
    layer_kinds,
    make_blobs,
    make_tree,
    param_count,
    to_lorentz,
    to_poincare,
    verify,
)

__all__ = [
    "Layer",
    "Network",
    "NumericError",
    "Space",
    "UsageError",
    "bfc_horosphere_feasibility",
    "busemann",
    "busemann_gradient",
    "busemann_ray_oracle",
    "flop_count",
    "gyration",
    "gyro_add",
    "gyro_scalar",
    "layer_kinds",
    "make_blobs",
    "make_tree",
    "param_count",
    "to_lorentz",
    "to_poincare",
    "verify",
]
