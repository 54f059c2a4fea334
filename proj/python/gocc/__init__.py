"""Semantic gaussian splatting for voxel occupancy grids."""

from ._core import (
    GoccError,
    __version__,
    bce_occupancy,
    build_covariance,
    default_scene_spec_json,
    evaluate,
    gaussian_weight,
    generate_scene,
    load_grid,
    lovasz_softmax,
    lr_schedule,
    splat_occupancy,
    splat_semantics,
)

__all__ = [
    "GoccError",
    "__version__",
    "bce_occupancy",
    "build_covariance",
    "default_scene_spec_json",
    "evaluate",
    "gaussian_weight",
    "generate_scene",
    "load_grid",
    "lovasz_softmax",
    "lr_schedule",
    "splat_occupancy",
    "splat_semantics",
]
