"""Pose-embedding manifolds and action trajectories for 3D skeleton data."""

from .skeleton import (
    MotionSequence,
    SkeletonFrame,
    SkeletonSpec,
    build_spec,
    limb_length,
    validate_spec,
)

__version__ = "0.1.0"

__all__ = [
    "MotionSequence",
    "SkeletonFrame",
    "SkeletonSpec",
    "build_spec",
    "limb_length",
    "validate_spec",
    "__version__",
]
