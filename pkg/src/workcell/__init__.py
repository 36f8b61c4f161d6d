"""Behavior-tree task authoring and execution for a simulated robot arm."""

__version__ = "0.1.0"

from .geometry import Pose, compose, joint_distance, rotation_distance, translation_distance

__all__ = [
    "Pose",
    "compose",
    "joint_distance",
    "rotation_distance",
    "translation_distance",
    "__version__",
]
