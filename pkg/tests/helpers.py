"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np

from workcell.geometry import Pose


def random_quat(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def random_pose(rng: np.random.Generator, scale: float = 1.0) -> Pose:
    return Pose(rng.uniform(-scale, scale, size=3), random_quat(rng))
