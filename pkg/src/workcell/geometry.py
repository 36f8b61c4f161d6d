"""Rigid transforms in SE(3) and the distance metrics used for goal ranking.

Poses carry a translation in meters and a unit quaternion ``[qx, qy, qz, qw]``.
The quaternion is re-normalized after every operation so downstream code can
rely on unit norm without checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product of two quaternions in [x, y, z, w] order."""
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array(
        [
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([-q[0], -q[1], -q[2], q[3]])


def _cross3(a, b) -> np.ndarray:
    return np.array(
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    )


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by unit quaternion q."""
    u = q[:3]
    w = q[3]
    t = 2.0 * _cross3(u, v)
    return v + w * t + _cross3(u, t)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        raise ValueError("rotation axis must be nonzero")
    half = 0.5 * angle
    return np.concatenate([np.sin(half) * axis / n, [np.cos(half)]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    x, y, z, w = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    """Shepperd's method; picks the numerically largest pivot."""
    m = np.asarray(m, dtype=float)
    t = np.trace(m[:3, :3])
    if t > 0:
        s = math.sqrt(t + 1.0) * 2.0
        return np.array(
            [(m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s, 0.25 * s]
        )
    i = int(np.argmax([m[0, 0], m[1, 1], m[2, 2]]))
    if i == 0:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        return np.array(
            [0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s, (m[2, 1] - m[1, 2]) / s]
        )
    if i == 1:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        return np.array(
            [(m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s, (m[0, 2] - m[2, 0]) / s]
        )
    s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
    return np.array(
        [(m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s, (m[1, 0] - m[0, 1]) / s]
    )


@dataclass(frozen=True)
class Pose:
    """A rigid transform: rotation then translation."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        q = np.asarray(self.rotation, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if n < 1e-12:
            raise ValueError("zero-norm quaternion")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q / n)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_translation(x: float, y: float, z: float) -> "Pose":
        return Pose(translation=np.array([x, y, z]))

    @staticmethod
    def from_axis_angle(axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        return Pose(np.asarray(translation, dtype=float), quat_from_axis_angle(axis, angle))

    @staticmethod
    def rot_x(angle: float) -> "Pose":
        return Pose.from_axis_angle([1, 0, 0], angle)

    @staticmethod
    def rot_y(angle: float) -> "Pose":
        return Pose.from_axis_angle([0, 1, 0], angle)

    @staticmethod
    def rot_z(angle: float) -> "Pose":
        return Pose.from_axis_angle([0, 0, 1], angle)

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=float)
        return Pose(m[:3, 3].copy(), quat_from_matrix(m))

    def to_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(self.rotation)
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "Pose") -> "Pose":
        return Pose(
            self.translation + quat_rotate(self.rotation, other.translation),
            quat_mul(self.rotation, other.rotation),
        )

    def __mul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        qinv = quat_conjugate(self.rotation)
        return Pose(-quat_rotate(qinv, self.translation), qinv)

    def transform_point(self, p: np.ndarray) -> np.ndarray:
        return self.translation + quat_rotate(self.rotation, np.asarray(p, dtype=float))

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def axis(self, i: int) -> np.ndarray:
        """World direction of local axis i (0=x, 1=y, 2=z)."""
        e = np.zeros(3)
        e[i] = 1.0
        return quat_rotate(self.rotation, e)

    def approx_eq(self, other: "Pose", pos_tol: float = 1e-9, rot_tol: float = 1e-9) -> bool:
        return (
            translation_distance(self, other) <= pos_tol
            and rotation_distance(self, other) <= rot_tol
        )

    def to_dict(self) -> dict:
        return {
            "translation": [float(v) for v in self.translation],
            "rotation": [float(v) for v in self.rotation],
        }

    @staticmethod
    def from_dict(d: dict) -> "Pose":
        return Pose(np.asarray(d["translation"], dtype=float), np.asarray(d["rotation"], dtype=float))


def compose(a: Pose, b: Pose) -> Pose:
    return a.compose(b)


def translation_distance(a: Pose, b: Pose) -> float:
    """Euclidean distance between the two translations, meters."""
    return float(np.linalg.norm(a.translation - b.translation))


def rotation_distance(a: Pose, b: Pose) -> float:
    """Geodesic angle between the two rotations, radians in [0, pi].

    Invariant to quaternion sign (double cover) and to a common
    left-composed rotation.
    """
    rel = quat_mul(quat_conjugate(a.rotation), b.rotation)
    return 2.0 * math.atan2(float(np.linalg.norm(rel[:3])), abs(float(rel[3])))


def joint_distance(a: np.ndarray, b: np.ndarray, norm: str = "l2") -> float:
    """Distance between two joint configurations, radians.

    norm: "l2" (default) or "linf".
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"joint dimension mismatch: {a.shape} vs {b.shape}")
    d = a - b
    if norm == "l2":
        return float(np.linalg.norm(d))
    if norm == "linf":
        return float(np.max(np.abs(d))) if d.size else 0.0
    raise ValueError(f"unknown norm {norm!r}")
