"""Collision checking: sphere-swept link segments against oriented boxes.

The arm is approximated by capsules between consecutive joint origins.
Segment-to-box distance exploits convexity of the point-to-box distance
along the segment: a vectorized ternary search finds the global minimum
for every (configuration, segment, box) triple at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose
from .kinematics import KinematicChain, fk_points_batch, forward_kinematics


@dataclass(frozen=True)
class ObstacleBox:
    id: str
    pose: Pose
    half_extents: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "half_extents", np.asarray(self.half_extents, dtype=float).reshape(3))


@dataclass(frozen=True)
class AttachedObject:
    """Object rigidly attached to the end-effector."""

    uid: str
    half_extents: np.ndarray
    grasp: Pose  # object pose in the EE frame

    def __post_init__(self):
        object.__setattr__(self, "half_extents", np.asarray(self.half_extents, dtype=float).reshape(3))


@dataclass(frozen=True)
class WorkspaceBounds:
    """Cylinder the end-effector must stay inside."""

    radius: float = 1.2
    z_range: tuple[float, float] = (0.0, 1.5)
    center: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class PlanningScene:
    """Frozen obstacle snapshot used by collision queries and the planner."""

    boxes: tuple[ObstacleBox, ...] = ()
    disabled: frozenset[str] = frozenset()
    bounds: WorkspaceBounds = field(default_factory=WorkspaceBounds)
    table_z: float = 0.0
    attached: AttachedObject | None = None

    def active_boxes(self) -> tuple[ObstacleBox, ...]:
        return tuple(b for b in self.boxes if b.id not in self.disabled)

    def with_disabled(self, ids) -> "PlanningScene":
        return replace(self, disabled=frozenset(self.disabled) | frozenset(ids))

    def with_attached(self, attached: AttachedObject | None) -> "PlanningScene":
        return replace(self, attached=attached)


def point_box_distance(p, box: ObstacleBox) -> float:
    """Distance from a point to the box surface; 0 inside."""
    local = box.pose.inverse().transform_point(np.asarray(p, dtype=float))
    outside = np.maximum(np.abs(local) - box.half_extents, 0.0)
    return float(np.linalg.norm(outside))


def _segment_box_distances(p0: np.ndarray, p1: np.ndarray, box: ObstacleBox, iters: int = 36) -> np.ndarray:
    """Min distance to box for a batch of segments; p0, p1 shaped (..., 3).

    Point-to-box distance is convex along the segment, so a ternary search
    finds the global minimum; both probes are evaluated in one fused step.
    """
    inv = box.pose.inverse().to_matrix()
    r, t = inv[:3, :3], inv[:3, 3]
    a = p0 @ r.T + t
    b = p1 @ r.T + t
    h = box.half_extents
    den = b - a

    def dist_at(s):
        p = a[None] + s[..., None] * den[None]
        outside = np.maximum(np.abs(p) - h, 0.0)
        return np.sqrt(np.einsum("...i,...i->...", outside, outside))

    lo = np.zeros(a.shape[:-1])
    hi = np.ones(a.shape[:-1])
    for _ in range(iters):
        third = (hi - lo) / 3.0
        m1 = lo + third
        m2 = hi - third
        d = dist_at(np.stack([m1, m2]))
        closer_lo = d[0] < d[1]
        hi = np.where(closer_lo, m2, hi)
        lo = np.where(closer_lo, lo, m1)
    d = dist_at(np.stack([lo, 0.5 * (lo + hi), hi]))
    return np.min(d, axis=0)


def segment_box_distance(p0, p1, box: ObstacleBox) -> float:
    p0 = np.asarray(p0, dtype=float).reshape(1, 3)
    p1 = np.asarray(p1, dtype=float).reshape(1, 3)
    return float(_segment_box_distances(p0, p1, box)[0])


def obb_intersect(pose_a: Pose, half_a, pose_b: Pose, half_b, margin: float = 0.0) -> bool:
    """Separating-axis test for two oriented boxes.

    ``margin`` shrinks box A: touching contact within the margin does not
    count as intersection.
    """
    ra = pose_a.rotation_matrix()
    rb = pose_b.rotation_matrix()
    ha = np.maximum(np.asarray(half_a, dtype=float) - margin, 1e-9)
    hb = np.asarray(half_b, dtype=float)
    r = ra.T @ rb
    t = ra.T @ (pose_b.translation - pose_a.translation)
    abs_r = np.abs(r) + 1e-12

    for i in range(3):  # A's face axes
        if abs(t[i]) > ha[i] + hb @ abs_r[i, :]:
            return False
    for j in range(3):  # B's face axes
        if abs(t @ r[:, j]) > ha @ abs_r[:, j] + hb[j]:
            return False
    for i in range(3):  # edge-edge cross products
        for j in range(3):
            ii, jj = (i + 1) % 3, (i + 2) % 3
            kk, ll = (j + 1) % 3, (j + 2) % 3
            lhs = abs(t[jj] * r[ii, j] - t[ii] * r[jj, j])
            rhs = (
                ha[ii] * abs_r[jj, j]
                + ha[jj] * abs_r[ii, j]
                + hb[kk] * abs_r[i, ll]
                + hb[ll] * abs_r[i, kk]
            )
            if lhs > rhs:
                return False
    return True


_ATTACH_MARGIN = 0.003  # resting contact does not count as collision


def _attached_poses(chain: KinematicChain, qs: np.ndarray, attached: AttachedObject) -> list[Pose]:
    return [forward_kinematics(chain, q).compose(attached.grasp) for q in np.atleast_2d(qs)]


def collision_check_batch(chain: KinematicChain, qs, scene: PlanningScene) -> np.ndarray:
    """Vectorized collision verdicts for a batch of configurations."""
    qs = np.atleast_2d(np.asarray(qs, dtype=float))
    n = qs.shape[0]
    points = fk_points_batch(chain, qs)  # (n, dof+2, 3)
    p0 = points[:, :-1, :]
    p1 = points[:, 1:, :]
    radii = np.asarray(chain.link_radii)
    hit = np.zeros(n, dtype=bool)

    for box in scene.active_boxes():
        dists = _segment_box_distances(p0, p1, box)  # (n, nseg)
        hit |= np.any(dists < radii, axis=1)

    # table plane: distal segments must stay above it
    skip = chain.table_skip_segments
    if skip < p0.shape[1]:
        seg_low = np.minimum(p0[:, skip:, 2], p1[:, skip:, 2]) - radii[skip:]
        hit |= np.any(seg_low < scene.table_z, axis=1)

    # workspace cylinder applies to the end-effector point
    ee = points[:, -1, :]
    b = scene.bounds
    dxy = ee[:, :2] - np.asarray(b.center)
    hit |= np.linalg.norm(dxy, axis=1) > b.radius
    hit |= (ee[:, 2] < b.z_range[0]) | (ee[:, 2] > b.z_range[1])

    if scene.attached is not None:
        att = scene.attached
        for i, pose in enumerate(_attached_poses(chain, qs, att)):
            if hit[i]:
                continue
            for box in scene.active_boxes():
                if obb_intersect(pose, att.half_extents, box.pose, box.half_extents, margin=_ATTACH_MARGIN):
                    hit[i] = True
                    break
    return hit


def collision_check(chain: KinematicChain, q, scene: PlanningScene) -> bool:
    """True iff configuration q collides with the scene."""
    return bool(collision_check_batch(chain, q, scene)[0])
