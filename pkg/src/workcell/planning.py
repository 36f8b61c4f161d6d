"""Joint-space RRT-Connect with shortcut smoothing.

Plans are densified so consecutive waypoints stay within the extension step,
and every edge is validated at fine interpolation resolution before it is
accepted into a tree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .collision import PlanningScene, collision_check_batch
from .kinematics import KinematicChain


class StartInCollisionError(ValueError):
    """Planning was requested from a configuration already in collision."""


@dataclass(frozen=True)
class MotionPlan:
    waypoints: np.ndarray  # (n, dof)
    length: float

    def __post_init__(self):
        object.__setattr__(self, "waypoints", np.atleast_2d(np.asarray(self.waypoints, dtype=float)))


def path_length(waypoints: np.ndarray) -> float:
    waypoints = np.atleast_2d(waypoints)
    if waypoints.shape[0] < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(waypoints, axis=0), axis=1)))


def interpolate(a: np.ndarray, b: np.ndarray, resolution: float) -> np.ndarray:
    """Inclusive linear interpolation with spacing <= resolution."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dist = float(np.linalg.norm(b - a))
    steps = max(1, int(np.ceil(dist / resolution)))
    ts = np.linspace(0.0, 1.0, steps + 1)
    return a[None, :] + ts[:, None] * (b - a)[None, :]


def densify_path(waypoints: np.ndarray, resolution: float) -> np.ndarray:
    waypoints = np.atleast_2d(waypoints)
    if waypoints.shape[0] < 2:
        return waypoints.copy()
    parts = [waypoints[:1]]
    for i in range(waypoints.shape[0] - 1):
        seg = interpolate(waypoints[i], waypoints[i + 1], resolution)
        parts.append(seg[1:])
    return np.vstack(parts)


def _edge_free(chain, a, b, scene, resolution) -> bool:
    qs = interpolate(a, b, resolution)
    return not bool(np.any(collision_check_batch(chain, qs, scene)))


class _Tree:
    def __init__(self, root: np.ndarray, capacity: int):
        self.nodes = np.zeros((capacity + 1, root.shape[0]))
        self.parents = np.full(capacity + 1, -1, dtype=int)
        self.nodes[0] = root
        self.size = 1

    def nearest(self, q: np.ndarray) -> int:
        d = np.linalg.norm(self.nodes[: self.size] - q, axis=1)
        return int(np.argmin(d))

    def add(self, q: np.ndarray, parent: int) -> int:
        self.nodes[self.size] = q
        self.parents[self.size] = parent
        self.size += 1
        return self.size - 1

    def path_to_root(self, idx: int) -> list[np.ndarray]:
        out = []
        while idx >= 0:
            out.append(self.nodes[idx].copy())
            idx = self.parents[idx]
        return out


def plan_rrt_connect(
    chain: KinematicChain,
    q_start,
    q_goal,
    scene: PlanningScene,
    rng: np.random.Generator,
    *,
    step: float = 0.1,
    max_iters: int = 10_000,
    shortcut_attempts: int = 200,
    validate_resolution: float = 0.02,
):
    """Bidirectional RRT-Connect. None when no plan fits the budget."""
    q_start = chain.check_q(q_start)
    q_goal = chain.check_q(q_goal)
    if not chain.within_limits(q_goal):
        return None
    if bool(collision_check_batch(chain, q_start, scene)[0]):
        raise StartInCollisionError("start configuration is in collision")
    if bool(collision_check_batch(chain, q_goal, scene)[0]):
        return None

    if np.linalg.norm(q_goal - q_start) < 1e-12:
        return MotionPlan(q_start[None, :], 0.0)

    if _edge_free(chain, q_start, q_goal, scene, validate_resolution):
        waypoints = interpolate(q_start, q_goal, step)
        return MotionPlan(waypoints, path_length(waypoints))

    lo, hi = chain.lower_limits, chain.upper_limits
    tree_a = _Tree(q_start, max_iters)
    tree_b = _Tree(q_goal, max_iters)
    swapped = False

    def extend(tree: _Tree, target: np.ndarray):
        """One step from the nearest node toward target; new index or None."""
        near = tree.nearest(target)
        q_near = tree.nodes[near]
        delta = target - q_near
        dist = float(np.linalg.norm(delta))
        if dist < 1e-12:
            return None, True
        q_new = target if dist <= step else q_near + delta * (step / dist)
        if not _edge_free(chain, q_near, q_new, scene, validate_resolution):
            return None, False
        idx = tree.add(q_new, near)
        return idx, dist <= step

    def connect(tree: _Tree, target: np.ndarray):
        """Repeat extension toward target; final index if reached, else None."""
        while True:
            idx, reached = extend(tree, target)
            if idx is None:
                return None
            if reached:
                return idx

    path = None
    for _ in range(max_iters):
        q_rand = rng.uniform(lo, hi)
        idx_a, _ = extend(tree_a, q_rand)
        if idx_a is not None:
            idx_b = connect(tree_b, tree_a.nodes[idx_a])
            if idx_b is not None:
                part_a = tree_a.path_to_root(idx_a)[::-1]
                part_b = tree_b.path_to_root(idx_b)
                path = part_a + part_b[1:] if np.allclose(part_a[-1], part_b[0]) else part_a + part_b
                if swapped:
                    path = path[::-1]
                break
        tree_a, tree_b = tree_b, tree_a
        swapped = not swapped
    if path is None:
        return None

    path = _shortcut(chain, path, scene, rng, shortcut_attempts, validate_resolution)
    waypoints = densify_path(np.array(path), step)
    return MotionPlan(waypoints, path_length(waypoints))


def _shortcut(chain, path, scene, rng, attempts, resolution):
    path = [np.asarray(p, dtype=float) for p in path]
    for attempt in range(attempts):
        if len(path) <= 2:
            break
        if attempt == 0:
            i, j = 0, len(path) - 1  # straight-line first: optimal when unobstructed
        else:
            i = int(rng.integers(0, len(path) - 2))
            j = int(rng.integers(i + 2, len(path)))
        if _edge_free(chain, path[i], path[j], scene, resolution):
            path = path[: i + 1] + path[j:]
    return path
