"""Serial-chain kinematics: DH forward kinematics, Jacobian, and numeric IK.

The chain is pure data (loaded from a JSON config); nothing here assumes a
particular robot. Joint configurations are plain float ndarrays of length
``chain.dof``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Pose, quat_from_matrix


class DimensionError(ValueError):
    """Joint vector length does not match the chain DOF."""


@dataclass(frozen=True)
class DHJoint:
    a: float
    alpha: float
    d: float
    theta_offset: float
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"joint limits must satisfy lower < upper, got [{self.lower}, {self.upper}]")


@dataclass(frozen=True)
class KinematicChain:
    """A serial revolute chain described by standard DH rows.

    ``link_radii`` gives the swept-sphere radius of each collision segment;
    there are dof+1 segments (base through each joint origin to the EE).
    ``table_skip_segments`` proximal segments are excluded from the
    table-plane check (the mount sits on the table).
    """

    joints: tuple[DHJoint, ...]
    ee_offset: Pose
    link_radii: tuple[float, ...]
    home: tuple[float, ...]
    table_skip_segments: int = 2

    def __post_init__(self):
        if len(self.joints) < 1:
            raise ValueError("chain needs at least one joint")
        if len(self.link_radii) != self.dof + 1:
            raise ValueError(f"expected {self.dof + 1} link radii, got {len(self.link_radii)}")
        if len(self.home) != self.dof:
            raise ValueError("home configuration length must equal DOF")

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def lower_limits(self) -> np.ndarray:
        return np.array([j.lower for j in self.joints])

    @property
    def upper_limits(self) -> np.ndarray:
        return np.array([j.upper for j in self.joints])

    @property
    def home_q(self) -> np.ndarray:
        return np.array(self.home, dtype=float)

    def max_reach(self) -> float:
        reach = sum(abs(j.a) + abs(j.d) for j in self.joints)
        return reach + float(np.linalg.norm(self.ee_offset.translation))

    def check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.shape[0] != self.dof:
            raise DimensionError(f"expected {self.dof} joint angles, got {q.shape[0]}")
        return q

    def within_limits(self, q, tol: float = 1e-9) -> bool:
        q = self.check_q(q)
        return bool(np.all(q >= self.lower_limits - tol) and np.all(q <= self.upper_limits + tol))

    def clamp(self, q) -> np.ndarray:
        return np.clip(self.check_q(q), self.lower_limits, self.upper_limits)

    @staticmethod
    def from_dict(doc: dict) -> "KinematicChain":
        joints = tuple(
            DHJoint(
                a=float(row["a"]),
                alpha=float(row["alpha"]),
                d=float(row["d"]),
                theta_offset=float(row.get("theta_offset", 0.0)),
                lower=float(row["lower"]),
                upper=float(row["upper"]),
            )
            for row in doc["joints"]
        )
        return KinematicChain(
            joints=joints,
            ee_offset=Pose.from_dict(doc["ee_offset"]) if "ee_offset" in doc else Pose.identity(),
            link_radii=tuple(float(r) for r in doc["link_radii"]),
            home=tuple(float(v) for v in doc["home"]),
            table_skip_segments=int(doc.get("table_skip_segments", 2)),
        )

    @staticmethod
    def from_file(path) -> "KinematicChain":
        return KinematicChain.from_dict(json.loads(Path(path).read_text()))


def _dh_matrix(joint: DHJoint, angle: float) -> np.ndarray:
    th = angle + joint.theta_offset
    ct, st = math.cos(th), math.sin(th)
    ca, sa = math.cos(joint.alpha), math.sin(joint.alpha)
    return np.array(
        [
            [ct, -st * ca, st * sa, joint.a * ct],
            [st, ct * ca, -ct * sa, joint.a * st],
            [0.0, sa, ca, joint.d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def fk_frames(chain: KinematicChain, q) -> list[np.ndarray]:
    """Cumulative 4x4 transforms: base, after each joint, then EE frame."""
    q = chain.check_q(q)
    frames = [np.eye(4)]
    t = np.eye(4)
    for joint, angle in zip(chain.joints, q):
        t = t @ _dh_matrix(joint, angle)
        frames.append(t.copy())
    frames.append(t @ chain.ee_offset.to_matrix())
    return frames


def forward_kinematics(chain: KinematicChain, q) -> Pose:
    """Pose of the end-effector frame for configuration q."""
    m = fk_frames(chain, q)[-1]
    return Pose(m[:3, 3].copy(), quat_from_matrix(m))


def fk_points(chain: KinematicChain, q) -> np.ndarray:
    """Joint-origin chain for collision checking: (dof+2, 3) points."""
    return np.array([f[:3, 3] for f in fk_frames(chain, q)])


def fk_points_batch(chain: KinematicChain, qs: np.ndarray) -> np.ndarray:
    """Vectorized fk_points over a batch: (n, dof) -> (n, dof+2, 3)."""
    qs = np.asarray(qs, dtype=float)
    if qs.ndim == 1:
        qs = qs[None, :]
    n = qs.shape[0]
    if qs.shape[1] != chain.dof:
        raise DimensionError(f"expected {chain.dof} joint angles, got {qs.shape[1]}")
    points = np.zeros((n, chain.dof + 2, 3))
    t = np.broadcast_to(np.eye(4), (n, 4, 4)).copy()
    for i, joint in enumerate(chain.joints):
        th = qs[:, i] + joint.theta_offset
        ct, st = np.cos(th), np.sin(th)
        ca, sa = math.cos(joint.alpha), math.sin(joint.alpha)
        m = np.zeros((n, 4, 4))
        m[:, 0, 0] = ct
        m[:, 0, 1] = -st * ca
        m[:, 0, 2] = st * sa
        m[:, 0, 3] = joint.a * ct
        m[:, 1, 0] = st
        m[:, 1, 1] = ct * ca
        m[:, 1, 2] = -ct * sa
        m[:, 1, 3] = joint.a * st
        m[:, 2, 1] = sa
        m[:, 2, 2] = ca
        m[:, 2, 3] = joint.d
        m[:, 3, 3] = 1.0
        t = t @ m
        points[:, i + 1, :] = t[:, :3, 3]
    ee = t @ chain.ee_offset.to_matrix()
    points[:, -1, :] = ee[:, :3, 3]
    return points


def _jacobian_from_frames(frames: list[np.ndarray], dof: int) -> np.ndarray:
    p_ee = frames[-1][:3, 3]
    z = np.array([frames[i][:3, 2] for i in range(dof)])
    p = np.array([frames[i][:3, 3] for i in range(dof)])
    d = p_ee - p
    jac = np.zeros((6, dof))
    jac[0] = z[:, 1] * d[:, 2] - z[:, 2] * d[:, 1]
    jac[1] = z[:, 2] * d[:, 0] - z[:, 0] * d[:, 2]
    jac[2] = z[:, 0] * d[:, 1] - z[:, 1] * d[:, 0]
    jac[3:] = z.T
    return jac


def jacobian(chain: KinematicChain, q) -> np.ndarray:
    """Geometric Jacobian (6 x dof): linear rows first, angular rows last."""
    return _jacobian_from_frames(fk_frames(chain, q), chain.dof)


def _rotation_vector(r_err: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix, stable near 0 and pi."""
    q_err = quat_from_matrix(r_err)
    v = q_err[:3]
    w = float(q_err[3])
    nv = float(np.linalg.norm(v))
    if nv < 1e-12:
        return np.zeros(3)
    angle = 2.0 * math.atan2(nv, abs(w))
    axis = v / nv if w >= 0 else -v / nv
    return axis * angle


def inverse_kinematics(
    chain: KinematicChain,
    target: Pose,
    seed,
    *,
    pos_tol: float = 1e-3,
    rot_tol: float = 1e-2,
    max_iters: int = 60,
    restarts: int = 20,
    damping: float = 0.05,
    restart_seed: int = 0,
):
    """Damped-least-squares IK. Returns a configuration or None.

    Deterministic: the random restarts are drawn from a generator seeded
    with ``restart_seed``, fresh on every call.
    """
    seed = chain.clamp(seed)
    if float(np.linalg.norm(target.translation)) > chain.max_reach() + pos_tol:
        return None
    rng = np.random.default_rng(restart_seed)
    lo, hi = chain.lower_limits, chain.upper_limits
    tm = target.to_matrix()
    r_t, p_t = tm[:3, :3], tm[:3, 3]
    eye6 = np.eye(6)

    def errors_at(q):
        frames = fk_frames(chain, q)
        ee = frames[-1]
        dp = p_t - ee[:3, 3]
        dw = _rotation_vector(r_t @ ee[:3, :3].T)
        return frames, dp, dw, float(np.linalg.norm(dp)) + 0.25 * float(np.linalg.norm(dw))

    def solve_from(q0: np.ndarray):
        # damped least squares with step rejection: failed steps raise the
        # damping, accepted steps relax it
        q = q0.copy()
        lam = damping
        frames, dp, dw, total = errors_at(q)
        for _ in range(max_iters):
            if np.linalg.norm(dp) < 0.5 * pos_tol and np.linalg.norm(dw) < 0.5 * rot_tol:
                return q
            jac = _jacobian_from_frames(frames, chain.dof)
            err = np.concatenate([dp, dw])
            accepted = False
            for _ in range(6):
                dq = jac.T @ np.linalg.solve(jac @ jac.T + (lam * lam) * eye6, err)
                q_new = np.clip(q + dq, lo, hi)
                frames_new, dp_new, dw_new, total_new = errors_at(q_new)
                if total_new < total:
                    q, frames, dp, dw, total = q_new, frames_new, dp_new, dw_new, total_new
                    lam = max(lam / 3.0, 1e-4)
                    accepted = True
                    break
                lam *= 8.0
            if not accepted:
                return None  # stuck at a local minimum; try the next restart
        return None

    # prefer solutions near the seed so straight-line execution stays local;
    # a far first solution buys a couple of extra restarts hunting a closer one
    near_enough = 2.5
    post_success_budget = 2
    best = None
    best_dq = np.inf
    extra = 0
    for attempt in range(max(1, restarts)):
        if best is not None:
            extra += 1
            if extra > post_success_budget:
                break
        if attempt == 0:
            q0 = seed
        elif attempt % 2 == 1:
            q0 = np.clip(seed + rng.normal(scale=0.8, size=chain.dof), lo, hi)
        else:
            q0 = rng.uniform(lo, hi)
        sol = solve_from(np.asarray(q0, dtype=float))
        if sol is not None and chain.within_limits(sol):
            dq = float(np.linalg.norm(sol - seed))
            if dq <= near_enough:
                return sol
            if dq < best_dq:
                best, best_dq = sol, dq
    return best
