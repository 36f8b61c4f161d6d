"""Simulated tabletop workspace: object state, detection, task scoring.

The simulator owns ground truth. Detection snapshots re-assign session ids
by a seeded permutation on every call, so downstream plans that hard-code
ids are exposed to the same instability a real perception stack shows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .collision import ObstacleBox, WorkspaceBounds, obb_intersect
from .geometry import Pose, joint_distance, rotation_distance
from .knowledge import DetectedObject

TABLE_Z = 0.0

_SYMMETRY_SETS = {
    "none": (Pose.identity(),),
    "z2": tuple(Pose.rot_z(math.pi * k) for k in range(2)),
    "z4": tuple(Pose.rot_z(math.pi / 2 * k) for k in range(4)),
    "z8": tuple(Pose.rot_z(math.pi / 4 * k) for k in range(8)),
}


class SceneLoadError(ValueError):
    """Scenario document is malformed or physically inconsistent."""


@dataclass(frozen=True)
class ClassSpec:
    dims: np.ndarray  # full extents, meters
    symmetry: str = "none"
    graspable: bool = True
    detectable: bool = True

    def __post_init__(self):
        object.__setattr__(self, "dims", np.asarray(self.dims, dtype=float).reshape(3))
        if self.symmetry not in _SYMMETRY_SETS:
            raise SceneLoadError(f"unknown symmetry {self.symmetry!r}")

    @property
    def symmetries(self) -> tuple[Pose, ...]:
        return _SYMMETRY_SETS[self.symmetry]


@dataclass
class SimObject:
    uid: str
    object_class: str
    pose: Pose
    dims: np.ndarray
    graspable: bool = True
    detectable: bool = True
    initial_pose: Pose | None = None
    session_id: str | None = None

    def __post_init__(self):
        self.dims = np.asarray(self.dims, dtype=float).reshape(3)
        if self.initial_pose is None:
            self.initial_pose = self.pose

    @property
    def half_extents(self) -> np.ndarray:
        return 0.5 * self.dims

    def world_half_extents(self) -> np.ndarray:
        """Axis-aligned bounding half extents of the oriented box."""
        r = np.abs(self.pose.rotation_matrix())
        return r @ self.half_extents

    def top_z(self) -> float:
        return float(self.pose.translation[2] + self.world_half_extents()[2])

    def bottom_z(self) -> float:
        return float(self.pose.translation[2] - self.world_half_extents()[2])


@dataclass(frozen=True)
class TaskSpec:
    required_moves: int = 0
    stack_link: bool = False
    protect_obstacle: bool = False
    obstacle_class: str = "link"


@dataclass(frozen=True)
class TaskReport:
    parts_moved: int
    link_stacked: bool
    obstacle_disturbed: bool
    achieved: bool

    def to_dict(self) -> dict:
        return {
            "parts_moved": self.parts_moved,
            "link_stacked": self.link_stacked,
            "obstacle_disturbed": self.obstacle_disturbed,
            "achieved": self.achieved,
        }


@dataclass(frozen=True)
class DetectionSnapshot:
    timestamp: float
    objects: tuple[DetectedObject, ...]
    session_map: dict  # session id -> ground-truth uid

    def to_dict(self) -> dict:
        return {"timestamp": self.timestamp, "objects": [o.to_dict() for o in self.objects]}


class GripperState:
    OPEN = "OPEN"
    CLOSED = "CLOSED"


class World:
    """Ground-truth workspace state and its mutation rules."""

    def __init__(
        self,
        scenario_id: str,
        objects: list[SimObject],
        classes: dict[str, ClassSpec],
        table_frame: Pose,
        workspace_center: np.ndarray,
        workspace_radius: float,
        bounds: WorkspaceBounds,
        task: TaskSpec,
        robot_q: np.ndarray,
    ):
        self.scenario_id = scenario_id
        self.objects = objects
        self.classes = classes
        self.table_frame = table_frame
        self.workspace_center = np.asarray(workspace_center, dtype=float).reshape(2)
        self.workspace_radius = float(workspace_radius)
        self.bounds = bounds
        self.task = task
        self.robot_q = np.asarray(robot_q, dtype=float)
        self.gripper = GripperState.OPEN
        self.attached_uid: str | None = None
        self.attached_grasp: Pose | None = None  # object pose in EE frame
        self.disturbed: set[str] = set()
        self.table_z = TABLE_Z

    # ------------------------------------------------------------- lookup

    def get(self, uid: str) -> SimObject:
        for obj in self.objects:
            if obj.uid == uid:
                return obj
        raise KeyError(uid)

    def uid_for_session_id(self, session_id: str) -> str | None:
        for obj in self.objects:
            if obj.session_id == session_id:
                return obj.uid
        return None

    def scene_id_of(self, obj: SimObject) -> str:
        """Planning-scene key: the session id when detected, else the uid."""
        return obj.session_id or obj.uid

    def obstacle_boxes(self) -> tuple[ObstacleBox, ...]:
        return tuple(
            ObstacleBox(self.scene_id_of(o), o.pose, o.half_extents)
            for o in self.objects
            if o.uid != self.attached_uid
        )

    # ------------------------------------------------------------- motion

    def set_robot_q(self, q, ee_pose: Pose | None = None) -> None:
        self.robot_q = np.asarray(q, dtype=float)
        if self.attached_uid is not None and ee_pose is not None:
            self.get(self.attached_uid).pose = ee_pose.compose(self.attached_grasp)

    # ------------------------------------------------------------- gripper

    def attach(self, uid: str, ee_pose: Pose) -> None:
        if self.attached_uid is not None:
            raise ValueError("an object is already attached")
        obj = self.get(uid)
        self.attached_grasp = ee_pose.inverse().compose(obj.pose)
        self.attached_uid = uid
        self.gripper = GripperState.CLOSED

    def attach_nearest(self, ee_pose: Pose, radius: float = 0.02) -> str | None:
        best, best_d = None, radius
        for obj in self.objects:
            if not obj.graspable:
                continue
            d = float(np.linalg.norm(obj.pose.translation - ee_pose.translation))
            if d <= best_d:
                best, best_d = obj, d
        if best is None:
            return None
        self.attach(best.uid, ee_pose)
        return best.uid

    def detach(self) -> str | None:
        """Open-gripper release: the object snaps onto its support."""
        uid = self.attached_uid
        self.attached_uid = None
        self.attached_grasp = None
        self.gripper = GripperState.OPEN
        if uid is not None:
            self.settle(uid)
        return uid

    def settle(self, uid: str) -> None:
        obj = self.get(uid)
        hz = obj.world_half_extents()[2]
        support = self.support_top(obj)
        t = obj.pose.translation.copy()
        t[2] = support + hz
        obj.pose = Pose(t, obj.pose.rotation)

    def support_top(self, obj: SimObject) -> float:
        """Highest resting surface under the object's footprint."""
        he = obj.world_half_extents()
        cx, cy = obj.pose.translation[:2]
        top = self.table_z
        for other in self.objects:
            if other.uid == obj.uid or other.uid == self.attached_uid:
                continue
            ohe = other.world_half_extents()
            dx = abs(other.pose.translation[0] - cx)
            dy = abs(other.pose.translation[1] - cy)
            if dx < he[0] + ohe[0] and dy < he[1] + ohe[1] and other.top_z() <= obj.pose.translation[2] + 1e-6:
                top = max(top, other.top_z())
        return top

    # ------------------------------------------------------------- contact

    def disturb(self, uid: str) -> None:
        """Contact with the arm: nudge the object and flag it."""
        obj = self.get(uid)
        if uid not in self.disturbed:
            obj.pose = Pose(
                obj.pose.translation + np.array([0.025, 0.02, 0.0]),
                obj.pose.compose(Pose.rot_x(0.3)).rotation,
            )
            self.disturbed.add(uid)
            self.settle(uid)

    # ------------------------------------------------------------- sensing

    def detect(
        self,
        rng: np.random.Generator,
        *,
        timestamp: float = 0.0,
        noise: float = 0.0,
    ) -> DetectionSnapshot:
        """Fresh detection snapshot with permuted per-class session ids."""
        detected = []
        session_map: dict[str, str] = {}
        by_class: dict[str, list[SimObject]] = {}
        for obj in self.objects:
            if obj.detectable and obj.uid != self.attached_uid:
                by_class.setdefault(obj.object_class, []).append(obj)
        for object_class in sorted(by_class):
            group = sorted(by_class[object_class], key=lambda o: o.uid)
            perm = rng.permutation(len(group))
            for obj, index in zip(group, perm):
                sid = f"{object_class}_{int(index)}"
                obj.session_id = sid
                session_map[sid] = obj.uid
                pose = obj.pose
                if noise > 0.0:
                    pose = Pose(
                        pose.translation + rng.normal(scale=noise, size=3),
                        pose.compose(Pose.rot_z(float(rng.normal(scale=noise)))).rotation,
                    )
                detected.append(
                    DetectedObject(sid, object_class, pose, self.classes[object_class].symmetries)
                )
        detected.sort(key=lambda d: d.id)
        return DetectionSnapshot(timestamp, tuple(detected), session_map)

    # ------------------------------------------------------------- scoring

    def _table_local(self, pose: Pose) -> np.ndarray:
        return self.table_frame.inverse().transform_point(pose.translation)

    def in_workspace(self, pose: Pose) -> bool:
        return float(np.linalg.norm(pose.translation[:2] - self.workspace_center)) <= self.workspace_radius

    def evaluate_task(self) -> TaskReport:
        parts_moved = 0
        for obj in self.objects:
            if obj.uid == self.attached_uid:
                continue
            started_right = self._table_local(obj.initial_pose)[1] < 0.0
            now_left = self._table_local(obj.pose)[1] > 0.0
            if started_right and now_left and self.in_workspace(obj.pose):
                parts_moved += 1

        link_stacked = False
        for link in (o for o in self.objects if o.object_class == "link" and o.uid != self.attached_uid):
            for node in (o for o in self.objects if o.object_class == "node"):
                lateral = float(np.linalg.norm(link.pose.translation[:2] - node.pose.translation[:2]))
                contact = abs(link.bottom_z() - node.top_z())
                if lateral <= 0.01 and contact <= 0.005:
                    link_stacked = True

        obstacle_disturbed = False
        if self.task.protect_obstacle:
            for obj in self.objects:
                if obj.object_class != self.task.obstacle_class:
                    continue
                dt = float(np.linalg.norm(obj.pose.translation - obj.initial_pose.translation))
                dr = rotation_distance(obj.pose, obj.initial_pose)
                if dt > 0.005 or dr > 0.02:
                    obstacle_disturbed = True

        achieved = (
            parts_moved >= self.task.required_moves
            and (link_stacked or not self.task.stack_link)
            and not obstacle_disturbed
        )
        return TaskReport(parts_moved, link_stacked, obstacle_disturbed, achieved)


def load_world(doc, home_q) -> World:
    """Build a World from a scenario document (dict or JSON text)."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as e:
            raise SceneLoadError(f"invalid scene JSON: {e.msg} (line {e.lineno})") from None
    try:
        classes = {
            name: ClassSpec(
                dims=spec["dims"],
                symmetry=spec.get("symmetry", "none"),
                graspable=spec.get("graspable", True),
                detectable=spec.get("detectable", True),
            )
            for name, spec in doc.get("classes", {}).items()
        }
        objects = []
        counters: dict[str, int] = {}
        for entry in doc.get("objects", []):
            object_class = entry["class"]
            if object_class not in classes:
                raise SceneLoadError(f"object references unknown class {object_class!r}")
            spec = classes[object_class]
            index = counters.get(object_class, 0)
            counters[object_class] = index + 1
            objects.append(
                SimObject(
                    uid=f"{object_class}#{index}",
                    object_class=object_class,
                    pose=Pose.from_dict(entry["pose"]),
                    dims=np.asarray(entry.get("dims", spec.dims), dtype=float),
                    graspable=spec.graspable,
                    detectable=spec.detectable,
                )
            )
        workspace = doc.get("workspace", {})
        bounds_doc = doc.get("bounds", {})
        bounds = WorkspaceBounds(
            radius=float(bounds_doc.get("radius", 1.1)),
            z_range=tuple(bounds_doc.get("z_range", (0.0, 1.45))),
            center=tuple(bounds_doc.get("center", (0.0, 0.0))),
        )
        task_doc = doc.get("task", {})
        task = TaskSpec(
            required_moves=int(task_doc.get("required_moves", 0)),
            stack_link=bool(task_doc.get("stack_link", False)),
            protect_obstacle=bool(task_doc.get("protect_obstacle", False)),
            obstacle_class=task_doc.get("obstacle_class", "link"),
        )
        world = World(
            scenario_id=doc.get("id", "scene"),
            objects=objects,
            classes=classes,
            table_frame=Pose.from_dict(doc["table"]) if "table" in doc else Pose.identity(),
            workspace_center=np.asarray(workspace.get("center", (0.45, 0.0)), dtype=float),
            workspace_radius=float(workspace.get("radius", 0.4)),
            bounds=bounds,
            task=task,
            robot_q=np.asarray(home_q, dtype=float),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, SceneLoadError):
            raise
        raise SceneLoadError(f"malformed scene document: {e}") from e

    for i, a in enumerate(world.objects):
        for b in world.objects[i + 1 :]:
            if obb_intersect(a.pose, a.half_extents, b.pose, b.half_extents):
                raise SceneLoadError(f"overlapping objects {a.uid} and {b.uid}")
    return world


def load_world_file(path, home_q) -> World:
    return load_world(Path(path).read_text(), home_q)
