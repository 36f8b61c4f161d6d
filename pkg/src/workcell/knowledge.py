"""Predicate knowledge base: symbols, detected objects, and pose queries.

Predicates are conjunctions over object class and spatial half-space
relations; the pose query enumerates predicate-matching objects and their
pose symmetries, checks reachability and collisions at the goal, and ranks
candidates by a weighted distance cost.

Half-space sign conventions (axes of the reference frame):

    LEFT_OF  y > 0      RIGHT_OF y < 0
    IN_FRONT_OF x > 0   BEHIND   x < 0
    ABOVE    z > 0      BELOW    z < 0
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .collision import PlanningScene, collision_check
from .geometry import Pose, joint_distance, rotation_distance, translation_distance
from .kinematics import KinematicChain, forward_kinematics, inverse_kinematics

log = logging.getLogger(__name__)


class KnowledgeError(Exception):
    """Predicate evaluation failed (for example an unresolvable frame)."""


class SymbolKind(str, Enum):
    WAYPOINT = "WAYPOINT"
    OBJECT_POSE = "OBJECT_POSE"
    HOME = "HOME"
    REGION = "REGION"


WORLD_FRAME = "WORLD"


@dataclass
class SymbolEntry:
    """A named spatial entity the robot can act on."""

    name: str
    kind: SymbolKind
    pose: Pose
    reference_frame: str = WORLD_FRAME
    stale: bool = False

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind.value,
            "pose": self.pose.to_dict(),
            "reference_frame": self.reference_frame,
            "stale": self.stale,
        }


@dataclass(frozen=True)
class DetectedObject:
    """One identified object instance from a detection snapshot."""

    id: str
    object_class: str
    pose: Pose
    symmetries: tuple[Pose, ...] = (Pose.identity(),)

    def __post_init__(self):
        if len(self.symmetries) == 0:
            object.__setattr__(self, "symmetries", (Pose.identity(),))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "object_class": self.object_class,
            "pose": self.pose.to_dict(),
            "symmetries": [s.to_dict() for s in self.symmetries],
        }


class Region(str, Enum):
    LEFT_OF = "LEFT_OF"
    RIGHT_OF = "RIGHT_OF"
    IN_FRONT_OF = "IN_FRONT_OF"
    BEHIND = "BEHIND"
    ABOVE = "ABOVE"
    BELOW = "BELOW"


_REGION_AXIS_SIGN = {
    Region.LEFT_OF: (1, 1.0),
    Region.RIGHT_OF: (1, -1.0),
    Region.IN_FRONT_OF: (0, 1.0),
    Region.BEHIND: (0, -1.0),
    Region.ABOVE: (2, 1.0),
    Region.BELOW: (2, -1.0),
}


@dataclass(frozen=True)
class RegionAtom:
    relation: Region
    reference_frame: str

    def format(self) -> str:
        return f"region={self.relation.value}@{self.reference_frame}"


@dataclass(frozen=True)
class ClassAtom:
    object_class: str

    def format(self) -> str:
        return f"class={self.object_class}"


@dataclass(frozen=True)
class PredicateExpr:
    """Conjunction of class and region atoms over a single object."""

    atoms: tuple = ()

    def format(self) -> str:
        return " & ".join(a.format() for a in self.atoms) if self.atoms else "any"

    @staticmethod
    def parse(text: str) -> "PredicateExpr":
        text = text.strip()
        if not text or text == "any":
            return PredicateExpr(())
        atoms = []
        for part in text.split("&"):
            part = part.strip()
            if "=" not in part:
                raise ValueError(f"malformed predicate atom {part!r}")
            key, _, value = part.partition("=")
            key = key.strip()
            value = value.strip()
            if key == "class":
                if not value:
                    raise ValueError("class atom needs a value")
                atoms.append(ClassAtom(value))
            elif key == "region":
                rel, sep, frame = value.partition("@")
                if not sep or not frame:
                    raise ValueError(f"region atom needs RELATION@frame, got {value!r}")
                try:
                    relation = Region(rel.strip())
                except ValueError:
                    raise ValueError(f"unknown region relation {rel.strip()!r}") from None
                atoms.append(RegionAtom(relation, frame.strip()))
            else:
                raise ValueError(f"unknown predicate atom kind {key!r}")
        return PredicateExpr(tuple(atoms))

    @staticmethod
    def class_is(object_class: str) -> "PredicateExpr":
        return PredicateExpr((ClassAtom(object_class),))

    def and_region(self, relation: Region, frame: str) -> "PredicateExpr":
        return PredicateExpr(self.atoms + (RegionAtom(relation, frame),))


@dataclass(frozen=True)
class WorldSnapshot:
    """Immutable view the predicate evaluator runs against."""

    objects: tuple[DetectedObject, ...]
    frames: dict = field(default_factory=dict)  # frame name -> Pose

    def resolve_frame(self, name: str) -> Pose:
        if name == WORLD_FRAME:
            return Pose.identity()
        if name in self.frames:
            return self.frames[name]
        for obj in self.objects:
            if obj.id == name:
                return obj.pose
        raise KnowledgeError(f"unresolvable reference frame {name!r}")


def atom_holds(atom, obj: DetectedObject, world: WorldSnapshot) -> bool:
    if isinstance(atom, ClassAtom):
        return obj.object_class == atom.object_class
    if isinstance(atom, RegionAtom):
        frame = world.resolve_frame(atom.reference_frame)
        local = frame.inverse().transform_point(obj.pose.translation)
        axis, sign = _REGION_AXIS_SIGN[atom.relation]
        return bool(sign * local[axis] > 0.0)
    raise KnowledgeError(f"unknown atom type {type(atom).__name__}")


def expr_matches(expr: PredicateExpr, obj: DetectedObject, world: WorldSnapshot) -> bool:
    return all(atom_holds(a, obj, world) for a in expr.atoms)


def knowledge_test(expr: PredicateExpr, world: WorldSnapshot) -> bool:
    """True iff some detected object satisfies every atom of expr."""
    return any(expr_matches(expr, obj, world) for obj in world.objects)


@dataclass(frozen=True)
class CostWeights:
    """Weights of the goal-ranking cost; collision adds the penalty term."""

    w_q: float = 1.0  # per radian of joint-space distance
    w_t: float = 1.0  # per meter of translation distance
    w_R: float = 1.0  # per radian of rotation distance
    penalty: float = 1e4

    def __post_init__(self):
        for name in ("w_q", "w_t", "w_R", "penalty"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def validate_against(self, chain: KinematicChain, workspace_diameter: float) -> None:
        """The collision penalty must dominate any achievable distance term."""
        max_dq = joint_distance(chain.lower_limits, chain.upper_limits)
        max_term = self.w_q * max_dq + self.w_t * workspace_diameter + self.w_R * np.pi
        if self.penalty <= max_term:
            raise ValueError(
                f"collision penalty {self.penalty} does not dominate the "
                f"maximum distance term {max_term:.3f}"
            )

    def scaled(self, k: float) -> "CostWeights":
        return CostWeights(self.w_q * k, self.w_t * k, self.w_R * k, self.penalty * k)


def compute_cost(dq: float, dt: float, dR: float, in_collision: bool, w: CostWeights) -> float:
    """Weighted distance cost with an additive collision penalty."""
    return w.w_q * dq + w.w_t * dt + w.w_R * dR + (w.penalty if in_collision else 0.0)


@dataclass(frozen=True)
class GoalCandidate:
    object_id: str
    symmetry_index: int
    goal_pose: Pose
    ik_solution: np.ndarray
    cost: float
    in_collision: bool

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "symmetry_index": self.symmetry_index,
            "goal_pose": self.goal_pose.to_dict(),
            "ik_solution": [float(v) for v in self.ik_solution],
            "cost": self.cost,
            "in_collision": self.in_collision,
        }


def rank_goal_poses(
    chain: KinematicChain,
    labeled_poses,  # iterable of (object_id, symmetry_index, goal Pose, exclude_ids)
    q,
    scene: PlanningScene,
    weights: CostWeights,
    *,
    ik_restart_seed: int = 0,
) -> list[GoalCandidate]:
    """IK, collision-check, cost and sort a set of candidate goal poses.

    Candidates without an IK solution are dropped; colliding candidates keep
    the penalty term and sort last but stay available.
    """
    q = chain.check_q(q)
    current = forward_kinematics(chain, q)
    candidates = []
    for object_id, sym_index, goal, exclude_ids in labeled_poses:
        q_goal = inverse_kinematics(chain, goal, q, restart_seed=ik_restart_seed)
        if q_goal is None:
            continue
        check_scene = scene.with_disabled(exclude_ids) if exclude_ids else scene
        in_collision = collision_check(chain, q_goal, check_scene)
        cost = compute_cost(
            joint_distance(q_goal, q),
            translation_distance(goal, current),
            rotation_distance(goal, current),
            in_collision,
            weights,
        )
        candidates.append(GoalCandidate(object_id, sym_index, goal, q_goal, cost, in_collision))
    candidates.sort(key=lambda c: (c.cost, c.object_id, c.symmetry_index))
    return candidates


def pose_query(
    chain: KinematicChain,
    objects,
    expr: PredicateExpr,
    q,
    scene: PlanningScene,
    ee_offset: Pose,
    weights: CostWeights,
    *,
    world: WorldSnapshot | None = None,
    ik_restart_seed: int = 0,
) -> list[GoalCandidate]:
    """Ranked goal list over predicate-matching objects and their symmetries.

    For every matching object o and symmetry s the goal is T_o * T_s *
    ``ee_offset``. Collision checks at a candidate ignore the candidate's own
    object (a grasp goal always sits against its target).
    """
    objects = tuple(objects)
    world = world if world is not None else WorldSnapshot(objects=objects)
    labeled = []
    for obj in objects:
        if not expr_matches(expr, obj, world):
            continue
        for sym_index, sym in enumerate(obj.symmetries):
            goal = obj.pose.compose(sym).compose(ee_offset)
            labeled.append((obj.id, sym_index, goal, {obj.id}))
    return rank_goal_poses(chain, labeled, q, scene, weights, ik_restart_seed=ik_restart_seed)


@dataclass
class KnowledgeStore:
    """Owner of symbols and the latest detection snapshot."""

    symbols: dict[str, SymbolEntry] = field(default_factory=dict)
    objects: tuple[DetectedObject, ...] = ()

    def register_symbol(self, entry: SymbolEntry) -> None:
        if not entry.name:
            raise ValueError("symbol name must be non-empty")
        if entry.name == "home" and entry.kind is not SymbolKind.HOME:
            raise ValueError("the name 'home' is reserved for the HOME symbol")
        if entry.name in self.symbols:
            log.warning("symbol %r overwritten", entry.name)
        self.symbols[entry.name] = entry

    def list_symbols(self) -> list[SymbolEntry]:
        return list(self.symbols.values())

    def get_symbol(self, name: str) -> SymbolEntry | None:
        return self.symbols.get(name)

    def ingest_detection(self, detected: tuple[DetectedObject, ...]) -> None:
        """Replace object symbols with a fresh snapshot; flag stale frames."""
        self.objects = tuple(detected)
        ids = {obj.id for obj in detected}
        classes = {obj.object_class for obj in detected}
        for name in [n for n, s in self.symbols.items() if s.kind is SymbolKind.OBJECT_POSE]:
            del self.symbols[name]
        for obj in detected:
            self.symbols[obj.id] = SymbolEntry(obj.id, SymbolKind.OBJECT_POSE, obj.pose, WORLD_FRAME)
        for entry in self.symbols.values():
            if entry.reference_frame in (WORLD_FRAME,):
                continue
            entry.stale = entry.reference_frame not in ids and entry.reference_frame not in classes

    def update_object_pose(self, object_id: str, pose: Pose) -> None:
        self.objects = tuple(
            replace(o, pose=pose) if o.id == object_id else o for o in self.objects
        )
        sym = self.symbols.get(object_id)
        if sym is not None and sym.kind is SymbolKind.OBJECT_POSE:
            sym.pose = pose

    def snapshot(self) -> WorldSnapshot:
        frames = {}
        for entry in self.symbols.values():
            if not entry.stale and entry.reference_frame == WORLD_FRAME:
                frames[entry.name] = entry.pose
        return WorldSnapshot(objects=self.objects, frames=frames)

    def resolve_symbol_pose(self, name: str) -> Pose:
        """World pose of a symbol, chasing its reference frame if needed."""
        entry = self.symbols.get(name)
        if entry is None:
            raise KnowledgeError(f"unknown symbol {name!r}")
        if entry.reference_frame == WORLD_FRAME:
            return entry.pose
        frame = self.snapshot().resolve_frame(entry.reference_frame)
        return frame.compose(entry.pose)


@dataclass(frozen=True)
class OperationSpec:
    """Registry entry describing one leaf operation and its parameters."""

    name: str
    component: str
    params: tuple = ()  # (param name, kind) with kind in {symbol, expr, number, object_id}
    description: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "component": self.component,
            "params": [{"name": n, "kind": k} for n, k in self.params],
            "description": self.description,
        }


@dataclass(frozen=True)
class ComponentEntry:
    """One system component: streams, predicates, symbols, operations."""

    name: str
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    predicates: tuple[str, ...] = ()
    symbols: tuple[str, ...] = ()
    operations: tuple[OperationSpec, ...] = ()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "predicates": list(self.predicates),
            "symbols": list(self.symbols),
            "operations": [op.to_dict() for op in self.operations],
        }


class ComponentRegistry:
    """All components keyed by name; operation names are globally unique."""

    def __init__(self, components: tuple[ComponentEntry, ...]):
        self.components = {c.name: c for c in components}
        self._operations: dict[str, OperationSpec] = {}
        for comp in components:
            for op in comp.operations:
                if op.name in self._operations:
                    raise ValueError(f"operation {op.name!r} registered by two components")
                self._operations[op.name] = op

    def operation(self, name: str) -> OperationSpec | None:
        return self._operations.get(name)

    def operation_names(self) -> list[str]:
        return sorted(self._operations)

    def to_dict(self) -> dict:
        return {"components": [c.to_dict() for c in self.components.values()]}
