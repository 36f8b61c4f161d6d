"""Headless scenario runner: deterministic replay of a tree against a scene.

A run bundles a condition profile, a seeded RNG, a teach script (the stand-in
for demonstrated waypoints), and a tree; the report captures task outcome and
execution counters. Identical inputs produce byte-identical reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .arm import ArmController
from .btree import BTNode, Executor, NodeStatus, deserialize_tree, validate
from .conditions import PROFILES, ConditionProfile
from .config import RunConfig
from .geometry import Pose
from .kinematics import KinematicChain, forward_kinematics
from .knowledge import KnowledgeStore, SymbolEntry, SymbolKind
from .ops import Clock, ExecutionContext, build_registry
from .world import World, load_world

DATA_DIR = Path(__file__).parent / "data"

SUITE_MATRIX: tuple[tuple[str, tuple[int, ...]], ...] = (
    ("task1", (1, 2, 3, 4)),
    ("task2", (1, 2, 4)),
    ("task3", (4,)),
)


def data_path(name: str) -> Path:
    """Resolve a scene or tree name against the shipped data files."""
    direct = Path(name)
    if direct.exists():
        return direct
    for candidate in (DATA_DIR / name, DATA_DIR / "scenes" / name, DATA_DIR / "trees" / name):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"no such data file: {name}")


@lru_cache(maxsize=1)
def default_chain() -> KinematicChain:
    return KinematicChain.from_file(DATA_DIR / "chain6.json")


@dataclass(frozen=True)
class RunReport:
    scenario: str
    condition: int
    seed: int
    status: str  # SUCCESS | FAILURE | TIMEOUT | INVALID
    success: bool  # task achieved, judged on final world state
    parts_moved: int
    link_stacked: bool
    obstacle_disturbed: bool
    tree_nodes: int
    tree_leaves: int
    leaf_executions: int
    planning_failures: int
    sim_duration_s: float
    violations: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "condition": self.condition,
            "seed": self.seed,
            "status": self.status,
            "success": self.success,
            "parts_moved": self.parts_moved,
            "link_stacked": self.link_stacked,
            "obstacle_disturbed": self.obstacle_disturbed,
            "tree_nodes": self.tree_nodes,
            "tree_leaves": self.tree_leaves,
            "leaf_executions": self.leaf_executions,
            "planning_failures": self.planning_failures,
            "sim_duration_s": self.sim_duration_s,
            "violations": list(self.violations),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


@dataclass
class Session:
    world: World
    store: KnowledgeStore
    arm: ArmController
    registry: object
    profile: ConditionProfile
    config: RunConfig
    rng: np.random.Generator
    clock: Clock
    ctx: ExecutionContext


def _noop_emit(kind: str, payload: dict) -> None:
    pass


def build_session(scene_doc, condition: int, config: RunConfig, *, chain=None, emit=None) -> Session:
    chain = chain or default_chain()
    rng = np.random.default_rng(config.seed)
    world = load_world(scene_doc, chain.home_q)
    config.weights.validate_against(chain, workspace_diameter=2.0 * world.bounds.radius)
    store = KnowledgeStore()
    store.register_symbol(
        SymbolEntry("home", SymbolKind.HOME, forward_kinematics(chain, chain.home_q))
    )
    store.register_symbol(SymbolEntry("table", SymbolKind.REGION, world.table_frame))
    arm = ArmController(chain, world, store, config, rng)
    clock = Clock()
    ctx = ExecutionContext(
        world=world,
        store=store,
        arm=arm,
        registry=build_registry(),
        profile=PROFILES[condition],
        config=config,
        rng=rng,
        clock=clock,
        emit=emit or _noop_emit,
    )
    return Session(world, store, arm, ctx.registry, ctx.profile, config, rng, clock, ctx)


def apply_teach(session: Session, teach: list[dict]) -> None:
    """Replay an ordered list of symbol registrations (simulated freedrive)."""
    for row in teach:
        session.store.register_symbol(
            SymbolEntry(
                name=row["name"],
                kind=SymbolKind(row.get("kind", "WAYPOINT")),
                pose=Pose.from_dict(row["pose"]),
                reference_frame=row.get("reference_frame", "WORLD"),
            )
        )


def parse_bundle(doc) -> dict:
    """Normalize a tree document or a {tree, teach, ...} bundle."""
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    if "tree" in doc:
        return {
            "tree": doc["tree"],
            "teach": doc.get("teach", []),
            "condition": doc.get("condition"),
            "scenario": doc.get("scenario"),
        }
    return {"tree": doc, "teach": [], "condition": None, "scenario": None}


def run_scenario(tree_doc, scene_doc, condition: int, config: RunConfig, *, emit=None) -> RunReport:
    """Execute one tree against one scene under a condition profile."""
    bundle = parse_bundle(tree_doc)
    session = build_session(scene_doc, condition, config, emit=emit)
    apply_teach(session, bundle["teach"])
    tree = deserialize_tree(bundle["tree"])

    def report(status: str, violations=()) -> RunReport:
        task = session.world.evaluate_task()
        return RunReport(
            scenario=session.world.scenario_id,
            condition=condition,
            seed=config.seed,
            status=status,
            success=task.achieved and status == "SUCCESS",
            parts_moved=task.parts_moved,
            link_stacked=task.link_stacked,
            obstacle_disturbed=task.obstacle_disturbed,
            tree_nodes=tree.node_count(),
            tree_leaves=tree.leaf_count(),
            leaf_executions=executor.leaf_executions if executor else 0,
            planning_failures=session.arm.planning_failures,
            sim_duration_s=round(session.clock.now, 9),
            violations=tuple(sorted(f"{v.node_id}: {v.reason}" for v in violations)),
        )

    executor = None
    violations = validate(tree, session.registry, session.profile, symbols=set(session.store.symbols))
    if violations:
        return report("INVALID", violations)

    executor = Executor(tree, session.ctx.start_operation)
    if emit is not None:
        executor.add_listener(
            lambda e: emit(
                "NODE_STATUS",
                {"node_id": e.node_id, "status": e.status.value, "reason": e.reason},
            )
        )
    while not executor.finished and session.clock.now < config.timeout_s:
        executor.tick()
        session.clock.advance(session.config.tick_dt)
        if emit is not None:
            emit(
                "ROBOT_STATE",
                {
                    "q": [float(v) for v in session.world.robot_q],
                    "gripper": session.world.gripper,
                    "attached": session.world.attached_uid,
                },
            )
    if not executor.finished:
        executor.stop()
        return report("TIMEOUT")
    return report(executor.result.value)


def run_reference(task: str, condition: int, config: RunConfig, *, emit=None) -> RunReport:
    """Run one shipped reference tree on its shipped scene."""
    tree_doc = json.loads(data_path(f"{task}_cond{condition}.json").read_text())
    scene_doc = json.loads(data_path(f"{task}.scene").read_text())
    return run_scenario(tree_doc, scene_doc, condition, config, emit=emit)


def run_suite(config: RunConfig) -> list[RunReport]:
    """The full reference matrix, sequentially, one seeded run per cell."""
    return [
        run_reference(task, condition, config)
        for task, conditions in SUITE_MATRIX
        for condition in conditions
    ]


def perturb_scene(scene_doc, rng: np.random.Generator, *, magnitude: float = 0.05) -> dict:
    """Jitter block positions within the workspace; rejects overlaps."""
    if isinstance(scene_doc, (str, bytes)):
        scene_doc = json.loads(scene_doc)
    doc = json.loads(json.dumps(scene_doc))  # deep copy
    workspace = doc.get("workspace", {})
    center = np.asarray(workspace.get("center", (0.45, 0.0)), dtype=float)
    radius = float(workspace.get("radius", 0.4))
    placed: list[np.ndarray] = [
        np.asarray(entry["pose"]["translation"][:2], dtype=float)
        for entry in doc["objects"]
        if entry["class"] != "node"
    ]
    for entry in doc["objects"]:
        if entry["class"] != "node":
            continue
        base = np.asarray(entry["pose"]["translation"][:2], dtype=float)
        for _ in range(100):
            candidate = base + rng.uniform(-magnitude, magnitude, size=2)
            if float(np.linalg.norm(candidate - center)) > radius - 0.03:
                continue
            if any(float(np.max(np.abs(candidate - p))) < 0.08 for p in placed):
                continue
            break
        else:
            candidate = base
        placed.append(candidate)
        entry["pose"]["translation"][0] = float(candidate[0])
        entry["pose"]["translation"][1] = float(candidate[1])
    return doc
