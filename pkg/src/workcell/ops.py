"""Leaf operation implementations and the default component registry.

Every operation a tree can bind lives here, keyed by the name the registry
publishes. Implementations are generators driven by the executor; they pull
state through the ExecutionContext.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .arm import ArmController
from .btree import NodeStatus, OperationBinding, OperationFailure
from .conditions import ConditionProfile
from .config import RunConfig
from .geometry import Pose
from .knowledge import (
    WORLD_FRAME,
    ComponentEntry,
    ComponentRegistry,
    KnowledgeError,
    KnowledgeStore,
    OperationSpec,
    PredicateExpr,
    SymbolEntry,
    SymbolKind,
    knowledge_test,
)
from .world import World


@dataclass
class Clock:
    now: float = 0.0

    def advance(self, dt: float) -> None:
        self.now += dt


@dataclass
class ExecutionContext:
    world: World
    store: KnowledgeStore
    arm: ArmController
    registry: ComponentRegistry
    profile: ConditionProfile
    config: RunConfig
    rng: np.random.Generator
    clock: Clock = field(default_factory=Clock)
    emit: Callable[[str, dict], None] = lambda kind, payload: None

    def start_operation(self, binding: OperationBinding) -> Iterator[NodeStatus]:
        impl = OPERATION_IMPLS.get(binding.operation_name)
        if impl is None:
            raise OperationFailure(f"unknown operation {binding.operation_name!r}")
        try:
            return impl(self, **binding.parameters)
        except TypeError as e:
            raise OperationFailure(f"bad parameters for {binding.operation_name}: {e}") from None


def _resolve_waypoint(ctx: ExecutionContext, name: str) -> Pose:
    try:
        return ctx.store.resolve_symbol_pose(name)
    except KnowledgeError:
        raise OperationFailure("unknown waypoint") from None


def _symbol(ctx: ExecutionContext, name: str) -> SymbolEntry:
    entry = ctx.store.get_symbol(name)
    if entry is None:
        raise OperationFailure("unknown waypoint")
    return entry


def _parse_expr(text: str) -> PredicateExpr:
    try:
        return PredicateExpr.parse(str(text))
    except ValueError as e:
        raise OperationFailure(f"malformed predicate: {e}") from None


def _enforce(ctx: ExecutionContext) -> bool:
    return ctx.profile.collisions_enforced_on_unplanned_moves


# ------------------------------------------------------------------ arm


def op_move_to_home(ctx: ExecutionContext) -> Iterator[NodeStatus]:
    yield from ctx.arm.move_to_q(ctx.arm.chain.home_q, planned=False, enforce_collisions=_enforce(ctx))


def op_plan_to_home(ctx: ExecutionContext) -> Iterator[NodeStatus]:
    yield from ctx.arm.move_to_q(ctx.arm.chain.home_q, planned=True, enforce_collisions=True)


def op_move_to_waypoint(ctx: ExecutionContext, target: str) -> Iterator[NodeStatus]:
    pose = _resolve_waypoint(ctx, target)
    yield from ctx.arm.move_to_pose(pose, planned=False, enforce_collisions=_enforce(ctx))


def op_plan_to_waypoint(ctx: ExecutionContext, target: str) -> Iterator[NodeStatus]:
    pose = _resolve_waypoint(ctx, target)
    yield from ctx.arm.move_to_pose(pose, planned=True, enforce_collisions=True)


def op_move_relative_to_object(ctx: ExecutionContext, target: str) -> Iterator[NodeStatus]:
    entry = _symbol(ctx, target)
    if entry.reference_frame == WORLD_FRAME:
        raise OperationFailure("waypoint is not relative to an object")
    pose = _resolve_waypoint(ctx, target)
    yield from ctx.arm.move_to_pose(pose, planned=False, enforce_collisions=_enforce(ctx))


def op_smart_grasp(ctx: ExecutionContext, query: str, grasp: str, backoff: float) -> Iterator[NodeStatus]:
    expr = _parse_expr(query)
    entry = _symbol(ctx, grasp)
    yield from ctx.arm.smart_grasp(expr, entry, float(backoff))
    ctx.emit("WORLD_CHANGED", {"change": "attached", "object": ctx.world.attached_uid})


def op_smart_release(ctx: ExecutionContext, query: str, place: str, backoff: float) -> Iterator[NodeStatus]:
    expr = _parse_expr(query)
    entry = _symbol(ctx, place)
    yield from ctx.arm.smart_release(expr, entry, float(backoff))
    ctx.emit("WORLD_CHANGED", {"change": "released"})


# ------------------------------------------------------------------ gripper


def op_open_gripper(ctx: ExecutionContext) -> Iterator[NodeStatus]:
    yield from ctx.arm.gripper(open_gripper=True)
    ctx.emit("WORLD_CHANGED", {"change": "gripper_open"})


def op_close_gripper(ctx: ExecutionContext) -> Iterator[NodeStatus]:
    yield from ctx.arm.gripper(open_gripper=False)
    ctx.emit("WORLD_CHANGED", {"change": "gripper_closed", "attached": ctx.world.attached_uid})


# ------------------------------------------------------------------ perception


def op_detect_objects(ctx: ExecutionContext) -> Iterator[NodeStatus]:
    if ctx.config.require_home_for_detection and not ctx.arm.at_home():
        raise OperationFailure("workspace occluded")
    yield from ctx.arm._wait(ctx.config.detect_duration_s)
    snapshot = ctx.world.detect(
        ctx.rng, timestamp=ctx.clock.now, noise=ctx.config.detection_noise
    )
    ctx.store.ingest_detection(snapshot.objects)
    ctx.emit("DETECTION", snapshot.to_dict())


# ------------------------------------------------------------------ predicator


def op_knowledge_test(ctx: ExecutionContext, query: str) -> Iterator[NodeStatus]:
    expr = _parse_expr(query)
    try:
        result = knowledge_test(expr, ctx.store.snapshot())
    except KnowledgeError as e:
        raise OperationFailure(str(e)) from None
    yield NodeStatus.SUCCESS if result else NodeStatus.FAILURE


# ------------------------------------------------------------------ scene


def op_disable_collisions(ctx: ExecutionContext, object: str) -> Iterator[NodeStatus]:
    ctx.arm.set_collisions(object, enabled=False)
    yield NodeStatus.SUCCESS


def op_enable_collisions(ctx: ExecutionContext, object: str) -> Iterator[NodeStatus]:
    ctx.arm.set_collisions(object, enabled=True)
    yield NodeStatus.SUCCESS


OPERATION_IMPLS: dict[str, Callable] = {
    "MoveToHome": op_move_to_home,
    "PlanToHome": op_plan_to_home,
    "MoveToWaypoint": op_move_to_waypoint,
    "PlanToWaypoint": op_plan_to_waypoint,
    "MoveRelativeToObject": op_move_relative_to_object,
    "SmartGrasp": op_smart_grasp,
    "SmartRelease": op_smart_release,
    "OpenGripper": op_open_gripper,
    "CloseGripper": op_close_gripper,
    "DetectObjects": op_detect_objects,
    "KnowledgeTest": op_knowledge_test,
    "DisableCollisions": op_disable_collisions,
    "EnableCollisions": op_enable_collisions,
}


def build_registry() -> ComponentRegistry:
    """Default component registry mirroring the system's architecture."""
    return ComponentRegistry(
        (
            ComponentEntry(
                name="arm",
                inputs=("joint_states",),
                outputs=("trajectories",),
                symbols=("WAYPOINT", "HOME"),
                operations=(
                    OperationSpec("MoveToHome", "arm", (), "Servo straight to the home configuration"),
                    OperationSpec("PlanToHome", "arm", (), "Plan a collision-free path home"),
                    OperationSpec(
                        "MoveToWaypoint", "arm", (("target", "symbol"),), "Servo straight to a taught waypoint"
                    ),
                    OperationSpec(
                        "PlanToWaypoint", "arm", (("target", "symbol"),), "Plan a collision-free path to a waypoint"
                    ),
                    OperationSpec(
                        "MoveRelativeToObject",
                        "arm",
                        (("target", "symbol"),),
                        "Servo to a waypoint tracked relative to a detected object",
                    ),
                    OperationSpec(
                        "SmartGrasp",
                        "arm",
                        (("query", "expr"), ("grasp", "symbol"), ("backoff", "number")),
                        "Query matching objects and grasp the best-ranked one",
                    ),
                    OperationSpec(
                        "SmartRelease",
                        "arm",
                        (("query", "expr"), ("place", "symbol"), ("backoff", "number")),
                        "Place the held object at the best-ranked matching pose",
                    ),
                    OperationSpec(
                        "DisableCollisions",
                        "arm",
                        (("object", "object_id"),),
                        "Remove an object from the motion-planning scene",
                    ),
                    OperationSpec(
                        "EnableCollisions",
                        "arm",
                        (("object", "object_id"),),
                        "Restore an object to the motion-planning scene",
                    ),
                ),
            ),
            ComponentEntry(
                name="gripper",
                inputs=("gripper_state",),
                outputs=("gripper_commands",),
                operations=(
                    OperationSpec("OpenGripper", "gripper", (), "Open the gripper; releases any held object"),
                    OperationSpec("CloseGripper", "gripper", (), "Close the gripper; grasps a nearby object"),
                ),
            ),
            ComponentEntry(
                name="perception",
                inputs=("rgbd",),
                outputs=("detected_objects",),
                symbols=("OBJECT_POSE",),
                operations=(
                    OperationSpec("DetectObjects", "perception", (), "Refresh the detected-object snapshot"),
                ),
            ),
            ComponentEntry(
                name="predicator",
                inputs=("detected_objects",),
                outputs=("knowledge",),
                predicates=("class_is", "region"),
                operations=(
                    OperationSpec(
                        "KnowledgeTest", "predicator", (("query", "expr"),), "Succeed iff the predicate holds"
                    ),
                ),
            ),
        )
    )
