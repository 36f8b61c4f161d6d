"""Arm controller: primitive motions, gripper, and the smart composites.

Operations are generators that advance one tick at a time; the executor
drives them. Smart grasp/release plan every leg of a candidate before any
motion starts, so a planning failure leaves the arm exactly where it was.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .btree import NodeStatus, OperationFailure
from .collision import (
    AttachedObject,
    ObstacleBox,
    PlanningScene,
    _segment_box_distances,
    collision_check_batch,
    obb_intersect,
)
from .config import RunConfig
from .geometry import Pose
from .kinematics import KinematicChain, fk_points, forward_kinematics, inverse_kinematics
from .knowledge import (
    WORLD_FRAME,
    CostWeights,
    KnowledgeStore,
    PredicateExpr,
    SymbolEntry,
    expr_matches,
    pose_query,
    rank_goal_poses,
)
from .planning import StartInCollisionError, densify_path, interpolate, plan_rrt_connect
from .world import GripperState, World

_DISTURB_MARGIN = 0.003


class ArmController:
    def __init__(
        self,
        chain: KinematicChain,
        world: World,
        store: KnowledgeStore,
        config: RunConfig,
        rng: np.random.Generator,
    ):
        self.chain = chain
        self.world = world
        self.store = store
        self.config = config
        self.rng = rng
        self.disabled: set[str] = set()  # planning-scene ids excluded from collisions
        self.planning_failures = 0
        self.last_smart_log: list[dict] = []
        self._held_scene_id: str | None = None
        self._motion_active = False

    # ------------------------------------------------------------- state

    @property
    def q(self) -> np.ndarray:
        return self.world.robot_q

    def ee_pose(self) -> Pose:
        return forward_kinematics(self.chain, self.q)

    def at_home(self) -> bool:
        return float(np.max(np.abs(self.q - self.chain.home_q))) <= self.config.home_tolerance

    def scene(self, extra_disabled=()) -> PlanningScene:
        attached = None
        if self.world.attached_uid is not None:
            obj = self.world.get(self.world.attached_uid)
            attached = AttachedObject(obj.uid, obj.half_extents, self.world.attached_grasp)
        return PlanningScene(
            boxes=self.world.obstacle_boxes(),
            disabled=frozenset(self.disabled) | frozenset(extra_disabled),
            bounds=self.world.bounds,
            table_z=self.world.table_z,
            attached=attached,
        )

    # ------------------------------------------------------------- motion

    def follow(self, waypoints: np.ndarray) -> Iterator[NodeStatus]:
        """Advance along the path at the configured joint speed, one tick each."""
        if self._motion_active:
            raise OperationFailure("arm is busy")
        self._motion_active = True
        try:
            step = self.config.joint_speed * self.config.tick_dt
            dense = densify_path(np.atleast_2d(waypoints), step)
            for qi in dense[1:]:
                ee = forward_kinematics(self.chain, qi)
                self.world.set_robot_q(qi, ee)
                self._contact_disturb()
                yield NodeStatus.RUNNING
        finally:
            self._motion_active = False

    def _contact_disturb(self) -> None:
        """Physical contact: sweeping the arm through a movable object nudges it.

        The wrist segment is exempt and the tool segment ignores objects right
        at the fingertip, so deliberate grasps do not count as contact; a
        carried payload pushed through an obstacle does.
        """
        movable = [
            o
            for o in self.world.objects
            if o.graspable and o.uid != self.world.attached_uid
        ]
        if not movable:
            return
        points = fk_points(self.chain, self.q)
        p0 = points[None, :-1, :]
        p1 = points[None, 1:, :]
        radii = np.asarray(self.chain.link_radii)
        wrist_segment = len(radii) - 2  # exempt: fingers straddle their target
        fingertip = points[-1]
        attached_pose = None
        if self.world.attached_uid is not None:
            held = self.world.get(self.world.attached_uid)
            attached_pose = (held.pose, held.half_extents)
        for obj in movable:
            box = ObstacleBox(obj.uid, obj.pose, obj.half_extents)
            contact = _segment_box_distances(p0, p1, box)[0] < radii
            contact[wrist_segment] = False
            if contact[-1] and float(np.linalg.norm(obj.pose.translation - fingertip)) < 0.05:
                contact[-1] = False  # deliberate grasp, not a collision
            if bool(np.any(contact)):
                self.world.disturb(obj.uid)
                continue
            if attached_pose is not None and obb_intersect(
                attached_pose[0], attached_pose[1], obj.pose, obj.half_extents, margin=_DISTURB_MARGIN
            ):
                self.world.disturb(obj.uid)

    def _wait(self, seconds: float) -> Iterator[NodeStatus]:
        for _ in range(max(1, math.ceil(seconds / self.config.tick_dt))):
            yield NodeStatus.RUNNING

    # ------------------------------------------------------------- moves

    def _plan(self, q_goal: np.ndarray, scene: PlanningScene):
        try:
            plan = plan_rrt_connect(
                self.chain,
                self.q,
                q_goal,
                scene,
                self.rng,
                step=self.config.rrt_step,
                max_iters=self.config.rrt_max_iters,
                shortcut_attempts=self.config.rrt_shortcut_attempts,
                validate_resolution=self.config.validate_resolution,
            )
        except StartInCollisionError:
            raise OperationFailure("start configuration in collision") from None
        if plan is None:
            self.planning_failures += 1
        return plan

    def _ik(self, target: Pose, seed) -> np.ndarray | None:
        return inverse_kinematics(
            self.chain, target, seed, restart_seed=self.config.ik_restart_seed
        )

    def move_to_q(self, q_target, *, planned: bool, enforce_collisions: bool) -> Iterator[NodeStatus]:
        q_target = self.chain.clamp(q_target)
        if planned:
            plan = self._plan(q_target, self.scene())
            if plan is None:
                raise OperationFailure("no plan")
            yield from self.follow(plan.waypoints)
            return
        if enforce_collisions:
            qs = interpolate(self.q, q_target, self.config.validate_resolution)
            if bool(np.any(collision_check_batch(self.chain, qs, self.scene()))):
                raise OperationFailure("collision on path")
        yield from self.follow(np.vstack([self.q, q_target]))

    def move_to_pose(self, target: Pose, *, planned: bool, enforce_collisions: bool) -> Iterator[NodeStatus]:
        q_goal = self._ik(target, self.q)
        if q_goal is None:
            raise OperationFailure("unreachable")
        yield from self.move_to_q(q_goal, planned=planned, enforce_collisions=enforce_collisions)

    # ------------------------------------------------------------- gripper

    def gripper(self, open_gripper: bool) -> Iterator[NodeStatus]:
        yield from self._wait(self.config.gripper_duration_s)
        if open_gripper:
            uid = self.world.detach()
            if uid is not None:
                obj = self.world.get(uid)
                sid = obj.session_id or uid
                self.store.update_object_pose(sid, obj.pose)
        else:
            if self.world.attached_uid is None:
                self.world.attach_nearest(self.ee_pose())
            self.world.gripper = GripperState.CLOSED

    # ------------------------------------------------------------- scene

    def set_collisions(self, object_id: str, enabled: bool) -> None:
        known = any(
            self.world.scene_id_of(o) == object_id or o.uid == object_id
            for o in self.world.objects
        )
        if not known:
            raise OperationFailure("unknown object")
        if enabled:
            self.disabled.discard(object_id)
        else:
            self.disabled.add(object_id)

    # ------------------------------------------------------------- smart ops

    def smart_grasp(self, expr: PredicateExpr, entry: SymbolEntry, backoff: float) -> Iterator[NodeStatus]:
        if not 0.01 <= backoff <= 0.10:
            raise OperationFailure("backoff out of range")
        if entry.reference_frame not in self.world.classes:
            raise OperationFailure("grasp pose was not taught for an object class")
        snapshot = self.store.snapshot()
        objects = [o for o in snapshot.objects if o.object_class == entry.reference_frame]
        if not any(expr_matches(expr, o, snapshot) for o in objects):
            raise OperationFailure("no matching object")
        candidates = pose_query(
            self.chain,
            objects,
            expr,
            self.q,
            self.scene(),
            entry.pose,
            self.config.weights,
            world=snapshot,
            ik_restart_seed=self.config.ik_restart_seed,
        )
        self.last_smart_log = []
        for cand in candidates:
            sid = cand.object_id
            uid = self.world.uid_for_session_id(sid)
            log_row = {"object_id": sid, "symmetry_index": cand.symmetry_index, "stage": ""}
            self.last_smart_log.append(log_row)
            if uid is None:
                log_row["stage"] = "stale id"
                continue
            legs = self._plan_approach(
                cand.goal_pose,
                cand.goal_pose.compose(Pose.from_translation(-backoff, 0.0, 0.0)),
                extra_disabled={sid},
            )
            if legs is None:
                log_row["stage"] = "not plannable"
                continue
            log_row["stage"] = "chosen"
            plan, q_backoff, q_goal = legs
            self.disabled.add(sid)
            try:
                yield from self.follow(plan.waypoints)
                yield from self.follow(np.vstack([q_backoff, q_goal]))
                yield from self._wait(self.config.gripper_duration_s)
                ee = self.ee_pose()
                target = self.world.get(uid)
                self.world.gripper = GripperState.CLOSED
                if float(np.linalg.norm(target.pose.translation - ee.translation)) > 0.02:
                    raise OperationFailure("grasp missed")
                self.world.attach(uid, ee)
                self.store.update_object_pose(sid, target.pose)
                yield from self.follow(np.vstack([q_goal, q_backoff]))
            except OperationFailure:
                self.disabled.discard(sid)
                raise
            self._held_scene_id = sid
            return
        raise OperationFailure("no feasible grasp")

    def smart_release(self, expr: PredicateExpr, entry: SymbolEntry, backoff: float) -> Iterator[NodeStatus]:
        if self.world.attached_uid is None:
            raise OperationFailure("nothing held")
        if not 0.01 <= backoff <= 0.10:
            raise OperationFailure("backoff out of range")
        held_uid = self.world.attached_uid
        held_sid = self.world.get(held_uid).session_id or held_uid
        snapshot = self.store.snapshot()

        if entry.reference_frame == WORLD_FRAME:
            stacking = False
            candidates = rank_goal_poses(
                self.chain,
                [("place", 0, entry.pose, frozenset())],
                self.q,
                self.scene(),
                self.config.weights,
                ik_restart_seed=self.config.ik_restart_seed,
            )
        elif entry.reference_frame in self.world.classes:
            stacking = True
            objects = [
                o
                for o in snapshot.objects
                if o.id != held_sid and o.object_class == entry.reference_frame
            ]
            if not any(expr_matches(expr, o, snapshot) for o in objects):
                raise OperationFailure("no matching object")
            candidates = pose_query(
                self.chain,
                objects,
                expr,
                self.q,
                self.scene(),
                entry.pose,
                self.config.weights,
                world=snapshot,
                ik_restart_seed=self.config.ik_restart_seed,
            )
        else:
            raise OperationFailure("place pose frame not recognized")

        self.last_smart_log = []
        for cand in candidates:
            log_row = {"object_id": cand.object_id, "symmetry_index": cand.symmetry_index, "stage": ""}
            self.last_smart_log.append(log_row)
            exclude = {cand.object_id} if stacking else set()
            goal = cand.goal_pose
            backoff_pose = Pose(goal.translation + np.array([0.0, 0.0, backoff]), goal.rotation)
            legs = self._plan_approach(goal, backoff_pose, extra_disabled=exclude)
            if legs is None:
                log_row["stage"] = "not plannable"
                continue
            log_row["stage"] = "chosen"
            plan, q_backoff, q_goal = legs
            yield from self.follow(plan.waypoints)
            yield from self.follow(np.vstack([q_backoff, q_goal]))
            yield from self._wait(self.config.gripper_duration_s)
            self.world.detach()
            placed = self.world.get(held_uid)
            self.store.update_object_pose(held_sid, placed.pose)
            yield from self.follow(np.vstack([q_goal, q_backoff]))
            self.disabled.discard(held_sid)
            self._held_scene_id = None
            return
        raise OperationFailure("no feasible placement")

    def _plan_approach(self, goal: Pose, backoff_pose: Pose, extra_disabled):
        """Plan both legs of an approach; None when any leg is infeasible."""
        scene = self.scene(extra_disabled=extra_disabled)
        q_backoff = self._ik(backoff_pose, self.q)
        if q_backoff is None:
            return None
        q_goal = self._ik(goal, q_backoff)
        if q_goal is None:
            return None
        approach = interpolate(q_backoff, q_goal, self.config.validate_resolution)
        if bool(np.any(collision_check_batch(self.chain, approach, scene))):
            return None
        plan = self._plan(q_backoff, scene)
        if plan is None:
            return None
        return plan, q_backoff, q_goal
