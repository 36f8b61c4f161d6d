"""Long-running authoring service: tree editing, execution, event streaming.

One tree and one simulated arm per service instance. All state mutation is
serialized through a session lock; the executor runs on a worker thread and
publishes events through a broadcast bus that never blocks the tick loop.
"""

from __future__ import annotations

import json
import threading
import time
from collections import deque

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse, StreamingResponse

from ..btree import Executor, deserialize_tree, serialize_tree, validate, TreeParseError
from ..conditions import PROFILES
from ..config import RunConfig
from ..geometry import Pose
from ..kinematics import forward_kinematics
from ..knowledge import SymbolEntry, SymbolKind
from ..ops import ExecutionContext
from ..runner import build_session, data_path
from .schemas import (
    ErrorModel,
    EventModel,
    PoseModel,
    RunRequest,
    TeachRequest,
    TreeNodeModel,
    TreeStateModel,
    WorldModel,
)

EVENT_HISTORY_LIMIT = 100_000
SUBSCRIBER_QUEUE_LIMIT = 1000


class EventBus:
    """Broadcast with full history; slow subscribers drop with a gap marker."""

    def __init__(self):
        self._lock = threading.Lock()
        self._history: list[dict] = []
        self._seq = 0
        self._subscribers: list[deque] = []

    def publish(self, kind: str, payload: dict) -> dict:
        with self._lock:
            event = {"seq": self._seq, "kind": kind, "payload": payload}
            self._seq += 1
            self._history.append(event)
            if len(self._history) > EVENT_HISTORY_LIMIT:
                del self._history[: len(self._history) - EVENT_HISTORY_LIMIT]
            for queue in self._subscribers:
                if len(queue) >= SUBSCRIBER_QUEUE_LIMIT:
                    queue.clear()
                    queue.append({"seq": event["seq"], "kind": "GAP", "payload": {}})
                queue.append(event)
        return event

    def history_since(self, from_seq: int) -> list[dict]:
        with self._lock:
            return [e for e in self._history if e["seq"] >= from_seq]

    def subscribe(self) -> deque:
        queue: deque = deque()
        with self._lock:
            self._subscribers.append(queue)
        return queue

    def unsubscribe(self, queue: deque) -> None:
        with self._lock:
            if queue in self._subscribers:
                self._subscribers.remove(queue)


def error(status: int, code: str, message: str, node_id=None, violations=()) -> JSONResponse:
    doc = ErrorModel(code=code, message=message, node_id=node_id, violations=list(violations))
    return JSONResponse(status_code=status, content=doc.model_dump(exclude_none=True))


class ServiceState:
    def __init__(self, scene_name: str, condition: int, config: RunConfig, real_time_factor: float):
        self.lock = threading.RLock()
        self.bus = EventBus()
        self.config = config
        self.real_time_factor = real_time_factor
        self.condition = condition
        scene_doc = json.loads(data_path(scene_name).read_text())
        self.session = build_session(scene_doc, condition, config, emit=self.bus.publish)
        self.tree = None
        self.executor: Executor | None = None
        self._thread: threading.Thread | None = None
        self._stop_requested = False

    # ------------------------------------------------------------- helpers

    @property
    def running(self) -> bool:
        return self._thread is not None and self._thread.is_alive()

    def statuses(self) -> dict[str, str]:
        from ..btree import iter_nodes

        if self.tree is None:
            return {}
        return {n.id: n.status.value for n in iter_nodes(self.tree)}

    def world_model(self) -> WorldModel:
        with self.lock:
            world = self.session.world
            arm = self.session.arm
            ee = forward_kinematics(arm.chain, world.robot_q)
            return WorldModel(
                scenario=world.scenario_id,
                table=PoseModel(**world.table_frame.to_dict()),
                workspace={"center": [float(v) for v in world.workspace_center], "radius": world.workspace_radius},
                robot={
                    "q": [float(v) for v in world.robot_q],
                    "gripper": world.gripper,
                    "ee_pose": PoseModel(**ee.to_dict()),
                    "at_home": arm.at_home(),
                },
                objects=[
                    {
                        "uid": o.uid,
                        "session_id": o.session_id,
                        "object_class": o.object_class,
                        "pose": PoseModel(**o.pose.to_dict()),
                        "dims": [float(v) for v in o.dims],
                        "attached": o.uid == world.attached_uid,
                        "disturbed": o.uid in world.disturbed,
                    }
                    for o in world.objects
                ],
                attached_uid=world.attached_uid,
                disabled_collisions=sorted(arm.disabled),
            )

    def start_run(self, condition: int, seed: int):
        profile = PROFILES[condition]
        violations = validate(
            self.tree, self.session.registry, profile, symbols=set(self.session.store.symbols)
        )
        if violations:
            return [f"{v.node_id}: {v.reason}" for v in violations]
        self.condition = condition
        rng = np.random.default_rng(seed)
        self.session.rng = rng
        self.session.arm.rng = rng
        self.session.ctx.rng = rng
        self.session.ctx.profile = profile
        self.session.profile = profile
        executor = Executor(self.tree, self.session.ctx.start_operation)
        executor.reset()
        executor.add_listener(
            lambda e: self.bus.publish(
                "NODE_STATUS", {"node_id": e.node_id, "status": e.status.value, "reason": e.reason}
            )
        )
        self.executor = executor
        self._stop_requested = False
        self._thread = threading.Thread(target=self._run_loop, daemon=True)
        self._thread.start()
        return []

    def _run_loop(self) -> None:
        executor = self.executor
        config = self.session.config
        dt = config.tick_dt
        while True:
            with self.lock:
                if executor.finished:
                    break
                if self._stop_requested and not executor._leaf_runs:
                    break  # current leaf resolved; halt before starting the next
                if self.session.clock.now >= config.timeout_s:
                    executor.stop()
                    self.bus.publish("LOG", {"level": "warning", "message": "run timed out"})
                    break
                try:
                    executor.tick()
                except Exception as e:  # defensive: surface executor crashes
                    self.bus.publish("LOG", {"level": "error", "message": str(e)})
                    break
                self.session.clock.advance(dt)
                world = self.session.world
                self.bus.publish(
                    "ROBOT_STATE",
                    {
                        "q": [float(v) for v in world.robot_q],
                        "gripper": world.gripper,
                        "attached": world.attached_uid,
                        "sim_time": round(self.session.clock.now, 9),
                    },
                )
            if self.real_time_factor > 0:
                time.sleep(dt / self.real_time_factor)
        outcome = executor.result.value if executor.result else "STOPPED"
        self.bus.publish("LOG", {"level": "info", "message": f"run finished: {outcome}"})

    def stop_run(self) -> None:
        self._stop_requested = True

    def join(self, timeout: float = 30.0) -> None:
        if self._thread is not None:
            self._thread.join(timeout)


def create_app(
    scene: str = "task1.scene",
    condition: int = 4,
    seed: int = 0,
    config: RunConfig | None = None,
    real_time_factor: float = 1.0,
) -> FastAPI:
    config = config or RunConfig(seed=seed)
    state = ServiceState(scene, condition, config, real_time_factor)
    app = FastAPI(title="workcell", version="0.1.0")
    app.state.workcell = state

    @app.get("/world", response_model=WorldModel)
    def get_world():
        return state.world_model()

    @app.post("/detect")
    def post_detect():
        with state.lock:
            if state.running:
                return error(409, "ARM_BUSY", "a tree is executing")
            if state.config.require_home_for_detection and not state.session.arm.at_home():
                return error(409, "OCCLUDED", "workspace occluded: arm is not at home")
            snapshot = state.session.world.detect(
                state.session.rng,
                timestamp=state.session.clock.now,
                noise=state.config.detection_noise,
            )
            state.session.store.ingest_detection(snapshot.objects)
            state.bus.publish("DETECTION", snapshot.to_dict())
            return snapshot.to_dict()

    @app.get("/tree", response_model=TreeStateModel)
    def get_tree():
        with state.lock:
            return TreeStateModel(
                tree=TreeNodeModel(**serialize_tree(state.tree)) if state.tree else None,
                running=state.running,
                statuses=state.statuses(),
            )

    @app.put("/tree")
    def put_tree(tree: TreeNodeModel):
        with state.lock:
            if state.running:
                return error(409, "TREE_LOCKED", "tree is executing; stop the run first")
            try:
                state.tree = deserialize_tree(tree.model_dump(exclude_none=True))
            except TreeParseError as e:
                return error(400, "PARSE", str(e))
            state.bus.publish("LOG", {"level": "info", "message": "tree replaced"})
            return {"ok": True, "nodes": state.tree.node_count()}

    @app.post("/tree/run")
    def run_tree(request: RunRequest):
        with state.lock:
            if state.running:
                return error(409, "ALREADY_RUNNING", "a run is already in progress")
            if state.tree is None:
                return error(400, "NO_TREE", "no tree loaded")
            violations = state.start_run(request.condition, request.seed)
            if violations:
                return error(422, "VALIDATION", "tree rejected by condition profile", violations=violations)
            return {"ok": True, "condition": request.condition, "seed": request.seed}

    @app.post("/tree/stop")
    def stop_tree():
        state.stop_run()
        return {"ok": True, "stopping": state.running}

    @app.post("/teach")
    def teach(request: TeachRequest):
        with state.lock:
            try:
                entry = SymbolEntry(
                    name=request.name,
                    kind=SymbolKind(request.kind),
                    pose=Pose.from_dict(request.pose.model_dump()),
                    reference_frame=request.reference_frame,
                )
                state.session.store.register_symbol(entry)
            except ValueError as e:
                return error(400, "BAD_SYMBOL", str(e))
            state.bus.publish("LOG", {"level": "info", "message": f"taught symbol {request.name}"})
            return {"ok": True}

    @app.get("/symbols")
    def symbols():
        with state.lock:
            return [s.to_dict() for s in state.session.store.list_symbols()]

    @app.get("/registry")
    def registry():
        with state.lock:
            return {
                "components": state.session.registry.to_dict()["components"],
                "profiles": [PROFILES[i].to_dict() for i in sorted(PROFILES)],
                "universal_operations": sorted(["OpenGripper", "CloseGripper"]),
                "active_condition": state.condition,
            }

    @app.get("/events/log")
    def events_log(from_seq: int = 0):
        return state.bus.history_since(from_seq)

    @app.get("/events")
    def events(from_seq: int = 0):
        def stream():
            queue = state.bus.subscribe()
            try:
                last_seq = from_seq - 1
                for event in state.bus.history_since(from_seq):
                    last_seq = event["seq"]
                    yield f"data: {json.dumps(event)}\n\n"
                idle = 0.0
                while idle < 30.0:
                    if queue:
                        event = queue.popleft()
                        if event["seq"] <= last_seq:
                            continue  # already replayed from history
                        idle = 0.0
                        last_seq = event["seq"]
                        yield f"data: {json.dumps(event)}\n\n"
                    else:
                        time.sleep(0.01)
                        idle += 0.01
            finally:
                state.bus.unsubscribe(queue)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app
