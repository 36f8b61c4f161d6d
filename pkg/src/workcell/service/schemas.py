"""Pydantic wire models for the authoring service."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class PoseModel(BaseModel):
    translation: list[float] = Field(min_length=3, max_length=3)
    rotation: list[float] = Field(min_length=4, max_length=4)


class SymbolModel(BaseModel):
    name: str
    kind: str
    pose: PoseModel
    reference_frame: str
    stale: bool = False


class ObjectModel(BaseModel):
    uid: str
    session_id: Optional[str] = None
    object_class: str
    pose: PoseModel
    dims: list[float]
    attached: bool = False
    disturbed: bool = False


class RobotModel(BaseModel):
    q: list[float]
    gripper: str
    ee_pose: PoseModel
    at_home: bool


class WorkspaceModel(BaseModel):
    center: list[float]
    radius: float


class WorldModel(BaseModel):
    scenario: str
    table: PoseModel
    workspace: WorkspaceModel
    robot: RobotModel
    objects: list[ObjectModel]
    attached_uid: Optional[str] = None
    disabled_collisions: list[str] = []


class TreeNodeModel(BaseModel):
    id: str
    kind: str
    operation: Optional[str] = None
    parameters: Optional[dict[str, Any]] = None
    children: list["TreeNodeModel"] = []


TreeNodeModel.model_rebuild()


class TreeStateModel(BaseModel):
    tree: Optional[TreeNodeModel] = None
    running: bool = False
    statuses: dict[str, str] = {}


class TeachRequest(BaseModel):
    name: str
    kind: str = "WAYPOINT"
    pose: PoseModel
    reference_frame: str = "WORLD"


class RunRequest(BaseModel):
    condition: int = Field(ge=1, le=4)
    seed: int = 0


class DetectionModel(BaseModel):
    timestamp: float
    objects: list[dict]


class EventModel(BaseModel):
    seq: int
    kind: str
    payload: dict


class ErrorModel(BaseModel):
    code: str
    message: str
    node_id: Optional[str] = None
    violations: list[str] = []
