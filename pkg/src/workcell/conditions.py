"""Capability condition profiles gating which operations a tree may use.

The four profiles mirror the study's capability matrix exactly; gripper
open/close is available everywhere (no profile is usable without it).
"""

from __future__ import annotations

from dataclasses import dataclass

UNIVERSAL_OPERATIONS = frozenset({"OpenGripper", "CloseGripper"})


@dataclass(frozen=True)
class ConditionProfile:
    id: int
    name: str
    allowed_actions: frozenset[str]
    allowed_knowledge: frozenset[str]
    collisions_enforced_on_unplanned_moves: bool

    def allows(self, operation_name: str) -> bool:
        return (
            operation_name in self.allowed_actions
            or operation_name in self.allowed_knowledge
            or operation_name in UNIVERSAL_OPERATIONS
        )

    def allowed_operations(self) -> frozenset[str]:
        return self.allowed_actions | self.allowed_knowledge | UNIVERSAL_OPERATIONS

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "allowed_actions": sorted(self.allowed_actions),
            "allowed_knowledge": sorted(self.allowed_knowledge),
            "collisions_enforced_on_unplanned_moves": self.collisions_enforced_on_unplanned_moves,
        }


PROFILES: dict[int, ConditionProfile] = {
    1: ConditionProfile(
        id=1,
        name="Baseline",
        allowed_actions=frozenset({"MoveToHome", "MoveToWaypoint"}),
        allowed_knowledge=frozenset(),
        collisions_enforced_on_unplanned_moves=False,
    ),
    2: ConditionProfile(
        id=2,
        name="Planning",
        allowed_actions=frozenset({"PlanToHome", "PlanToWaypoint"}),
        allowed_knowledge=frozenset({"DetectObjects", "EnableCollisions", "DisableCollisions"}),
        collisions_enforced_on_unplanned_moves=True,
    ),
    3: ConditionProfile(
        id=3,
        name="Perception",
        allowed_actions=frozenset({"MoveToHome", "MoveRelativeToObject"}),
        allowed_knowledge=frozenset({"DetectObjects"}),
        collisions_enforced_on_unplanned_moves=False,
    ),
    4: ConditionProfile(
        id=4,
        name="SmartMove",
        allowed_actions=frozenset({"PlanToHome", "SmartGrasp", "SmartRelease"}),
        allowed_knowledge=frozenset({"DetectObjects"}),
        collisions_enforced_on_unplanned_moves=True,
    ),
}
