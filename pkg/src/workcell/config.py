"""Run-level configuration shared by the runner, service, and CLI."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .knowledge import CostWeights


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    tick_hz: float = 20.0
    joint_speed: float = 1.0  # rad/s along the joint-space path
    rrt_step: float = 0.1
    rrt_max_iters: int = 10_000
    rrt_shortcut_attempts: int = 200
    validate_resolution: float = 0.02
    detection_noise: float = 0.0
    require_home_for_detection: bool = True
    timeout_s: float = 300.0
    weights: CostWeights = field(default_factory=CostWeights)
    ik_restart_seed: int = 0
    detect_duration_s: float = 1.0
    gripper_duration_s: float = 0.5
    home_tolerance: float = 0.01

    @property
    def tick_dt(self) -> float:
        return 1.0 / self.tick_hz

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed)
