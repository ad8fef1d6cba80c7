"""Planner configuration and per-scene resolved numeric parameters."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .scenes import Scene


@dataclass(frozen=True)
class PlannerConfig:
    """User-facing planner knobs; None fields resolve from scene geometry.

    ``goal_bias`` is the probability that a sample is uniformly random; the
    complementary probability draws the goal configuration itself.
    """

    algorithm: str = "rrt"  # "rrt" or "complete"
    seed: int = 0
    goal_bias: float = 0.5
    rotation_weight: float | None = None  # default: bbox diagonal / pi
    max_nodes: int = 200
    time_limit: float = 120.0
    margin_strategy: str = "none"  # "none" disables the stability filter
    margin_threshold: float = 0.0
    goal_tolerance: float | None = None  # default: 0.05 * bbox diagonal
    step_size: float | None = None  # default: 0.02 * bbox diagonal
    velocity_stop: float = 1e-4
    max_steps_per_extend: int = 500
    node_epsilon: float | None = None  # default: d_contact
    force_regularization: float = 1e-4
    strict_margin: float = 1e-6
    relocation_rounds: int = 50

    def __post_init__(self):
        if self.algorithm not in ("rrt", "complete"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must be in [0, 1]")
        if self.rotation_weight is not None and self.rotation_weight <= 0:
            raise ValueError("rotation_weight must be positive")
        if self.margin_threshold < 0:
            raise ValueError("margin_threshold must be nonnegative")


@dataclass(frozen=True)
class PlanParams:
    """Concrete numeric parameters for one scene; every scale resolved."""

    rotation_weight: float
    goal_tolerance: float
    step_size: float
    velocity_stop: float
    max_steps_per_extend: int
    node_epsilon: float
    d_contact: float
    d_pen_max: float
    force_regularization: float
    strict_margin: float
    tol_feas: float
    finger_clearance: float
    finger_collision_margin: float
    relocation_rounds: int
    margin_strategy: str
    margin_threshold: float


def resolve_params(scene: "Scene", cfg: PlannerConfig | None = None) -> PlanParams:
    cfg = cfg or PlannerConfig()
    diag = scene.bbox_diagonal
    d_contact = scene.d_contact
    clearance = (
        scene.finger_clearance if scene.finger_clearance is not None else 2.0 * d_contact
    )
    return PlanParams(
        rotation_weight=cfg.rotation_weight
        if cfg.rotation_weight is not None
        else diag / 3.141592653589793,
        goal_tolerance=cfg.goal_tolerance
        if cfg.goal_tolerance is not None
        else (scene.goal_tolerance if scene.goal_tolerance is not None else 0.05 * diag),
        step_size=cfg.step_size if cfg.step_size is not None else 0.02 * diag,
        velocity_stop=cfg.velocity_stop,
        max_steps_per_extend=cfg.max_steps_per_extend,
        node_epsilon=cfg.node_epsilon if cfg.node_epsilon is not None else d_contact,
        d_contact=d_contact,
        d_pen_max=10.0 * d_contact,
        force_regularization=cfg.force_regularization,
        strict_margin=cfg.strict_margin,
        tol_feas=max(1e-7 * diag, 1e-9),
        finger_clearance=clearance,
        finger_collision_margin=d_contact,
        relocation_rounds=cfg.relocation_rounds,
        margin_strategy=cfg.margin_strategy,
        margin_threshold=cfg.margin_threshold,
    )
