"""Projected forward integration of one contact mode toward a target pose.

At every step the closest force-balanced twist toward the target is solved,
the pose advances by one Euler step, and environment contacts are refreshed
by collision checking. Integration stops when progress dies out, equilibrium
is lost, the contact set changes, a finger hits the environment, or the step
budget runs out. Acting with a fixed mode this realizes a projection onto
the mode's reachable manifold: targets on the manifold are fixed points and
off-manifold targets land at the closest reachable pose.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .config import PlanParams
from .geom2d import (
    Contact,
    Pose,
    Twist,
    body_twist_between,
    contact_query,
    contact_query_with_depth,
    min_separation,
    penetration_rollback,
    points_environment_clearance,
    twist_to_transform,
    weighted_distance,
)
from .mechanics import closest_feasible_velocity, external_wrench
from .modes import ContactLabel, ContactMode

if TYPE_CHECKING:
    from .scenes import Scene


class InvalidStart(ValueError):
    """Integration preconditions violated at the start pose."""


class StopReason(Enum):
    VELOCITY_ZERO = "velocity_zero"
    INFEASIBLE = "infeasible"
    NEW_CONTACT = "new_contact"
    FINGER_COLLISION = "finger_collision"
    STEP_LIMIT = "step_limit"


@dataclass
class IntegrationStep:
    """State at the start of one Euler step and the velocity solved there."""

    pose: Pose
    contacts: tuple[Contact, ...]  # fingers first, then environment
    mode: ContactMode  # labels for ``contacts``
    solution: "object"  # QuasistaticSolution
    v_cmd: Twist


@dataclass
class IntegrationResult:
    q_new: Pose
    steps: list[IntegrationStep]
    stop_reason: StopReason
    env_contacts: list[Contact]  # refreshed contacts at q_new


def _env_contacts(scene: "Scene", q: Pose, params: PlanParams) -> list[Contact]:
    return contact_query(
        scene.object_polygon,
        q,
        scene.environment,
        params.d_contact,
        mu=scene.mu_env,
        d_pen_max=params.d_pen_max,
    )


def _finger_clearance(scene: "Scene", q: Pose, fingers: Sequence[Contact]) -> float:
    if not fingers:
        return float("inf")
    pts = q.transform_points(np.array([f.point for f in fingers]))
    return points_environment_clearance(pts, scene.environment)


def forward_integrate(
    q_start: Pose,
    q_target: Pose,
    fingers: Sequence[Contact],
    env_mode: ContactMode,
    scene: "Scene",
    params: PlanParams,
) -> IntegrationResult:
    """Drive the object from q_start toward q_target under one contact mode.

    ``env_mode`` labels the environment contacts found at q_start, in the
    deterministic order of the collision query; finger contacts are fixed in
    the object frame and always labeled fixed.
    """
    fingers = list(fingers)
    if min_separation(scene.object_polygon, q_start, scene.environment) < -params.d_contact:
        raise InvalidStart("start pose penetrates the environment")
    if _finger_clearance(scene, q_start, fingers) < -params.d_contact:
        raise InvalidStart("a finger starts inside the environment")
    env = _env_contacts(scene, q_start, params)
    if len(env_mode) != len(env):
        raise InvalidStart(
            f"mode labels {len(env_mode)} contacts, query found {len(env)}"
        )
    label_of = {c.identity: lab for c, lab in zip(env, env_mode)}

    q = q_start
    steps: list[IntegrationStep] = []
    stop = StopReason.STEP_LIMIT
    x_hint = None
    for _ in range(params.max_steps_per_extend):
        dist = weighted_distance(q, q_target, params.rotation_weight)
        if dist <= params.node_epsilon:
            stop = StopReason.VELOCITY_ZERO
            break
        v_d = body_twist_between(q, q_target)
        f_ext = external_wrench(
            scene.plane, scene.mass, scene.com, q, v_d, scene.gyration_radius
        )
        contacts = fingers + env
        full_mode = ContactMode(
            tuple(ContactLabel.FIXED for _ in fingers)
            + tuple(label_of[c.identity] for c in env)
        )
        solution = closest_feasible_velocity(
            q,
            v_d,
            contacts,
            full_mode,
            f_ext,
            rotation_weight=params.rotation_weight,
            force_regularization=params.force_regularization,
            tol_feas=params.tol_feas,
            x_hint=x_hint,
            mnp_force_cap=scene.mnp_force_cap,
        )
        if solution is None:
            stop = StopReason.INFEASIBLE
            break
        x_hint = np.concatenate([solution.v_o.as_array(), solution.q_dot, solution.lam])
        if solution.v_o.weighted_norm(params.rotation_weight) <= params.velocity_stop:
            stop = StopReason.VELOCITY_ZERO
            break

        h = min(params.step_size, dist)
        q_raw = q.compose(twist_to_transform(solution.v_o, h))
        env_next, depth = contact_query_with_depth(
            scene.object_polygon,
            q_raw,
            scene.environment,
            params.d_contact,
            mu=scene.mu_env,
            d_pen_max=float("inf"),
        )
        if depth < -params.d_contact:
            q_next = penetration_rollback(
                q, q_raw, scene.object_polygon, scene.environment, params.d_contact
            )
            env_next = _env_contacts(scene, q_next, params)
        else:
            q_next = q_raw
        if _finger_clearance(scene, q_next, fingers) < params.finger_collision_margin:
            stop = StopReason.FINGER_COLLISION
            break
        next_ids = {c.identity for c in env_next}
        appeared = any(c.identity not in label_of for c in env_next)
        lost = any(
            lab != ContactLabel.SEPARATE and ident not in next_ids
            for ident, lab in label_of.items()
        )
        progressed = (
            weighted_distance(q_next, q_target, params.rotation_weight) < dist - 1e-12
        )
        if appeared or lost:
            if progressed:
                steps.append(IntegrationStep(q, tuple(contacts), full_mode, solution, v_d))
                q, env = q_next, env_next
            stop = StopReason.NEW_CONTACT
            break
        if not progressed:
            stop = StopReason.VELOCITY_ZERO
            break
        steps.append(IntegrationStep(q, tuple(contacts), full_mode, solution, v_d))
        q, env = q_next, env_next

    return IntegrationResult(q_new=q, steps=steps, stop_reason=stop, env_contacts=env)


def check_projection_idempotence(
    q: Pose,
    env_mode: ContactMode,
    fingers: Sequence[Contact],
    scene: "Scene",
    params: PlanParams,
) -> bool:
    """A pose already on the mode manifold must map to itself."""
    result = forward_integrate(q, q, fingers, env_mode, scene, params)
    return (
        result.stop_reason == StopReason.VELOCITY_ZERO
        and not result.steps
        and weighted_distance(result.q_new, q, params.rotation_weight)
        <= params.node_epsilon
    )
