"""Contact-mode guided tree search over object configurations.

Two search loops share the same extension machinery. The default RRT-style
loop draws a goal-biased sample, walks to its nearest tree node, and extends
that node under every feasible environment contact mode. The exhaustive
random-tree variant extends every node under every mode per sample and
relocates fingers on every extension; it trades speed for coverage.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .config import PlannerConfig, PlanParams, resolve_params
from .geom2d import (
    BisectionFailure,
    Contact,
    ContactSource,
    PenetrationError,
    Pose,
    Twist,
    body_twist_between,
    min_separation,
    points_environment_clearance,
    weighted_distance,
)
from .integrate import IntegrationResult, StopReason, forward_integrate
from .mechanics import (
    closest_feasible_velocity,
    external_wrench,
    stability_margin,
    static_equilibrium_possible,
    velocity_cone_projection,
)
from .modes import ContactLabel, ContactMode, enumerate_env_modes
from .solver import SolverError

if TYPE_CHECKING:
    from .scenes import Scene

log = logging.getLogger("modeplan.planner")


def weighted_se2_distance(q1: Pose, q2: Pose, rotation_weight: float) -> float:
    """Euclidean xy distance plus weighted shortest angular difference."""
    return weighted_distance(q1, q2, rotation_weight)


def sample_object_config(q_goal: Pose, p: float, rng: np.random.Generator, bounds) -> Pose:
    """Goal-biased sampling: uniform over bounds with probability p, else the goal."""
    if rng.random() < p:
        return Pose(
            rng.uniform(*bounds.x),
            rng.uniform(*bounds.y),
            rng.uniform(*bounds.theta),
        )
    return q_goal


@dataclass(frozen=True)
class FingerPlacement:
    """One finger contact location on the object boundary (object frame)."""

    point: tuple[float, float]
    edge: int


@dataclass(frozen=True)
class FingerSwitch:
    """Relocation event: which fingers moved, from where, to where."""

    fingers: tuple[int, ...]
    old: tuple[tuple[float, float] | None, ...]
    new: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class RecordContact:
    """One contact in a trajectory record, object-frame quantities."""

    kind: str  # "env" or "mnp"
    index: int
    point: tuple[float, float]
    normal: tuple[float, float]
    mode_label: str
    lambda_n: float
    lambda_t: float


@dataclass(frozen=True)
class TrajectoryRecord:
    t: int
    q: Pose
    contacts: tuple[RecordContact, ...]
    v_cmd: Twist
    event: FingerSwitch | None = None


@dataclass
class Trajectory:
    records: list[TrajectoryRecord]

    def __len__(self) -> int:
        return len(self.records)

    def distinct_contact_states(self) -> int:
        """Number of distinct (contact set, mode) states along the records."""
        states = set()
        for r in self.records:
            states.add(
                tuple(sorted((c.kind, c.index, c.point, c.mode_label) for c in r.contacts))
            )
        return len(states)


@dataclass
class TreeNode:
    id: int
    q: Pose
    parent: int | None
    fingers: tuple[FingerPlacement | None, ...]
    env_contacts: list[Contact]
    edge_mode: ContactMode | None = None  # environment labels used to reach this node
    edge_trace: IntegrationResult | None = None
    margin: float | None = None
    switch: FingerSwitch | None = None
    mode_cache: list[ContactMode] | None = None
    goal_expanded: bool = False  # this node already extended toward the goal once


class PlanStatus(Enum):
    SUCCESS = "success"
    TIMEOUT = "timeout"
    NODE_BUDGET = "node_budget"
    INVALID_SCENE = "invalid_scene"


@dataclass
class PlanStats:
    nodes_in_tree: int = 0
    nodes_in_path: int = 0
    contact_modes_in_path: int = 0
    iterations: int = 0
    elapsed_seconds: float = 0.0
    seed: int = 0


@dataclass
class PlanResult:
    status: PlanStatus
    trajectory: Trajectory | None
    stats: PlanStats
    nodes: list[TreeNode] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.status == PlanStatus.SUCCESS


def finger_contact(scene: "Scene", placement: FingerPlacement, index: int) -> Contact:
    """Contact of one fingertip pressing the object face it sits on."""
    return Contact(
        point=np.asarray(placement.point),
        normal=scene.object_polygon.inward_normal(placement.edge),
        distance=0.0,
        source=ContactSource("mnp", index, ("edge", placement.edge)),
        mu=scene.mu_mnp,
    )


def finger_contacts(
    scene: "Scene", fingers: Sequence[FingerPlacement | None]
) -> list[Contact]:
    return [
        finger_contact(scene, f, i) for i, f in enumerate(fingers) if f is not None
    ]


def _static_wrench(scene: "Scene", q: Pose) -> np.ndarray:
    return external_wrench(scene.plane, scene.mass, scene.com, q, None, scene.gyration_radius)


def change_manip_contact(
    q: Pose,
    fingers: tuple[FingerPlacement | None, ...],
    env_contacts: Sequence[Contact],
    scene: "Scene",
    params: PlanParams,
    rng: np.random.Generator,
    relocate_all: bool = False,
) -> tuple[tuple[FingerPlacement, ...], FingerSwitch] | None:
    """Relocate a random subset of fingers to sampled boundary locations.

    The move is allowed only if the remaining contacts alone keep the object
    in equilibrium. New locations are drawn uniformly by arclength over the
    allowed faces, rejecting environment collisions, workspace violations and
    near-coincident fingers. Returns None on failure.
    """
    n = scene.n_fingers
    if relocate_all or any(f is None for f in fingers):
        moving = list(range(n))
    else:
        k = int(rng.integers(1, n + 1))
        moving = sorted(int(i) for i in rng.choice(n, size=k, replace=False))
    keep = [
        finger_contact(scene, f, i)
        for i, f in enumerate(fingers)
        if i not in moving and f is not None
    ]
    if not static_equilibrium_possible(
        q, keep + list(env_contacts), _static_wrench(scene, q), scene.mnp_force_cap
    ):
        return None

    new = list(fingers)
    placed_points: list[np.ndarray] = [
        np.asarray(f.point) for i, f in enumerate(fingers) if i not in moving and f is not None
    ]
    total = scene.object_polygon.perimeter(scene.allowed_faces)
    for i in moving:
        ok = False
        for _ in range(params.relocation_rounds):
            s = rng.uniform(0.0, total)
            p, edge = scene.object_polygon.boundary_point(s, scene.allowed_faces)
            w = q.transform_points(p)
            if points_environment_clearance(w, scene.environment) < params.finger_clearance:
                continue
            if scene.finger_workspaces is not None:
                ws = scene.finger_workspaces[i]
                if not bool(ws.contains(w.reshape(1, 2))[0]):
                    continue
            if any(np.linalg.norm(p - other) < 1e-6 for other in placed_points):
                continue
            new[i] = FingerPlacement((float(p[0]), float(p[1])), int(edge))
            placed_points.append(np.asarray(p))
            ok = True
            break
        if not ok:
            return None
    event = FingerSwitch(
        fingers=tuple(moving),
        old=tuple(fingers[i].point if fingers[i] is not None else None for i in moving),
        new=tuple(new[i].point for i in moving),
    )
    return tuple(new), event  # type: ignore[return-value]


def _fingers_collide(scene: "Scene", q: Pose, fingers: Sequence[Contact], params) -> bool:
    if not fingers:
        return False
    pts = q.transform_points(np.array([f.point for f in fingers]))
    return points_environment_clearance(pts, scene.environment) < params.finger_collision_margin


def extend(
    env_mode: ContactMode,
    near: TreeNode,
    q_rand: Pose,
    scene: "Scene",
    params: PlanParams,
    rng: np.random.Generator,
    node_id: int,
    force_relocate: bool = False,
    tree: Sequence[TreeNode] = (),
) -> TreeNode | None:
    """One tree extension under a fixed environment contact mode.

    Mirrors the search step: test the closest feasible velocity toward the
    sample; relocate fingers when the motion is blocked or fingers collide;
    forward integrate; keep the new state if it made progress and clears the
    stability filter.
    """
    fingers = near.fingers
    switch = None
    # The environment velocity cone is finger-independent: a dead projection
    # means no relocation can make this mode progress, so skip it outright.
    v_d0 = body_twist_between(near.q, q_rand)
    v_proj = velocity_cone_projection(
        v_d0, near.env_contacts, env_mode, params.rotation_weight
    )
    if v_proj.weighted_norm(params.rotation_weight) <= params.velocity_stop:
        return None
    unassigned = any(f is None for f in fingers)
    need_reloc = force_relocate or unassigned
    if not need_reloc:
        contacts = finger_contacts(scene, fingers) + list(near.env_contacts)
        full_mode = env_mode.with_fixed_prefix(len(fingers))
        v_d = body_twist_between(near.q, q_rand)
        f_ext = external_wrench(
            scene.plane, scene.mass, scene.com, near.q, v_d, scene.gyration_radius
        )
        try:
            sol = closest_feasible_velocity(
                near.q,
                v_d,
                contacts,
                full_mode,
                f_ext,
                rotation_weight=params.rotation_weight,
                force_regularization=params.force_regularization,
                tol_feas=params.tol_feas,
                mnp_force_cap=scene.mnp_force_cap,
            )
        except SolverError:
            return None
        blocked = (
            sol is None
            or sol.v_o.weighted_norm(params.rotation_weight) <= params.velocity_stop
        )
        if blocked or _fingers_collide(scene, near.q, contacts[: len(fingers)], params):
            need_reloc = True
    if need_reloc:
        reloc = change_manip_contact(
            near.q, fingers, near.env_contacts, scene, params, rng,
            relocate_all=unassigned,
        )
        if reloc is None:
            return None
        fingers, switch = reloc

    try:
        trace = forward_integrate(
            near.q, q_rand, finger_contacts(scene, fingers), env_mode, scene, params
        )
    except (SolverError, BisectionFailure, PenetrationError):
        return None
    if (
        weighted_distance(trace.q_new, near.q, params.rotation_weight)
        <= params.node_epsilon
    ):
        return None
    # Duplicate poses add no reachability information and chew the budget,
    # e.g. boundary states rediscovered under every finger resample.
    if any(
        weighted_distance(trace.q_new, n.q, params.rotation_weight) <= params.node_epsilon
        for n in tree
    ):
        return None
    # A tree node is a state the object can pause at; arrival states whose
    # remaining contacts cannot hold the object statically are dead ends
    # (e.g. a carried part slid just past its support).
    if not static_equilibrium_possible(
        trace.q_new,
        finger_contacts(scene, fingers) + list(trace.env_contacts),
        _static_wrench(scene, trace.q_new),
        scene.mnp_force_cap,
    ):
        return None

    margin = None
    if params.margin_strategy != "none":
        label_of = {c.identity: lab for c, lab in zip(near.env_contacts, env_mode)}
        labels = tuple(ContactLabel.FIXED for _ in fingers) + tuple(
            label_of.get(c.identity, ContactLabel.FIXED) for c in trace.env_contacts
        )
        contacts_new = finger_contacts(scene, fingers) + list(trace.env_contacts)
        margin = stability_margin(
            trace.q_new,
            contacts_new,
            ContactMode(labels),
            None,
            _static_wrench(scene, trace.q_new),
            strategy=params.margin_strategy,
            mnp_force_cap=scene.mnp_force_cap,
        )
        if margin < params.margin_threshold:
            return None

    return TreeNode(
        id=node_id,
        q=trace.q_new,
        parent=near.id,
        fingers=fingers,
        env_contacts=trace.env_contacts,
        edge_mode=env_mode,
        edge_trace=trace,
        margin=margin,
        switch=switch,
    )


def _node_modes(node: TreeNode, params: PlanParams) -> list[ContactMode]:
    if node.mode_cache is None:
        node.mode_cache = enumerate_env_modes(
            node.env_contacts, node.q, sigma=params.strict_margin
        )
    return node.mode_cache


def _nearest(nodes: list[TreeNode], q: Pose, w_r: float) -> TreeNode:
    return min(nodes, key=lambda n: (weighted_distance(n.q, q, w_r), n.id))


def _in_goal(scene: "Scene", params: PlanParams, q: Pose) -> bool:
    if scene.goal_region is not None:
        return scene.goal_region.contains(q)
    return weighted_distance(q, scene.q_goal, params.rotation_weight) <= params.goal_tolerance


def _resting_record(
    scene: "Scene", params: PlanParams, t: int, q: Pose,
    fingers: tuple[FingerPlacement | None, ...], env: Sequence[Contact],
) -> TrajectoryRecord | None:
    """Terminal record: the object at rest with all contacts labeled fixed."""
    contacts = finger_contacts(scene, fingers) + list(env)
    mode = ContactMode(tuple(ContactLabel.FIXED for _ in contacts))
    f_ext = _static_wrench(scene, q)
    try:
        sol = closest_feasible_velocity(
            q,
            Twist(0.0, 0.0, 0.0),
            contacts,
            mode,
            f_ext,
            rotation_weight=params.rotation_weight,
            force_regularization=params.force_regularization,
            tol_feas=params.tol_feas,
            mnp_force_cap=scene.mnp_force_cap,
        )
    except SolverError:
        return None
    if sol is None:
        return None
    recs = tuple(
        RecordContact(
            kind=c.source.kind,
            index=c.source.index,
            point=(float(c.point[0]), float(c.point[1])),
            normal=(float(c.normal[0]), float(c.normal[1])),
            mode_label=ContactLabel.FIXED.code,
            lambda_n=sol.lam_normal(i),
            lambda_t=sol.lam_tangent(i),
        )
        for i, c in enumerate(contacts)
    )
    return TrajectoryRecord(t=t, q=q, contacts=recs, v_cmd=Twist(0.0, 0.0, 0.0))


def _build_trajectory(
    scene: "Scene", params: PlanParams, path: list[TreeNode]
) -> Trajectory | None:
    records: list[TrajectoryRecord] = []
    t = 0
    for node in path[1:]:
        assert node.edge_trace is not None
        first = True
        for step in node.edge_trace.steps:
            recs = tuple(
                RecordContact(
                    kind=c.source.kind,
                    index=c.source.index,
                    point=(float(c.point[0]), float(c.point[1])),
                    normal=(float(c.normal[0]), float(c.normal[1])),
                    mode_label=lab.code,
                    lambda_n=step.solution.lam_normal(i),
                    lambda_t=step.solution.lam_tangent(i),
                )
                for i, (c, lab) in enumerate(zip(step.contacts, step.mode))
            )
            records.append(
                TrajectoryRecord(
                    t=t,
                    q=step.pose,
                    contacts=recs,
                    v_cmd=step.v_cmd,
                    event=node.switch if first else None,
                )
            )
            first = False
            t += 1
    tail = path[-1]
    closing = _resting_record(
        scene, params, t, tail.q, tail.fingers, tail.env_contacts
    )
    if closing is None:
        return None
    records.append(closing)
    return Trajectory(records)


def _extract_path(nodes: list[TreeNode], leaf: TreeNode) -> list[TreeNode]:
    path = [leaf]
    while path[-1].parent is not None:
        path.append(nodes[path[-1].parent])
    path.reverse()
    return path


def _path_mode_count(path: list[TreeNode]) -> int:
    states = set()
    for node in path[1:]:
        idents = tuple(sorted(c.identity for c in node.env_contacts))
        states.add((idents, node.edge_mode.codes() if node.edge_mode else ""))
    return len(states)


def plan(scene: "Scene", cfg: PlannerConfig | None = None) -> PlanResult:
    """Search for a quasistatic trajectory from the scene's start to its goal."""
    cfg = cfg or PlannerConfig()
    params = resolve_params(scene, cfg)
    rng = np.random.default_rng(cfg.seed)
    stats = PlanStats(seed=cfg.seed)
    t0 = time.perf_counter()

    if min_separation(scene.object_polygon, scene.q_start, scene.environment) < -params.d_contact:
        return PlanResult(PlanStatus.INVALID_SCENE, None, stats)

    from .integrate import _env_contacts  # shared collision wrapper

    root = TreeNode(
        id=0,
        q=scene.q_start,
        parent=None,
        fingers=(None,) * scene.n_fingers,
        env_contacts=_env_contacts(scene, scene.q_start, params),
    )
    nodes = [root]

    def fail(status: PlanStatus) -> PlanResult:
        stats.nodes_in_tree = len(nodes)
        stats.elapsed_seconds = time.perf_counter() - t0
        return PlanResult(status, None, stats, nodes)

    def try_success(leaf: TreeNode) -> PlanResult | None:
        path = _extract_path(nodes, leaf)
        trajectory = _build_trajectory(scene, params, path)
        if trajectory is None:
            log.debug("goal node %d rejected: no resting equilibrium", leaf.id)
            return None
        stats.nodes_in_tree = len(nodes)
        stats.nodes_in_path = len(path)
        stats.contact_modes_in_path = _path_mode_count(path)
        stats.elapsed_seconds = time.perf_counter() - t0
        return PlanResult(PlanStatus.SUCCESS, trajectory, stats, nodes)

    if _in_goal(scene, params, root.q):
        result = try_success(root)
        if result is not None:
            return result

    over_budget = lambda: len(nodes) >= cfg.max_nodes
    over_time = lambda: time.perf_counter() - t0 > cfg.time_limit

    while True:
        if over_budget():
            return fail(PlanStatus.NODE_BUDGET)
        if over_time():
            return fail(PlanStatus.TIMEOUT)
        stats.iterations += 1
        q_rand = sample_object_config(scene.q_goal, cfg.goal_bias, rng, scene.bounds)
        goal_sample = q_rand is scene.q_goal

        if cfg.algorithm == "rrt":
            if goal_sample:
                # Walk the goal-directed frontier: each node gets one shot at
                # the goal before the next-nearest takes over.
                fresh = [n for n in nodes if not n.goal_expanded]
                if not fresh:
                    for n in nodes:
                        n.goal_expanded = False
                    fresh = nodes
                near = _nearest(fresh, q_rand, params.rotation_weight)
                near.goal_expanded = True
            else:
                near = _nearest(nodes, q_rand, params.rotation_weight)
            targets = [near]
        else:
            targets = list(nodes)  # snapshot; new nodes wait for the next sample

        for near in targets:
            for env_mode in _node_modes(near, params):
                if over_budget() or over_time():
                    break
                node = extend(
                    env_mode,
                    near,
                    q_rand,
                    scene,
                    params,
                    rng,
                    node_id=len(nodes),
                    force_relocate=(cfg.algorithm == "complete"),
                    tree=nodes,
                )
                if node is None:
                    continue
                nodes.append(node)
                log.debug(
                    "node %d <- %d mode %s at (%.3f, %.3f, %.3f)",
                    node.id, near.id, env_mode.codes(), node.q.x, node.q.y, node.q.theta,
                )
                if _in_goal(scene, params, node.q):
                    result = try_success(node)
                    if result is not None:
                        return result
