"""Scene description format, bundled benchmark problems, replay validation.

Scenes are plain JSON documents with an explicit units header. Trajectories
serialize as line-delimited JSON, one record per integration step; floats go
through repr so values round-trip exactly.

The replay validator re-derives every constraint from scratch, sharing only
the geometry and solver layers with the planner: force balance, mode clause
signs, penetration bounds, finger bookkeeping and switch-time equilibrium.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Sequence

import numpy as np

from .geom2d import (
    Contact,
    ContactSource,
    GeometryError,
    Polygon,
    Pose,
    Twist,
    body_twist_between,
    min_separation,
    normalize_angle,
    weighted_distance,
)
from .mechanics import (
    GravityPlane,
    TabletopPlane,
    external_wrench,
    grasp_map,
    static_equilibrium_possible,
)
from .modes import LABEL_FROM_CODE, ContactLabel
from .planner import (
    FingerSwitch,
    RecordContact,
    Trajectory,
    TrajectoryRecord,
)

SCHEMA_VERSION = 1
PROBLEM_NAMES = {
    1: "move-and-pivot-block",
    2: "pick-up-blade",
    3: "unpacking",
    4: "block-up-cliff",
    5: "obstacle-course",
    6: "in-hand-t-shape",
    7: "narrow-passage-pushing",
}


class SchemaError(ValueError):
    """Scene document violates the schema; carries the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class SampleBounds:
    x: tuple[float, float]
    y: tuple[float, float]
    theta: tuple[float, float] = (-math.pi, math.pi)


@dataclass(frozen=True)
class GoalRegion:
    """Axis-aligned goal box in configuration space."""

    x: tuple[float, float]
    y: tuple[float, float]
    theta: tuple[float, float]

    def contains(self, q: Pose) -> bool:
        th = normalize_angle(q.theta)
        return (
            self.x[0] <= q.x <= self.x[1]
            and self.y[0] <= q.y <= self.y[1]
            and self.theta[0] <= th <= self.theta[1]
        )


@dataclass
class Scene:
    name: str
    object_polygon: Polygon
    mass: float
    com: np.ndarray
    environment: list[Polygon]
    plane: GravityPlane | TabletopPlane
    mu_env: float
    mu_mnp: float
    n_fingers: int
    q_start: Pose
    q_goal: Pose
    bounds: SampleBounds
    goal_tolerance: float | None = None
    goal_region: GoalRegion | None = None
    finger_clearance: float | None = None
    finger_workspaces: list[Polygon] | None = None
    allowed_faces: list[int] | None = None
    units: dict[str, str] = field(default_factory=lambda: {"length": "scene", "force": "object-weight"})
    warnings: list[str] = field(default_factory=list)

    @property
    def bbox_diagonal(self) -> float:
        return self.object_polygon.bounding_box_diagonal()

    @property
    def d_contact(self) -> float:
        return 1e-3 * self.bbox_diagonal

    @property
    def gyration_radius(self) -> float:
        return self.object_polygon.gyration_radius()


def _get(doc: dict, key: str, path: str, required: bool = True, default=None):
    if key not in doc:
        if required:
            raise SchemaError(f"{path}.{key}", "missing required field")
        return default
    return doc[key]


def _number(value, path: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise SchemaError(path, f"expected a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise SchemaError(path, "must be finite")
    return v


def _pair(value, path: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise SchemaError(path, "expected [low, high]")
    lo, hi = _number(value[0], path), _number(value[1], path)
    if lo >= hi:
        raise SchemaError(path, "low bound must be below high bound")
    return (lo, hi)


def _polygon(value, path: str, warnings: list[str]) -> Polygon:
    verts = _get(value, "vertices", path) if isinstance(value, dict) else value
    try:
        arr = np.asarray(verts, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}.vertices", f"bad vertex array: {exc}") from None
    try:
        return Polygon(arr)
    except GeometryError as first:
        if "counter-clockwise" in str(first):
            try:
                poly = Polygon(arr[::-1])
            except GeometryError:
                raise SchemaError(f"{path}.vertices", str(first)) from None
            warnings.append(f"{path}: clockwise polygon reoriented")
            return poly
        raise SchemaError(f"{path}.vertices", str(first)) from None


def _pose(value, path: str) -> Pose:
    return Pose(
        _number(_get(value, "x", path), f"{path}.x"),
        _number(_get(value, "y", path), f"{path}.y"),
        _number(_get(value, "theta", path), f"{path}.theta"),
    )


def load_scene(doc: dict) -> Scene:
    """Validate a scene document and build the runtime scene."""
    if not isinstance(doc, dict):
        raise SchemaError("$", "scene document must be a mapping")
    version = _get(doc, "version", "$")
    if version != SCHEMA_VERSION:
        raise SchemaError("$.version", f"unsupported version {version!r}")
    warnings: list[str] = []

    obj_doc = _get(doc, "object", "$")
    obj = _polygon(obj_doc, "$.object", warnings)
    mass = _number(_get(obj_doc, "mass", "$.object", required=False, default=1.0), "$.object.mass")
    if mass <= 0:
        raise SchemaError("$.object.mass", "must be positive")
    com_doc = _get(obj_doc, "com", "$.object", required=False)
    com = np.asarray(com_doc, dtype=float) if com_doc is not None else obj.centroid()
    if com.shape != (2,):
        raise SchemaError("$.object.com", "expected [x, y]")

    env_doc = _get(doc, "environment", "$")
    if not isinstance(env_doc, list):
        raise SchemaError("$.environment", "expected a list of polygons")
    environment = [
        _polygon(e, f"$.environment[{i}]", warnings) for i, e in enumerate(env_doc)
    ]

    plane_doc = _get(doc, "plane", "$")
    ptype = _get(plane_doc, "type", "$.plane")
    if ptype == "gravity":
        direction = plane_doc.get("direction", [0.0, -1.0])
        d = np.asarray(direction, dtype=float)
        if d.shape != (2,) or np.linalg.norm(d) < 1e-12:
            raise SchemaError("$.plane.direction", "expected a nonzero [x, y]")
        d = d / np.linalg.norm(d)
        plane = GravityPlane(
            (float(d[0]), float(d[1])),
            _number(plane_doc.get("g", 1.0), "$.plane.g"),
        )
    elif ptype == "tabletop":
        plane = TabletopPlane(
            _number(_get(plane_doc, "mu_support", "$.plane"), "$.plane.mu_support"),
            _number(plane_doc.get("g", 1.0), "$.plane.g"),
        )
    else:
        raise SchemaError("$.plane.type", f"unknown plane type {ptype!r}")

    fric = _get(doc, "friction", "$")
    mu_env = _number(_get(fric, "env", "$.friction"), "$.friction.env")
    mu_mnp = _number(_get(fric, "mnp", "$.friction"), "$.friction.mnp")
    if mu_env < 0 or mu_mnp < 0:
        raise SchemaError("$.friction", "friction coefficients must be nonnegative")

    fingers = _get(doc, "fingers", "$")
    n_fingers = _get(fingers, "count", "$.fingers")
    if not isinstance(n_fingers, int) or n_fingers < 1:
        raise SchemaError("$.fingers.count", "must be an integer >= 1")
    clearance = fingers.get("clearance")
    if clearance is not None:
        clearance = _number(clearance, "$.fingers.clearance")
        if clearance <= 0:
            raise SchemaError("$.fingers.clearance", "must be positive")
    workspaces = None
    if fingers.get("workspaces") is not None:
        ws = fingers["workspaces"]
        if not isinstance(ws, list) or len(ws) != n_fingers:
            raise SchemaError("$.fingers.workspaces", "need one polygon per finger")
        workspaces = [
            _polygon(w, f"$.fingers.workspaces[{i}]", warnings) for i, w in enumerate(ws)
        ]
    allowed = None
    if fingers.get("allowed_faces") is not None:
        allowed = fingers["allowed_faces"]
        if not isinstance(allowed, list) or not allowed:
            raise SchemaError("$.fingers.allowed_faces", "expected a nonempty list")
        for i in allowed:
            if not isinstance(i, int) or not 0 <= i < obj.n_vertices:
                raise SchemaError("$.fingers.allowed_faces", f"bad edge index {i!r}")
        allowed = list(allowed)

    q_start = _pose(_get(doc, "start", "$"), "$.start")
    goal_doc = _get(doc, "goal", "$")
    q_goal = _pose(goal_doc, "$.goal")
    tolerance = goal_doc.get("tolerance")
    region_doc = goal_doc.get("region")
    if tolerance is not None and region_doc is not None:
        raise SchemaError("$.goal", "give either tolerance or region, not both")
    region = None
    if tolerance is not None:
        tolerance = _number(tolerance, "$.goal.tolerance")
        if tolerance <= 0:
            raise SchemaError("$.goal.tolerance", "must be positive")
    if region_doc is not None:
        region = GoalRegion(
            _pair(_get(region_doc, "x", "$.goal.region"), "$.goal.region.x"),
            _pair(_get(region_doc, "y", "$.goal.region"), "$.goal.region.y"),
            _pair(_get(region_doc, "theta", "$.goal.region"), "$.goal.region.theta"),
        )

    bounds_doc = _get(doc, "bounds", "$")
    bounds = SampleBounds(
        _pair(_get(bounds_doc, "x", "$.bounds"), "$.bounds.x"),
        _pair(_get(bounds_doc, "y", "$.bounds"), "$.bounds.y"),
        _pair(bounds_doc.get("theta", [-math.pi, math.pi]), "$.bounds.theta"),
    )

    units = doc.get("units", {"length": "scene", "force": "object-weight"})
    scene = Scene(
        name=str(doc.get("name", "scene")),
        object_polygon=obj,
        mass=mass,
        com=com,
        environment=environment,
        plane=plane,
        mu_env=mu_env,
        mu_mnp=mu_mnp,
        n_fingers=n_fingers,
        q_start=q_start,
        q_goal=q_goal,
        bounds=bounds,
        goal_tolerance=tolerance,
        goal_region=region,
        finger_clearance=clearance,
        finger_workspaces=workspaces,
        allowed_faces=allowed,
        units=dict(units),
        warnings=warnings,
    )
    if min_separation(obj, q_start, environment) < -scene.d_contact:
        raise GeometryError("start pose penetrates the environment")
    return scene


def serialize_scene(scene: Scene) -> dict:
    """Scene back to a document with every default filled in."""
    doc: dict[str, Any] = {
        "version": SCHEMA_VERSION,
        "name": scene.name,
        "units": dict(scene.units),
        "object": {
            "vertices": scene.object_polygon.vertices.tolist(),
            "mass": scene.mass,
            "com": [float(scene.com[0]), float(scene.com[1])],
        },
        "environment": [{"vertices": p.vertices.tolist()} for p in scene.environment],
    }
    if isinstance(scene.plane, GravityPlane):
        doc["plane"] = {
            "type": "gravity",
            "direction": list(scene.plane.direction),
            "g": scene.plane.g,
        }
    else:
        doc["plane"] = {
            "type": "tabletop",
            "mu_support": scene.plane.mu_support,
            "g": scene.plane.g,
        }
    doc["friction"] = {"env": scene.mu_env, "mnp": scene.mu_mnp}
    fingers: dict[str, Any] = {"count": scene.n_fingers}
    if scene.finger_clearance is not None:
        fingers["clearance"] = scene.finger_clearance
    if scene.finger_workspaces is not None:
        fingers["workspaces"] = [
            {"vertices": p.vertices.tolist()} for p in scene.finger_workspaces
        ]
    if scene.allowed_faces is not None:
        fingers["allowed_faces"] = list(scene.allowed_faces)
    doc["fingers"] = fingers
    doc["start"] = {"x": scene.q_start.x, "y": scene.q_start.y, "theta": scene.q_start.theta}
    goal: dict[str, Any] = {"x": scene.q_goal.x, "y": scene.q_goal.y, "theta": scene.q_goal.theta}
    if scene.goal_tolerance is not None:
        goal["tolerance"] = scene.goal_tolerance
    if scene.goal_region is not None:
        goal["region"] = {
            "x": list(scene.goal_region.x),
            "y": list(scene.goal_region.y),
            "theta": list(scene.goal_region.theta),
        }
    doc["goal"] = goal
    doc["bounds"] = {
        "x": list(scene.bounds.x),
        "y": list(scene.bounds.y),
        "theta": list(scene.bounds.theta),
    }
    return doc


def load_scene_file(path) -> Scene:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scene(json.load(fh))


def save_scene_file(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(serialize_scene(scene), fh, indent=2)
        fh.write("\n")


def builtin_problem(k: int) -> Scene:
    """One of the seven bundled benchmark scenes.

    Layouts reconstruct the published start/goal pictures qualitatively; the
    exact dimensions are our own and are documented in each scene file.
    """
    if k not in PROBLEM_NAMES:
        raise ValueError(f"problem index must be 1..7, got {k}")
    text = (
        resources.files("modeplan")
        .joinpath("scenes_data", f"problem{k}.json")
        .read_text(encoding="utf-8")
    )
    return load_scene(json.loads(text))


# --- trajectory serialization ------------------------------------------------


def _record_to_dict(r: TrajectoryRecord) -> dict:
    d: dict[str, Any] = {
        "t": r.t,
        "q": {"x": r.q.x, "y": r.q.y, "theta": r.q.theta},
        "v_cmd": [r.v_cmd.vx, r.v_cmd.vy, r.v_cmd.omega],
        "contacts": [
            {
                "source": c.kind,
                "index": c.index,
                "p": [c.point[0], c.point[1]],
                "n": [c.normal[0], c.normal[1]],
                "mode_label": c.mode_label,
                "lambda_n": c.lambda_n,
                "lambda_t": c.lambda_t,
            }
            for c in r.contacts
        ],
    }
    if r.event is not None:
        d["event"] = {
            "finger_switch": {
                "fingers": list(r.event.fingers),
                "old": [list(p) if p is not None else None for p in r.event.old],
                "new": [list(p) for p in r.event.new],
            }
        }
    return d


def trajectory_to_jsonl(trajectory: Trajectory) -> str:
    return "".join(
        json.dumps(_record_to_dict(r), separators=(",", ":")) + "\n"
        for r in trajectory.records
    )


def trajectory_from_jsonl(text: str) -> Trajectory:
    records = []
    for line in text.splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        event = None
        if "event" in d:
            fs = d["event"]["finger_switch"]
            event = FingerSwitch(
                fingers=tuple(fs["fingers"]),
                old=tuple(tuple(p) if p is not None else None for p in fs["old"]),
                new=tuple(tuple(p) for p in fs["new"]),
            )
        records.append(
            TrajectoryRecord(
                t=int(d["t"]),
                q=Pose(d["q"]["x"], d["q"]["y"], d["q"]["theta"]),
                contacts=tuple(
                    RecordContact(
                        kind=c["source"],
                        index=c["index"],
                        point=(c["p"][0], c["p"][1]),
                        normal=(c["n"][0], c["n"][1]),
                        mode_label=c["mode_label"],
                        lambda_n=c["lambda_n"],
                        lambda_t=c["lambda_t"],
                    )
                    for c in d["contacts"]
                ),
                v_cmd=Twist(*d["v_cmd"]),
                event=event,
            )
        )
    return Trajectory(records)


# --- replay validation --------------------------------------------------------


@dataclass(frozen=True)
class ReplayTolerances:
    equilibrium: float = 1e-6  # relative to (|F_external| + 1)
    clause: float = 1e-6
    distance_factor: float = 1.5  # multiples of d_contact
    continuity: float | None = None  # default: 0.1 * bbox diagonal


@dataclass(frozen=True)
class Violation:
    step: int
    kind: str
    detail: str
    magnitude: float = 0.0

    def __str__(self) -> str:
        return f"step {self.step}: {self.kind}: {self.detail}"


def _record_contact(scene: Scene, c: RecordContact) -> Contact:
    mu = scene.mu_mnp if c.kind == "mnp" else scene.mu_env
    return Contact(
        point=np.asarray(c.point),
        normal=np.asarray(c.normal),
        distance=0.0,
        source=ContactSource(c.kind, c.index),
        mu=mu,
    )


def replay_validate(
    scene: Scene,
    trajectory: Trajectory,
    tolerances: ReplayTolerances | None = None,
) -> list[Violation]:
    """Independent step-by-step check of a trajectory; empty list means Ok.

    Re-derives force balance, friction-cone and mode clause signs, contact
    distances, pose continuity, finger bookkeeping and switch-time
    equilibrium from the recorded data and the scene alone.
    """
    tol = tolerances or ReplayTolerances()
    continuity = (
        tol.continuity if tol.continuity is not None else 0.1 * scene.bbox_diagonal
    )
    out: list[Violation] = []
    records = trajectory.records
    w_r = scene.bbox_diagonal / math.pi

    for t, rec in enumerate(records):
        sep = min_separation(scene.object_polygon, rec.q, scene.environment)
        if sep < -tol.distance_factor * scene.d_contact:
            out.append(Violation(t, "penetration", f"min separation {sep:.3e}", -sep))

        contacts = [_record_contact(scene, c) for c in rec.contacts]
        lam_net = np.array([[c.lambda_n, c.lambda_t] for c in rec.contacts]).reshape(-1)

        for c in rec.contacts:
            if c.kind != "env":
                continue
            w = rec.q.transform_points(np.asarray(c.point))
            dist = abs(
                float(
                    _signed_distance_to_environment(scene, w, c.index)
                )
            )
            if dist > tol.distance_factor * scene.d_contact:
                out.append(
                    Violation(t, "contact_distance", f"contact {c.index} at {dist:.3e}", dist)
                )

        v_cmd = rec.v_cmd
        f_ext = external_wrench(
            scene.plane, scene.mass, scene.com, rec.q,
            v_cmd if v_cmd.weighted_norm(w_r) > 1e-12 else None,
            scene.gyration_radius,
        )
        if contacts:
            G = grasp_map(contacts).matrix
            wrench = G @ lam_net + f_ext
        else:
            wrench = f_ext.copy()
        residual = float(np.linalg.norm(wrench))
        if residual > tol.equilibrium * (np.linalg.norm(f_ext) + 1.0):
            out.append(Violation(t, "equilibrium", f"residual {residual:.3e}", residual))

        for c in rec.contacts:
            label = LABEL_FROM_CODE.get(c.mode_label)
            if label is None:
                out.append(Violation(t, "mode_label", f"unknown label {c.mode_label!r}"))
                continue
            mu = scene.mu_mnp if c.kind == "mnp" else scene.mu_env
            ln, lt = c.lambda_n, c.lambda_t
            eps = tol.clause
            if ln < -eps:
                out.append(Violation(t, "force_sign", f"negative normal force {ln:.3e}", -ln))
            if label == ContactLabel.SEPARATE:
                if abs(ln) > eps or abs(lt) > eps:
                    out.append(Violation(t, "force_clause", "separating contact carries force"))
            elif label == ContactLabel.FIXED:
                if abs(lt) > mu * ln + eps:
                    out.append(Violation(t, "force_clause", f"force outside cone |{lt:.3e}| > mu*{ln:.3e}"))
            elif label == ContactLabel.RIGHT_SLIDE:
                if abs(lt + mu * ln) > eps:
                    out.append(Violation(t, "force_clause", "right-slide friction not at cone edge"))
            elif label == ContactLabel.LEFT_SLIDE:
                if abs(lt - mu * ln) > eps:
                    out.append(Violation(t, "force_clause", "left-slide friction not at cone edge"))

        if t + 1 < len(records):
            nxt = records[t + 1]
            step_dist = weighted_distance(rec.q, nxt.q, w_r)
            if step_dist > continuity:
                out.append(Violation(t, "continuity", f"pose jump {step_dist:.3e}", step_dist))
            xi = body_twist_between(rec.q, nxt.q).as_array()
            v_eps = tol.clause * (1.0 + float(np.linalg.norm(xi)))
            for c, contact in zip(rec.contacts, contacts):
                if c.kind != "env":
                    continue
                label = LABEL_FROM_CODE.get(c.mode_label)
                rows = contact.velocity_rows()
                v_n, v_t = float(rows[0] @ xi), float(rows[1] @ xi)
                if label == ContactLabel.SEPARATE:
                    if v_n < -v_eps:
                        out.append(Violation(t, "velocity_clause", f"separate contact approaching {v_n:.3e}"))
                elif label == ContactLabel.FIXED:
                    if abs(v_n) > v_eps or abs(v_t) > v_eps:
                        out.append(Violation(t, "velocity_clause", f"fixed contact moving ({v_n:.2e},{v_t:.2e})"))
                elif label == ContactLabel.RIGHT_SLIDE:
                    if abs(v_n) > v_eps or v_t < -v_eps:
                        out.append(Violation(t, "velocity_clause", f"right-slide moving ({v_n:.2e},{v_t:.2e})"))
                elif label == ContactLabel.LEFT_SLIDE:
                    if abs(v_n) > v_eps or v_t > v_eps:
                        out.append(Violation(t, "velocity_clause", f"left-slide moving ({v_n:.2e},{v_t:.2e})"))

            # Finger locations move only through recorded switch events.
            here = {c.index: c.point for c in rec.contacts if c.kind == "mnp"}
            there = {c.index: c.point for c in nxt.contacts if c.kind == "mnp"}
            switched = set(nxt.event.fingers) if nxt.event is not None else set()
            for idx in here.keys() & there.keys():
                if idx in switched:
                    continue
                drift = math.hypot(
                    here[idx][0] - there[idx][0], here[idx][1] - there[idx][1]
                )
                if drift > 1e-9:
                    out.append(
                        Violation(t, "finger_drift", f"finger {idx} moved {drift:.3e} without event")
                    )

        if rec.event is not None:
            moving = set(rec.event.fingers)
            remaining = [
                contact
                for c, contact in zip(rec.contacts, contacts)
                if c.kind == "env" or c.index not in moving
            ]
            f_static = external_wrench(
                scene.plane, scene.mass, scene.com, rec.q, None, scene.gyration_radius
            )
            if not static_equilibrium_possible(rec.q, remaining, f_static):
                out.append(
                    Violation(t, "switch_equilibrium", "object unsupported during finger switch")
                )
    return out


def _signed_distance_to_environment(scene: Scene, point_world: np.ndarray, index: int) -> float:
    from .geom2d import _signed_point_poly_distance  # shared primitive

    if not 0 <= index < len(scene.environment):
        return math.inf
    return float(
        _signed_point_poly_distance(point_world.reshape(1, 2), scene.environment[index])[0]
    )
