"""Planar rigid-body geometry: poses, twists, polygons, and contact queries.

Angles are radians wrapped into (-pi, pi]. Polygons are simple
counter-clockwise vertex loops in the frame of whoever owns them. Contact
normals are unit vectors expressed in the object body frame and point into
the object, i.e. along the direction the other body can push.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# Contacts closer than this with matching normals collapse to one constraint.
CONTACT_MERGE_TOL = 1e-6

_SMALL_ANGLE = 1e-6
_T_INTERIOR = 1e-9  # relative slack that excludes segment endpoints


class GeometryError(ValueError):
    """Invalid polygon or impossible geometric query."""


class PenetrationError(RuntimeError):
    """Interpenetration deeper than the allowed maximum."""

    def __init__(self, depth: float, limit: float):
        super().__init__(f"penetration depth {depth:.6g} exceeds limit {limit:.6g}")
        self.depth = depth
        self.limit = limit


class BisectionFailure(RuntimeError):
    """Rollback bisection did not land inside the contact band."""


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    t = math.fmod(theta, TWO_PI)
    if t > math.pi:
        t -= TWO_PI
    elif t <= -math.pi:
        t += TWO_PI
    return t


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def cross2(a, b) -> float:
    """z component of the planar cross product a x b."""
    return float(a[0] * b[1] - a[1] * b[0])


@dataclass(frozen=True)
class Pose:
    """Object configuration in SE(2)."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    def rotation(self) -> np.ndarray:
        return rotation_matrix(self.theta)

    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def transform_points(self, pts: np.ndarray) -> np.ndarray:
        """Map body-frame points (..., 2) into the world frame."""
        p = np.asarray(pts, dtype=float)
        return p @ self.rotation().T + self.translation()

    def inverse_transform_points(self, pts: np.ndarray) -> np.ndarray:
        """Map world-frame points (..., 2) into the body frame."""
        p = np.asarray(pts, dtype=float)
        return (p - self.translation()) @ self.rotation()

    def compose(self, other: "Pose") -> "Pose":
        """Rigid composition self * other."""
        t = self.transform_points(other.translation())
        return Pose(t[0], t[1], self.theta + other.theta)

    def inverse(self) -> "Pose":
        t = -(self.rotation().T @ self.translation())
        return Pose(t[0], t[1], -self.theta)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


@dataclass(frozen=True)
class Twist:
    """Body-frame velocity of the object: (vx, vy, omega)."""

    vx: float
    vy: float
    omega: float

    def __post_init__(self):
        for name in ("vx", "vy", "omega"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"non-finite twist component {name}={v}")
            object.__setattr__(self, name, v)

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.omega])

    def weighted_norm(self, rotation_weight: float) -> float:
        return math.sqrt(
            self.vx**2 + self.vy**2 + (rotation_weight * self.omega) ** 2
        )

    def scaled(self, factor: float) -> "Twist":
        return Twist(self.vx * factor, self.vy * factor, self.omega * factor)


def twist_to_transform(v: Twist, h: float) -> Pose:
    """Rigid transform of flowing along body twist v for duration h (exp map)."""
    if h <= 0:
        raise ValueError("step length must be positive")
    th = v.omega * h
    ux, uy = v.vx * h, v.vy * h
    if abs(th) < _SMALL_ANGLE:
        a = 1.0 - th * th / 6.0
        b = th / 2.0 - th**3 / 24.0
    else:
        a = math.sin(th) / th
        b = (1.0 - math.cos(th)) / th
    return Pose(a * ux - b * uy, b * ux + a * uy, th)


def body_twist_between(q_from: Pose, q_to: Pose) -> Twist:
    """Body twist xi with q_from * exp(xi) = q_to, shortest rotation (log map)."""
    d = q_from.inverse().compose(q_to)
    th = d.theta
    if abs(th) < _SMALL_ANGLE:
        a = 1.0 - th * th / 6.0
        b = th / 2.0 - th**3 / 24.0
    else:
        a = math.sin(th) / th
        b = (1.0 - math.cos(th)) / th
    det = a * a + b * b
    ux = (a * d.x + b * d.y) / det
    uy = (-b * d.x + a * d.y) / det
    return Twist(ux, uy, th)


def interpolate_pose(q_from: Pose, q_to: Pose, s: float) -> Pose:
    """Point at parameter s on the twist-coordinate segment between two poses."""
    xi = body_twist_between(q_from, q_to)
    return q_from.compose(twist_to_transform(xi.scaled(s), 1.0))


def weighted_distance(q1: Pose, q2: Pose, rotation_weight: float) -> float:
    """Euclidean xy distance plus weighted shortest angular difference."""
    dth = abs(normalize_angle(q1.theta - q2.theta))
    dth = min(dth, TWO_PI - dth)
    return math.hypot(q1.x - q2.x, q1.y - q2.y) + rotation_weight * dth


class Polygon:
    """Simple counter-clockwise polygon with at least three vertices."""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise GeometryError("polygon needs an (n, 2) vertex array with n >= 3")
        if not np.all(np.isfinite(v)):
            raise GeometryError("polygon vertices must be finite")
        area2 = _signed_area2(v)
        if area2 <= 0:
            raise GeometryError("polygon must be counter-clockwise and non-degenerate")
        if _self_intersects(v):
            raise GeometryError("polygon is self-intersecting")
        self.vertices = v
        self.vertices.setflags(write=False)
        nxt = np.roll(v, -1, axis=0)
        self.edge_starts = v
        self.edge_ends = nxt
        e = nxt - v
        self.edge_lengths = np.linalg.norm(e, axis=1)
        if np.any(self.edge_lengths < 1e-12):
            raise GeometryError("polygon has a zero-length edge")
        d = e / self.edge_lengths[:, None]
        # For a CCW loop the exterior lies to the right of each directed edge.
        self.outward_normals = np.stack([d[:, 1], -d[:, 0]], axis=1)
        self.area = 0.5 * area2
        self.bbox_lo = v.min(axis=0)
        self.bbox_hi = v.max(axis=0)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def centroid(self) -> np.ndarray:
        v, nxt = self.vertices, np.roll(self.vertices, -1, axis=0)
        cr = v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]
        c = ((v + nxt) * cr[:, None]).sum(axis=0) / (6.0 * self.area)
        return c

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bounding_box_diagonal(self) -> float:
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))

    def gyration_radius(self) -> float:
        """Radius of gyration of the uniform lamina about its centroid."""
        v, nxt = self.vertices, np.roll(self.vertices, -1, axis=0)
        cr = v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]
        ix = (cr * (v[:, 1] ** 2 + v[:, 1] * nxt[:, 1] + nxt[:, 1] ** 2)).sum() / 12.0
        iy = (cr * (v[:, 0] ** 2 + v[:, 0] * nxt[:, 0] + nxt[:, 0] ** 2)).sum() / 12.0
        c = self.centroid()
        polar = (ix + iy) / self.area - float(c @ c)
        return math.sqrt(max(polar, 0.0))

    def perimeter(self, faces: Sequence[int] | None = None) -> float:
        if faces is None:
            return float(self.edge_lengths.sum())
        return float(self.edge_lengths[list(faces)].sum())

    def boundary_point(self, s: float, faces: Sequence[int] | None = None):
        """Point at arclength s along the selected faces; returns (point, edge index)."""
        idx = list(range(self.n_vertices)) if faces is None else list(faces)
        total = float(self.edge_lengths[idx].sum())
        s = s % total
        for i in idx:
            L = self.edge_lengths[i]
            if s <= L:
                tau = s / L
                p = (1 - tau) * self.edge_starts[i] + tau * self.edge_ends[i]
                return p, i
            s -= L
        p = self.edge_ends[idx[-1]]
        return p, idx[-1]

    def inward_normal(self, edge_index: int) -> np.ndarray:
        return -self.outward_normals[edge_index]

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Even-odd containment test for points (..., 2); boundary is unreliable."""
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = p[:, 0][:, None], p[:, 1][:, None]
        a, b = self.edge_starts, self.edge_ends
        x1, y1 = a[:, 0][None, :], a[:, 1][None, :]
        x2, y2 = b[:, 0][None, :], b[:, 1][None, :]
        straddles = (y1 > y) != (y2 > y)
        denom = np.where(y2 != y1, y2 - y1, 1.0)
        xint = x1 + (y - y1) * (x2 - x1) / denom
        inside = ((straddles) & (x < xint)).sum(axis=1) % 2 == 1
        return inside

    def transformed(self, q: Pose) -> "Polygon":
        return Polygon(q.transform_points(self.vertices))


def _signed_area2(v: np.ndarray) -> float:
    nxt = np.roll(v, -1, axis=0)
    return float((v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]).sum())


def _segments_intersect(p1, p2, p3, p4) -> bool:
    d1 = cross2(p4 - p3, p1 - p3)
    d2 = cross2(p4 - p3, p2 - p3)
    d3 = cross2(p2 - p1, p3 - p1)
    d4 = cross2(p2 - p1, p4 - p1)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _self_intersects(v: np.ndarray) -> bool:
    n = len(v)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                return True
    return False


@dataclass(frozen=True)
class ContactSource:
    """Where a contact comes from: an environment polygon or a finger.

    ``feature`` identifies the touching feature pair and is stable while a
    contact persists, e.g. ("vf", object_vertex, env_edge) for an object
    vertex on an environment face.
    """

    kind: str  # "env" or "mnp"
    index: int  # environment polygon index or finger index
    feature: tuple = ()

    @property
    def is_env(self) -> bool:
        return self.kind == "env"

    @property
    def identity(self) -> tuple:
        return (self.kind, self.index, self.feature)


@dataclass(frozen=True)
class Contact:
    """Point contact on the object, everything in the object body frame."""

    point: np.ndarray
    normal: np.ndarray
    distance: float
    source: ContactSource
    mu: float
    tangent: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        p = np.asarray(self.point, dtype=float).reshape(2)
        n = np.asarray(self.normal, dtype=float).reshape(2)
        norm = np.linalg.norm(n)
        if abs(norm - 1.0) > 1e-9:
            if norm < 1e-12:
                raise GeometryError("contact normal has zero length")
            n = n / norm
        if self.mu < 0:
            raise GeometryError("friction coefficient must be nonnegative")
        p.setflags(write=False)
        n.setflags(write=False)
        t = np.array([n[1], -n[0]])  # normal rotated by -90 degrees
        t.setflags(write=False)
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "tangent", t)
        object.__setattr__(self, "distance", float(self.distance))

    @property
    def identity(self) -> tuple:
        return self.source.identity

    def velocity_rows(self) -> np.ndarray:
        """(2, 3) map from body twist to this contact's (normal, tangent) velocity."""
        return np.array(
            [
                [self.normal[0], self.normal[1], cross2(self.point, self.normal)],
                [self.tangent[0], self.tangent[1], cross2(self.point, self.tangent)],
            ]
        )


def _point_segment_all(P: np.ndarray, A: np.ndarray, B: np.ndarray):
    """Projection parameters and distances from points P to segments A->B.

    Returns (t_raw, dist_clamped, closest) with shapes (N, M), (N, M), (N, M, 2).
    """
    E = B - A
    L2 = (E * E).sum(axis=1)
    D = P[:, None, :] - A[None, :, :]
    t = (D * E[None, :, :]).sum(axis=-1) / L2[None, :]
    t_cl = np.clip(t, 0.0, 1.0)
    C = A[None, :, :] + t_cl[..., None] * E[None, :, :]
    diff = P[:, None, :] - C
    dist = np.sqrt((diff * diff).sum(axis=-1))
    return t, dist, C


def _signed_point_poly_distance(P: np.ndarray, poly: Polygon) -> np.ndarray:
    """Signed distance from points to a polygon boundary, negative inside."""
    _, dist, _ = _point_segment_all(P, poly.edge_starts, poly.edge_ends)
    d = dist.min(axis=1)
    sign = np.where(poly.contains(P), -1.0, 1.0)
    return sign * d


def min_separation(obj: Polygon, q: Pose, environment: Sequence[Polygon]) -> float:
    """Minimum signed vertex-feature distance between object and environment.

    Pairs whose bounding boxes are clearly apart contribute at least their
    box gap and are skipped.
    """
    if not environment:
        return math.inf
    W = q.transform_points(obj.vertices)
    w_lo, w_hi = W.min(axis=0), W.max(axis=0)
    best = math.inf
    for env in environment:
        gap = float(np.maximum(env.bbox_lo - w_hi, w_lo - env.bbox_hi).max())
        if gap >= best:
            continue
        best = min(best, float(_signed_point_poly_distance(W, env).min()))
        U = q.inverse_transform_points(env.vertices)
        best = min(best, float(_signed_point_poly_distance(U, obj).min()))
    return best


def points_environment_clearance(
    points_world: np.ndarray, environment: Sequence[Polygon]
) -> float:
    """Smallest signed distance from any point to the environment (negative inside)."""
    if not environment:
        return math.inf
    P = np.atleast_2d(np.asarray(points_world, dtype=float))
    best = math.inf
    for env in environment:
        best = min(best, float(_signed_point_poly_distance(P, env).min()))
    return best


def contact_query(
    obj: Polygon,
    q: Pose,
    environment: Sequence[Polygon],
    d_contact: float,
    *,
    mu: float = 0.0,
    d_pen_max: float | None = None,
) -> list[Contact]:
    """Touching feature pairs between the object at pose q and the environment.

    One contact per object-vertex/environment-face, environment-vertex/object-face
    or vertex/vertex pair within ``d_contact``. A flush face-on-face touch reduces
    to the two endpoints of the overlap interval. Raises PenetrationError when
    anything sinks deeper than ``d_pen_max``.
    """
    contacts, _ = contact_query_with_depth(
        obj, q, environment, d_contact, mu=mu, d_pen_max=d_pen_max
    )
    return contacts


def contact_query_with_depth(
    obj: Polygon,
    q: Pose,
    environment: Sequence[Polygon],
    d_contact: float,
    *,
    mu: float = 0.0,
    d_pen_max: float | None = None,
) -> tuple[list[Contact], float]:
    """contact_query plus the minimum signed separation found on the way."""
    if d_contact <= 0:
        raise ValueError("d_contact must be positive")
    if d_pen_max is None:
        d_pen_max = 10.0 * d_contact

    R = q.rotation()
    W = q.transform_points(obj.vertices)
    w_lo, w_hi = W.min(axis=0), W.max(axis=0)
    candidates = []  # (point_obj, normal_obj, distance, feature, env_index)
    deepest = math.inf

    for e_idx, env in enumerate(environment):
        gap = float(np.maximum(env.bbox_lo - w_hi, w_lo - env.bbox_hi).max())
        if gap > d_contact:
            deepest = min(deepest, gap)
            continue
        inside_env = env.contains(W)
        sign_obj = np.where(inside_env, -1.0, 1.0)
        t, dist, _ = _point_segment_all(W, env.edge_starts, env.edge_ends)
        deepest = min(deepest, float((sign_obj * dist.min(axis=1)).min()))

        interior = (t > _T_INTERIOR) & (t < 1.0 - _T_INTERIOR)
        near = interior & (dist <= d_contact)
        covered = np.zeros(len(W), dtype=bool)
        for i, j in zip(*np.nonzero(near)):
            covered[i] = True
            n_world = env.outward_normals[j]
            candidates.append(
                (
                    obj.vertices[i],
                    R.T @ n_world,
                    float(sign_obj[i] * dist[i, j]),
                    ("vf", int(i), int(j)),
                    e_idx,
                )
            )
        # Vertex-vertex fallback for object vertices near a convex corner.
        for i in np.nonzero(~covered)[0]:
            offs = W[i] - env.vertices
            dv = np.linalg.norm(offs, axis=1)
            k = int(np.argmin(dv))
            if dv[k] <= d_contact:
                if dv[k] > 1e-12:
                    n_world = sign_obj[i] * offs[k] / dv[k]
                else:
                    prev_edge = (k - 1) % env.n_vertices
                    n_world = env.outward_normals[prev_edge] + env.outward_normals[k]
                    n_world = n_world / np.linalg.norm(n_world)
                candidates.append(
                    (
                        obj.vertices[i],
                        R.T @ n_world,
                        float(sign_obj[i] * dv[k]),
                        ("vv", int(i), int(k)),
                        e_idx,
                    )
                )

        U = q.inverse_transform_points(env.vertices)
        inside_obj = obj.contains(U)
        sign_env = np.where(inside_obj, -1.0, 1.0)
        t2, dist2, C2 = _point_segment_all(U, obj.edge_starts, obj.edge_ends)
        deepest = min(deepest, float((sign_env * dist2.min(axis=1)).min()))

        interior2 = (t2 > _T_INTERIOR) & (t2 < 1.0 - _T_INTERIOR)
        near2 = interior2 & (dist2 <= d_contact)
        for k, m in zip(*np.nonzero(near2)):
            candidates.append(
                (
                    C2[k, m],
                    obj.inward_normal(m),
                    float(sign_env[k] * dist2[k, m]),
                    ("fv", int(m), int(k)),
                    e_idx,
                )
            )

    if deepest < -d_pen_max:
        raise PenetrationError(-deepest, d_pen_max)

    candidates.sort(
        key=lambda c: (round(c[0][0], 12), round(c[0][1], 12), c[4], c[3])
    )
    contacts: list[Contact] = []
    for point, normal, distance, feature, e_idx in candidates:
        duplicate = False
        for kept in contacts:
            if (
                np.linalg.norm(kept.point - point) <= CONTACT_MERGE_TOL
                and np.linalg.norm(kept.normal - normal) <= CONTACT_MERGE_TOL
            ):
                duplicate = True
                break
        if not duplicate:
            contacts.append(
                Contact(
                    point=point,
                    normal=normal,
                    distance=distance,
                    source=ContactSource("env", e_idx, feature),
                    mu=mu,
                )
            )
    return contacts, deepest


def penetration_rollback(
    q_prev: Pose,
    q_next: Pose,
    obj: Polygon,
    environment: Sequence[Polygon],
    d_contact: float,
    max_iterations: int = 64,
) -> Pose:
    """Back a penetrating pose up along the twist segment from q_prev.

    Returns a pose on the interpolation between the two inputs whose minimum
    signed distance lies in [-d_contact, d_contact]. q_next is returned
    unchanged when it does not penetrate.
    """
    if min_separation(obj, q_next, environment) >= -d_contact:
        return q_next
    if min_separation(obj, q_prev, environment) < -d_contact:
        raise BisectionFailure("rollback start pose already penetrates")
    lo, hi = 0.0, 1.0
    for _ in range(max_iterations):
        mid = 0.5 * (lo + hi)
        q_mid = interpolate_pose(q_prev, q_next, mid)
        sep = min_separation(obj, q_mid, environment)
        if -d_contact <= sep <= d_contact:
            return q_mid
        if sep > d_contact:
            lo = mid
        else:
            hi = mid
    q_lo = interpolate_pose(q_prev, q_next, lo)
    if min_separation(obj, q_lo, environment) >= -d_contact:
        return q_lo
    raise BisectionFailure("no pose inside the contact band found")
