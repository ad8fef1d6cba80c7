"""Quasistatic contact mechanics: grasp maps, force balance, velocity QP.

All wrenches live in the object body frame and are taken about the body
origin. Gravity scenes use a constant world-frame weight rotated into the
body frame. Horizontal (tabletop) scenes treat the support friction on the
object as negligible against the manipulator: the external wrench is zero
and motion is kinematic pushing, while wall and finger contact forces keep
their full friction-cone treatment. A constant support-friction wrench was
tried and rejected: it leaves a single point pusher with two force degrees
of freedom against three balance equations, so almost every commanded
motion is spuriously infeasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geom2d import Contact, Pose, Twist, cross2
from .modes import ContactLabel, ContactMode, assemble_mode_constraints, force_clause_rows
from .solver import (
    QuadraticProgram,
    SolveStatus,
    SolverError,
    solve_lp,
    solve_lp_feasibility,
    solve_qp,
)

# Ridge added to the QP Hessian; the finger-velocity block is otherwise flat.
HESSIAN_RIDGE = 1e-9


@dataclass(frozen=True)
class GravityPlane:
    """Vertical scene: constant weight along ``direction`` (world frame)."""

    direction: tuple[float, float] = (0.0, -1.0)
    g: float = 1.0


@dataclass(frozen=True)
class TabletopPlane:
    """Horizontal scene: the support holds the object, friction neglected.

    ``mu_support`` is recorded scene data (the physical support exists) but
    exerts no wrench in the quasistatic balance; see the module docstring.
    """

    mu_support: float
    g: float = 1.0


@dataclass(frozen=True)
class GraspMap:
    """Linear map from stacked contact-frame forces to the body wrench.

    Column pair 2i, 2i+1 holds the wrench of a unit normal and unit tangent
    force at contact i; the transpose maps a body twist to stacked
    (normal, tangential) contact velocities.
    """

    matrix: np.ndarray

    @property
    def n_contacts(self) -> int:
        return self.matrix.shape[1] // 2

    def contact_velocities(self, v: Twist) -> np.ndarray:
        return self.matrix.T @ v.as_array()

    def wrench(self, lam: np.ndarray) -> np.ndarray:
        """Body wrench of per-contact (normal, tangent+, tangent-) forces."""
        lam = np.asarray(lam, dtype=float).reshape(-1, 3)
        net = np.empty(2 * len(lam))
        net[0::2] = lam[:, 0]
        net[1::2] = lam[:, 1] - lam[:, 2]
        return self.matrix @ net


def grasp_map(contacts: Sequence[Contact], q: Pose | None = None) -> GraspMap:
    """Grasp map of body-frame contacts; the pose does not enter because
    contact frames ride with the body."""
    cols = np.zeros((3, 2 * len(contacts)))
    for i, c in enumerate(contacts):
        cols[:2, 2 * i] = c.normal
        cols[2, 2 * i] = cross2(c.point, c.normal)
        cols[:2, 2 * i + 1] = c.tangent
        cols[2, 2 * i + 1] = cross2(c.point, c.tangent)
    return GraspMap(cols)


def external_wrench(
    plane: GravityPlane | TabletopPlane,
    mass: float,
    com: np.ndarray,
    q: Pose,
    v_dir: Twist | None,
    gyration_radius: float = 1.0,
) -> np.ndarray:
    """Non-contact body wrench about the body origin.

    ``v_dir`` (the commanded twist) and ``gyration_radius`` are accepted so
    motion-dependent support models can plug in; the current tabletop model
    returns a zero wrench regardless.
    """
    com = np.asarray(com, dtype=float).reshape(2)
    if isinstance(plane, GravityPlane):
        f_world = mass * plane.g * np.asarray(plane.direction, dtype=float)
        f_body = q.rotation().T @ f_world
        return np.array([f_body[0], f_body[1], cross2(com, f_body)])
    if isinstance(plane, TabletopPlane):
        return np.zeros(3)
    raise TypeError(f"unknown plane model {plane!r}")


@dataclass
class QuasistaticSolution:
    """One force-balanced velocity: object twist, finger velocities, forces."""

    v_o: Twist
    q_dot: np.ndarray  # (2 * n_fingers,) contact-frame finger velocities
    lam: np.ndarray  # (3 * n_contacts,) as (normal, tangent+, tangent-)

    def lam_normal(self, i: int) -> float:
        return float(self.lam[3 * i])

    def lam_tangent(self, i: int) -> float:
        return float(self.lam[3 * i + 1] - self.lam[3 * i + 2])


def count_fingers(contacts: Sequence[Contact]) -> int:
    n = 0
    for c in contacts:
        if c.source.kind == "mnp":
            n += 1
        else:
            break
    return n


def normalize_twist(v: Twist, rotation_weight: float) -> Twist:
    norm = v.weighted_norm(rotation_weight)
    if norm < 1e-12:
        return Twist(0.0, 0.0, 0.0)
    return v.scaled(1.0 / norm)


def velocity_cone_projection(
    v_d: Twist,
    env_contacts: Sequence[Contact],
    env_mode: ContactMode,
    rotation_weight: float = 1.0,
) -> Twist:
    """Projection of the desired twist onto the mode's velocity cone.

    Environment velocity clauses alone bound the achievable twist directions
    (finger rows only pin finger velocities), so a zero projection means no
    finger relocation can make the motion feasible. Cheap pre-check for the
    full force-balanced solve.
    """
    v_d = normalize_twist(v_d, rotation_weight)
    if not env_contacts:
        return v_d
    eq_rows: list[np.ndarray] = []
    ineq_rows: list[np.ndarray] = []
    from .modes import velocity_clause_rows

    for c, lab in zip(env_contacts, env_mode):
        rows = c.velocity_rows()
        eqs, stricts = velocity_clause_rows(lab, rows[0], rows[1])
        eq_rows.extend(eqs)
        ineq_rows.extend(stricts)
    W = np.diag([2.0, 2.0, 2.0 * rotation_weight**2])
    g = -W @ v_d.as_array()
    problem = QuadraticProgram(
        W,
        g,
        np.vstack(eq_rows) if eq_rows else None,
        np.zeros(len(eq_rows)) if eq_rows else None,
        np.vstack(ineq_rows) if ineq_rows else None,
        np.zeros(len(ineq_rows)) if ineq_rows else None,
    )
    result = solve_qp(problem, 1e-10, x_hint=np.zeros(3))
    if result.status != SolveStatus.OPTIMAL:
        return Twist(0.0, 0.0, 0.0)
    return Twist(*result.x)


def _feasible_cone_forces(
    contacts: Sequence[Contact],
    mode: ContactMode,
    grasp: GraspMap,
    f_external: np.ndarray,
    mnp_force_cap: float | None = None,
) -> tuple[np.ndarray | None, float]:
    """Forces inside the mode's clauses closest to balancing the wrench.

    Minimizes the balance residual over the force cone starting from zero
    (always feasible for the homogeneous clause rows). Returns the minimizer
    and its residual; a residual far from zero certifies that the mode admits
    no equilibrium at all.
    """
    n = len(contacts)
    balance = np.zeros((3, 3 * n))
    for i in range(n):
        balance[:, 3 * i] = grasp.matrix[:, 2 * i]
        balance[:, 3 * i + 1] = grasp.matrix[:, 2 * i + 1]
        balance[:, 3 * i + 2] = -grasp.matrix[:, 2 * i + 1]
    eq_rows: list[np.ndarray] = []
    ineq_rows: list[np.ndarray] = []
    for i, (c, label) in enumerate(zip(contacts, mode)):
        f_eqs, f_stricts = force_clause_rows(label, c.mu)
        for r3 in f_eqs:
            row = np.zeros(3 * n)
            row[3 * i : 3 * i + 3] = r3
            eq_rows.append(row)
        for r3 in f_stricts:
            row = np.zeros(3 * n)
            row[3 * i : 3 * i + 3] = r3
            ineq_rows.append(row)
    ineq_rows.extend(np.eye(3 * n))
    cap_rhs = [0.0] * len(ineq_rows)
    if mnp_force_cap is not None:
        for i, c in enumerate(contacts):
            if c.source.kind == "mnp":
                row = np.zeros(3 * n)
                row[3 * i] = -1.0
                ineq_rows.append(row)
                cap_rhs.append(-mnp_force_cap)
    H = 2.0 * (balance.T @ balance) + 1e-9 * np.eye(3 * n)
    g = 2.0 * balance.T @ f_external
    problem = QuadraticProgram(
        H,
        g,
        np.vstack(eq_rows) if eq_rows else None,
        np.zeros(len(eq_rows)) if eq_rows else None,
        np.vstack(ineq_rows),
        np.asarray(cap_rhs),
    )
    result = solve_qp(problem, 1e-10, x_hint=np.zeros(3 * n))
    if result.status != SolveStatus.OPTIMAL:
        return None, math.inf
    residual = float(np.linalg.norm(balance @ result.x + f_external))
    return result.x, residual


def closest_feasible_velocity(
    q: Pose,
    v_d: Twist,
    contacts: Sequence[Contact],
    mode: ContactMode,
    f_external: np.ndarray,
    *,
    rotation_weight: float = 1.0,
    force_regularization: float = 1e-4,
    tol_feas: float = 1e-8,
    x_hint: np.ndarray | None = None,
    mnp_force_cap: float | None = None,
) -> QuasistaticSolution | None:
    """Force-balanced twist closest to the desired one under a contact mode.

    Minimizes the weighted distance to the unit-normalized desired twist plus
    a small force regularizer, subject to the mode's velocity and force
    clauses and static force balance. Returns None when the mode admits no
    equilibrium from this state.
    """
    contacts = list(contacts)
    n_fingers = count_fingers(contacts)
    if len(mode) != len(contacts):
        raise ValueError("mode does not match contact list")
    v_d = normalize_twist(v_d, rotation_weight)

    grasp = grasp_map(contacts, q)
    mc = assemble_mode_constraints(mode, contacts, grasp.matrix, n_fingers)
    nx = mc.n_variables
    lam_base = 3 + 2 * n_fingers

    balance = np.zeros((3, nx))
    for i in range(len(contacts)):
        balance[:, lam_base + 3 * i] = grasp.matrix[:, 2 * i]
        balance[:, lam_base + 3 * i + 1] = grasp.matrix[:, 2 * i + 1]
        balance[:, lam_base + 3 * i + 2] = -grasp.matrix[:, 2 * i + 1]
    A_eq = np.vstack([mc.A_eq, balance])
    b_eq = np.concatenate([mc.b_eq, -np.asarray(f_external, dtype=float)])
    A_in, b_in = mc.A_ineq, mc.b_ineq
    if mnp_force_cap is not None:
        cap_rows = []
        for i, c in enumerate(contacts):
            if c.source.kind == "mnp":
                row = np.zeros(nx)
                row[lam_base + 3 * i] = -1.0
                cap_rows.append(row)
        if cap_rows:
            A_in = np.vstack([A_in, np.vstack(cap_rows)])
            b_in = np.concatenate([b_in, np.full(len(cap_rows), -mnp_force_cap)])

    weights = np.full(nx, HESSIAN_RIDGE)
    weights[0] += 1.0
    weights[1] += 1.0
    weights[2] += rotation_weight**2
    weights[lam_base:] += force_regularization
    H = 2.0 * np.diag(weights)
    g = np.zeros(nx)
    g[0] = -2.0 * v_d.vx
    g[1] = -2.0 * v_d.vy
    g[2] = -2.0 * rotation_weight**2 * v_d.omega

    if x_hint is None and len(contacts):
        # Zero twist with cone forces balancing the external wrench is a
        # feasible start; a clearly nonzero residual proves infeasibility
        # without touching the phase-1 LP.
        lam0, residual = _feasible_cone_forces(
            contacts, mode, grasp, f_external, mnp_force_cap
        )
        f_scale = float(np.linalg.norm(f_external)) + 1.0
        if lam0 is not None and residual <= 1e-9 * f_scale:
            x_hint = np.concatenate([np.zeros(lam_base), lam0])
        elif lam0 is not None and residual > 1e-6 * f_scale:
            return None

    result = solve_qp(
        QuadraticProgram(H, g, A_eq, b_eq, A_in, b_in), tol_feas, x_hint
    )
    if result.status == SolveStatus.INFEASIBLE:
        return None
    if result.status != SolveStatus.OPTIMAL:
        raise SolverError(f"velocity QP ended with {result.status.value}")
    x = result.x
    solution = QuasistaticSolution(
        v_o=Twist(x[0], x[1], x[2]),
        q_dot=x[3:lam_base].copy(),
        lam=x[lam_base:].copy(),
    )
    residual = np.linalg.norm(grasp.wrench(solution.lam) + f_external)
    if residual > 1e-6 * (np.linalg.norm(f_external) + 1.0):
        raise SolverError(f"force balance residual {residual:.3e} out of tolerance")
    return solution


def static_equilibrium_possible(
    q: Pose,
    contacts: Sequence[Contact],
    f_external: np.ndarray,
    mnp_force_cap: float | None = None,
) -> bool:
    """Whether nonnegative friction-cone forces at the given contacts can
    balance the external wrench."""
    f_external = np.asarray(f_external, dtype=float)
    if not contacts:
        return bool(np.linalg.norm(f_external) <= 1e-9)
    grasp = grasp_map(contacts, q)
    n = len(contacts)
    A_eq = np.zeros((3, 3 * n))
    for i in range(n):
        A_eq[:, 3 * i] = grasp.matrix[:, 2 * i]
        A_eq[:, 3 * i + 1] = grasp.matrix[:, 2 * i + 1]
        A_eq[:, 3 * i + 2] = -grasp.matrix[:, 2 * i + 1]
    rows = []
    for i, c in enumerate(contacts):
        for r3 in (
            np.array([c.mu, -1.0, 0.0]),
            np.array([c.mu, 0.0, -1.0]),
        ):
            row = np.zeros(3 * n)
            row[3 * i : 3 * i + 3] = r3
            rows.append(row)
    rhs = [0.0] * (2 * n)
    for j in range(3 * n):
        row = np.zeros(3 * n)
        row[j] = 1.0
        rows.append(row)
        rhs.append(0.0)
    if mnp_force_cap is not None:
        for i, c in enumerate(contacts):
            if c.source.kind == "mnp":
                row = np.zeros(3 * n)
                row[3 * i] = -1.0
                rows.append(row)
                rhs.append(-mnp_force_cap)
    return solve_lp_feasibility(A_eq, -f_external, np.vstack(rows), np.asarray(rhs))


def _fan_directions(n: int = 8) -> np.ndarray:
    """Unit disturbance wrenches: evenly spaced force directions, no torque."""
    angles = 2.0 * math.pi * np.arange(n) / n
    return np.stack([np.cos(angles), np.sin(angles), np.zeros(n)], axis=1)


def _fan_lp_margin(
    q: Pose,
    contacts: Sequence[Contact],
    mode: ContactMode,
    solution: QuasistaticSolution | None,
    f_external: np.ndarray,
    mnp_force_cap: float | None = None,
) -> float:
    """Largest disturbance magnitude resisted in every fan direction.

    Per direction d, an LP maximizes rho subject to force balance against
    f_external + rho d under the mode's force clauses; the score is the worst
    direction's maximum.
    """
    contacts = list(contacts)
    f_external = np.asarray(f_external, dtype=float)
    if not contacts:
        return 0.0
    grasp = grasp_map(contacts, q)
    n = len(contacts)
    nx = 3 * n + 1  # forces plus the disturbance magnitude
    rho_cap = 1e3 * (1.0 + float(np.linalg.norm(f_external)))

    eq_rows = []
    eq_rhs = []
    ineq_rows = []
    for i, (c, label) in enumerate(zip(contacts, mode)):
        f_eqs, f_stricts = force_clause_rows(label, c.mu)
        for r3 in f_eqs:
            row = np.zeros(nx)
            row[3 * i : 3 * i + 3] = r3
            eq_rows.append(row)
            eq_rhs.append(0.0)
        for r3 in f_stricts:
            row = np.zeros(nx)
            row[3 * i : 3 * i + 3] = r3
            ineq_rows.append(row)

    balance = np.zeros((3, nx))
    for i in range(n):
        balance[:, 3 * i] = grasp.matrix[:, 2 * i]
        balance[:, 3 * i + 1] = grasp.matrix[:, 2 * i + 1]
        balance[:, 3 * i + 2] = -grasp.matrix[:, 2 * i + 1]

    objective = np.zeros(nx)
    objective[-1] = -1.0  # maximize rho
    bounds = []
    for c in contacts:
        hi = mnp_force_cap if (mnp_force_cap is not None and c.source.kind == "mnp") else None
        bounds.extend([(0.0, hi), (0.0, None), (0.0, None)])
    bounds.append((0.0, rho_cap))
    score = math.inf
    for d in _fan_directions():
        A_eq = balance.copy()
        A_eq[:, -1] = d
        rows = [A_eq] + ([np.vstack(eq_rows)] if eq_rows else [])
        rhs = np.concatenate([-f_external, np.zeros(len(eq_rows))])
        res = solve_lp(
            objective,
            np.vstack(rows),
            rhs,
            np.vstack(ineq_rows) if ineq_rows else None,
            np.zeros(len(ineq_rows)) if ineq_rows else None,
            bounds,
        )
        if res.status == SolveStatus.INFEASIBLE:
            return 0.0
        if res.status != SolveStatus.OPTIMAL:
            raise SolverError("stability margin LP failed")
        score = min(score, float(res.x[-1]))
        if score <= 0.0:
            return 0.0
    return score


MarginFunction = Callable[..., float]

STABILITY_MARGINS: dict[str, MarginFunction] = {
    "none": lambda *args, **kwargs: math.inf,
    "fan-lp": _fan_lp_margin,
}


def stability_margin(
    q: Pose,
    contacts: Sequence[Contact],
    mode: ContactMode,
    solution: QuasistaticSolution | None,
    f_external: np.ndarray,
    strategy: str = "fan-lp",
    mnp_force_cap: float | None = None,
) -> float:
    """Disturbance-rejection score of a contact state; 0 means marginal."""
    try:
        fn = STABILITY_MARGINS[strategy]
    except KeyError:
        raise ValueError(f"unknown stability margin strategy {strategy!r}") from None
    return fn(q, contacts, mode, solution, f_external, mnp_force_cap)
