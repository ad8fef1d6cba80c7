"""Small dense linear and quadratic programs for contact mechanics.

Quadratic programs are solved with a primal active-set method seeded by a
phase-1 feasibility LP (scipy HiGHS). Everything here is deterministic:
identical inputs produce identical outputs, and ties are broken by lowest
constraint index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import linprog


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


class SolverError(RuntimeError):
    """Backend breakdown that the caller cannot interpret as infeasibility."""


def _as_matrix(a, n_cols: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, n_cols))
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    return m


def _as_vector(b, n_rows: int) -> np.ndarray:
    if b is None:
        return np.zeros(n_rows)
    return np.asarray(b, dtype=float).reshape(-1)


@dataclass
class QuadraticProgram:
    """min 0.5 x'Hx + g'x  s.t.  A_eq x = b_eq and A_ineq x >= b_ineq."""

    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ineq: np.ndarray | None = None
    b_ineq: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        n = len(self.g)
        if self.H.shape != (n, n):
            raise ValueError("H must be square and match g")
        if np.abs(self.H - self.H.T).max(initial=0.0) > 1e-9 * (
            1.0 + np.abs(self.H).max(initial=0.0)
        ):
            raise ValueError("H must be symmetric")
        self.A_eq = _as_matrix(self.A_eq, n)
        self.b_eq = _as_vector(self.b_eq, self.A_eq.shape[0])
        self.A_ineq = _as_matrix(self.A_ineq, n)
        self.b_ineq = _as_vector(self.b_ineq, self.A_ineq.shape[0])
        if self.A_eq.shape[1] != n or self.A_ineq.shape[1] != n:
            raise ValueError("constraint matrices must have n columns")
        if len(self.b_eq) != self.A_eq.shape[0] or len(self.b_ineq) != self.A_ineq.shape[0]:
            raise ValueError("constraint vectors must match their matrices")

    @property
    def n(self) -> int:
        return len(self.g)

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x)


@dataclass
class SolveResult:
    status: SolveStatus
    x: np.ndarray | None = None
    objective: float = float("nan")
    multipliers_eq: np.ndarray | None = None
    multipliers_ineq: np.ndarray | None = None


def solve_lp(
    c,
    A_eq=None,
    b_eq=None,
    A_ineq=None,
    b_ineq=None,
    bounds=None,
) -> SolveResult:
    """Minimize c.x subject to A_eq x = b_eq and A_ineq x >= b_ineq.

    Variables are free unless ``bounds`` (a list of (lo, hi)) says otherwise.
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    n = len(c)
    A_eq = _as_matrix(A_eq, n)
    b_eq = _as_vector(b_eq, A_eq.shape[0])
    A_in = _as_matrix(A_ineq, n)
    b_in = _as_vector(b_ineq, A_in.shape[0])
    if bounds is None:
        bounds = [(None, None)] * n
    res = linprog(
        c,
        A_ub=-A_in if A_in.size else None,
        b_ub=-b_in if A_in.size else None,
        A_eq=A_eq if A_eq.size else None,
        b_eq=b_eq if A_eq.size else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 0:
        return SolveResult(SolveStatus.OPTIMAL, np.asarray(res.x), float(res.fun))
    if res.status == 2:
        return SolveResult(SolveStatus.INFEASIBLE)
    if res.status == 3:
        return SolveResult(SolveStatus.UNBOUNDED)
    return SolveResult(SolveStatus.NUMERICAL_FAILURE)


def solve_lp_feasibility(
    A_eq=None,
    b_eq=None,
    A_ineq=None,
    b_ineq=None,
    strict_rows=(),
    sigma: float = 1e-6,
) -> bool:
    """Decide feasibility of a linear system with some strict inequality rows.

    Strict rows of A_ineq must clear their bound by at least ``sigma``; the
    decision maximizes the worst strict-row margin and compares it to sigma.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    n = None
    for m in (A_eq, A_ineq):
        if m is not None:
            arr = np.atleast_2d(np.asarray(m, dtype=float))
            if arr.size:
                n = arr.shape[1]
                break
    if n is None:
        return True  # no constraints at all
    A_eq = _as_matrix(A_eq, n)
    b_eq = _as_vector(b_eq, A_eq.shape[0])
    A_in = _as_matrix(A_ineq, n)
    b_in = _as_vector(b_ineq, A_in.shape[0])
    strict = sorted(set(int(i) for i in strict_rows))
    if any(i < 0 or i >= A_in.shape[0] for i in strict):
        raise ValueError("strict row index out of range")

    if not strict:
        res = solve_lp(np.zeros(n), A_eq, b_eq, A_in, b_in)
        if res.status == SolveStatus.NUMERICAL_FAILURE:
            raise SolverError("feasibility LP failed")
        return res.status in (SolveStatus.OPTIMAL, SolveStatus.UNBOUNDED)

    # Margin variable t: strict rows become A_i x - t >= b_i; maximize t.
    cap = max(1.0, 10.0 * sigma)
    n_aug = n + 1
    rows = []
    rhs = []
    for i in range(A_in.shape[0]):
        row = np.zeros(n_aug)
        row[:n] = A_in[i]
        if i in strict:
            row[n] = -1.0
        rows.append(row)
        rhs.append(b_in[i])
    A_aug = np.vstack(rows) if rows else np.zeros((0, n_aug))
    E_aug = np.hstack([A_eq, np.zeros((A_eq.shape[0], 1))]) if A_eq.size else None
    c = np.zeros(n_aug)
    c[n] = -1.0
    bounds = [(None, None)] * n + [(None, cap)]
    res = solve_lp(c, E_aug, b_eq if A_eq.size else None, A_aug, np.asarray(rhs), bounds)
    if res.status == SolveStatus.INFEASIBLE:
        return False
    if res.status == SolveStatus.UNBOUNDED:
        return True
    if res.status != SolveStatus.OPTIMAL:
        raise SolverError("margin LP failed")
    return float(res.x[n]) >= sigma


def _independent_rows(base: np.ndarray, rows: list[np.ndarray]) -> list[int]:
    """Indices of rows that extend base to a larger row space, greedy order."""
    if not rows:
        return []
    n = rows[0].shape[0]
    m_base = base.shape[0] if base.size else 0
    basis = np.empty((m_base + len(rows), n))
    count = 0

    def absorb(r: np.ndarray) -> bool:
        nonlocal count
        b = basis[:count]
        v = r - b.T @ (b @ r) if count else r
        # One reorthogonalization pass keeps the basis numerically tight.
        if count:
            v = v - b.T @ (b @ v)
        nv = float(np.sqrt(v @ v))
        if nv > 1e-10 * (1.0 + float(np.sqrt(r @ r))):
            basis[count] = v / nv
            count += 1
            return True
        return False

    if base.size:
        for r in base:
            absorb(r)
    return [i for i, r in enumerate(rows) if absorb(r)]


def _kkt_solve(K: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        sol = np.linalg.solve(K, rhs)
        if np.all(np.isfinite(sol)) and np.linalg.norm(K @ sol - rhs) <= 1e-8 * (
            1.0 + np.linalg.norm(rhs)
        ):
            return sol
    except np.linalg.LinAlgError:
        pass
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    return sol


def _repair_hint(
    x_hint: np.ndarray,
    A_eq: np.ndarray,
    b_eq: np.ndarray,
    A_in: np.ndarray,
    b_in: np.ndarray,
    tol: float,
) -> np.ndarray | None:
    """Project a near-feasible guess back onto the constraint set.

    Inequality rows active at the hint are pinned to their bounds together
    with the equalities; the correction is the minimum-norm shift. Returns
    None when the repaired point is not strictly verifiable.
    """
    me, mi = A_eq.shape[0], A_in.shape[0]
    res_in = A_in @ x_hint - b_in if mi else np.zeros(0)
    if mi and res_in.min(initial=0.0) < -1e-3:
        return None
    pinned = [i for i in range(mi) if res_in[i] <= 1e-7]
    A_pin = np.vstack([A_eq, A_in[pinned]]) if (me or pinned) else None
    if A_pin is None or not A_pin.size:
        x = x_hint
    else:
        b_pin = np.concatenate([b_eq, b_in[pinned]])
        defect = A_pin @ x_hint - b_pin
        if np.abs(defect).max(initial=0.0) > 1e-2:
            return None
        correction, *_ = np.linalg.lstsq(A_pin, defect, rcond=None)
        x = x_hint - correction
    ok_eq = not me or np.abs(A_eq @ x - b_eq).max() <= tol
    ok_in = not mi or (A_in @ x - b_in).min() >= -tol
    return x if (ok_eq and ok_in) else None


def solve_qp(
    problem: QuadraticProgram,
    tol_feas: float = 1e-8,
    x_hint: np.ndarray | None = None,
) -> SolveResult:
    """Primal active-set solve of a convex QP.

    Returns OPTIMAL with KKT residuals within tol_feas, INFEASIBLE when the
    constraints admit no point, UNBOUNDED for flat descent directions, and
    NUMERICAL_FAILURE when the iteration limit is exhausted. ``x_hint``
    short-circuits the phase-1 LP when it can be repaired into a feasible
    start; it never changes the result, only the path to it.
    """
    H = 0.5 * (problem.H + problem.H.T)
    g = problem.g
    n = problem.n
    A_eq, b_eq = problem.A_eq, problem.b_eq
    A_in, b_in = problem.A_ineq, problem.b_ineq
    me, mi = A_eq.shape[0], A_in.shape[0]

    if me == 0 and mi == 0:
        x, *_ = np.linalg.lstsq(H, -g, rcond=None)
        if np.linalg.norm(H @ x + g) > tol_feas * (1.0 + np.linalg.norm(g)):
            return SolveResult(SolveStatus.UNBOUNDED)
        return SolveResult(SolveStatus.OPTIMAL, x, problem.objective(x),
                           np.zeros(0), np.zeros(0))

    scale = 1.0 + max(
        np.abs(H).max(initial=0.0),
        np.abs(g).max(initial=0.0),
        np.abs(b_eq).max(initial=0.0) if me else 0.0,
        np.abs(b_in).max(initial=0.0) if mi else 0.0,
    )
    tol_active = 1e-9 * scale

    x = None
    if x_hint is not None and len(x_hint) == n:
        x = _repair_hint(np.asarray(x_hint, dtype=float), A_eq, b_eq, A_in, b_in, tol_active)
    if x is None:
        # Phase 1: any feasible point.
        feas = solve_lp(np.zeros(n), A_eq, b_eq, A_in, b_in)
        if feas.status == SolveStatus.INFEASIBLE:
            return SolveResult(SolveStatus.INFEASIBLE)
        if feas.status == SolveStatus.NUMERICAL_FAILURE:
            return SolveResult(SolveStatus.NUMERICAL_FAILURE)
        x = np.asarray(feas.x, dtype=float)

    residual = A_in @ x - b_in if mi else np.zeros(0)
    active_candidates = [i for i in range(mi) if residual[i] <= tol_active]
    if active_candidates:
        keep = _independent_rows(A_eq, [A_in[i] for i in active_candidates])
        working = [active_candidates[i] for i in keep]
    else:
        working = []

    max_iterations = 50 + 10 * (n + me + mi)
    mult_eq = np.zeros(me)
    mult_w: np.ndarray = np.zeros(0)
    for _ in range(max_iterations):
        A_work = np.vstack([A_eq, A_in[working]]) if (me or working) else np.zeros((0, n))
        mw = A_work.shape[0]
        grad = H @ x + g
        K = np.zeros((n + mw, n + mw))
        K[:n, :n] = H
        if mw:
            K[:n, n:] = -A_work.T
            K[n:, :n] = A_work
        rhs = np.concatenate([-grad, np.zeros(mw)])
        sol = _kkt_solve(K, rhs)
        p = sol[:n]
        y = sol[n:]
        mult_eq = y[:me]
        mult_w = y[me:]

        if np.linalg.norm(p, ord=np.inf) <= 1e-10 * (1.0 + np.linalg.norm(x, ord=np.inf)):
            if not working:
                break
            j_rel = int(np.argmin(mult_w))
            if mult_w[j_rel] >= -1e-9 * (1.0 + np.linalg.norm(grad)):
                break
            working.pop(j_rel)
            continue

        # Largest step along p before an inactive constraint blocks.
        alpha = 1.0
        blocker = -1
        if mi:
            direction = A_in @ p
            res_now = A_in @ x - b_in
            for i in range(mi):
                if i in working:
                    continue
                if direction[i] < -1e-13 * scale * (1.0 + np.linalg.norm(p)):
                    step = res_now[i] / (-direction[i])
                    if step < alpha - 1e-15:
                        alpha = max(step, 0.0)
                        blocker = i
        x = x + alpha * p
        if blocker >= 0:
            working.append(blocker)
            working.sort()
        elif alpha >= 1.0 and p @ H @ p <= 1e-14 * scale * (p @ p) and grad @ p < 0:
            return SolveResult(SolveStatus.UNBOUNDED)
    else:
        return SolveResult(SolveStatus.NUMERICAL_FAILURE)

    # Final verification of feasibility and stationarity.
    viol_eq = np.abs(A_eq @ x - b_eq).max(initial=0.0) if me else 0.0
    viol_in = np.maximum(b_in - A_in @ x, 0.0).max(initial=0.0) if mi else 0.0
    A_work = np.vstack([A_eq, A_in[working]]) if (me or working) else np.zeros((0, n))
    grad = H @ x + g
    y = np.concatenate([mult_eq, mult_w]) if A_work.shape[0] else np.zeros(0)
    stat = grad - (A_work.T @ y if A_work.shape[0] else 0.0)
    tol = max(tol_feas, 1e-9 * scale)
    if viol_eq > tol or viol_in > tol or np.linalg.norm(stat, ord=np.inf) > tol * (
        1.0 + np.linalg.norm(grad, ord=np.inf)
    ):
        return SolveResult(SolveStatus.NUMERICAL_FAILURE)
    mult_ineq = np.zeros(mi)
    for idx, j in enumerate(working):
        mult_ineq[j] = mult_w[idx]
    return SolveResult(
        SolveStatus.OPTIMAL, x, problem.objective(x), mult_eq, mult_ineq
    )
