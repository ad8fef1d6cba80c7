import numpy as np
import pytest

from modeplan.solver import (
    QuadraticProgram,
    SolveStatus,
    solve_lp_feasibility,
    solve_qp,
)

from .oracles import enumerate_active_set_qp


def random_feasible_qp(rng, n=6, max_eq=2, max_in=8):
    """PD Hessian with constraints built around a known feasible point."""
    M = rng.normal(size=(n, n))
    H = M @ M.T + 0.1 * np.eye(n)
    g = rng.normal(size=n)
    x0 = rng.normal(size=n)
    me = int(rng.integers(0, max_eq + 1))
    mi = int(rng.integers(0, max_in + 1))
    A_eq = rng.normal(size=(me, n)) if me else None
    b_eq = A_eq @ x0 if me else None
    A_in = rng.normal(size=(mi, n)) if mi else None
    b_in = A_in @ x0 - np.abs(rng.normal(size=mi)) if mi else None
    return QuadraticProgram(H, g, A_eq, b_eq, A_in, b_in)


def test_projection_onto_hyperplane():
    r = solve_qp(QuadraticProgram(2 * np.eye(2), np.zeros(2), [[1.0, 0.0]], [1.0]))
    assert r.status == SolveStatus.OPTIMAL
    assert np.allclose(r.x, [1.0, 0.0], atol=1e-9)
    assert r.objective == pytest.approx(1.0)


def test_active_bound():
    r = solve_qp(QuadraticProgram([[2.0]], [-4.0], A_ineq=[[1.0]], b_ineq=[3.0]))
    assert r.status == SolveStatus.OPTIMAL
    assert r.x[0] == pytest.approx(3.0)


def test_infeasible_detected():
    r = solve_qp(QuadraticProgram([[2.0]], [0.0], [[1.0]], [1.0], [[-1.0]], [0.5]))
    assert r.status == SolveStatus.INFEASIBLE


def test_unconstrained_minimum():
    r = solve_qp(QuadraticProgram(2 * np.eye(3), np.array([-2.0, 0.0, 4.0])))
    assert r.status == SolveStatus.OPTIMAL
    assert np.allclose(r.x, [1.0, 0.0, -2.0], atol=1e-9)


def test_random_qps_match_enumeration_oracle():
    rng = np.random.default_rng(1234)
    for _ in range(500):
        p = random_feasible_qp(rng)
        r = solve_qp(p, 1e-8)
        assert r.status == SolveStatus.OPTIMAL, r.status
        best, _ = enumerate_active_set_qp(p.H, p.g, p.A_eq, p.b_eq, p.A_ineq, p.b_ineq)
        assert abs(r.objective - best) <= 1e-6 * (1.0 + abs(best))


def test_solve_qp_deterministic():
    rng = np.random.default_rng(5)
    p = random_feasible_qp(rng)
    r1 = solve_qp(p)
    r2 = solve_qp(p)
    assert np.array_equal(r1.x, r2.x)
    assert r1.objective == r2.objective


def test_objective_scaling_leaves_argmin():
    rng = np.random.default_rng(6)
    for _ in range(50):
        p = random_feasible_qp(rng)
        r1 = solve_qp(p)
        p2 = QuadraticProgram(7.5 * p.H, 7.5 * p.g, p.A_eq, p.b_eq, p.A_ineq, p.b_ineq)
        r2 = solve_qp(p2)
        assert np.linalg.norm(r1.x - r2.x) <= 1e-8 * (1.0 + np.linalg.norm(r1.x))


def test_warm_start_hint_agrees_with_cold_solve():
    rng = np.random.default_rng(7)
    for _ in range(100):
        p = random_feasible_qp(rng)
        cold = solve_qp(p)
        hint = cold.x + 1e-5 * rng.normal(size=p.n)
        warm = solve_qp(p, x_hint=hint)
        assert warm.status == SolveStatus.OPTIMAL
        assert abs(warm.objective - cold.objective) <= 1e-6 * (1.0 + abs(cold.objective))


def test_lp_feasibility_empty_system():
    assert solve_lp_feasibility() is True


def test_lp_feasibility_contradiction():
    # x = 1 and x <= 0
    assert solve_lp_feasibility([[1.0]], [1.0], [[-1.0]], [0.0]) is False


def test_lp_feasibility_strict_margin():
    # Separating velocity: v_n >= sigma with nothing else in a 3-vector space.
    row = [[0.0, 1.0, 0.3]]
    assert solve_lp_feasibility(None, None, row, [0.0], strict_rows=[0]) is True
    # Contradictory strict rows: v >= sigma and -v >= sigma.
    rows = [[1.0], [-1.0]]
    assert solve_lp_feasibility(None, None, rows, [0.0, 0.0], strict_rows=[0, 1]) is False


def test_lp_feasibility_strict_needs_margin():
    # Equality pins x = 0 so the strict row x >= sigma cannot clear.
    assert (
        solve_lp_feasibility([[1.0]], [0.0], [[1.0]], [0.0], strict_rows=[0]) is False
    )
