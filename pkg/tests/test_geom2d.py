import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from modeplan.geom2d import (
    BisectionFailure,
    Polygon,
    Pose,
    Twist,
    body_twist_between,
    contact_query,
    interpolate_pose,
    min_separation,
    normalize_angle,
    penetration_rollback,
    twist_to_transform,
    weighted_distance,
)

SQUARE = Polygon([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)])
FLOOR = Polygon([(-5, -1), (5, -1), (5, 0), (-5, 0)])


def test_angle_normalization_range():
    for t in np.linspace(-12.0, 12.0, 401):
        w = normalize_angle(t)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.cos(w), math.cos(t), abs_tol=1e-12)
        assert math.isclose(math.sin(w), math.sin(t), abs_tol=1e-12)


def test_zero_twist_is_identity():
    d = twist_to_transform(Twist(0, 0, 0), 0.5)
    assert d.x == 0 and d.y == 0 and d.theta == 0


def test_pure_translation_transform():
    d = twist_to_transform(Twist(1, 0, 0), 0.5)
    assert np.allclose([d.x, d.y, d.theta], [0.5, 0, 0])


def test_exponential_against_ode_integration():
    # Flowing the pose ODE with a tight RK integrator must agree with the
    # closed form. Pure rotation by pi plus a generic screw.
    for v in (Twist(0, 0, math.pi), Twist(0.3, -1.1, 2.2)):
        def ode(_, y):
            c, s = math.cos(y[2]), math.sin(y[2])
            return [c * v.vx - s * v.vy, s * v.vx + c * v.vy, v.omega]

        sol = solve_ivp(ode, (0, 1.0), [0, 0, 0], rtol=1e-12, atol=1e-12)
        d = twist_to_transform(v, 1.0)
        assert np.allclose([d.x, d.y], sol.y[:2, -1], atol=1e-9)
        assert abs(normalize_angle(d.theta - sol.y[2, -1])) < 1e-9


def test_log_of_identity_and_translation():
    assert np.allclose(body_twist_between(Pose(1, 2, 0.3), Pose(1, 2, 0.3)).as_array(), 0)
    xi = body_twist_between(Pose(0, 0, 0), Pose(1, 0, 0))
    assert np.allclose(xi.as_array(), [1, 0, 0])


def test_exp_log_round_trip_random_pairs():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        a = Pose(*rng.uniform(-3, 3, size=2), rng.uniform(-math.pi, math.pi))
        b = Pose(*rng.uniform(-3, 3, size=2), rng.uniform(-math.pi, math.pi))
        xi = body_twist_between(a, b)
        c = a.compose(twist_to_transform(xi, 1.0))
        assert abs(c.x - b.x) < 1e-9
        assert abs(c.y - b.y) < 1e-9
        assert abs(normalize_angle(c.theta - b.theta)) < 1e-9


def test_polygon_rejects_bad_input():
    from modeplan.geom2d import GeometryError

    with pytest.raises(GeometryError):
        Polygon([(0, 0), (1, 0)])
    with pytest.raises(GeometryError):
        Polygon([(0, 0), (0, 1), (1, 0)])  # clockwise
    with pytest.raises(GeometryError):
        Polygon([(0, 0), (1, 1), (1, 0), (0, 1)])  # bowtie


def test_polygon_centroid_area_gyradius():
    assert SQUARE.area == pytest.approx(1.0)
    assert np.allclose(SQUARE.centroid(), [0, 0])
    # Unit square about its center: polar second moment 1/6.
    assert SQUARE.gyration_radius() == pytest.approx(math.sqrt(1 / 6), rel=1e-12)


def test_resting_square_has_two_corner_contacts():
    contacts = contact_query(SQUARE, Pose(0, 0.5, 0), [FLOOR], 1e-3, mu=0.5)
    assert len(contacts) == 2
    pts = sorted(tuple(c.point) for c in contacts)
    assert np.allclose(pts, [(-0.5, -0.5), (0.5, -0.5)])
    for c in contacts:
        world_n = Pose(0, 0.5, 0).rotation() @ c.normal
        assert np.allclose(world_n, [0, 1])
        assert abs(np.linalg.norm(c.normal) - 1) < 1e-9
        assert abs(c.normal @ c.tangent) < 1e-12


def test_hovering_square_has_no_contacts():
    assert contact_query(SQUARE, Pose(0, 0.5 + 0.01, 0), [FLOOR], 1e-3) == []


def test_tilted_square_touches_at_one_vertex():
    # Rotated 45 degrees, lowest vertex at height 0.
    h = math.sqrt(2) / 2
    contacts = contact_query(SQUARE, Pose(0, h, math.pi / 4), [FLOOR], 1e-3)
    assert len(contacts) == 1
    world = Pose(0, h, math.pi / 4).transform_points(contacts[0].point)
    assert abs(world[0]) < 1e-9 and abs(world[1]) < 1e-9


def test_contact_query_translation_equivariance():
    rng = np.random.default_rng(3)
    for _ in range(20):
        dx, dy = rng.uniform(-2, 2, size=2)
        base = contact_query(SQUARE, Pose(0.3, 0.5, 0), [FLOOR], 1e-3)
        floor2 = Polygon(FLOOR.vertices + np.array([dx, dy]))
        moved = contact_query(SQUARE, Pose(0.3 + dx, 0.5 + dy, 0), [floor2], 1e-3)
        assert len(base) == len(moved)
        for a, b in zip(base, moved):
            assert np.allclose(a.point, b.point, atol=1e-9)
            assert np.allclose(a.normal, b.normal, atol=1e-9)


def test_concave_step_corner_keeps_both_normals():
    # Block wedged where a floor meets a wall: one vertex, two push directions.
    # The wall overlaps the floor so the seam stays face-interior.
    wall = Polygon([(0.5, -1), (1.5, -1), (1.5, 2), (0.5, 2)])
    contacts = contact_query(SQUARE, Pose(0, 0.5, 0), [FLOOR, wall], 1e-3)
    corner = [c for c in contacts if np.allclose(c.point, [0.5, -0.5])]
    normals = sorted(tuple(np.round(c.normal, 9)) for c in corner)
    assert ((-1.0, 0.0) in normals) and ((0.0, 1.0) in normals)


def test_face_on_short_support_gives_two_endpoint_contacts():
    pillar = Polygon([(-0.2, -1), (0.2, -1), (0.2, 0), (-0.2, 0)])
    contacts = contact_query(SQUARE, Pose(0, 0.5, 0), [pillar], 1e-3)
    assert len(contacts) == 2
    xs = sorted(c.point[0] for c in contacts)
    assert np.allclose(xs, [-0.2, 0.2], atol=1e-9)


def test_penetration_rollback_vertical_drop():
    q_prev = Pose(0, 1.5, 0)
    q_next = Pose(0, 0.0, 0)  # half a unit below the floor
    q = penetration_rollback(q_prev, q_next, SQUARE, [FLOOR], 1e-3)
    assert abs(q.y - 0.5) <= 2e-3
    assert min_separation(SQUARE, q, [FLOOR]) >= -1e-3


def test_penetration_rollback_noop_when_clear():
    q_next = Pose(0, 0.7, 0)
    assert penetration_rollback(Pose(0, 1.5, 0), q_next, SQUARE, [FLOOR], 1e-3) is q_next


def test_penetration_rollback_rotating_fall():
    rng = np.random.default_rng(11)
    for _ in range(25):
        q_prev = Pose(rng.uniform(-1, 1), 1.2, rng.uniform(-1, 1))
        q_next = Pose(rng.uniform(-1, 1), rng.uniform(0.0, 0.3), rng.uniform(-2, 2))
        if min_separation(SQUARE, q_next, [FLOOR]) >= -1e-3:
            continue
        q = penetration_rollback(q_prev, q_next, SQUARE, [FLOOR], 1e-3)
        assert -1e-3 <= min_separation(SQUARE, q, [FLOOR]) <= 1e-3


def test_rollback_raises_from_penetrating_start():
    with pytest.raises(BisectionFailure):
        penetration_rollback(Pose(0, 0.2, 0), Pose(0, 0.1, 0), SQUARE, [FLOOR], 1e-3)


def test_interpolate_pose_endpoints():
    a, b = Pose(0, 0, 0), Pose(1, 2, 1.0)
    assert np.allclose(interpolate_pose(a, b, 0.0).as_array(), a.as_array())
    assert np.allclose(interpolate_pose(a, b, 1.0).as_array(), b.as_array(), atol=1e-12)


def test_weighted_distance_translation_and_wrap():
    assert weighted_distance(Pose(0, 0, 0), Pose(3, 4, 0), 1.0) == pytest.approx(5.0)
    d = weighted_distance(Pose(0, 0, 3 * math.pi / 4), Pose(0, 0, -3 * math.pi / 4), 2.0)
    assert d == pytest.approx(math.pi)
