import math

import numpy as np
import pytest

from modeplan.config import PlannerConfig, resolve_params
from modeplan.geom2d import Pose, weighted_distance
from modeplan.integrate import (
    InvalidStart,
    StopReason,
    check_projection_idempotence,
    forward_integrate,
)
from modeplan.modes import ContactMode
from modeplan.planner import FingerPlacement, finger_contacts
from modeplan.scenes import builtin_problem


@pytest.fixture(scope="module")
def block_scene():
    return builtin_problem(1)


@pytest.fixture(scope="module")
def params(block_scene):
    return resolve_params(block_scene)


def block_fingers(scene):
    # One finger on the left face, one on top: enough to push and pivot.
    return finger_contacts(
        scene, (FingerPlacement((-0.6, 0.0), 3), FingerPlacement((0.0, 0.4), 2))
    )


def test_zero_length_target_stops_immediately(block_scene, params):
    q = block_scene.q_start
    res = forward_integrate(
        q, q, block_fingers(block_scene), ContactMode.from_codes("RR"), block_scene, params
    )
    assert res.stop_reason == StopReason.VELOCITY_ZERO
    assert res.steps == []
    assert res.q_new is q


def test_slide_reaches_target_with_straight_trace(block_scene, params):
    q0 = block_scene.q_start
    target = Pose(q0.x + 2.0, q0.y, 0.0)
    res = forward_integrate(
        q0, target, block_fingers(block_scene), ContactMode.from_codes("RR"),
        block_scene, params,
    )
    assert res.stop_reason == StopReason.VELOCITY_ZERO
    assert weighted_distance(res.q_new, target, params.rotation_weight) <= 2 * params.node_epsilon
    for step in res.steps:
        assert abs(step.pose.y - q0.y) < 1e-6
        assert abs(step.pose.theta) < 1e-6
        assert step.solution.v_o.vx > 0


def test_monotone_approach_along_trace(block_scene, params):
    q0 = block_scene.q_start
    target = Pose(q0.x + 1.0, q0.y + 0.8, 0.9)
    for codes in ("RR", "SS", "FS", "SF"):
        res = forward_integrate(
            q0, target, block_fingers(block_scene), ContactMode.from_codes(codes),
            block_scene, params,
        )
        dists = [
            weighted_distance(s.pose, target, params.rotation_weight) for s in res.steps
        ] + [weighted_distance(res.q_new, target, params.rotation_weight)]
        for a, b in zip(dists, dists[1:]):
            assert b <= a + 1e-9


def test_no_step_penetrates(block_scene, params):
    from modeplan.geom2d import min_separation

    q0 = block_scene.q_start
    target = Pose(q0.x + 1.0, q0.y - 0.5, -0.4)
    for codes in ("RR", "FS", "SF"):
        res = forward_integrate(
            q0, target, block_fingers(block_scene), ContactMode.from_codes(codes),
            block_scene, params,
        )
        for step in res.steps:
            assert (
                min_separation(block_scene.object_polygon, step.pose, block_scene.environment)
                >= -params.d_contact - 1e-12
            )
        assert (
            min_separation(block_scene.object_polygon, res.q_new, block_scene.environment)
            >= -params.d_contact - 1e-12
        )


def test_wall_stop_reports_new_contact():
    scene = builtin_problem(4)  # has a cliff wall at x = 2
    p = resolve_params(scene)
    fingers = finger_contacts(scene, (FingerPlacement((-0.35, 0.0), 3),))
    q0 = Pose(1.0, 0.35, 0.0)
    target = Pose(3.0, 0.35, 0.0)
    res = forward_integrate(q0, target, fingers, ContactMode.from_codes("RR"), scene, p)
    assert res.stop_reason == StopReason.NEW_CONTACT
    # Flush against the wall: right face at x = 2 within tolerance.
    assert res.q_new.x == pytest.approx(2.0 - 0.35, abs=2 * p.d_contact)
    idents = {c.identity for c in res.env_contacts}
    assert any(ident[1] == 1 for ident in idents)  # touched the cliff polygon


def test_maintained_contacts_keep_zero_normal_velocity(block_scene, params):
    q0 = block_scene.q_start
    target = Pose(q0.x + 1.5, q0.y, 0.0)
    res = forward_integrate(
        q0, target, block_fingers(block_scene), ContactMode.from_codes("RR"),
        block_scene, params,
    )
    for step in res.steps:
        v = step.solution.v_o.as_array()
        for c in step.contacts:
            if c.source.kind == "env":
                assert abs(c.velocity_rows()[0] @ v) <= 1e-7


def test_separate_mode_lifts_off(block_scene, params):
    # All-separate with a supporting pinch: carry the block upward.
    scene = block_scene
    fingers = finger_contacts(
        scene, (FingerPlacement((-0.6, 0.0), 3), FingerPlacement((0.6, 0.0), 1))
    )
    q0 = scene.q_start
    target = Pose(q0.x, q0.y + 0.8, 0.0)
    res = forward_integrate(q0, target, fingers, ContactMode.from_codes("SS"), scene, params)
    assert res.q_new.y > q0.y + 0.5
    assert res.env_contacts == []


def test_invalid_start_raises(block_scene, params):
    buried = Pose(0, 0.1, 0)
    with pytest.raises(InvalidStart):
        forward_integrate(
            buried, Pose(0, 1, 0), [], ContactMode.from_codes("RR"), block_scene, params
        )
    with pytest.raises(InvalidStart):
        # mode length does not match the current contact set
        forward_integrate(
            block_scene.q_start, Pose(0, 1, 0), [], ContactMode.from_codes("R"),
            block_scene, params,
        )


def test_projection_idempotence_on_reached_poses(block_scene, params):
    rng = np.random.default_rng(40)
    q0 = block_scene.q_start
    fingers = block_fingers(block_scene)
    checked = 0
    for _ in range(100):
        codes = ("RR", "LL", "FS", "SF")[int(rng.integers(0, 4))]
        target = Pose(
            q0.x + rng.uniform(-1.5, 1.5),
            q0.y + rng.uniform(0, 1.0),
            rng.uniform(-1.2, 1.2),
        )
        res = forward_integrate(
            q0, target, fingers, ContactMode.from_codes(codes), block_scene, params
        )
        if not res.steps:
            continue
        # Re-project the reached pose onto the same mode from itself, keeping
        # only labels of contacts that survived to the final state.
        labels = []
        start_env = {c.identity for c in res.env_contacts}
        for c, lab in zip(
            [c for c in res.steps[0].contacts if c.source.kind == "env"],
            ContactMode.from_codes(codes),
        ):
            if c.identity in start_env:
                labels.append(lab)
        if len(labels) != len(res.env_contacts):
            continue  # contact set changed; a different mode vector applies
        again = forward_integrate(
            res.q_new, res.q_new, fingers, ContactMode(tuple(labels)), block_scene, params
        )
        assert again.stop_reason == StopReason.VELOCITY_ZERO
        assert (
            weighted_distance(again.q_new, res.q_new, params.rotation_weight)
            <= params.node_epsilon
        )
        checked += 1
    assert checked >= 40


def test_projection_closest_point_on_slide_manifold(block_scene, params):
    # Under (R, R) both contact normals pin y and theta: the reachable set is
    # pure +x translation. The projection of any target is therefore the
    # target with y and theta reset, reached when x-progress is positive.
    q0 = block_scene.q_start
    target = Pose(q0.x + 1.2, q0.y + 0.6, 0.0)
    res = forward_integrate(
        q0, target, block_fingers(block_scene), ContactMode.from_codes("RR"),
        block_scene, params,
    )
    assert res.q_new.x == pytest.approx(target.x, abs=1e-4 * 10)
    assert res.q_new.y == pytest.approx(q0.y, abs=1e-9)
    assert res.q_new.theta == pytest.approx(0.0, abs=1e-9)


def test_check_projection_idempotence_helper(block_scene, params):
    q = block_scene.q_start
    assert check_projection_idempotence(
        q, ContactMode.from_codes("RR"), block_fingers(block_scene), block_scene, params
    )
