import math

import numpy as np
import pytest

from activemocap.mpc import MpcParams, rollout
from activemocap.potential import Obstacle
from activemocap.simworld import (
    DisturbanceParams,
    DriftParams,
    MavState,
    PersonModel,
    line_of_sight,
    step_mav,
    step_person,
    step_self_localization,
    yaw_controller,
)


def test_person_modes():
    p = PersonModel(np.zeros(3))
    assert np.array_equal(step_person(p, 0.1).position, np.zeros(3))
    w = PersonModel(np.zeros(3), mode="waypoints", waypoints=[[1.0, 0.0, 0.0]], speed_cap=1.2)
    np.testing.assert_allclose(step_person(w, 0.1).position, [0.12, 0.0, 0.0])
    with pytest.raises(ValueError):
        PersonModel(np.zeros(3), mode="teleport")
    with pytest.raises(ValueError):
        step_person(p, 0.0)


def test_waypoints_advance_on_arrival():
    w = PersonModel(np.zeros(3), mode="waypoints", waypoints=[[0.05, 0.0, 0.0], [1.0, 1.0, 0.0]], speed_cap=1.0)
    w = step_person(w, 0.1)
    np.testing.assert_allclose(w.position, [0.05, 0.0, 0.0])
    assert w.wp_index == 1


def test_random_walk_speed_and_bounds():
    rng = np.random.default_rng(0)
    p = PersonModel(np.zeros(3), mode="random_walk", speed_cap=1.2, accel_std=2.0, bounds=(5.0, 5.0))
    for _ in range(10_000):
        p = step_person(p, 0.1, rng)
        assert np.linalg.norm(p.velocity) <= 1.2 + 1e-12
        assert abs(p.position[0]) <= 5.0 + 1e-9 and abs(p.position[1]) <= 5.0 + 1e-9


def _plan(state0, controls=None, stamp=0.0):
    p = MpcParams()
    u = np.tile([0.0, 0.0, 9.81], (p.steps, 1)) if controls is None else controls
    return rollout(state0, u, np.zeros((p.steps, 3)), p, stamp=stamp)


def test_zero_disturbance_follows_plan_exactly():
    m = MavState.at(0, [1.0, 2.0, 8.0])
    m = MavState(0, m.pose, np.array([1.0, 0.0, 0.0]), m.believed)
    plan = _plan((m.position, m.velocity))
    out = step_mav(m, plan, 0.1, None, DisturbanceParams(std=0.0), now=0.0)
    np.testing.assert_array_equal(out.position, plan.positions[0])
    np.testing.assert_array_equal(out.velocity, plan.velocities[0])


def test_constant_velocity_without_control():
    # zero control with gravity compensated: velocity is unchanged
    m = MavState.at(0, [0.0, 0.0, 8.0])
    m = MavState(0, m.pose, np.array([1.0, -0.5, 0.0]), m.believed)
    for k in range(20):
        plan = _plan((m.position, m.velocity), stamp=0.1 * k)
        m = step_mav(m, plan, 0.1, None, now=0.1 * k)
    np.testing.assert_allclose(m.velocity, [1.0, -0.5, 0.0])
    np.testing.assert_allclose(m.position, [2.0, -1.0, 8.0], atol=1e-9)


def test_tracking_error_bounded():
    rng = np.random.default_rng(1)
    dist = DisturbanceParams(e_max=1.0, std=0.5, corr=0.9)
    m = MavState.at(0, [0.0, 0.0, 8.0])
    for k in range(500):
        plan = _plan((m.position, np.zeros(3)), stamp=0.1 * k)
        m = step_mav(m, plan, 0.1, rng, dist, now=0.1 * k)
        # per-step deviation from the commanded waypoint and accumulated error
        assert np.linalg.norm(m.position - plan.positions[0]) <= 1.0 + 1e-9
        assert np.linalg.norm(m.track_err) <= 1.0 + 1e-9


def test_stale_plan_brakes():
    m = MavState.at(0, [0.0, 0.0, 8.0])
    m = MavState(0, m.pose, np.array([2.0, 0.0, 0.0]), m.believed)
    plan = _plan((m.position, m.velocity))
    out = step_mav(m, plan, 0.1, None, now=1.0)
    assert 0 < out.velocity[0] < 2.0
    out = step_mav(m, None, 0.1, None, now=0.0)
    assert out.velocity[0] < 2.0


def test_velocity_clamped_to_box():
    m = MavState.at(0, [0.0, 0.0, 8.0])
    p = MpcParams()
    fast = rollout((m.position, np.array([6.0, 0.0, 1.0])), np.tile([0.0, 0.0, 9.81], (16, 1)), np.zeros((16, 3)), p)
    out = step_mav(m, fast, 0.1, None, now=0.0)
    np.testing.assert_allclose(out.velocity, [5.0, 0.0, 0.5])


def test_drift_statistics_and_reset():
    rng = np.random.default_rng(2)
    offs = []
    # sqrt(100) * 0.1 = 1 m, the same statistic as 1e4 steps of 0.01
    for _ in range(400):
        m = MavState.at(0, [0.0, 0.0, 8.0])
        for _ in range(100):
            m = step_self_localization(m, 0.1, rng, DriftParams(walk_std=0.1, fix_period=0.0))
        offs.append(m.drift[0])
    assert np.std(offs) == pytest.approx(1.0, rel=0.2)
    assert np.std(offs) == pytest.approx(math.sqrt(m.self_cov[0, 0] - 1e-4), rel=0.2)


def test_zero_drift_and_monotone_cov():
    m = MavState.at(0, [0.0, 0.0, 8.0])
    z = step_self_localization(m, 0.1, None, DriftParams(0.0, fix_period=0.0, fix_std=0.0))
    np.testing.assert_array_equal(z.believed_position, z.position)
    rng = np.random.default_rng(3)
    eig = []
    for _ in range(150):
        m = step_self_localization(m, 0.1, rng, DriftParams(fix_period=14.0))
        eig.append(np.linalg.eigvalsh(m.self_cov[:3, :3])[-1])
    d = np.diff(eig)
    # monotone except at the single fix
    assert np.sum(d < 0) == 1


def test_yaw_controller():
    m = MavState.at(0, [0.0, 0.0, 8.0], yaw=0.0)
    assert yaw_controller(m, [5.0, 0.0, 0.0]) == 0.0
    assert yaw_controller(m, [0.0, 5.0, 0.0], gain=0.5) == pytest.approx(0.5 * math.pi / 2)
    w = MavState.at(0, [0.0, 0.0, 8.0], yaw=math.pi - 0.1)
    # target just across the +-pi seam: short way is counter-clockwise
    assert yaw_controller(w, [-5.0, -5.0 * math.tan(0.1), 0.0]) > 0


def test_line_of_sight():
    a, b = np.array([0.0, 0.0, 1.0]), np.array([10.0, 0.0, 1.0])
    assert line_of_sight(a, b, [])
    assert not line_of_sight(a, b, [Obstacle((5.0, 0.0, 0.0), 0.5)])
    assert line_of_sight(a, b, [Obstacle((12.0, 0.0, 0.0), 0.5)])
    assert not line_of_sight(a, b, [Obstacle((5.0, 0.0, 1.0), 0.5, shape="sphere")])
    assert line_of_sight(a, b, [Obstacle((5.0, 0.0, 0.0), 0.5, height=0.5)])
