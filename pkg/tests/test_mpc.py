import math

import numpy as np
import pytest

from activemocap.mpc import (
    HorizonPlan,
    MpcParams,
    braking_plan,
    build_qp,
    desired_surface_point,
    reachable_bounds,
    rollout,
    solve_plan,
    step_mpc,
)
from activemocap.potential import FieldSet, Obstacle, external_inputs
from activemocap.qp import solve_qp
from oracles import unconstrained_one_step

WIDE = dict(x_min=(-1e9,) * 3, x_max=(1e9,) * 3, v_min=(-1e9,) * 3, v_max=(1e9,) * 3,
            u_min=(-1e9,) * 3, u_max=(1e9,) * 3)


def test_params_validation_and_properties():
    p = MpcParams()
    assert p.steps == 16
    np.testing.assert_allclose(p.hover, [0.0, 0.0, 9.81])
    assert MpcParams(effort_ref="zero").hover.tolist() == [0.0, 0.0, 0.0]
    assert p.v_max_norm == pytest.approx(math.sqrt(50.25))
    with pytest.raises(ValueError):
        MpcParams(x_min=(0, 0, 11))
    with pytest.raises(ValueError):
        MpcParams(horizon=0)
    with pytest.raises(ValueError):
        MpcParams(effort_ref="other")
    with pytest.raises(ValueError):
        MpcParams(w_effort=(-1.0, 0.0, 0.0))


def test_surface_point_examples():
    np.testing.assert_allclose(desired_surface_point([16, 0, 8], [0, 0, 0], 8, 8), [8, 0, 8])
    np.testing.assert_allclose(desired_surface_point([0, 4, 8], [0, 0, 0], 8, 8), [0, 8, 8])
    np.testing.assert_allclose(desired_surface_point([0, 8, 3], [0, 0, 0], 8, 8), [0, 8, 8])
    np.testing.assert_allclose(desired_surface_point([0, 0, 8], [0, 0, 0], 8, 8, fallback_dir=[0, -1]), [0, -8, 8])
    with pytest.raises(ValueError):
        desired_surface_point([0, 0, 8], [0, 0, 0], 8, 8)


def test_one_step_closed_form():
    p = MpcParams(horizon=1, kappa=0.7, w_vel=(0.3,) * 3, w_effort=(1.0,) * 3, gravity=(0, 0, 0),
                  effort_ref="zero", **WIDE)
    x0, v0 = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.1, -0.2])
    x_ref, v_ref = np.array([3.0, 1.0, 2.0]), np.array([0.0, 0.5, 0.0])
    u = solve_qp(build_qp((x0, v0), x_ref, v_ref, np.zeros((2, 3)), p)).reshape(2, 3)
    for a in range(3):
        ref = unconstrained_one_step(x0[a], v0[a], x_ref[a], v_ref[a], p.dt, p.kappa, p.w_vel[a], p.w_effort[a])
        np.testing.assert_allclose(u[:, a], ref, atol=1e-7)


def test_at_goal_without_gravity_costs_nothing():
    p = MpcParams(gravity=(0, 0, 0), effort_ref="zero", **WIDE)
    x = np.array([1.0, 2.0, 8.0])
    prob = build_qp((x, np.zeros(3)), x, np.zeros(3), np.zeros((p.steps, 3)), p)
    u = solve_qp(prob)
    assert np.max(np.abs(u)) < 1e-6
    assert prob.objective(u) == pytest.approx(0.0, abs=1e-9)


def _hover_thrust(w_e, ref):
    p = MpcParams(w_effort=(w_e,) * 3, effort_ref=ref)
    x = np.array([0.0, 0.0, 8.0])
    return solve_qp(build_qp((x, np.zeros(3)), x, np.zeros(3), np.zeros((p.steps, 3)), p)).reshape(-1, 3)[:, 2]


def test_hover_referenced_effort_holds_gravity_exactly():
    np.testing.assert_allclose(_hover_thrust(1e-3, "hover"), 9.81, atol=1e-6)


def test_vanishing_effort_weight_approaches_gravity_compensation():
    gaps = [abs(_hover_thrust(w, "zero").mean() - 9.81) for w in (1e-3, 1e-4, 1e-5, 1e-6)]
    # the vertical velocity box binds for the larger weights, hence non-strict
    assert all(b <= a + 1e-9 for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 0.2 * gaps[-2] and gaps[-1] < 1e-2


def test_control_clamps_at_bound():
    p = MpcParams(horizon=1, w_effort=(1e-4,) * 3)
    x = np.array([0.0, 0.0, 8.0])
    u = solve_qp(build_qp((x, np.zeros(3)), x + [5.0, 0, 0], np.zeros(3), np.zeros((2, 3)), p)).reshape(2, 3)
    assert u[0, 0] == pytest.approx(3.0, abs=1e-6)


def test_hessian_positive_definite():
    prob = build_qp((np.zeros(3) + [0, 0, 8], np.zeros(3)), [1, 1, 8], np.zeros(3), np.zeros((16, 3)), MpcParams())
    assert np.linalg.eigvalsh(prob.P)[0] > 0


def test_plan_respects_boxes_and_dynamics():
    p = MpcParams()
    state0 = (np.array([-8.0, 0.0, 8.0]), np.array([1.0, -1.0, 0.0]))
    forces = np.zeros((p.steps, 3))
    forces[:, 0] = 1.0
    plan = solve_plan(state0, [-6.0, 2.0, 8.0], np.zeros(3), forces, p)
    assert plan.dynamics_residual() < 1e-6
    tol = 1e-6
    assert np.all(plan.positions >= np.array(p.x_min) - tol) and np.all(plan.positions <= np.array(p.x_max) + tol)
    assert np.all(plan.velocities >= np.array(p.v_min) - tol) and np.all(plan.velocities <= np.array(p.v_max) + tol)
    assert np.all(plan.controls >= np.array(p.u_min) - tol) and np.all(plan.controls <= np.array(p.u_max) + tol)
    assert not plan.relaxed and not plan.fallback


def test_equilibrium_holds_position():
    p = MpcParams()
    x = np.array([-8.0, 0.0, 8.0])
    plan = step_mpc((x, np.zeros(3)), np.zeros(3), np.zeros(3), np.zeros((p.steps, 3)), p)
    assert np.max(np.linalg.norm(plan.positions - x, axis=1)) < 0.05


def test_receding_horizon_fixed_point():
    p = MpcParams()
    x = np.array([-8.0, 0.0, 8.0])
    f = np.zeros((p.steps, 3))
    a = solve_plan((x, np.zeros(3)), x, np.zeros(3), f, p)
    b = solve_plan((a.positions[0], a.velocities[0]), x, np.zeros(3), f, p)
    assert abs(a.objective - b.objective) < 1e-6


def test_solver_is_deterministic():
    p = MpcParams()
    args = ((np.array([-5.0, 3.0, 7.0]), np.array([0.5, 0.0, 0.1])), [-7.0, 1.0, 8.0], np.zeros(3), np.ones((16, 3)), p)
    a, b = solve_plan(*args), solve_plan(*args)
    assert a.to_record().tobytes() == b.to_record().tobytes()


def test_teammate_at_same_angle_gets_tangential_control():
    p = MpcParams()
    target = np.zeros(3)
    me = np.array([-8.0, 0.0, 8.0])
    mate = np.tile(np.array([-8.0, 0.0, 8.0]) * 1.3, (p.steps, 1))[None]
    own = np.tile(me, (p.steps, 1))
    f = external_inputs(own, target, math.hypot(8, 8), FieldSet(), 3, mate, 0, [1])
    assert abs(f[0, 1]) > 0
    plan = step_mpc((me, np.zeros(3)), target, np.zeros(3), f, p)
    free = step_mpc((me, np.zeros(3)), target, np.zeros(3), np.zeros((p.steps, 3)), p)
    # the tangential direction at (-8, 0) is +-y
    assert abs(plan.positions[-1, 1] - free.positions[-1, 1]) > 0.1


def test_obstacle_term_keeps_plan_farther_away():
    p = MpcParams()
    target = np.zeros(3)
    me = np.array([-12.0, 0.0, 8.0])
    tree = Obstacle((-10.0, 0.0, 0.0), 0.3)
    own = np.tile(me, (p.steps, 1))
    f = external_inputs(own, target, math.hypot(8, 8), FieldSet(), 1, obstacles=[tree])
    with_obs = step_mpc((me, np.zeros(3)), target, np.zeros(3), f, p)
    without = step_mpc((me, np.zeros(3)), target, np.zeros(3), np.zeros((p.steps, 3)), p)
    assert np.min(tree.clearance(with_obs.positions)) >= np.min(tree.clearance(without.positions))


def test_unreachable_state_rows_are_relaxed():
    p = MpcParams()
    # vertical velocity already outside its box: hard problem infeasible
    state0 = (np.array([0.0, 0.0, 8.0]), np.array([0.0, 0.0, 2.0]))
    prob = build_qp(state0, [0, 0, 8], np.zeros(3), np.zeros((p.steps, 3)), p)
    l, u, changed = reachable_bounds(prob, p)
    assert changed
    plan = step_mpc(state0, np.array([8.0, 0.0, 0.0]), np.zeros(3), np.zeros((p.steps, 3)), p)
    assert plan.relaxed and not plan.fallback
    assert plan.dynamics_residual() < 1e-6


def test_braking_plan_slows_down():
    p = MpcParams()
    plan = braking_plan((np.zeros(3), np.array([4.0, -2.0, 0.3])), np.zeros((p.steps, 3)), p)
    assert plan.fallback
    assert np.linalg.norm(plan.velocities[-1]) < 0.1
    assert np.all(plan.controls <= np.array(p.u_max) + 1e-12)


def test_plan_record_roundtrip_and_interpolation():
    p = MpcParams(horizon=3)
    plan = rollout((np.zeros(3), np.array([1.0, 0.0, 0.0])), np.tile([0.0, 0.0, 9.81], (4, 1)), np.zeros((4, 3)),
                   p, stamp=2.0, owner=4)
    back = HorizonPlan.from_record(plan.to_record())
    assert back.owner == 4 and back.stamp == 2.0
    np.testing.assert_array_equal(back.positions, plan.positions)
    np.testing.assert_allclose(plan.position_at(2.05), [0.05, 0, 0], atol=1e-12)
    np.testing.assert_allclose(plan.position_at(2.6), [0.6, 0, 0], atol=1e-9)
    np.testing.assert_allclose(plan.velocity_at(2.25), [1.0, 0, 0], atol=1e-9)
    with pytest.raises(ValueError):
        HorizonPlan.from_record(plan.to_record()[:-1])
