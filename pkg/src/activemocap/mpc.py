"""Decentralized convex MPC over a double-integrator with embedded external inputs.

Each MAV solves

    min  sum_n (u(n) - u_h)' W_E (u(n) - u_h) + X' diag(kappa I, W_V) X
    s.t. s(n+1) = A s(n) + B (u(n) + f(n) + g),  n = 0..N
         box bounds on x(1..N+1), v(1..N+1), u(0..N)

with ``X = [x(N+1) - x_ref, v(N+1) - v_target]`` and ``u_h`` the hover
control (-g clipped to the control box; zero with ``effort_ref="zero"``). The states are eliminated
so the decision vector is the stacked controls ``[u(0), ..., u(N)]``
(time-major, xyz inside each step).
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import GRAVITY
from .qp import QpProblem, QPError, SolverSettings, solve_qp_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MpcParams:
    horizon: int = 15
    dt: float = 0.1
    kappa: float = 0.0108
    w_vel: tuple = (0.015, 0.015, 0.015)
    w_effort: tuple = (0.003, 0.003, 0.003)
    x_min: tuple = (-20.0, -20.0, 3.0)
    x_max: tuple = (20.0, 20.0, 10.0)
    v_min: tuple = (-5.0, -5.0, -0.5)
    v_max: tuple = (5.0, 5.0, 0.5)
    u_min: tuple = (-3.0, -3.0, 3.0)
    u_max: tuple = (3.0, 3.0, 11.0)
    gravity: tuple = tuple(GRAVITY)
    effort_ref: str = "hover"  # hover | zero

    def __post_init__(self):
        if self.effort_ref not in ("hover", "zero"):
            raise ValueError(f"unknown effort reference {self.effort_ref!r}")
        if self.horizon < 1 or self.dt <= 0:
            raise ValueError("horizon must be >= 1 and dt > 0")
        if self.kappa < 0 or min(self.w_vel) < 0 or min(self.w_effort) < 0:
            raise ValueError("weights must be PSD")
        for lo, hi, name in (
            (self.x_min, self.x_max, "position"),
            (self.v_min, self.v_max, "velocity"),
            (self.u_min, self.u_max, "control"),
        ):
            if np.any(np.asarray(lo) > np.asarray(hi)):
                raise ValueError(f"infeasible {name} box: min > max")

    @property
    def steps(self) -> int:
        """Number of controls and transitions, N + 1."""
        return self.horizon + 1

    @property
    def hover(self) -> np.ndarray:
        if self.effort_ref == "zero":
            return np.zeros(3)
        return np.clip(-np.asarray(self.gravity, dtype=float), self.u_min, self.u_max)

    @property
    def v_max_norm(self) -> float:
        return float(np.linalg.norm(np.maximum(np.abs(self.v_min), np.abs(self.v_max))))

    @property
    def u_max_norm(self) -> float:
        return float(np.linalg.norm(np.maximum(np.abs(self.u_min), np.abs(self.u_max))))


@dataclass
class HorizonPlan:
    """States ``x(1..N+1)``, ``v(1..N+1)`` and controls ``u(0..N)`` of one solve.

    ``x0``/``v0`` record the start state so teammates can time-align the plan.
    """

    x0: np.ndarray
    v0: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    controls: np.ndarray
    forces: np.ndarray
    stamp: float = 0.0
    owner: int = 0
    dt: float = 0.1
    fallback: bool = False
    relaxed: bool = False
    objective: float = float("nan")
    # primal/dual solver iterate, kept locally for warm starts (not on the wire)
    solver_state: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def horizon(self) -> int:
        return len(self.controls) - 1

    def position_at(self, t: float) -> np.ndarray:
        """Planned position at absolute time ``t`` (constant-velocity extrapolation past the end)."""
        return self.positions_at([t])[0]

    def positions_at(self, times) -> np.ndarray:
        i = (np.asarray(times, dtype=float) - self.stamp) / self.dt
        n = len(self.positions)
        xs = np.vstack([self.x0, self.positions])
        k = np.clip(np.floor(i + 1e-9).astype(int), 0, n - 1)
        frac = (i - k)[:, None]
        out = xs[k] + frac * (xs[k + 1] - xs[k])
        before = i <= 0
        out[before] = self.x0 + (i[before] * self.dt)[:, None] * self.v0
        after = np.floor(i + 1e-9) >= n
        out[after] = self.positions[-1] + ((i[after] - n) * self.dt)[:, None] * self.velocities[-1]
        return out

    def velocity_at(self, t: float) -> np.ndarray:
        """Planned velocity at ``t``, linear between knots and held outside the plan."""
        return self.velocities_at([t])[0]

    def velocities_at(self, times) -> np.ndarray:
        i = (np.asarray(times, dtype=float) - self.stamp) / self.dt
        n = len(self.velocities)
        vs = np.vstack([self.v0, self.velocities])
        k = np.clip(np.floor(i + 1e-9).astype(int), 0, n - 1)
        frac = np.clip(i - k, 0.0, 1.0)[:, None]
        out = vs[k] + frac * (vs[k + 1] - vs[k])
        out[i <= 0] = self.v0
        out[np.floor(i + 1e-9) >= n] = self.velocities[-1]
        return out

    def to_record(self) -> np.ndarray:
        """Flat wire record: owner, stamp, N, dt, x0, v0, then (x, v, u, f) per step."""
        head = np.array([self.owner, self.stamp, self.horizon, self.dt], dtype=float)
        body = np.concatenate([self.positions, self.velocities, self.controls, self.forces], axis=1)
        return np.concatenate([head, self.x0, self.v0, body.ravel()])

    @classmethod
    def from_record(cls, rec) -> "HorizonPlan":
        rec = np.asarray(rec, dtype=float)
        owner, stamp, N, dt = rec[:4]
        steps = int(N) + 1
        if rec.size != 10 + 12 * steps:
            raise ValueError(f"record length {rec.size} does not match horizon {int(N)}")
        body = rec[10:].reshape(steps, 12)
        return cls(
            rec[4:7].copy(), rec[7:10].copy(), body[:, 0:3].copy(), body[:, 3:6].copy(),
            body[:, 6:9].copy(), body[:, 9:12].copy(), float(stamp), int(owner), float(dt),
        )

    def dynamics_residual(self, gravity=GRAVITY) -> float:
        """Max violation of the double-integrator update over the plan."""
        dt = self.dt
        xs = np.vstack([self.x0, self.positions])
        vs = np.vstack([self.v0, self.velocities])
        a = self.controls + self.forces + np.asarray(gravity)
        rx = xs[1:] - (xs[:-1] + dt * vs[:-1] + 0.5 * dt * dt * a)
        rv = vs[1:] - (vs[:-1] + dt * a)
        return float(max(np.max(np.abs(rx)), np.max(np.abs(rv))))


@functools.lru_cache(maxsize=32)
def _prediction(steps: int, dt: float):
    """Maps from (s0, stacked accelerations) to stacked positions/velocities for one axis."""
    # x(n) = x0 + n dt v0 + sum_{i<n} dt^2 (n - i - 1/2) a_i ; v(n) = v0 + sum_{i<n} dt a_i
    n = np.arange(1, steps + 1)[:, None]
    i = np.arange(steps)[None, :]
    Sx = np.where(i < n, dt * dt * (n - i - 0.5), 0.0)
    Sv = np.where(i < n, dt, 0.0)
    return Sx, Sv


@functools.lru_cache(maxsize=32)
def _structure(steps: int, dt: float, kappa: float, w_vel: tuple, w_effort: tuple):
    """Hessian and constraint matrix, which depend only on the parameters."""
    Sx1, Sv1 = _prediction(steps, dt)
    I3 = np.eye(3)
    Sx = np.kron(Sx1, I3)  # (3 steps) x (3 steps), time-major
    Sv = np.kron(Sv1, I3)
    Tx, Tv = Sx[-3:], Sv[-3:]
    We = np.diag(np.tile(np.asarray(w_effort, dtype=float), steps))
    Wv = np.diag(w_vel)
    P = 2.0 * (We + kappa * Tx.T @ Tx + Tv.T @ Wv @ Tv)
    A = np.vstack([np.eye(3 * steps), Sx, Sv])
    return P, A, Sx, Sv


def desired_surface_point(self_pos, target_pos, d_des: float, h_des: float, fallback_dir=None) -> np.ndarray:
    """Point on the safety surface along the horizontal target-to-MAV direction.

    When the MAV is directly above the target, ``fallback_dir`` (the previous
    direction) is used; with no fallback a ``ValueError`` is raised.
    """
    self_pos = np.asarray(self_pos, dtype=float)
    target_pos = np.asarray(target_pos, dtype=float)
    d = self_pos[:2] - target_pos[:2]
    h = math.hypot(d[0], d[1])
    if h < 1e-9:
        if fallback_dir is None:
            raise ValueError("degenerate horizontal direction")
        d = np.asarray(fallback_dir, dtype=float)[:2]
        h = math.hypot(d[0], d[1])
    u = d / h
    return np.array([target_pos[0] + d_des * u[0], target_pos[1] + d_des * u[1], target_pos[2] + h_des])


def build_qp(state0, x_ref, v_ref, forces, p: MpcParams, state_box: bool = True) -> QpProblem:
    """Condensed QP over the stacked controls.

    ``forces`` is the (N+1, 3) external input, one row per transition.
    Without ``state_box`` only the control bounds are kept, which is always
    feasible.
    """
    steps = p.steps
    x0, v0 = (np.asarray(a, dtype=float) for a in state0)
    forces = np.asarray(forces, dtype=float).reshape(steps, 3)
    P, A, Sx, Sv = _structure(steps, p.dt, p.kappa, tuple(p.w_vel), tuple(p.w_effort))
    w = (forces + np.asarray(p.gravity)).ravel()
    t = np.arange(1, steps + 1)[:, None] * p.dt
    cx = (x0 + t * v0).ravel() + Sx @ w
    cv = np.tile(v0, steps) + Sv @ w
    ex = cx[-3:] - np.asarray(x_ref, dtype=float)
    ev = cv[-3:] - np.asarray(v_ref, dtype=float)
    Wv = np.diag(p.w_vel)
    Tx, Tv = Sx[-3:], Sv[-3:]
    uh = np.tile(p.hover, steps)
    we = np.tile(np.asarray(p.w_effort, dtype=float), steps)
    q = 2.0 * (p.kappa * Tx.T @ ex + Tv.T @ Wv @ ev - we * uh)
    const = float(p.kappa * ex @ ex + ev @ Wv @ ev + uh @ (we * uh))
    l = np.concatenate([np.tile(p.u_min, steps), np.tile(p.x_min, steps) - cx, np.tile(p.v_min, steps) - cv])
    u = np.concatenate([np.tile(p.u_max, steps), np.tile(p.x_max, steps) - cx, np.tile(p.v_max, steps) - cv])
    if not state_box:
        m = 3 * steps
        A, l, u = A[:m], l[:m], u[:m]
    return QpProblem(P, q, A, l.astype(float), u.astype(float), const, {"cx": cx, "cv": cv})


def reachable_bounds(prob: QpProblem, p: MpcParams) -> tuple[np.ndarray, np.ndarray, bool]:
    """State bounds loosened just enough that every row is reachable on its own.

    The prediction maps have non-negative entries, so the extreme controls
    give each state row's exact reachable interval under the control box.
    Returns the new ``(l, u)`` and whether anything changed.
    """
    m = 3 * p.steps
    A = prob.A[m:]
    lo_u, hi_u = prob.l[:m], prob.u[:m]
    reach_lo = A @ lo_u
    reach_hi = A @ hi_u
    l, u = prob.l.copy(), prob.u.copy()
    l[m:] = np.minimum(l[m:], reach_hi)
    u[m:] = np.maximum(u[m:], reach_lo)
    return l, u, bool(np.any(l != prob.l) or np.any(u != prob.u))


def rollout(state0, controls, forces, p: MpcParams, stamp: float = 0.0, owner: int = 0) -> HorizonPlan:
    """Integrate the double-integrator dynamics step by step."""
    x, v = (np.array(a, dtype=float) for a in state0)
    x0, v0 = x.copy(), v.copy()
    controls = np.asarray(controls, dtype=float).reshape(-1, 3)
    forces = np.asarray(forces, dtype=float).reshape(-1, 3)
    g = np.asarray(p.gravity)
    xs, vs = [], []
    dt = p.dt
    for u, f in zip(controls, forces):
        a = u + f + g
        x = x + dt * v + 0.5 * dt * dt * a
        v = v + dt * a
        xs.append(x)
        vs.append(v)
    return HorizonPlan(x0, v0, np.array(xs), np.array(vs), controls.copy(), forces.copy(), stamp, owner, dt)


def braking_plan(state0, forces, p: MpcParams, stamp: float = 0.0, owner: int = 0) -> HorizonPlan:
    """Decelerate toward hover inside the control box."""
    x, v = (np.array(a, dtype=float) for a in state0)
    forces = np.asarray(forces, dtype=float).reshape(p.steps, 3)
    g = np.asarray(p.gravity)
    us = []
    vv = v.copy()
    for f in forces:
        u = np.clip(-vv / p.dt - f - g, p.u_min, p.u_max)
        us.append(u)
        vv = vv + p.dt * (u + f + g)
    plan = rollout((x, v), np.array(us), forces, p, stamp, owner)
    plan.fallback = True
    return plan


def shift_warm_start(state: tuple | None, steps: int) -> tuple | None:
    """Advance a stored ``(x, y)`` iterate by one step, repeating the last block."""
    if state is None:
        return None

    def shift(v):
        blocks = v.reshape(-1, steps, 3)
        return np.concatenate([blocks[:, 1:], blocks[:, -1:]], axis=1).ravel()

    x, y = state
    return shift(x), shift(y)


def solve_plan(state0, x_ref, v_ref, forces, p: MpcParams, tol: float = 1e-6,
               settings: SolverSettings = SolverSettings(), stamp: float = 0.0, owner: int = 0,
               state_box: str = "hard", warm: tuple | None = None) -> HorizonPlan:
    """Build, solve and roll out one MPC problem. Raises QPError on failure.

    ``state_box`` is ``"hard"`` (as given), ``"reachable"`` (bounds loosened
    by :func:`reachable_bounds`) or ``"none"`` (control bounds only).
    ``warm`` is an optional ``(x, y)`` starting iterate; it is ignored when
    its size does not match the problem.
    """
    prob = build_qp(state0, x_ref, v_ref, forces, p, state_box != "none")
    relaxed = state_box == "none"
    if state_box == "reachable":
        l, u, relaxed = reachable_bounds(prob, p)
        prob = QpProblem(prob.P, prob.q, prob.A, l, u, prob.const, prob.meta)
    if warm is not None and (warm[0].shape[0] != prob.A.shape[1] or warm[1].shape[0] != prob.A.shape[0]):
        warm = None
    (u, y), = solve_qp_batch([prob], tol, settings, [warm] if warm is not None else None)
    plan = rollout(state0, u, forces, p, stamp, owner)
    plan.objective = prob.objective(u)
    plan.relaxed = relaxed
    plan.solver_state = (u, y)
    return plan


def step_mpc(
    state0,
    target_pos,
    target_vel,
    forces,
    p: MpcParams,
    d_des: float = 8.0,
    h_des: float = 8.0,
    fallback_dir=None,
    stamp: float = 0.0,
    owner: int = 0,
    settings: SolverSettings = SolverSettings(),
    warm: tuple | None = None,
) -> HorizonPlan:
    """One receding-horizon step given precomputed external inputs.

    State rows that strong external inputs (or a state already outside the
    box) make unreachable are loosened to their reachable interval and the
    plan is flagged ``relaxed``. If the loosened problem is still infeasible
    it is retried with control bounds only, and if that fails too the
    braking plan is returned with ``fallback`` set.
    """
    # surface point about where the target will be at the end of the horizon
    t_end = p.steps * p.dt
    target_end = np.asarray(target_pos, dtype=float) + t_end * np.asarray(target_vel, dtype=float)
    x_ref = desired_surface_point(state0[0], target_end, d_des, h_des, fallback_dir)
    for mode in ("reachable", "none"):
        try:
            return solve_plan(state0, x_ref, target_vel, forces, p, settings.tol, settings, stamp, owner, mode, warm)
        except QPError as exc:
            log.debug("MAV %d: MPC failed with state box %r (%s)", owner, mode, exc)
    return braking_plan(state0, forces, p, stamp, owner)
