"""Closed-loop simulation driver.

Tick order (fixed; determinism depends on it): person -> detections ->
network delivery -> fusion -> potential forces -> MPC -> MAV dynamics ->
localization drift.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fusion import TargetEstimate, TargetTracker
from .metrics import RunMetrics, TickRecorder
from .mpc import HorizonPlan, shift_warm_start, step_mpc
from .network import Channel, Message
from .potential import FieldSet, Obstacle, SafetyParams, external_inputs, safety_thresholds
from .scenario import ConfigError, Scenario
from .sensing import CartesianMeasurement, convert_measurement, synth_detect, to_world
from .simworld import (
    DriftParams,
    MavState,
    PersonModel,
    step_mav,
    step_person,
    step_self_localization,
    yaw_controller,
)

log = logging.getLogger(__name__)

# stream ids for SeedSequence spawning
_PERSON, _LAYOUT, _MAV = 0, 1, 2


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def _seg_dist(p, a, b) -> float:
    ab = b - a
    L2 = float(ab @ ab)
    t = 0.0 if L2 == 0 else float(np.clip((p - a) @ ab / L2, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def make_person(s: Scenario) -> PersonModel:
    spec = s.person
    start = np.asarray(spec.start, dtype=float)
    wps: list = [np.asarray(w, dtype=float) for w in spec.waypoints]
    if spec.mode == "waypoints" and not wps:
        rng = _stream(s.seed, _PERSON, 1)
        wps = [np.array([*rng.uniform(-spec.area, spec.area, 2), start[2]]) for _ in range(spec.n_waypoints)]
    half = (s.world.bounds[0] / 2, s.world.bounds[1] / 2)
    for i, w in enumerate(wps):
        if abs(w[0]) > half[0] or abs(w[1]) > half[1]:
            raise ConfigError(f"person.waypoints[{i}]: outside world bounds")
    return PersonModel(start, mode=spec.mode, waypoints=wps, speed_cap=spec.speed,
                       accel_std=spec.accel_std, bounds=(min(half[0], spec.area), min(half[1], spec.area)))


def person_path(p: PersonModel) -> list[tuple[np.ndarray, np.ndarray]]:
    pts = [p.position] + list(p.waypoints)
    if p.mode == "waypoints" and len(p.waypoints) > 1:
        pts.append(p.waypoints[0])
    return [(pts[i], pts[i + 1]) for i in range(len(pts) - 1)] or [(p.position, p.position)]


def make_obstacles(s: Scenario, person: PersonModel) -> list[Obstacle]:
    """Seeded tree placement keeping the person's path clear."""
    obs = list(s.world.obstacles)
    spec = s.obstacles
    rng = _stream(s.seed, _LAYOUT, 1)
    segs = person_path(person)
    if person.mode == "random_walk":
        segs = [(np.array([-person.bounds[0], -person.bounds[1], 0.0]), np.array([person.bounds[0], person.bounds[1], 0.0]))]
    placed = 0
    for _ in range(20000):
        if placed >= spec.count:
            break
        c = np.array([*rng.uniform(-spec.area, spec.area, 2), 0.0])
        r = float(rng.uniform(spec.radius_min, spec.radius_max))
        if person.mode == "random_walk":
            if abs(c[0]) < person.bounds[0] + spec.path_clearance and abs(c[1]) < person.bounds[1] + spec.path_clearance:
                continue
        elif min(_seg_dist(c, a, b) for a, b in segs) < spec.path_clearance + r:
            continue
        if any(np.hypot(*(c[:2] - np.asarray(o.center[:2]))) < spec.min_spacing + r + o.radius for o in obs):
            continue
        obs.append(Obstacle(tuple(c), r, height=spec.height, ident=len(obs)))
        placed += 1
    if placed < spec.count:
        raise ConfigError(f"obstacles.count: could only place {placed} of {spec.count}")
    return obs


def initial_mavs(s: Scenario, person: PersonModel, obstacles: Sequence[Obstacle]) -> list[MavState]:
    spec = s.init
    rng = _stream(s.seed, _LAYOUT, 2)
    p0 = person.position
    out: list[MavState] = []
    for _ in range(100000):
        if len(out) == s.k:
            break
        ang = rng.uniform(-math.pi, math.pi)
        rr = rng.uniform(spec.range_min, spec.range_max)
        alt = rng.uniform(spec.alt_min, spec.alt_max)
        pos = p0 + np.array([rr * math.cos(ang), rr * math.sin(ang), alt])
        if np.any(np.abs(pos[:2]) > np.abs(np.asarray(s.mpc.x_max[:2])) - 1.0):
            continue
        if any(np.linalg.norm(pos - m.position) < spec.min_separation for m in out):
            continue
        if any(float(o.clearance(pos)) < s.fields.static.d_max for o in obstacles):
            continue
        yaw = math.atan2(p0[1] - pos[1], p0[0] - pos[0])
        out.append(MavState.at(len(out), pos, yaw, s.camera))
    if len(out) < s.k:
        raise ConfigError(f"init: could not place {s.k} MAVs")
    return out


@dataclass
class Agent:
    """Per-MAV onboard stack: EKF replica, teammate plan cache, MPC state."""

    ident: int
    tracker: TargetTracker
    plan: HorizonPlan | None = None
    mates: dict = field(default_factory=dict)
    last_dir: np.ndarray | None = None
    fallbacks: int = 0

    def receive(self, msgs: Sequence[Message]) -> list[CartesianMeasurement]:
        meas = []
        for m in msgs:
            if isinstance(m.payload, CartesianMeasurement):
                meas.append(m.payload)
            elif isinstance(m.payload, HorizonPlan):
                old = self.mates.get(m.sender)
                if old is None or m.payload.stamp >= old.stamp:
                    self.mates[m.sender] = m.payload
        return meas


def horizon_states(agent: Agent, state0, now: float, s: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Own positions and velocities at the N+1 transition times.

    The previous plan is re-anchored on the current state; without one a
    constant-velocity rollout is used.
    """
    dt = s.mpc.dt
    times = now + dt * np.arange(s.mpc.steps)
    if agent.plan is None:
        return state0[0] + np.outer(times - now, state0[1]), np.tile(state0[1], (len(times), 1))
    pos = agent.plan.positions_at(times)
    vel = agent.plan.velocities_at(times)
    return pos + (state0[0] - pos[0]), vel + (state0[1] - vel[0])


def compute_forces(agent: Agent, state0, est: TargetEstimate, now: float, s: Scenario, obstacles,
                   k_total: int, r_sigma_self: float = 0.0):
    """External inputs along the warm-start horizon against time-aligned teammate plans."""
    dt = s.mpc.dt
    times = now + dt * np.arange(s.mpc.steps)
    own, own_vel = horizon_states(agent, state0, now, s)
    ids = sorted(agent.mates)
    mates = np.array([agent.mates[j].positions_at(times) for j in ids]) if ids else None
    mate_vel = np.array([agent.mates[j].velocities_at(times) for j in ids]) if ids else None
    fields = fields_with_threshold(s, r_sigma_self)
    return external_inputs(own, est.position, s.r_des, fields, k_total, mates, agent.ident, ids, obstacles,
                           own_vel, mate_vel, est.velocity)


def fields_with_threshold(s: Scenario, r_sigma_self: float) -> FieldSet:
    """Teammate-avoidance radii from the current self-localization spread."""
    sp = s.safety
    d_min, d_max = safety_thresholds(SafetyParams(
        e_max=sp.e_max, v_max_norm=sp.v_max_norm, dt=s.mpc.dt,
        r_sigma_self=r_sigma_self, r_sigma_mate=sp.r_sigma_mate,
        r_comm=sp.comm_gain * sp.v_max_norm * s.mpc.dt,
    ))
    dyn = dataclasses.replace(s.fields.dynamic, d_min=d_min, d_max=d_max)
    return dataclasses.replace(s.fields, dynamic=dyn)


def run_scenario(s: Scenario, record_trajectory: bool = False) -> RunMetrics:
    """Execute the closed loop for ``s.world.duration`` seconds."""
    dt = s.world.dt
    if abs(dt - s.mpc.dt) > 1e-12:
        raise ConfigError("world.dt: must equal mpc.dt (one MPC solve per tick)")
    person = make_person(s)
    obstacles = make_obstacles(s, person)
    mavs = initial_mavs(s, person, obstacles)
    ids = [m.ident for m in mavs]
    channel = Channel(s.channel, ids)
    agents = [Agent(i, TargetTracker(i, s.ekf)) for i in ids]
    rng_person = _stream(s.seed, _PERSON, 2)
    rng_sense = {i: _stream(s.seed, _MAV, i, 1) for i in ids}
    rng_dist = {i: _stream(s.seed, _MAV, i, 2) for i in ids}
    rng_drift = {i: _stream(s.seed, _MAV, i, 3) for i in ids}
    noiseless = s.noiseless
    rec = TickRecorder(s, obstacles, record_trajectory)
    n_ticks = int(round(s.world.duration / dt))
    for tick in range(n_ticks + 1):
        now = tick * dt
        if tick > 0:
            person = step_person(person, dt, rng_person)
        # detections
        own: dict[int, list] = {i: [] for i in ids}
        for m in mavs:
            sph = synth_detect(person.position, m.pose, m.camera, s.noise, obstacles,
                               None if noiseless else rng_sense[m.ident], now, m.ident)
            if sph is None:
                continue
            z = to_world(convert_measurement(sph), m.believed, m.camera, m.self_cov)
            own[m.ident].append(z)
            channel.broadcast(Message(m.ident, now, z), now)
        # delivery + fusion
        estimates: dict[int, TargetEstimate | None] = {}
        for a in agents:
            meas = own[a.ident] + a.receive(channel.poll(a.ident, now))
            estimates[a.ident] = a.tracker.step(now, meas)
        # forces + MPC
        plans: dict[int, HorizonPlan | None] = {}
        for a, m in zip(agents, mavs):
            est = estimates[a.ident]
            if est is None:
                plans[a.ident] = None
                continue
            r_sigma = float(np.linalg.eigvalsh(m.self_cov[:3, :3])[-1])
            state0 = (m.believed_position.copy(), m.velocity.copy())
            forces = compute_forces(a, state0, est, now, s, obstacles, s.k, r_sigma)
            warm = shift_warm_start(a.plan.solver_state, s.mpc.steps) if a.plan is not None else None
            plan = step_mpc(state0, est.position, est.velocity, forces, s.mpc, s.d_des, s.h_des,
                            a.last_dir, now, a.ident, warm=warm)
            d = state0[0][:2] - est.position[:2]
            if math.hypot(*d) > 1e-9:
                a.last_dir = d
            if plan.fallback:
                a.fallbacks += 1
            a.plan = plan
            plans[a.ident] = plan
            channel.broadcast(Message(a.ident, now, plan), now)
        rec.record(now, person, mavs, estimates, plans)
        if tick == n_ticks:
            break
        # dynamics + localization
        new = []
        for a, m in zip(agents, mavs):
            est = estimates[a.ident]
            rate = yaw_controller(m, est.position) if est is not None else 0.0
            m2 = step_mav(m, plans[a.ident], dt, None if noiseless else rng_dist[m.ident],
                          s.disturbance, now, s.mpc.v_min, s.mpc.v_max, rate)
            if noiseless:
                m2 = step_self_localization(m2, dt, None, DriftParams(0.0, fix_period=0.0, fix_std=0.0))
            else:
                m2 = step_self_localization(m2, dt, rng_drift[m.ident], s.drift)
            new.append(m2)
        mavs = new
    return rec.finish(sum(a.fallbacks for a in agents))

