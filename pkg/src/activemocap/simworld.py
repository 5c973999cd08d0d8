"""Discrete-time world: person motion, MAV point masses, localization drift, occlusion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .geometry import CameraModel, MavPose, wrap_angle
from .mpc import HorizonPlan
from .potential import Obstacle


@dataclass
class MavState:
    """True and believed state of one MAV.

    ``drift`` is the self-localization offset (believed = true + drift) and
    ``track_err`` the low-level controller's current deviation from the
    commanded waypoint.
    """

    ident: int
    pose: MavPose
    velocity: np.ndarray
    believed: MavPose
    self_cov: np.ndarray = field(default_factory=lambda: np.eye(6) * 1e-4)
    camera: CameraModel = field(default_factory=CameraModel)
    drift: np.ndarray = field(default_factory=lambda: np.zeros(3))
    track_err: np.ndarray = field(default_factory=lambda: np.zeros(3))
    since_fix: float = 0.0

    @classmethod
    def at(cls, ident: int, position, yaw: float = 0.0, camera: CameraModel | None = None) -> "MavState":
        pos = np.asarray(position, dtype=float)
        return cls(ident, MavPose(pos.copy(), yaw), np.zeros(3), MavPose(pos.copy(), yaw),
                   camera=camera or CameraModel())

    @property
    def position(self) -> np.ndarray:
        return self.pose.position

    @property
    def believed_position(self) -> np.ndarray:
        return self.believed.position


@dataclass
class PersonModel:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mode: str = "stationary"  # stationary | waypoints | random_walk
    waypoints: list = field(default_factory=list)
    speed_cap: float = 1.5
    accel_std: float = 0.5
    bounds: tuple = (10.0, 10.0)
    wp_index: int = 0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if self.mode not in ("stationary", "waypoints", "random_walk"):
            raise ValueError(f"unknown person mode {self.mode!r}")


@dataclass(frozen=True)
class DriftParams:
    walk_std: float = 0.01
    vertical_ratio: float = 0.3
    fix_period: float = 20.0
    fix_std: float = 0.1
    vel_var: float = 1e-4


@dataclass(frozen=True)
class DisturbanceParams:
    e_max: float = 1.0
    std: float = 0.03
    corr: float = 0.9


@dataclass(frozen=True)
class WorldConfig:
    bounds: tuple = (20.0, 20.0, 20.0)
    obstacles: tuple = ()
    dt: float = 0.1
    duration: float = 60.0
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")


def step_person(p: PersonModel, dt: float, rng: np.random.Generator | None = None) -> PersonModel:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if p.mode == "stationary":
        return replace(p, velocity=np.zeros(3))
    if p.mode == "waypoints":
        if not p.waypoints:
            return replace(p, velocity=np.zeros(3))
        idx = p.wp_index
        wp = np.asarray(p.waypoints[idx], dtype=float)
        d = wp - p.position
        dist = float(np.linalg.norm(d))
        step = p.speed_cap * dt
        if dist <= step:
            vel = d / dt
            return replace(p, position=wp.copy(), velocity=vel, wp_index=(idx + 1) % len(p.waypoints))
        vel = d / dist * p.speed_cap
        return replace(p, position=p.position + vel * dt, velocity=vel)
    vel = p.velocity + p.accel_std * math.sqrt(dt) * rng.standard_normal(3) * np.array([1.0, 1.0, 0.0])
    speed = float(np.linalg.norm(vel))
    if speed > p.speed_cap:
        vel = vel * (p.speed_cap / speed)
    pos = p.position + vel * dt
    for i in range(2):
        lim = p.bounds[i]
        if abs(pos[i]) > lim:
            pos[i] = math.copysign(2 * lim - abs(pos[i]), pos[i])
            vel[i] = -vel[i]
    return replace(p, position=pos, velocity=vel)


def _clip_norm(v: np.ndarray, n: float) -> np.ndarray:
    m = float(np.linalg.norm(v))
    return v if m <= n or m == 0 else v * (n / m)


def step_mav(
    m: MavState,
    plan: HorizonPlan | None,
    dt: float,
    rng: np.random.Generator | None,
    dist: DisturbanceParams = DisturbanceParams(),
    now: float | None = None,
    v_min=(-5.0, -5.0, -0.5),
    v_max=(5.0, 5.0, 0.5),
    yaw_rate: float = 0.0,
    stale_after: float = 0.5,
    brake_tau: float = 0.5,
) -> MavState:
    """Advance the true state by one step.

    The low-level loop drives the believed position onto the plan's first
    waypoint, up to a correlated tracking error bounded by ``dist.e_max``.
    A plan older than ``stale_after`` (or missing) makes the MAV brake.
    """
    stale = plan is None or (now is not None and now - plan.stamp > stale_after + 1e-9)
    if rng is not None and dist.std > 0:
        err = _clip_norm(dist.corr * m.track_err + dist.std * rng.standard_normal(3), dist.e_max)
        # one step never moves the MAV more than e_max off its waypoint
        err = m.track_err + _clip_norm(err - m.track_err, dist.e_max)
    else:
        err = _clip_norm(m.track_err, dist.e_max)
    if stale:
        vel = m.velocity * math.exp(-dt / brake_tau)
        pos = m.position + 0.5 * (m.velocity + vel) * dt
    else:
        vel = np.clip(plan.velocities[0], v_min, v_max)
        # plans restart from the perturbed state, so only the change in the
        # bounded error is applied; the deviation from the nominal path is err
        pos = plan.positions[0] - m.drift + (err - m.track_err)
    yaw = wrap_angle(m.pose.yaw + yaw_rate * dt)
    pose = MavPose(pos, yaw)
    return replace(m, pose=pose, velocity=vel, track_err=err,
                   believed=MavPose(pos + m.drift, yaw))


def step_self_localization(m: MavState, dt: float, rng: np.random.Generator | None, drift: DriftParams = DriftParams()) -> MavState:
    """Random-walk the localization offset; a periodic fix resets it."""
    scale = np.array([1.0, 1.0, drift.vertical_ratio])
    since = m.since_fix + dt
    cov = m.self_cov.copy()
    if drift.fix_period > 0 and since >= drift.fix_period - 1e-9:
        since = 0.0
        off = drift.fix_std * scale * (rng.standard_normal(3) if rng is not None else np.zeros(3))
        cov[:3, :3] = np.diag((drift.fix_std * scale) ** 2 + 1e-6)
    else:
        step = drift.walk_std * scale
        off = m.drift + step * (rng.standard_normal(3) if rng is not None else np.zeros(3))
        cov[:3, :3] = cov[:3, :3] + np.diag(step**2)
    cov[3:, 3:] = np.eye(3) * drift.vel_var
    believed = MavPose(m.position + off, m.pose.yaw, m.pose.pitch, m.pose.roll)
    return replace(m, drift=off, self_cov=cov, believed=believed, since_fix=since)


def yaw_controller(m: MavState, target, gain: float = 2.0, max_rate: float = 1.5) -> float:
    """Proportional yaw-rate command pointing the camera at ``target``."""
    d = np.asarray(target, dtype=float)[:2] - m.believed_position[:2]
    if math.hypot(d[0], d[1]) < 1e-9:
        return 0.0
    err = wrap_angle(math.atan2(d[1], d[0]) - m.believed.yaw)
    return float(np.clip(gain * err, -max_rate, max_rate))


def _segment_blocked(a: np.ndarray, b: np.ndarray, ob: Obstacle) -> bool:
    c = np.asarray(ob.center)
    if ob.shape == "sphere":
        ab = b - a
        L2 = float(ab @ ab)
        t = 0.0 if L2 == 0 else float(np.clip((c - a) @ ab / L2, 0.0, 1.0))
        return float(np.linalg.norm(a + t * ab - c)) < ob.radius
    # horizontal disk intersection interval, then the z-range of the cylinder
    d = b[:2] - a[:2]
    f = a[:2] - c[:2]
    A = float(d @ d)
    B = 2.0 * float(f @ d)
    C = float(f @ f) - ob.radius**2
    if A < 1e-15:
        if C >= 0:
            return False
        t0, t1 = 0.0, 1.0
    else:
        disc = B * B - 4 * A * C
        if disc <= 0:
            return False
        sq = math.sqrt(disc)
        t0, t1 = (-B - sq) / (2 * A), (-B + sq) / (2 * A)
    t0, t1 = max(t0, 0.0), min(t1, 1.0)
    if t0 >= t1:
        return False
    z0, z1 = a[2] + t0 * (b[2] - a[2]), a[2] + t1 * (b[2] - a[2])
    lo, hi = c[2], c[2] + ob.height
    return max(min(z0, z1), lo) <= min(max(z0, z1), hi)


def line_of_sight(a, b, obstacles: Sequence[Obstacle]) -> bool:
    """True iff the segment a-b misses every obstacle."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return not any(_segment_blocked(a, b, ob) for ob in obstacles)
