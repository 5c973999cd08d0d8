"""Repulsive potential fields turned into external control inputs for the MPC.

All force functions broadcast over leading dimensions, so a whole horizon
(positions of shape ``(N+1, 3)``) can be evaluated in one call. Forces are
planar: every field acts in the horizontal plane. Vertical components would
fight the tight vertical velocity box of the MPC and make it infeasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .geometry import wrap_angle


class ObstacleKind(str, Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"
    PERSON = "person"


@dataclass(frozen=True)
class Obstacle:
    """Vertical cylinder from ``center[2]`` up ``height`` metres, or a sphere.

    ``height=inf`` gives an unbounded column; ``shape="sphere"`` ignores
    ``height``.
    """

    center: tuple
    radius: float
    kind: ObstacleKind = ObstacleKind.STATIC
    height: float = math.inf
    shape: str = "cylinder"
    ident: int = -1

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("obstacle radius must be non-negative")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def clearance(self, pos) -> np.ndarray:
        """Signed distance from ``pos`` (..., 3) to the obstacle surface."""
        pos = np.asarray(pos, dtype=float)
        c = np.asarray(self.center)
        if self.shape == "sphere":
            return np.linalg.norm(pos - c, axis=-1) - self.radius
        hd = np.hypot(pos[..., 0] - c[0], pos[..., 1] - c[1])
        top = c[2] + self.height
        above = np.maximum(pos[..., 2] - top, 0.0)
        below = np.maximum(c[2] - pos[..., 2], 0.0)
        side = hd - self.radius
        vert = above + below
        return np.where(vert > 0, np.hypot(np.maximum(side, 0.0), vert), side)

    def horizontal_direction(self, pos) -> np.ndarray:
        """Unit horizontal vector from the obstacle axis to ``pos`` (+x on the axis)."""
        pos = np.asarray(pos, dtype=float)
        d = pos[..., :2] - np.asarray(self.center[:2])
        n = np.linalg.norm(d, axis=-1, keepdims=True)
        unit = np.where(n > 1e-12, d / np.where(n > 1e-12, n, 1.0), np.array([1.0, 0.0]))
        return np.concatenate([unit, np.zeros(unit.shape[:-1] + (1,))], axis=-1)


@dataclass(frozen=True)
class FieldParams:
    d_min: float
    d_max: float
    f_max: float = 12.0
    c: float = 0.0
    lam: float = 3.0
    damping: float = 0.0  # 1/s, on the closing/opening speed inside the band

    def __post_init__(self):
        if not 0 <= self.d_min < self.d_max:
            raise ValueError(f"need 0 <= d_min < d_max, got {self.d_min}, {self.d_max}")
        if self.f_max <= 0 or self.c < 0 or self.lam <= 0 or self.damping < 0:
            raise ValueError("need f_max > 0, c >= 0, lam > 0, damping >= 0")


@dataclass(frozen=True)
class SafetyParams:
    e_max: float = 1.0
    v_max_norm: float = 5.0
    dt: float = 0.1
    r_sigma_self: float = 0.0
    r_sigma_mate: float = 0.0
    r_comm: float = 0.0

    def __post_init__(self):
        if min(self.e_max, self.v_max_norm, self.dt, self.r_sigma_self, self.r_sigma_mate, self.r_comm) < 0:
            raise ValueError("safety parameters must be non-negative")


def safety_thresholds(s: SafetyParams, floor: float = 0.1) -> tuple[float, float]:
    """Avoidance radii from tracking error, speed, localization spread and delay."""
    d_min = s.e_max + s.v_max_norm * s.dt
    d_max = s.r_sigma_self + s.r_sigma_mate + s.r_comm
    return d_min, max(d_max, d_min + floor)


def cotangential_magnitude(d, p: FieldParams):
    """Clamped cotangent field: ``F_max`` at or below ``d_min``, zero from ``d_max`` on."""
    d = np.asarray(d, dtype=float)
    s = np.clip((d - p.d_min) / (p.d_max - p.d_min), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = p.lam / np.tan(0.5 * np.pi * s)
    f = np.where(s <= 0.0, p.f_max, np.minimum(p.f_max, f))
    f = np.where(s >= 1.0, 0.0, f)
    return float(f) if f.ndim == 0 else f


def _tangent(pos, target, strict: bool = True) -> np.ndarray:
    """Counter-clockwise horizontal unit tangent of ``pos`` about ``target``.

    Degenerate rows (directly above the target) raise when ``strict``,
    otherwise they get a zero tangent.
    """
    d = np.asarray(pos, dtype=float)[..., :2] - np.asarray(target, dtype=float)[..., :2]
    n = np.linalg.norm(d, axis=-1, keepdims=True)
    bad = n < 1e-12
    if strict and np.any(bad):
        raise ValueError("degenerate approach direction")
    d = np.where(bad, 0.0, d / np.where(bad, 1.0, n))
    return np.stack([-d[..., 1], d[..., 0], np.zeros(d.shape[:-1])], axis=-1)


def _angles(pos, target) -> np.ndarray:
    d = np.asarray(pos, dtype=float)[..., :2] - np.asarray(target, dtype=float)[..., :2]
    return np.arctan2(d[..., 1], d[..., 0])


def _sign(x, tie):
    return np.where(x > 0, 1.0, np.where(x < 0, -1.0, tie))


def active_tracking_force(
    self_pos,
    teammate_angles,
    target_pos,
    r_des: float,
    p: FieldParams,
    self_id: int = 0,
    teammate_ids: Sequence[int] | None = None,
    strict: bool = True,
) -> np.ndarray:
    """Tangential repulsion from teammates with similar approach angles.

    ``teammate_angles`` has shape ``(J, ...)`` matching the leading shape of
    ``self_pos``. The field argument is the wrapped angular difference and
    ``p.d_max`` should be ``2 pi / K``.
    """
    self_pos = np.asarray(self_pos, dtype=float)
    out = np.zeros_like(self_pos)
    ang = np.asarray(teammate_angles, dtype=float)
    if ang.size == 0:
        return out
    tan = _tangent(self_pos, target_pos, strict)
    gk = _angles(self_pos, target_pos)
    dist = np.linalg.norm(self_pos - np.asarray(target_pos, dtype=float), axis=-1)
    gain = np.abs(r_des - dist) + p.c
    ids = list(teammate_ids) if teammate_ids is not None else [self_id + 1 + j for j in range(len(ang))]
    for j, gj in enumerate(ang):
        delta = wrap_angle(gk - gj)
        mag = gain * cotangential_magnitude(np.abs(delta), p)
        # away from teammate j; ties broken antisymmetrically by id
        sgn = _sign(np.sin(delta), 1.0 if self_id < ids[j] else -1.0)
        out = out + (mag * sgn)[..., None] * tan
    return out


def _pair_tiebreak(k: int, j: int) -> np.ndarray:
    a, b = min(k, j), max(k, j)
    theta = np.random.default_rng([a, b, 7919]).uniform(0.0, 2.0 * np.pi)
    v = np.array([math.cos(theta), math.sin(theta), 0.0])
    return v if k < j else -v


def dynamic_obstacle_force(
    self_pos,
    teammate_pos,
    p: FieldParams,
    self_id: int = 0,
    teammate_ids: Sequence[int] | None = None,
    self_vel=None,
    teammate_vel=None,
) -> np.ndarray:
    """Repulsion from teammates' time-aligned planned positions ``(J, ..., 3)``.

    With velocities given, the damping term of ``p`` acts on the relative
    velocity along the separation direction inside the band.
    """
    self_pos = np.asarray(self_pos, dtype=float)
    out = np.zeros_like(self_pos)
    tp = np.asarray(teammate_pos, dtype=float)
    ids = list(teammate_ids) if teammate_ids is not None else [self_id + 1 + j for j in range(len(tp))]
    for j, xj in enumerate(tp):
        diff = self_pos - xj
        d = np.linalg.norm(diff, axis=-1)
        mag = cotangential_magnitude(d, p)
        if not np.any(mag > 0):
            continue
        h = diff.copy()
        h[..., 2] = 0.0
        hn = np.linalg.norm(h, axis=-1, keepdims=True)
        beta = np.where(hn > 1e-9, h / np.where(hn > 1e-9, hn, 1.0), _pair_tiebreak(self_id, ids[j]))
        rel = None
        if self_vel is not None and teammate_vel is not None:
            rel = np.asarray(self_vel, dtype=float) - np.asarray(teammate_vel, dtype=float)[j]
        out = out + _damped(mag, beta, rel, d < p.d_max, p.damping)
    return out


def static_obstacle_force(
    self_pos,
    obstacles: Sequence[Obstacle],
    p: FieldParams,
    person_params: FieldParams | None = None,
    self_vel=None,
    person_vel=None,
) -> np.ndarray:
    """Repulsion from static obstacles and the person (clearance-based).

    With ``self_vel`` given, the damping term acts on the velocity relative
    to the obstacle (``person_vel`` for the person) along the outward normal.
    """
    self_pos = np.asarray(self_pos, dtype=float)
    out = np.zeros_like(self_pos)
    for ob in obstacles:
        if ob.kind == ObstacleKind.DYNAMIC:
            continue
        is_person = ob.kind == ObstacleKind.PERSON
        fp = person_params if (is_person and person_params is not None) else p
        clr = np.maximum(ob.clearance(self_pos), 0.0)
        mag = cotangential_magnitude(clr, fp)
        rel = None
        if self_vel is not None:
            rel = np.asarray(self_vel, dtype=float)
            if is_person and person_vel is not None:
                rel = rel - np.asarray(person_vel, dtype=float)
        out = out + _damped(mag, ob.horizontal_direction(self_pos), rel, clr < fp.d_max, fp.damping)
    return out


def _damped(mag, normal, rel_vel, inside, damping: float) -> np.ndarray:
    """``mag * normal`` minus a linear drag on the normal component of ``rel_vel``.

    The drag only acts where ``inside`` holds and is purely dissipative: it
    slows approach and departure alike, so a repelled MAV is not flung back out.
    """
    f = np.asarray(mag, dtype=float)[..., None] * normal
    if rel_vel is None or damping <= 0:
        return f
    vn = np.sum(rel_vel * normal, axis=-1)
    drag = np.where(inside, -damping * vn, 0.0)
    return f + drag[..., None] * normal


def _segment_hit(a, b, ob: Obstacle, margin: float):
    """Whether the horizontal segment a->b passes within radius + margin of the axis (interior only)."""
    a2, b2 = a[..., :2], np.broadcast_to(np.asarray(b, dtype=float)[..., :2], a[..., :2].shape)
    c = np.asarray(ob.center[:2])
    ab = b2 - a2
    L2 = np.sum(ab * ab, axis=-1)
    t = np.sum((c - a2) * ab, axis=-1) / np.where(L2 > 0, L2, 1.0)
    close = a2 + t[..., None] * ab
    dist = np.linalg.norm(close - c, axis=-1)
    return (t > 0.0) & (t < 1.0) & (dist < ob.radius + margin)


def angular_obstacle_force(
    self_pos,
    target_pos,
    obstacles: Sequence[Obstacle],
    p: FieldParams,
    r_des: float,
    margin: float | None = None,
    teammate_angles=None,
    strict: bool = True,
) -> np.ndarray:
    """Tangential push away from approach angles blocked by static obstacles.

    An obstacle obstructs when the horizontal MAV-to-target segment passes
    within ``radius + margin`` of its axis. The field argument is the angular
    offset to the obstacle about the target, with support equal to the
    obstacle's angular half-width. The push goes toward the larger free
    angular gap between teammates, or away from the obstacle's angle when no
    teammates are given.
    """
    self_pos = np.asarray(self_pos, dtype=float)
    target_pos = np.asarray(target_pos, dtype=float)
    out = np.zeros_like(self_pos)
    margin = p.d_min if margin is None else margin
    statics = [o for o in obstacles if o.kind == ObstacleKind.STATIC]
    if not statics:
        return out
    tan = _tangent(self_pos, target_pos, strict)
    gk = _angles(self_pos, target_pos)
    dist = np.linalg.norm(self_pos - target_pos, axis=-1)
    gain = np.abs(r_des - dist) + p.c
    gap_sign = None
    if teammate_angles is not None and len(teammate_angles) > 0:
        rel = np.mod(np.asarray(teammate_angles, dtype=float) - gk, 2 * np.pi)  # ccw offsets
        ccw_gap = np.min(rel, axis=0)
        cw_gap = np.min(2 * np.pi - rel, axis=0)
        gap_sign = np.where(ccw_gap >= cw_gap, 1.0, -1.0)
    for ob in statics:
        hit = _segment_hit(self_pos, target_pos, ob, margin)
        if not np.any(hit):
            continue
        oc = np.asarray(ob.center)
        rng = math.hypot(oc[0] - target_pos[..., 0].mean(), oc[1] - target_pos[..., 1].mean())
        half = math.asin(min(1.0, (ob.radius + margin) / rng)) if rng > 0 else math.pi / 2
        fp = replace(p, d_min=0.0, d_max=max(half, 1e-6))
        gm = _angles(oc, target_pos)
        delta = wrap_angle(gk - gm)
        mag = gain * cotangential_magnitude(np.abs(delta), fp)
        sgn = gap_sign if gap_sign is not None else _sign(np.sin(delta), 1.0)
        out = out + np.where(hit, mag * sgn, 0.0)[..., None] * tan
    return out


def total_external_input(f_act, f_obs, f_max: float) -> np.ndarray:
    """Sum of the two inputs, rescaled row-wise to norm ``f_max`` when it exceeds it."""
    s = np.asarray(f_act, dtype=float) + np.asarray(f_obs, dtype=float)
    n = np.linalg.norm(s, axis=-1, keepdims=True)
    scale = np.where(n >= f_max, f_max / np.where(n > 0, n, 1.0), 1.0)
    return s * scale


# a quarter of the control-box norm |(3, 3, 11)|
LAMBDA_DEFAULT = math.sqrt(3.0**2 + 3.0**2 + 11.0**2) / 4.0


@dataclass(frozen=True)
class FieldSet:
    """All field parameters used by one MAV.

    ``active.d_max`` is replaced by ``2 pi / K`` at run time, and the teammate
    field's ``d_max`` by the current avoidance threshold.
    """

    active: FieldParams = FieldParams(d_min=0.0, d_max=math.pi, f_max=2.0, c=1.0, lam=2.0)
    dynamic: FieldParams = FieldParams(d_min=1.5, d_max=4.0, f_max=12.0, lam=LAMBDA_DEFAULT, damping=2.0)
    static: FieldParams = FieldParams(d_min=1.5, d_max=5.0, f_max=12.0, lam=LAMBDA_DEFAULT, damping=2.0)
    person: FieldParams = FieldParams(d_min=3.0, d_max=5.0, f_max=12.0, lam=LAMBDA_DEFAULT, damping=2.0)
    angular: FieldParams = FieldParams(d_min=0.0, d_max=0.5, f_max=1.0, c=0.5, lam=0.5)
    f_max: float = 12.0


def external_inputs(
    self_pos,
    target_pos,
    r_des: float,
    fields: FieldSet,
    k_total: int,
    teammate_pos=None,
    self_id: int = 0,
    teammate_ids: Sequence[int] | None = None,
    obstacles: Sequence[Obstacle] = (),
    self_vel=None,
    teammate_vel=None,
    target_vel=None,
) -> np.ndarray:
    """Clamped total input for every row of ``self_pos`` (N+1, 3).

    ``teammate_pos`` holds the teammates' positions time-aligned with
    ``self_pos``, shape ``(J, N+1, 3)``. The optional velocities (same
    shapes) feed the damping terms.
    """
    self_pos = np.asarray(self_pos, dtype=float)
    target_pos = np.asarray(target_pos, dtype=float)
    has_mates = teammate_pos is not None and len(teammate_pos) > 0
    mate_angles = _angles(np.asarray(teammate_pos), target_pos) if has_mates else np.zeros((0,))
    f_act = np.zeros_like(self_pos)
    if has_mates and k_total > 1:
        ap = replace(fields.active, d_max=2 * math.pi / k_total)
        f_act = active_tracking_force(self_pos, mate_angles, target_pos, r_des, ap, self_id, teammate_ids, strict=False)
    f_obs = np.zeros_like(self_pos)
    if has_mates:
        f_obs = f_obs + dynamic_obstacle_force(self_pos, teammate_pos, fields.dynamic, self_id, teammate_ids,
                                               self_vel, teammate_vel)
    person = Obstacle(tuple(target_pos), 0.0, ObstacleKind.PERSON)
    f_obs = f_obs + static_obstacle_force(self_pos, list(obstacles) + [person], fields.static, fields.person,
                                          self_vel, target_vel)
    if obstacles:
        f_obs = f_obs + angular_obstacle_force(
            self_pos, target_pos, obstacles, fields.angular, r_des,
            margin=fields.static.d_min, teammate_angles=mate_angles if has_mates else None, strict=False,
        )
    return total_external_input(f_act, f_obs, fields.f_max)
