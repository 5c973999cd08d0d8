"""Replicated constant-velocity EKF for the tracked person and covariance merging."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .geometry import SphericalCoord, rot_y, rot_z
from .sensing import CartesianMeasurement, NoiseModel, SphericalMeasurement, convert_measurement, noise_variances


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class TargetEstimate:
    position: np.ndarray
    velocity: np.ndarray
    cov: np.ndarray
    stamp: float = 0.0

    @property
    def state(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])

    @property
    def position_cov(self) -> np.ndarray:
        return self.cov[:3, :3]


@dataclass(frozen=True)
class EkfParams:
    accel_std: float = 2.0
    init_pos_std: float = 2.0
    init_vel_std: float = 1.0
    gate: float = 5.0
    staleness: float = 0.5

    def __post_init__(self):
        if min(self.accel_std, self.init_pos_std, self.init_vel_std, self.gate, self.staleness) <= 0:
            raise ValueError("EKF parameters must be positive")


def initial_estimate(z: CartesianMeasurement, params: EkfParams, stamp: float | None = None) -> TargetEstimate:
    """Estimate seeded from a single measurement, zero velocity."""
    cov = np.zeros((6, 6))
    cov[:3, :3] = z.cov + params.init_pos_std**2 * np.eye(3)
    cov[3:, 3:] = params.init_vel_std**2 * np.eye(3)
    return TargetEstimate(np.array(z.mean, dtype=float), np.zeros(3), cov, z.stamp if stamp is None else stamp)


def ekf_predict(est: TargetEstimate, dt: float, params: EkfParams) -> TargetEstimate:
    """Constant-velocity prediction with white-acceleration process noise."""
    if not dt > 0:
        raise FusionError(f"prediction step must be positive, got {dt}")
    F = np.eye(6)
    F[:3, 3:] = dt * np.eye(3)
    q = params.accel_std**2
    I3 = np.eye(3)
    Q = q * np.block([[dt**4 / 4 * I3, dt**3 / 2 * I3], [dt**3 / 2 * I3, dt**2 * I3]])
    cov = F @ est.cov @ F.T + Q
    return TargetEstimate(
        est.position + dt * est.velocity, est.velocity.copy(), 0.5 * (cov + cov.T), est.stamp + dt
    )


def mahalanobis(est: TargetEstimate, z: CartesianMeasurement) -> float:
    S = est.position_cov + z.cov
    y = z.mean - est.position
    try:
        return float(math.sqrt(max(y @ np.linalg.solve(S, y), 0.0)))
    except np.linalg.LinAlgError as exc:
        raise FusionError("singular innovation covariance") from exc


def ekf_update(est: TargetEstimate, z: CartesianMeasurement, gate: float | None = None) -> TargetEstimate:
    """Linear position update (Joseph form). Returns ``est`` unchanged if gated out."""
    P = est.cov
    S = P[:3, :3] + z.cov
    if not np.all(np.isfinite(S)) or abs(np.linalg.det(S)) < 1e-300:
        raise FusionError("singular innovation covariance")
    y = z.mean - est.position
    try:
        Sinv_y = np.linalg.solve(S, y)
        K = np.linalg.solve(S, P[:3, :]).T
    except np.linalg.LinAlgError as exc:
        raise FusionError("singular innovation covariance") from exc
    if gate is not None and math.sqrt(max(y @ Sinv_y, 0.0)) > gate:
        return est
    x = est.state + K @ y
    H = np.zeros((3, 6))
    H[:, :3] = np.eye(3)
    IKH = np.eye(6) - K @ H
    cov = IKH @ P @ IKH.T + K @ z.cov @ K.T
    return TargetEstimate(x[:3], x[3:], 0.5 * (cov + cov.T), est.stamp)


def merge_covariances(s1, s2) -> np.ndarray:
    """Merged covariance ``S1 - S1 (S1 + S2)^-1 S1`` of two independent estimates."""
    s1 = np.atleast_2d(np.asarray(s1, dtype=float))
    s2 = np.atleast_2d(np.asarray(s2, dtype=float))
    try:
        out = s1 - s1 @ np.linalg.solve(s1 + s2, s1)
    except np.linalg.LinAlgError as exc:
        raise FusionError("singular covariance sum") from exc
    return 0.5 * (out + out.T)


def merge_all(covs: Iterable[np.ndarray]) -> np.ndarray:
    it = iter(covs)
    acc = next(it)
    for c in it:
        acc = merge_covariances(acc, c)
    return acc


def optimal_separation(k: int) -> float:
    if k < 1:
        raise ValueError("need at least one MAV")
    return 2.0 * math.pi / k


def formation_fused_trace(
    angles: Sequence[float],
    ranges: Sequence[float],
    model: NoiseModel,
    inclination: float = math.pi / 2,
    mount_pitch: float = math.pi / 4,
) -> float:
    """Trace of the merged world-frame covariance for MAVs at ``angles`` about the person.

    Every MAV faces the person, so each camera-frame measurement has zero
    bearing and the given inclination.
    """
    if len(angles) < 2 or len(angles) != len(ranges):
        raise ValueError("need K >= 2 matching angles and ranges")
    covs = []
    for gamma, r in zip(angles, ranges):
        if not r > 0:
            raise ValueError("ranges must be positive")
        vr, vt, vp = noise_variances(model, r)
        c = convert_measurement(SphericalMeasurement(SphericalCoord(r, inclination, 0.0), vr, vt, vp)).cov
        R = rot_z(gamma + math.pi) @ rot_y(mount_pitch)
        covs.append(R @ c @ R.T)
    return float(np.trace(merge_all(covs)))


class TargetTracker:
    """One MAV's replica of the person EKF.

    Measurements are fused own-first, then teammates by id; gating decisions
    are taken against the predicted prior of the round so that the outcome
    does not depend on the order in which replicas see the same batch.
    """

    def __init__(self, owner: int, params: EkfParams = EkfParams()):
        self.owner = owner
        self.params = params
        self.estimate: TargetEstimate | None = None

    def step(self, now: float, measurements: Sequence[CartesianMeasurement]) -> TargetEstimate | None:
        fresh = [z for z in measurements if now - z.stamp <= self.params.staleness + 1e-12]
        fresh.sort(key=lambda z: (z.observer != self.owner, z.observer, z.stamp))
        if self.estimate is None:
            if not fresh:
                return None
            seed = min(fresh, key=lambda z: (z.observer, z.stamp))
            self.estimate = initial_estimate(seed, self.params, now)
        elif now > self.estimate.stamp:
            self.estimate = ekf_predict(self.estimate, now - self.estimate.stamp, self.params)
        prior = self.estimate
        accepted = [z for z in fresh if mahalanobis(prior, z) <= self.params.gate]
        est = prior
        for z in accepted:
            est = ekf_update(est, z)
        self.estimate = replace(est, stamp=now)
        return self.estimate
