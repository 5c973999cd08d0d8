"""Synthetic person detector and spherical-to-Cartesian noise conversion.

The detector replaces an image-based person detector: it reports the person's
range, inclination and bearing in the camera frame, corrupted by Gaussian
noise whose range variance grows quadratically with distance while the two
angular variances stay constant.

``convert_measurement`` implements the measurement-conditioned unbiased
conversion: the mean is debiased by the exponential factors ``exp(-s^2/2)``
of the angle noises and the covariance is the conditional mean-square error
of that debiased estimate, evaluated in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import (
    CameraModel,
    MavPose,
    SphericalCoord,
    cartesian_to_spherical,
)


class ConversionError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Range variance slope ``c1`` (sigma_r^2 = c1 r^2), bearing ``c2`` and inclination ``c3`` variances."""

    c1: float = 0.01
    c2: float = 4e-4
    c3: float = 4e-4

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3) <= 0:
            raise ValueError("noise constants must be positive")


@dataclass(frozen=True)
class SphericalMeasurement:
    coord: SphericalCoord
    var_r: float
    var_theta: float
    var_phi: float
    stamp: float = 0.0
    observer: int = 0

    def __post_init__(self):
        if min(self.var_r, self.var_theta, self.var_phi) <= 0:
            raise ValueError("measurement variances must be positive")


@dataclass(frozen=True)
class CartesianMeasurement:
    mean: np.ndarray
    cov: np.ndarray
    stamp: float = 0.0
    observer: int = 0


@dataclass(frozen=True)
class CompactCovModel:
    cx: float
    cy: float
    cz: float

    def __post_init__(self):
        if min(self.cx, self.cy, self.cz) <= 0:
            raise ValueError("compact constants must be positive")

    @property
    def kappa(self) -> float:
        return self.cx + self.cy + self.cz


def _check_range(r: float):
    if not r > 0:
        raise ValueError(f"range must be positive, got {r}")


def noise_variances(model: NoiseModel, r: float) -> tuple[float, float, float]:
    """Return ``(var_r, var_theta, var_phi)`` at range ``r``."""
    _check_range(r)
    return model.c1 * r * r, model.c3, model.c2


def synth_detect(
    person,
    pose: MavPose,
    cam: CameraModel,
    model: NoiseModel,
    obstacles: Sequence = (),
    rng: np.random.Generator | None = None,
    stamp: float = 0.0,
    observer: int = 0,
) -> SphericalMeasurement | None:
    """Noisy camera-frame observation of ``person``; None when out of view or occluded.

    ``pose`` is the MAV's true pose. Noise is drawn from ``rng``; passing None
    returns the noise-free coordinate with the model variances attached.
    """
    from .simworld import line_of_sight

    person = np.asarray(person, dtype=float)
    rel_cam = cam.world_rotation(pose).T @ (person - pose.position)
    if not cam.in_image(rel_cam):
        return None
    if obstacles and not line_of_sight(pose.position, person, obstacles):
        return None
    true = cartesian_to_spherical(rel_cam)
    var_r, var_t, var_p = noise_variances(model, true.r)
    if rng is None:
        r, theta, phi = true.r, true.theta, true.phi
    else:
        dr, dt, dp = rng.standard_normal(3)
        r = max(true.r + math.sqrt(var_r) * dr, 1e-3)
        theta = min(max(true.theta + math.sqrt(var_t) * dt, 0.0), math.pi)
        phi = true.phi + math.sqrt(var_p) * dp
    var_r, var_t, var_p = noise_variances(model, r)
    # keep phi in (-pi, pi] without touching SphericalCoord validation
    phi = math.atan2(math.sin(phi), math.cos(phi))
    return SphericalMeasurement(SphericalCoord(r, theta, phi), var_r, var_t, var_p, stamp, observer)


def convert_measurement(s: SphericalMeasurement) -> CartesianMeasurement:
    """Debiased camera-frame Cartesian mean and conditional MSE covariance."""
    r, th, ph = s.coord.r, s.coord.theta, s.coord.phi
    lt = math.exp(-0.5 * s.var_theta)
    lp = math.exp(-0.5 * s.var_phi)
    lt2 = lt**4  # exp(-2 var_theta)
    lp2 = lp**4
    st, ct = math.sin(th), math.cos(th)
    sp, cp = math.sin(ph), math.cos(ph)

    mean = np.array([r * st * cp / (lt * lp), r * st * sp / (lt * lp), r * ct / lt])
    # conditional first moments of the true position given the measurement
    m1 = np.array([r * lt * st * lp * cp, r * lt * st * lp * sp, r * lt * ct])

    r2 = r * r + s.var_r
    s2t = 0.5 * (1.0 - math.cos(2 * th) * lt2)
    c2t = 0.5 * (1.0 + math.cos(2 * th) * lt2)
    sct = 0.5 * math.sin(2 * th) * lt2
    c2p = 0.5 * (1.0 + math.cos(2 * ph) * lp2)
    s2p = 0.5 * (1.0 - math.cos(2 * ph) * lp2)
    scp = 0.5 * math.sin(2 * ph) * lp2

    m2 = r2 * np.array(
        [
            [s2t * c2p, s2t * scp, sct * lp * cp],
            [s2t * scp, s2t * s2p, sct * lp * sp],
            [sct * lp * cp, sct * lp * sp, c2t],
        ]
    )
    cov = np.outer(mean, mean) - np.outer(mean, m1) - np.outer(m1, mean) + m2
    cov = 0.5 * (cov + cov.T)
    scale = max(float(np.max(np.abs(np.diag(cov)))), 1e-300)
    if np.linalg.eigvalsh(cov)[0] < -1e-9 * scale:
        raise ConversionError("conversion degenerate")
    return CartesianMeasurement(mean, cov, s.stamp, s.observer)


def to_world(
    m: CartesianMeasurement,
    pose: MavPose,
    cam: CameraModel,
    self_cov: np.ndarray | None = None,
) -> CartesianMeasurement:
    """Rotate a camera-frame measurement into the world frame using ``pose``.

    ``self_cov`` is the MAV's 6x6 (or 3x3) self-localization covariance; its
    position block is added to the measurement covariance.
    """
    R = cam.world_rotation(pose)
    cov = R @ m.cov @ R.T
    if self_cov is not None:
        cov = cov + np.asarray(self_cov)[:3, :3]
    return CartesianMeasurement(pose.position + R @ m.mean, 0.5 * (cov + cov.T), m.stamp, m.observer)


def compact_covariance(m: CompactCovModel, r: float) -> np.ndarray:
    _check_range(r)
    return np.diag([m.cx * r * r, m.cy * r * r, m.cz * r * r])


def trace_cov(m: CompactCovModel, r: float) -> float:
    _check_range(r)
    return m.kappa * r * r


def fit_compact_model(model: NoiseModel, ranges: Sequence[float] = tuple(np.linspace(5.0, 15.0, 21))) -> CompactCovModel:
    """Least-squares fit of the diagonal constants to the full conversion at theta=pi/2, phi=0."""
    r = np.asarray(ranges, dtype=float)
    diags = []
    for ri in r:
        vr, vt, vp = noise_variances(model, ri)
        meas = SphericalMeasurement(SphericalCoord(ri, math.pi / 2, 0.0), vr, vt, vp)
        diags.append(np.diag(convert_measurement(meas).cov))
    diags = np.asarray(diags)
    r2 = r * r
    c = diags.T @ r2 / (r2 @ r2)
    return CompactCovModel(*map(float, c))


__all__ = [
    "NoiseModel",
    "SphericalMeasurement",
    "CartesianMeasurement",
    "CompactCovModel",
    "noise_variances",
    "synth_detect",
    "convert_measurement",
    "to_world",
    "compact_covariance",
    "trace_cov",
    "fit_compact_model",
]
