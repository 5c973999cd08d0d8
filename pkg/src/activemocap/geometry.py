"""Frames, spherical/Cartesian conversions and planar angle helpers.

Conventions used throughout the package:

- World frame is z-up; gravity is ``(0, 0, -9.81)``.
- Spherical coordinates use inclination ``theta`` measured from +z and
  azimuth ``phi`` measured from +x, positive counter-clockwise.
- The camera optical axis is +x of the camera frame, which is the body frame
  pitched down by the mount angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GRAVITY = np.array([0.0, 0.0, -9.81])


class GeometryError(ValueError):
    """Raised for degenerate geometric inputs (zero vectors, coincident points)."""


def vec3(x: float = 0.0, y: float = 0.0, z: float = 0.0) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def wrap_angle(a):
    """Wrap an angle (or array of angles) to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2.0 * np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def angle_diff(a, b):
    """Absolute wrapped angular difference in [0, pi]."""
    return np.abs(wrap_angle(np.asarray(a) - np.asarray(b)))


@dataclass(frozen=True)
class SphericalCoord:
    r: float
    theta: float
    phi: float

    def __post_init__(self):
        if self.r < 0:
            raise GeometryError(f"negative range {self.r}")
        if not 0.0 <= self.theta <= math.pi:
            raise GeometryError(f"inclination {self.theta} outside [0, pi]")


@dataclass
class MavPose:
    """Position in the world frame plus (yaw, pitch, roll) in radians."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.yaw = wrap_angle(self.yaw)
        self.pitch = wrap_angle(self.pitch)
        self.roll = wrap_angle(self.roll)

    def rotation(self) -> np.ndarray:
        """Body-to-world rotation, Z-Y-X (yaw, pitch, roll) order."""
        return rot_z(self.yaw) @ rot_y(self.pitch) @ rot_x(self.roll)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera rigidly mounted on the MAV, pitched down by ``mount_pitch``.

    Defaults follow a 58 x 45 degree depth-camera style field of view.
    """

    mount_pitch: float = math.pi / 4
    h_half_fov: float = math.radians(29.0)
    v_half_fov: float = math.radians(22.5)
    width: int = 640
    height: int = 480

    def __post_init__(self):
        for a in (self.h_half_fov, self.v_half_fov):
            if not 0.0 < a < math.pi / 2:
                raise GeometryError(f"FOV half-angle {a} outside (0, pi/2)")

    @property
    def focal(self) -> tuple[float, float]:
        return (
            0.5 * self.width / math.tan(self.h_half_fov),
            0.5 * self.height / math.tan(self.v_half_fov),
        )

    def world_rotation(self, pose: MavPose) -> np.ndarray:
        """Camera-to-world rotation for a MAV at ``pose``."""
        return pose.rotation() @ rot_y(self.mount_pitch)

    def project(self, point_cam: np.ndarray) -> tuple[float, float] | None:
        """Pixel coordinates (u right, v down) of a camera-frame point, or None behind."""
        x, y, z = point_cam
        if x <= 1e-9:
            return None
        fx, fy = self.focal
        return (0.5 * self.width - fx * y / x, 0.5 * self.height - fy * z / x)

    def in_image(self, point_cam: np.ndarray) -> bool:
        px = self.project(point_cam)
        if px is None:
            return False
        return 0.0 <= px[0] <= self.width and 0.0 <= px[1] <= self.height


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    # positive angle tips +x toward -z (nose down)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def spherical_to_cartesian(s: SphericalCoord) -> np.ndarray:
    st = math.sin(s.theta)
    return np.array(
        [s.r * st * math.cos(s.phi), s.r * st * math.sin(s.phi), s.r * math.cos(s.theta)]
    )


def cartesian_to_spherical(v) -> SphericalCoord:
    v = np.asarray(v, dtype=float)
    r = float(np.linalg.norm(v))
    if r == 0.0:
        raise GeometryError("degenerate direction")
    theta = math.acos(max(-1.0, min(1.0, v[2] / r)))
    rho = math.hypot(v[0], v[1])
    phi = 0.0 if rho == 0.0 else wrap_angle(math.atan2(v[1], v[0]))
    return SphericalCoord(r, theta, phi)


def angle_about_target(mav, target) -> float:
    """Planar angle of the MAV about the target, measured from world +x."""
    dx = float(mav[0] - target[0])
    dy = float(mav[1] - target[1])
    if dx == 0.0 and dy == 0.0:
        raise GeometryError("degenerate angle")
    return wrap_angle(math.atan2(dy, dx))


def perpendicular_in_approach_plane(approach_dir, away_from, tie_sign: float = 1.0) -> np.ndarray:
    """Horizontal unit vector normal to ``approach_dir``.

    Of the two candidates the one with non-negative projection on
    ``away_from`` is returned. When the projection is exactly zero,
    ``tie_sign`` picks the counter-clockwise (+1) or clockwise (-1) normal.
    """
    a = np.asarray(approach_dir, dtype=float)
    h = math.hypot(a[0], a[1])
    if h < 1e-12:
        raise GeometryError("degenerate approach direction")
    perp = np.array([-a[1] / h, a[0] / h, 0.0])
    proj = float(perp @ np.asarray(away_from, dtype=float))
    if proj < 0.0 or (proj == 0.0 and tie_sign < 0):
        perp = -perp
    return perp
