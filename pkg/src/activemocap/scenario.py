"""Scenario configuration: dataclasses, YAML loading with field-path errors."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .fusion import EkfParams
from .geometry import CameraModel
from .mpc import MpcParams
from .network import ChannelParams
from .potential import FieldSet, Obstacle, ObstacleKind
from .sensing import NoiseModel
from .simworld import DisturbanceParams, DriftParams, WorldConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass(frozen=True)
class PersonSpec:
    mode: str = "stationary"  # stationary | waypoints | random_walk
    start: tuple = (0.0, 0.0, 0.0)
    speed: float = 1.5  # walking cap; 3.0 for running
    waypoints: tuple = ()
    n_waypoints: int = 5
    area: float = 6.0
    accel_std: float = 0.5


@dataclass(frozen=True)
class InitSpec:
    range_min: float = 6.0
    range_max: float = 12.0
    alt_min: float = 6.0
    alt_max: float = 9.0
    min_separation: float = 4.0


@dataclass(frozen=True)
class ObstacleSpec:
    count: int = 0
    radius_min: float = 0.3
    radius_max: float = 0.6
    area: float = 16.0
    path_clearance: float = 3.0
    min_spacing: float = 3.0
    height: float = 12.0
    fixed: tuple = ()


@dataclass(frozen=True)
class SafetySpec:
    e_max: float = 1.0
    v_max_norm: float = 5.0
    r_sigma_mate: float = 0.5
    comm_gain: float = 6.0


@dataclass(frozen=True)
class Scenario:
    k: int = 3
    world: WorldConfig = WorldConfig()
    mpc: MpcParams = MpcParams()
    noise: NoiseModel = NoiseModel()
    channel: ChannelParams = ChannelParams()
    fields: FieldSet = FieldSet()
    ekf: EkfParams = EkfParams()
    drift: DriftParams = DriftParams()
    disturbance: DisturbanceParams = DisturbanceParams()
    camera: CameraModel = CameraModel()
    person: PersonSpec = PersonSpec()
    init: InitSpec = InitSpec()
    obstacles: ObstacleSpec = ObstacleSpec()
    safety: SafetySpec = SafetySpec()
    d_des: float = 8.0
    h_des: float = 8.0
    warmup: float = 10.0
    steady_window: float = 20.0
    noiseless: bool = False
    name: str = "run"

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k: need at least one MAV")
        if self.d_des <= 0 or self.h_des <= 0:
            raise ConfigError("d_des/h_des: must be positive")

    @property
    def r_des(self) -> float:
        return math.hypot(self.d_des, self.h_des)

    @property
    def seed(self) -> int:
        return self.world.seed

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(
            self,
            world=dataclasses.replace(self.world, seed=seed),
            channel=dataclasses.replace(self.channel, seed=seed),
        )


def _tupleize(v):
    if isinstance(v, list):
        return tuple(_tupleize(x) for x in v)
    return v


def _check_type(default, val, path: str):
    """Reject values whose type clearly does not match the default's."""
    if isinstance(default, bool):
        if not isinstance(val, bool):
            raise ConfigError(f"{path}: expected a boolean, got {val!r}")
    elif isinstance(default, (int, float)):
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {val!r}")
    elif isinstance(default, str) and not isinstance(val, str):
        raise ConfigError(f"{path}: expected a string, got {val!r}")


def _build(base, data: Any, path: str):
    """Overlay the mapping ``data`` on the dataclass instance ``base``.

    Nested mappings are merged recursively onto the corresponding default
    instance, so a partial override keeps every other default.
    """
    if dataclasses.is_dataclass(data):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(base)}
    kwargs = {}
    for key, val in data.items():
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown field")
        sub = getattr(base, key)
        if dataclasses.is_dataclass(sub) and isinstance(val, dict):
            kwargs[key] = _build(sub, val, f"{path}.{key}")
        elif key == "obstacles" and isinstance(base, WorldConfig):
            if not isinstance(val, (list, tuple)):
                raise ConfigError(f"{path}.{key}: expected a list of obstacles")
            kwargs[key] = tuple(_obstacle(o, f"{path}.{key}[{i}]") for i, o in enumerate(val))
        else:
            _check_type(sub, val, f"{path}.{key}")
            kwargs[key] = _tupleize(val)
    try:
        return dataclasses.replace(base, **kwargs)
    except ConfigError as exc:
        # validation errors name a field relative to this dataclass
        raise ConfigError(f"{path}.{exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _obstacle(o, path: str) -> Obstacle:
    if not isinstance(o, dict):
        raise ConfigError(f"{path}: expected a mapping")
    try:
        return Obstacle(
            tuple(o["center"]), float(o["radius"]), ObstacleKind(o.get("kind", "static")),
            float(o.get("height", math.inf)), o.get("shape", "cylinder"),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def scenario_from_dict(data: dict) -> Scenario:
    data = dict(data or {})
    version = data.pop("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"version: unsupported schema version {version}")
    return _build(Scenario(), data, "scenario")


def load_scenario(path: str | Path) -> Scenario:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return scenario_from_dict(data)


def scenario_to_dict(s: Scenario) -> dict:
    def conv(v):
        if dataclasses.is_dataclass(v):
            return {f.name: conv(getattr(v, f.name)) for f in dataclasses.fields(v)}
        if isinstance(v, (tuple, list)):
            return [conv(x) for x in v]
        if isinstance(v, ObstacleKind):
            return v.value
        if isinstance(v, np.generic):
            return v.item()
        if isinstance(v, float) and math.isinf(v):
            return "inf"
        return v

    d = conv(s)
    d["version"] = SCHEMA_VERSION
    return d
