"""Preset experiments: formation, scalability, communication loss, obstacle density.

Every preset expands into a list of independent seeded scenarios, runs them
(optionally in worker processes) and reduces the summaries into a table.
Trial ``i`` uses seed ``seed + i``, so tables are a pure function of their
arguments regardless of the worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .metrics import RunMetrics
from .runner import run_scenario
from .scenario import Scenario

DEFAULT_KS = (3, 5, 8, 12, 16)
DEFAULT_LOSSES = tuple(round(0.1 * i, 1) for i in range(11))
DEFAULT_COUNTS = (0, 4, 8, 12)


def stationary(base: Scenario) -> Scenario:
    return dataclasses.replace(base, person=dataclasses.replace(base.person, mode="stationary"))


def walking(base: Scenario) -> Scenario:
    return dataclasses.replace(base, person=dataclasses.replace(base.person, mode="random_walk"))


def running(base: Scenario) -> Scenario:
    return dataclasses.replace(base, person=dataclasses.replace(base.person, mode="random_walk", speed=3.0))


def with_k(base: Scenario, k: int) -> Scenario:
    return dataclasses.replace(base, k=k)


def with_loss(base: Scenario, loss: float) -> Scenario:
    return dataclasses.replace(base, channel=dataclasses.replace(base.channel, loss=loss))


def with_obstacles(base: Scenario, count: int) -> Scenario:
    return dataclasses.replace(base, obstacles=dataclasses.replace(base.obstacles, count=count))


def with_duration(base: Scenario, duration: float | None) -> Scenario:
    if duration is None:
        return base
    return dataclasses.replace(base, world=dataclasses.replace(base.world, duration=duration))


def run_many(scenarios: Sequence[Scenario], parallel: int = 1) -> list[RunMetrics]:
    """Run scenarios in order; results are identical for any ``parallel``."""
    if parallel <= 1 or len(scenarios) <= 1:
        return [run_scenario(s) for s in scenarios]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(run_scenario, scenarios))


def _sweep(base: Scenario, levels: Sequence, apply: Callable[[Scenario, object], Scenario], trials: int,
           seed: int, parallel: int, out: str | Path | None, name: str, label: str) -> tuple[list, list]:
    jobs = [(lv, i, apply(base, lv).with_seed(seed + i)) for lv in levels for i in range(trials)]
    results = run_many([j[2] for j in jobs], parallel)
    if out is not None:
        for (lv, i, _), m in zip(jobs, results):
            m.write(Path(out) / name / f"{label}_{lv}" / f"seed_{seed + i}")
    grouped = [[m for (lv2, _, _), m in zip(jobs, results) if lv2 == lv] for lv in levels]
    return grouped, results


def _error_row(label: str, level, runs: Sequence[RunMetrics]) -> dict:
    errs = np.array([m.summary["mean_tracking_error"] for m in runs], dtype=float)
    return {
        label: level,
        "trials": len(runs),
        "mean_error": float(np.mean(errs)),
        "std_error": float(np.std(errs)),
        "mean_trace": float(np.mean([m.summary["mean_fused_trace"] for m in runs])),
        "in_frame": float(np.mean([m.summary["in_frame_fraction"] for m in runs])),
        "pair_violations": int(sum(m.summary["pair_violations"] for m in runs)),
        "obstacle_penetrations": int(sum(m.summary["obstacle_penetrations"] for m in runs)),
        "person_violations": int(sum(m.summary["person_violations"] for m in runs)),
    }


def write_table(rows: Sequence[dict], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return path


def preset_formation(base: Scenario | None = None, trials: int = 1, seed: int = 0, parallel: int = 1,
                     out: str | Path | None = None, duration: float | None = None) -> list[dict]:
    """K=3 formation with a stationary and a walking person; one row per mode."""
    base = with_duration(base or Scenario(k=3), duration)
    modes = {"stationary": stationary, "walking": walking}
    grouped, _ = _sweep(base, list(modes), lambda s, mode: modes[mode](s), trials, seed, parallel, out,
                        "formation", "person")
    rows = []
    for mode, runs in zip(modes, grouped):
        row = _error_row("person", mode, runs)
        row.update({
            "max_gap_error_deg": math.degrees(max(m.summary["steady_max_gap_error"] for m in runs)),
            "max_range_error": max(m.summary["steady_max_range_error"] for m in runs),
            "max_alt_error": max(m.summary["steady_max_alt_error"] for m in runs),
            "min_in_frame": min(m.summary["in_frame_fraction"] for m in runs),
        })
        rows.append(row)
    if out is not None:
        write_table(rows, Path(out) / "formation" / "table.csv")
    return rows


def preset_scalability(ks: Sequence[int] = DEFAULT_KS, trials: int = 5, base: Scenario | None = None,
                       seed: int = 0, parallel: int = 1, out: str | Path | None = None,
                       duration: float | None = None) -> list[dict]:
    """Per-K mean and std of the tracking error, walking person."""
    base = with_duration(walking(base or Scenario()), duration)
    grouped, _ = _sweep(base, list(ks), with_k, trials, seed, parallel, out, "scalability", "k")
    rows = [_error_row("k", k, runs) for k, runs in zip(ks, grouped)]
    if out is not None:
        write_table(rows, Path(out) / "scalability" / "table.csv")
    return rows


def preset_comm_loss(losses: Sequence[float] = DEFAULT_LOSSES, k: int = 8, trials: int = 3,
                     base: Scenario | None = None, seed: int = 0, parallel: int = 1,
                     out: str | Path | None = None, duration: float | None = None) -> list[dict]:
    """Per-loss mean tracking error; at loss 1 each MAV fuses only its own detections."""
    base = with_duration(with_k(walking(base or Scenario()), k), duration)
    grouped, _ = _sweep(base, list(losses), with_loss, trials, seed, parallel, out, "commloss", "loss")
    rows = [_error_row("loss", lv, runs) for lv, runs in zip(losses, grouped)]
    if out is not None:
        write_table(rows, Path(out) / "commloss" / "table.csv")
    return rows


def preset_obstacle_density(counts: Sequence[int] = DEFAULT_COUNTS, k: int = 5, trials: int = 5,
                            base: Scenario | None = None, seed: int = 0, parallel: int = 1,
                            out: str | Path | None = None, duration: float | None = None) -> list[dict]:
    """Per-count mean tracking error; any collision marks the level as failed."""
    base = with_duration(with_k(walking(base or Scenario()), k), duration)
    grouped, _ = _sweep(base, list(counts), with_obstacles, trials, seed, parallel, out, "obstacles", "count")
    rows = []
    for c, runs in zip(counts, grouped):
        row = _error_row("obstacles", c, runs)
        row["failed"] = bool(row["pair_violations"] or row["obstacle_penetrations"])
        rows.append(row)
    if out is not None:
        write_table(rows, Path(out) / "obstacles" / "table.csv")
    return rows
