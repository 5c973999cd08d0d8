"""Per-tick metric records, summary aggregation and CSV/JSON output.

metrics.csv columns, in order:

    t, tracking_error, fused_trace, replica_spread, replica_trace_spread,
    min_gap, max_gap_error, min_pair_dist, min_person_hdist,
    min_obstacle_clearance, in_frame_fraction, center_dist, fallbacks, relaxed,
    then per MAV k: x_k, y_k, z_k, range_k, alt_k, angle_k, in_frame_k

Angles are about the true person position; ``range_k`` is horizontal and
``alt_k`` is height above the person. Floats are written with ``repr`` so the
summary can be recomputed exactly from the file.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

BASE_COLUMNS = [
    "t",
    "tracking_error",
    "fused_trace",
    "replica_spread",
    "replica_trace_spread",
    "min_gap",
    "max_gap_error",
    "min_pair_dist",
    "min_person_hdist",
    "min_obstacle_clearance",
    "in_frame_fraction",
    "center_dist",
    "fallbacks",
    "relaxed",
]
MAV_COLUMNS = ["x", "y", "z", "range", "alt", "angle", "in_frame"]

PERSON_RADIUS = 0.3
PERSON_HEIGHT = 1.8


def columns(k: int) -> list[str]:
    return BASE_COLUMNS + [f"{c}_{i}" for i in range(k) for c in MAV_COLUMNS]


def person_points(pos) -> np.ndarray:
    """Extremal points of the person's bounding cylinder."""
    pos = np.asarray(pos, dtype=float)
    pts = []
    for z in (0.0, PERSON_HEIGHT):
        for a in range(4):
            th = a * math.pi / 2
            pts.append(pos + np.array([PERSON_RADIUS * math.cos(th), PERSON_RADIUS * math.sin(th), z]))
    return np.array(pts)


def frame_metrics(mav, person_pos) -> tuple[bool, float]:
    """(person completely in image, normalized distance of its centre from the image centre)."""
    R = mav.camera.world_rotation(mav.pose)
    rel = (person_points(person_pos) - mav.position) @ R
    inside = all(mav.camera.in_image(p) for p in rel)
    centre = R.T @ (np.asarray(person_pos) + np.array([0.0, 0.0, 0.5 * PERSON_HEIGHT]) - mav.position)
    px = mav.camera.project(centre)
    if px is None:
        return inside, 1.0
    w, h = mav.camera.width, mav.camera.height
    d = math.hypot(px[0] - 0.5 * w, px[1] - 0.5 * h) / math.hypot(0.5 * w, 0.5 * h)
    return inside, min(d, 1.0)


def angular_gaps(angles: Sequence[float]) -> np.ndarray:
    """Gaps between angularly consecutive MAVs (sums to 2 pi)."""
    a = np.sort(np.mod(np.asarray(angles, dtype=float), 2 * math.pi))
    if a.size < 2:
        return np.array([2 * math.pi])
    return np.diff(np.concatenate([a, [a[0] + 2 * math.pi]]))


@dataclass
class RunMetrics:
    k: int
    seed: int
    columns: list
    rows: list
    summary: dict
    trajectory: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / "metrics.csv", out / "summary.json"
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([repr(float(v)) for v in r])
        with open(json_path, "w") as fh:
            json.dump(self.summary, fh, indent=2, sort_keys=True)
        if self.trajectory:
            with open(out / "trajectory.json", "w") as fh:
                json.dump(self.trajectory, fh)
        return csv_path, json_path


def read_csv(path: str | Path) -> tuple[list[str], list[list[float]]]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        cols = next(r)
        return cols, [[float(v) for v in row] for row in r]


def summarize(cols: Sequence[str], rows: Sequence[Sequence[float]], k: int, warmup: float,
              steady_window: float, d_des: float, h_des: float, d_min: float,
              person_min: float = 2.0) -> dict:
    """Aggregate per-tick rows; a pure function of its inputs."""
    data = {c: np.array([r[i] for r in rows], dtype=float) for i, c in enumerate(cols)}
    t = data["t"]
    if t.size == 0:
        return {}
    after = t >= warmup - 1e-9
    if not after.any():
        after = np.ones_like(t, dtype=bool)
    steady = t >= t[-1] - steady_window - 1e-9
    err = data["tracking_error"][after]
    err = err[np.isfinite(err)]
    ranges = np.array([data[f"range_{i}"] for i in range(k)])
    alts = np.array([data[f"alt_{i}"] for i in range(k)])
    out = {
        "ticks": int(t.size),
        "duration": float(t[-1]),
        "mean_tracking_error": float(err.mean()) if err.size else float("nan"),
        "rms_tracking_error": float(np.sqrt(np.mean(err**2))) if err.size else float("nan"),
        "mean_fused_trace": float(np.nanmean(data["fused_trace"][after])),
        "max_replica_spread": float(np.nanmax(data["replica_spread"], initial=0.0)),
        "max_replica_trace_spread": float(np.nanmax(data["replica_trace_spread"], initial=0.0)),
        "in_frame_fraction": float(np.mean(data["in_frame_fraction"][after])),
        "mean_center_dist": float(np.mean(data["center_dist"][after])),
        "min_pair_dist": float(np.min(data["min_pair_dist"])),
        "min_person_hdist": float(np.min(data["min_person_hdist"])),
        "min_obstacle_clearance": float(np.min(data["min_obstacle_clearance"])),
        "pair_violations": int(np.sum(data["min_pair_dist"] < d_min)),
        "obstacle_penetrations": int(np.sum(data["min_obstacle_clearance"] <= 0.0)),
        "person_violations": int(np.sum(data["min_person_hdist"] < person_min)),
        "fallbacks": int(np.sum(data["fallbacks"])),
        "relaxed": int(np.sum(data["relaxed"])),
        "steady_max_gap_error": float(np.max(data["max_gap_error"][steady])),
        "steady_mean_gap_error": float(np.mean(data["max_gap_error"][steady])),
        "steady_max_range_error": float(np.max(np.abs(ranges[:, steady] - d_des))),
        "steady_max_alt_error": float(np.max(np.abs(alts[:, steady] - h_des))),
        "steady_mean_range": float(np.mean(ranges[:, steady])),
        "steady_mean_alt": float(np.mean(alts[:, steady])),
    }
    return out


class TickRecorder:
    def __init__(self, scenario, obstacles, keep_trajectory: bool = False):
        self.s = scenario
        self.obstacles = [o for o in obstacles]
        self.k = scenario.k
        self.cols = columns(self.k)
        self.rows: list = []
        self.keep = keep_trajectory
        self.traj: list = []

    def record(self, now, person, mavs, estimates, plans):
        k = self.k
        p = person.position
        ests = [estimates[m.ident] for m in mavs]
        live = [e for e in ests if e is not None]
        if live:
            errs = [float(np.linalg.norm(e.position - p)) for e in live]
            traces = [float(np.trace(e.position_cov)) for e in live]
            err, trace = float(np.mean(errs)), float(np.mean(traces))
            spread = max(float(np.linalg.norm(a.position - b.position)) for a in live for b in live)
            tspread = max(traces) - min(traces)
        else:
            err = trace = spread = tspread = float("nan")
        pos = np.array([m.position for m in mavs])
        angles = np.arctan2(pos[:, 1] - p[1], pos[:, 0] - p[0])
        gaps = angular_gaps(angles)
        if k > 1:
            dists = [float(np.linalg.norm(pos[i] - pos[j])) for i in range(k) for j in range(i + 1, k)]
            min_pair = min(dists)
        else:
            min_pair = float("inf")
        hd = np.hypot(pos[:, 0] - p[0], pos[:, 1] - p[1])
        clear = min((float(np.min(o.clearance(pos))) for o in self.obstacles), default=float("inf"))
        frames = [frame_metrics(m, p) for m in mavs]
        fallbacks = sum(1 for pl in plans.values() if pl is not None and pl.fallback)
        relaxed = sum(1 for pl in plans.values() if pl is not None and pl.relaxed)
        row = [
            now, err, trace, spread, tspread, float(gaps.min()),
            float(np.max(np.abs(gaps - 2 * math.pi / k))),
            min_pair, float(hd.min()), clear,
            float(np.mean([f[0] for f in frames])), float(np.mean([f[1] for f in frames])), float(fallbacks), float(relaxed),
        ]
        for i in range(k):
            row += [pos[i, 0], pos[i, 1], pos[i, 2], hd[i], pos[i, 2] - p[2], angles[i], float(frames[i][0])]
        self.rows.append([float(v) for v in row])
        if self.keep:
            self.traj.append({
                "t": now,
                "person": p.tolist(),
                "mavs": pos.tolist(),
                "estimates": [None if e is None else e.position.tolist() for e in ests],
            })

    def finish(self, fallbacks: int) -> RunMetrics:
        s = self.s
        # teammate d_min with zero self-localization spread
        d_min = s.safety.e_max + s.safety.v_max_norm * s.mpc.dt
        summ = summarize(self.cols, self.rows, self.k, s.warmup, s.steady_window, s.d_des, s.h_des, d_min)
        summ.update({"k": self.k, "seed": s.seed, "d_min": d_min})
        return RunMetrics(self.k, s.seed, self.cols, self.rows, summ, self.traj)
