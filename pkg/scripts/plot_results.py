"""Plot preset tables and single-run metrics written by the CLI.

    python scripts/plot_results.py results            # preset tables -> results/*.png
    python scripts/plot_results.py out/metrics.csv    # one run -> out/metrics.png
"""

import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

TABLES = {"scalability": ("k", "number of MAVs"), "commloss": ("loss", "message loss probability"),
          "obstacles": ("obstacles", "number of obstacles")}


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_tables(root: Path):
    for name, (key, label) in TABLES.items():
        path = root / name / "table.csv"
        if not path.exists():
            continue
        rows = read(path)
        x = [float(r[key]) for r in rows]
        y = [float(r["mean_error"]) for r in rows]
        e = [float(r["std_error"]) for r in rows]
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.errorbar(x, y, yerr=e, marker="o", capsize=3)
        ax.set_xlabel(label)
        ax.set_ylabel("mean tracking error [m]")
        fig.tight_layout()
        fig.savefig(root / f"{name}.png", dpi=150)
        plt.close(fig)
        print(f"wrote {root / f'{name}.png'}")


def plot_run(path: Path):
    rows = read(path)
    t = [float(r["t"]) for r in rows]
    k = sum(1 for c in rows[0] if c.startswith("range_"))
    fig, axes = plt.subplots(3, 1, figsize=(6, 7), sharex=True)
    axes[0].plot(t, [float(r["tracking_error"]) for r in rows])
    axes[0].set_ylabel("tracking error [m]")
    for i in range(k):
        axes[1].plot(t, [float(r[f"range_{i}"]) for r in rows], lw=0.8)
    axes[1].set_ylabel("horizontal range [m]")
    axes[2].plot(t, [float(r["min_pair_dist"]) for r in rows], label="min MAV pair")
    axes[2].plot(t, [float(r["min_obstacle_clearance"]) for r in rows], label="min obstacle clearance")
    axes[2].set_ylabel("distance [m]")
    axes[2].set_xlabel("time [s]")
    axes[2].legend(fontsize=8)
    fig.tight_layout()
    out = path.with_suffix(".png")
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    target = Path(sys.argv[1] if len(sys.argv) > 1 else "results")
    if target.suffix == ".csv":
        plot_run(target)
    else:
        plot_tables(target)
