"""Run every preset experiment and write the tables under one output directory.

    python scripts/run_experiments.py --out results --parallel 4
    python scripts/run_experiments.py --quick   # short runs, smoke test
"""

import argparse
import time
from pathlib import Path

from activemocap import presets
from activemocap.cli import _print_table


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--parallel", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--quick", action="store_true", help="20 s runs, one trial per level")
    args = ap.parse_args()

    kw = dict(seed=args.seed, parallel=args.parallel, out=args.out)
    if args.quick:
        kw["duration"] = 20.0
    trials = (lambda n: 1) if args.quick else (lambda n: n)
    jobs = [
        ("formation", lambda: presets.preset_formation(trials=trials(5), **kw)),
        ("scalability", lambda: presets.preset_scalability(trials=trials(5), **kw)),
        ("commloss", lambda: presets.preset_comm_loss(trials=trials(3), **kw)),
        ("obstacles", lambda: presets.preset_obstacle_density(trials=trials(5), **kw)),
    ]
    for name, job in jobs:
        t0 = time.perf_counter()
        rows = job()
        print(f"== {name} ({time.perf_counter() - t0:.0f}s)")
        _print_table(rows)


if __name__ == "__main__":
    main()
