"""Command-line entry point: ``activemocap {run,formation,scalability,commloss,obstacles}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import presets
from .runner import run_scenario
from .scenario import ConfigError, Scenario, load_scenario


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML scenario file (partial overrides allowed)")
    common.add_argument("--seed", type=int, default=None, help="base seed (trial i uses seed + i)")
    common.add_argument("--trials", type=int, default=None, help="seeded trials per level")
    common.add_argument("--duration", type=float, default=None, help="simulated seconds per run")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--parallel", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="activemocap", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="single closed-loop run")
    run.add_argument("--trajectory", action="store_true", help="also dump trajectory.json")
    sub.add_parser("formation", parents=[common], help="K=3 formation, stationary and walking person")
    sc = sub.add_parser("scalability", parents=[common], help="tracking error versus team size")
    sc.add_argument("--ks", type=int, nargs="+", default=list(presets.DEFAULT_KS))
    cl = sub.add_parser("commloss", parents=[common], help="tracking error versus message loss")
    cl.add_argument("--losses", type=float, nargs="+", default=list(presets.DEFAULT_LOSSES))
    cl.add_argument("--k", type=int, default=8)
    ob = sub.add_parser("obstacles", parents=[common], help="tracking error versus obstacle count")
    ob.add_argument("--counts", type=int, nargs="+", default=list(presets.DEFAULT_COUNTS))
    ob.add_argument("--k", type=int, default=5)
    return ap


def _print_table(rows: list[dict]) -> None:
    if not rows:
        return
    keys = list(rows[0])
    print("\t".join(keys))
    for r in rows:
        print("\t".join(f"{r[k]:.4g}" if isinstance(r[k], float) else str(r[k]) for k in keys))


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        base = load_scenario(args.config) if args.config else Scenario()
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    seed = base.seed if args.seed is None else args.seed
    common = dict(seed=seed, parallel=args.parallel, out=args.out, duration=args.duration)
    trials = {} if args.trials is None else {"trials": args.trials}

    if args.command == "run":
        s = presets.with_duration(base, args.duration).with_seed(seed)
        m = run_scenario(s, record_trajectory=args.trajectory)
        csv_path, _ = m.write(args.out)
        print(json.dumps(m.summary, indent=2, sort_keys=True))
        print(f"wrote {csv_path}", file=sys.stderr)
        return 0
    if args.command == "formation":
        rows = presets.preset_formation(base, **trials, **common)
    elif args.command == "scalability":
        rows = presets.preset_scalability(args.ks, base=base, **trials, **common)
    elif args.command == "commloss":
        rows = presets.preset_comm_loss(args.losses, args.k, base=base, **trials, **common)
    else:
        rows = presets.preset_obstacle_density(args.counts, args.k, base=base, **trials, **common)
    _print_table(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
