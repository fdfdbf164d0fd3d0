#!/usr/bin/env python3
"""Run a Monte Carlo experiment from a JSON config and write its report.

    python scripts/run_experiment.py scripts/configs/example2.json --out results/example2

writes ``report.json`` (per-run errors, theta estimates and wall times) and
``summary.csv`` (box-plot statistics per method) into the output directory.
"""

import argparse
import csv
import logging
import time
from pathlib import Path

from convexid.bench import ExperimentConfig, run_monte_carlo, summary_table


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--runs", type=int, help="override n_runs")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--trajectories", action="store_true", help="also write recursive trajectories")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = ExperimentConfig.load(args.config)
    if args.runs is not None:
        d = cfg.to_dict()
        d["n_runs"] = args.runs
        cfg = ExperimentConfig.from_dict(d)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traj_dir = out / "trajectories" if args.trajectories else None

    t0 = time.perf_counter()
    report = run_monte_carlo(cfg, workers=args.workers, trajectory_dir=traj_dir)
    (out / "report.json").write_text(report.to_json())
    rows = summary_table(report)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)

    print(f"{cfg.n_runs} runs in {time.perf_counter() - t0:.1f} s")
    print(f"{'method':<24} {'median':>9} {'q1':>9} {'q3':>9} {'failed':>7}")
    for r in rows:
        print(f"{r['method']:<24} {r['median']:9.5f} {r['q1']:9.5f} {r['q3']:9.5f} {r['n_failed']:7d}")


if __name__ == "__main__":
    main()
