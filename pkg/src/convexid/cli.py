"""Command-line front end: simulate, fit, regls, bench, report."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .bench import (
    ExperimentConfig,
    MonteCarloReport,
    arx_from_dict,
    error_metric,
    schedule_from_options,
    schedule_to_dict,
    summary_table,
    run_monte_carlo,
)
from .criterion import BatchSolverConfig, fit_batch, read_dataset_csv, write_dataset_csv
from .errors import ArgumentError, ConfigurationError, DataError, NumericalError
from .losses import format_loss, parse_loss
from .regls import HyperGrid, config_to_dict, regls_fit, tune_hyperparameters
from .saawet import UpdateRule, run_recursive, write_trajectory_csv
from .simulate import build_regressors, simulate_arx, write_raw_csv

log = logging.getLogger("convexid")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, allow_nan=False) + "\n")


def cmd_simulate(args) -> int:
    spec = json.loads(Path(args.config).read_text())
    arx = arx_from_dict(spec.get("arx", spec))
    raw, _ = simulate_arx(arx)
    data = build_regressors(raw, len(arx.a_coeffs), len(arx.b_coeffs))
    write_dataset_csv(data, args.out)
    if args.raw:
        write_raw_csv(raw, args.raw)
    log.info("wrote %d rows to %s", data.n, args.out)
    return 0


def cmd_fit(args) -> int:
    data = read_dataset_csv(args.data)
    loss = parse_loss(args.loss)
    theta_star = None
    if args.theta_star is not None:
        theta_star = np.array(args.theta_star)
        if theta_star.shape[0] != data.d:
            raise ArgumentError(f"--theta-star has {theta_star.shape[0]} entries, data has d={data.d}")
    echo = {"data": str(args.data), "loss": format_loss(loss), "mode": args.mode}
    result = {}
    if args.mode == "batch":
        cfg = BatchSolverConfig(max_iters=args.max_iters, tol=args.tol)
        t0 = time.perf_counter()
        fit = fit_batch(data, loss, cfg)
        wall = time.perf_counter() - t0
        theta = fit.theta
        echo.update(max_iters=cfg.max_iters, tol=cfg.tol)
        result.update(risk=fit.risk, iters=fit.iters, converged=fit.converged)
    else:
        sched = schedule_from_options(loss, args.schedule, a0=args.a0, m0=args.m0, rfac=args.rfac)
        rule = UpdateRule.for_loss(loss)
        t0 = time.perf_counter()
        traj, state = run_recursive(data, rule, sched, record_every=args.record_every)
        wall = time.perf_counter() - t0
        theta = state.theta
        echo.update(rule=rule.kind.value, **schedule_to_dict(sched))
        result.update(sigma_final=state.sigma, truncations=list(state.truncation_log))
        if args.trajectory:
            write_trajectory_csv(traj, args.trajectory, theta_star)
    out = {
        "theta_hat": [float(v) for v in theta],
        "error": None if theta_star is None else error_metric(theta, theta_star),
        "wall_time_s": wall,
        "method": f"{args.mode}:{format_loss(loss)}",
        "config_echo": echo,
        **result,
    }
    _write_json(out, args.out)
    return 0


def _default_blocks(d: int) -> tuple[int, ...]:
    return (d // 2, d - d // 2) if d >= 2 and d % 2 == 0 else (d,)


def cmd_regls(args) -> int:
    data = read_dataset_csv(args.data)
    grid = HyperGrid.from_dict(json.loads(Path(args.grid).read_text())) if args.grid else HyperGrid()
    blocks = tuple(int(b) for b in args.blocks) if args.blocks else _default_blocks(data.d)
    t0 = time.perf_counter()
    cfg = tune_hyperparameters(data, args.kernel, grid, blocks)
    theta = regls_fit(data, cfg)
    wall = time.perf_counter() - t0
    theta_star = np.array(args.theta_star) if args.theta_star is not None else None
    out = {
        "theta_hat": [float(v) for v in theta],
        "error": None if theta_star is None else error_metric(theta, theta_star),
        "wall_time_s": wall,
        "method": f"regls:{cfg.kernel.value}",
        "config_echo": {"data": str(args.data), "grid": grid.to_dict(), "n_grid_points": len(grid.points(cfg.kernel))},
        "chosen": config_to_dict(cfg),
    }
    _write_json(out, args.out)
    return 0


def cmd_bench(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.runs is not None:
        d = cfg.to_dict()
        d["n_runs"] = args.runs
        cfg = ExperimentConfig.from_dict(d)
    report = run_monte_carlo(cfg, workers=args.workers, trajectory_dir=args.trajectories)
    Path(args.out).write_text(report.to_json(timings=not args.no_timings))
    for row in summary_table(report):
        log.info("%-24s median %.5f  (n_ok=%d, failed=%d)", row["method"], row["median"], row["n_ok"], row["n_failed"])
    return 0


def cmd_report(args) -> int:
    report = MonteCarloReport.load(args.input)
    rows = summary_table(report)
    if args.format == "json":
        _write_json({"schema_version": report.schema_version, "summary": rows}, args.out)
    else:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="convexid", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate an ARX system and write a dataset CSV")
    s.add_argument("--config", required=True, help="JSON with ARX settings (optionally under 'arx')")
    s.add_argument("--out", required=True)
    s.add_argument("--raw", help="also write the raw k,u,y trace")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit one loss in batch or recursive mode")
    f.add_argument("--data", required=True)
    f.add_argument("--loss", required=True, help="l1, l2, l<r>, huber:<delta>, logcosh, quantile:<gamma>")
    f.add_argument("--mode", choices=("batch", "recursive"), required=True)
    f.add_argument("--theta-star", type=_float_list, help="true parameters, e.g. --theta-star=-1.5,0.7,1,0.5")
    f.add_argument("--schedule", choices=("powerlaw", "geometric"))
    f.add_argument("--a0", type=float)
    f.add_argument("--m0", type=float)
    f.add_argument("--rfac", type=float)
    f.add_argument("--max-iters", type=int, default=10000)
    f.add_argument("--tol", type=float, default=1e-8)
    f.add_argument("--record-every", type=int, default=1)
    f.add_argument("--trajectory", help="write the recursive trajectory CSV here")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("regls", help="kernel-regularized least squares with grid search")
    r.add_argument("--data", required=True)
    r.add_argument("--kernel", choices=("tc", "dc", "ss", "identity"), required=True)
    r.add_argument("--grid", help="JSON grid; built-in default if omitted")
    r.add_argument("--blocks", type=_float_list, help="kernel block sizes, default: two equal halves")
    r.add_argument("--theta-star", type=_float_list)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_regls)

    b = sub.add_parser("bench", help="Monte Carlo experiment")
    b.add_argument("--config", required=True)
    b.add_argument("--runs", type=int)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out", required=True)
    b.add_argument("--trajectories", help="directory for per-run recursive trajectories")
    b.add_argument("--no-timings", action="store_true", help="omit wall times (byte-reproducible output)")
    b.set_defaults(func=cmd_bench)

    o = sub.add_parser("report", help="box-plot statistics table from a bench report")
    o.add_argument("--in", dest="input", required=True)
    o.add_argument("--format", choices=("csv", "json"), default="csv")
    o.add_argument("--out", required=True)
    o.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, ArgumentError, DataError, NumericalError, OSError, json.JSONDecodeError) as exc:
        print(f"convexid {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
