"""Monte Carlo experiment harness.

Each run simulates one ARX data set (seeded from the master seed and the run
index), optionally corrupts the training rows with outliers, and fits every
configured method on the same data. Results are keyed by run index, so the
report does not depend on the order in which runs execute.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .criterion import BatchSolverConfig, Dataset, fit_batch
from .errors import ArgumentError, ConfigurationError
from .losses import LossSpec, format_loss, growth_exponent, parse_loss
from .regls import HyperGrid, KernelKind, tune_and_fit
from .saawet import BoundKind, Schedule, UpdateRule, default_schedule, run_recursive, write_trajectory_csv
from .simulate import (
    ArxConfig,
    InputModel,
    NoiseModel,
    OutlierConfig,
    build_regressors,
    derive_seed,
    inject_outliers,
    simulate_arx,
)

SCHEMA_VERSION = "1.0"


def error_metric(theta_hat, theta_star) -> float:
    """Euclidean distance between estimate and true parameters."""
    a = np.asarray(theta_hat, dtype=float).reshape(-1)
    b = np.asarray(theta_star, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise ArgumentError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.linalg.norm(a - b))


@dataclass(frozen=True)
class BoxStats:
    median: float
    q1: float
    q3: float
    lower_whisker: float
    upper_whisker: float
    mean: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def summarize_errors(errors) -> BoxStats:
    """Box-plot statistics; linearly interpolated quartiles, 1.5 IQR whiskers."""
    e = np.sort(np.asarray(errors, dtype=float).reshape(-1))
    if e.size == 0:
        raise ArgumentError("cannot summarize an empty sample")
    q1, med, q3 = np.quantile(e, [0.25, 0.5, 0.75], method="linear")
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    lower = e[e >= lo_fence].min()
    upper = e[e <= hi_fence].max()
    # shifted mean is exact for a constant sample
    mean = e[0] + np.mean(e - e[0])
    return BoxStats(float(med), float(q1), float(q3), float(lower), float(upper), float(mean))


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class MethodSpec:
    """One estimator in an experiment.

    ``kind`` is ``"batch"`` (needs ``loss``), ``"recursive"`` (``loss`` and an
    optional ``schedule``; the default depends on the loss) or ``"regls"``
    (``kernel`` and ``grid``).
    """

    kind: str
    loss: LossSpec | None = None
    schedule: Schedule | None = None
    max_iters: int = 10000
    kernel: KernelKind = KernelKind.TC
    grid: HyperGrid = field(default_factory=HyperGrid)
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("batch", "recursive", "regls"):
            raise ConfigurationError(f"unknown method kind {self.kind!r}")
        if self.kind != "regls" and self.loss is None:
            raise ConfigurationError(f"{self.kind} method needs a loss")
        if not isinstance(self.kernel, KernelKind):
            object.__setattr__(self, "kernel", KernelKind(self.kernel))
        if self.kind == "recursive":
            UpdateRule.for_loss(self.loss)
            if self.schedule is None:
                object.__setattr__(self, "schedule", default_schedule(self.loss))
        if not self.name:
            tag = self.kernel.value if self.kind == "regls" else format_loss(self.loss)
            object.__setattr__(self, "name", f"{self.kind}:{tag}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "name": self.name}
        if self.kind == "regls":
            d.update(kernel=self.kernel.value, grid=self.grid.to_dict())
            return d
        d["loss"] = format_loss(self.loss)
        if self.kind == "batch":
            d["max_iters"] = self.max_iters
        else:
            d.update(schedule_to_dict(self.schedule))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MethodSpec":
        kind = d.get("kind")
        loss = parse_loss(d["loss"]) if "loss" in d else None
        schedule = None
        if kind == "recursive" and loss is not None:
            schedule = schedule_from_options(
                loss, d.get("schedule"), a0=d.get("a0"), m0=d.get("m0"), rfac=d.get("rfac")
            )
        return cls(
            kind=kind,
            loss=loss,
            schedule=schedule,
            max_iters=int(d.get("max_iters", 10000)),
            kernel=KernelKind(d.get("kernel", "tc")),
            grid=HyperGrid.from_dict(d["grid"]) if "grid" in d else HyperGrid(),
            name=d.get("name", ""),
        )


def schedule_from_options(loss: LossSpec, kind=None, a0=None, m0=None, rfac=None) -> Schedule:
    """Build a schedule from CLI/JSON options; unset values keep the loss's defaults."""
    base = default_schedule(loss)
    if kind is None:
        kind = base.bound_kind
    elif not isinstance(kind, BoundKind):
        kind = {"powerlaw": BoundKind.POWER_LAW, "geometric": BoundKind.GEOMETRIC}.get(str(kind).lower())
        if kind is None:
            raise ConfigurationError("schedule must be 'powerlaw' or 'geometric'")
    a0 = base.a0 if a0 is None else float(a0)
    m0 = base.m0 if m0 is None else float(m0)
    if kind is BoundKind.POWER_LAW:
        return Schedule.power_law(growth_exponent(loss), m0=m0, a0=a0)
    return Schedule.geometric(m0=m0, r=2.0 if rfac is None else float(rfac), a0=a0)


def schedule_to_dict(s: Schedule) -> dict:
    d = {"schedule": "powerlaw" if s.bound_kind is BoundKind.POWER_LAW else "geometric", "a0": s.a0, "m0": s.m0}
    if s.bound_kind is BoundKind.GEOMETRIC:
        d["rfac"] = s.r
    else:
        d["l"] = s.l
    return d


def arx_to_dict(cfg: ArxConfig) -> dict:
    im, nm = cfg.input_model, cfg.noise_model
    if im.kind == "uniform":
        inp = {"kind": "uniform", "lo": im.lo, "hi": im.hi}
    elif im.kind == "gaussian":
        inp = {"kind": "gaussian", "mean": im.mean, "var": im.var}
    else:
        inp = {"kind": "explicit", "values": list(im.values)}
    noise = {"kind": "none"} if nm.kind == "none" else {"kind": "gaussian", "mean": nm.mean, "var": nm.var}
    return {
        "a": list(cfg.a_coeffs),
        "b": list(cfg.b_coeffs),
        "input": inp,
        "noise": noise,
        "n_samples": cfg.n_samples,
        "seed": cfg.seed,
        "burn_in": cfg.burn_in,
    }


def arx_from_dict(d: dict) -> ArxConfig:
    inp = dict(d.get("input", {"kind": "gaussian"}))
    noise = dict(d.get("noise", {"kind": "gaussian"}))
    ik = inp.pop("kind", "gaussian")
    if ik == "explicit":
        im = InputModel.explicit(inp.get("values", ()))
    else:
        im = InputModel(ik, **inp)
    nm = NoiseModel(noise.pop("kind", "gaussian"), **noise)
    n_samples = int(d.get("n_samples", len(im.values) if ik == "explicit" else 2202))
    return ArxConfig(
        a_coeffs=tuple(d.get("a", (-1.5, 0.7))),
        b_coeffs=tuple(d.get("b", (1.0, 0.5))),
        input_model=im,
        noise_model=nm,
        n_samples=n_samples,
        seed=int(d.get("seed", 0)),
        burn_in=int(d.get("burn_in", 200)),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    arx: ArxConfig
    methods: tuple[MethodSpec, ...]
    n_runs: int = 100
    n_train: int = 2000
    n_validate: int = 0
    master_seed: int = 0
    record_every: int = 100
    outliers: OutlierConfig | None = None

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.methods:
            raise ConfigurationError("an experiment needs at least one method")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate method names {names}")
        if self.n_runs < 1 or self.n_train < 1 or self.n_validate < 0 or self.record_every < 1:
            raise ConfigurationError("n_runs, n_train, record_every >= 1 and n_validate >= 0 required")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigurationError("master_seed must be a 64-bit unsigned integer")

    @property
    def lag(self) -> int:
        return max(len(self.arx.a_coeffs), len(self.arx.b_coeffs))

    def to_dict(self) -> dict:
        d = {
            "arx": arx_to_dict(self.arx),
            "methods": [m.to_dict() for m in self.methods],
            "n_runs": self.n_runs,
            "n_train": self.n_train,
            "n_validate": self.n_validate,
            "master_seed": self.master_seed,
            "record_every": self.record_every,
        }
        if self.outliers is not None:
            o = self.outliers
            d["outliers"] = {"fraction": o.fraction, "alpha": o.alpha, "n": o.n, "placement": o.placement}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        missing = {"arx", "methods", "n_runs", "master_seed", "record_every"} - set(d)
        if missing:
            raise ConfigurationError(f"experiment config lacks {sorted(missing)}")
        out = d.get("outliers")
        return cls(
            arx=arx_from_dict(d["arx"]),
            methods=tuple(MethodSpec.from_dict(m) for m in d["methods"]),
            n_runs=int(d["n_runs"]),
            n_train=int(d.get("n_train", 2000)),
            n_validate=int(d.get("n_validate", 0)),
            master_seed=int(d["master_seed"]),
            record_every=int(d["record_every"]),
            outliers=OutlierConfig(**out) if out else None,
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ------------------------------------------------------------------ runs


@dataclass
class RunRecord:
    run: int
    seed: int
    error: float | None = None
    final_theta: list[float] | None = None
    wall_time_s: float | None = None
    sigma_final: int | None = None
    validation_mse: float | None = None
    failed: bool = False
    message: str = ""

    def to_dict(self, timings: bool = True) -> dict:
        d = {"run": self.run, "seed": self.seed, "failed": self.failed}
        if self.failed:
            d["message"] = self.message
            return d
        d.update(error=self.error, final_theta=self.final_theta)
        if timings:
            d["wall_time_s"] = self.wall_time_s
        if self.sigma_final is not None:
            d["sigma_final"] = self.sigma_final
        if self.validation_mse is not None:
            d["validation_mse"] = self.validation_mse
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def run_data(cfg: ExperimentConfig, run: int) -> tuple[Dataset, Dataset | None, np.ndarray, int]:
    """Training set (outliers applied), validation set and theta* of one run."""
    seed = derive_seed(cfg.master_seed, run)
    arx = ArxConfig(
        cfg.arx.a_coeffs, cfg.arx.b_coeffs, cfg.arx.input_model, cfg.arx.noise_model,
        n_samples=cfg.n_train + cfg.n_validate + cfg.lag, seed=seed, burn_in=cfg.arx.burn_in,
    )
    raw, theta_star = simulate_arx(arx)
    data = build_regressors(raw, len(arx.a_coeffs), len(arx.b_coeffs))
    train = data.slice(0, cfg.n_train)
    valid = data.slice(cfg.n_train, cfg.n_train + cfg.n_validate) if cfg.n_validate else None
    if cfg.outliers is not None:
        train = inject_outliers(train, cfg.outliers)
    return train, valid, theta_star, seed


def fit_method(method: MethodSpec, train: Dataset, record_every: int = 1, block_sizes=None):
    """Fit one method; returns ``(theta, wall_time_s, sigma_final, trajectory)``.

    The wall time covers the fit call only.
    """
    traj, sigma = None, None
    t0 = time.perf_counter()
    if method.kind == "batch":
        theta = fit_batch(train, method.loss, BatchSolverConfig(max_iters=method.max_iters)).theta
    elif method.kind == "recursive":
        traj, state = run_recursive(train, UpdateRule.for_loss(method.loss), method.schedule, record_every=record_every)
        theta, sigma = state.theta, state.sigma
    else:
        theta, _ = tune_and_fit(train, method.kernel, method.grid, block_sizes or (train.d,))
    return np.asarray(theta, dtype=float), time.perf_counter() - t0, sigma, traj


def _one_run(args) -> tuple[int, dict[str, RunRecord]]:
    cfg, run, traj_dir = args
    train, valid, theta_star, seed = run_data(cfg, run)
    out = {}
    for method in cfg.methods:
        rec = RunRecord(run=run, seed=seed)
        try:
            blocks = (len(cfg.arx.a_coeffs), len(cfg.arx.b_coeffs))
            theta, wall, sigma, traj = fit_method(method, train, cfg.record_every, blocks)
            if not np.all(np.isfinite(theta)):
                raise ArithmeticError("non-finite estimate")
        except (ArithmeticError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            rec.failed, rec.message = True, f"{type(exc).__name__}: {exc}"
            out[method.name] = rec
            continue
        rec.error = error_metric(theta, theta_star)
        rec.final_theta = [float(v) for v in theta]
        rec.wall_time_s = wall
        rec.sigma_final = None if sigma is None else int(sigma)
        if valid is not None:
            r = valid.y - valid.X @ theta
            rec.validation_mse = float(np.mean(r * r))
        if traj is not None and traj_dir is not None:
            safe = method.name.replace(":", "_")
            write_trajectory_csv(traj, Path(traj_dir) / f"run{run:04d}_{safe}.csv", theta_star)
        out[method.name] = rec
    return run, out


@dataclass
class MonteCarloReport:
    config: dict
    runs: dict[str, list[RunRecord]]
    schema_version: str = SCHEMA_VERSION

    def errors(self, method: str) -> np.ndarray:
        return np.array([r.error for r in self.runs[method] if not r.failed])

    def n_failed(self, method: str) -> int:
        return sum(r.failed for r in self.runs[method])

    def summary(self) -> dict[str, dict]:
        out = {}
        for name, recs in self.runs.items():
            errs = self.errors(name)
            entry = {"n_ok": int(errs.size), "n_failed": self.n_failed(name)}
            if errs.size:
                entry.update(summarize_errors(errs).to_dict())
            out[name] = entry
        return out

    def to_dict(self, timings: bool = True) -> dict:
        return {
            "schema_version": self.schema_version,
            "config": self.config,
            "runs": {name: [r.to_dict(timings) for r in recs] for name, recs in self.runs.items()},
            "summary": self.summary(),
        }

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), indent=1, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "MonteCarloReport":
        runs = {name: [RunRecord.from_dict(r) for r in recs] for name, recs in d["runs"].items()}
        return cls(config=d.get("config", {}), runs=runs, schema_version=d.get("schema_version", SCHEMA_VERSION))

    @classmethod
    def load(cls, path) -> "MonteCarloReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def run_monte_carlo(
    cfg: ExperimentConfig,
    workers: int = 1,
    trajectory_dir=None,
    order=None,
) -> MonteCarloReport:
    """Run ``cfg.n_runs`` seeded runs (indices ``1..n_runs``) of every method.

    ``order`` permutes the execution order; the report is assembled by run
    index and is identical for any order.
    """
    indices = list(range(1, cfg.n_runs + 1)) if order is None else [int(i) for i in order]
    if sorted(indices) != list(range(1, cfg.n_runs + 1)):
        raise ArgumentError("order must be a permutation of 1..n_runs")
    if trajectory_dir is not None:
        Path(trajectory_dir).mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, i, trajectory_dir) for i in indices]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(_one_run, tasks))
    else:
        results = dict(map(_one_run, tasks))
    runs = {m.name: [results[i][m.name] for i in range(1, cfg.n_runs + 1)] for m in cfg.methods}
    return MonteCarloReport(config=cfg.to_dict(), runs=runs)


def summary_table(report: MonteCarloReport) -> list[dict]:
    """One row of box-plot statistics per method, recomputed from the raw runs."""
    rows = []
    for name, entry in report.summary().items():
        row = {"method": name, "n_ok": entry["n_ok"], "n_failed": entry["n_failed"]}
        for key in ("median", "q1", "q3", "lower_whisker", "upper_whisker", "mean"):
            row[key] = entry.get(key, math.nan)
        rows.append(row)
    return rows
