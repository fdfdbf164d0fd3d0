"""Batch convex criterion: empirical risk of residuals and its minimizer.

The regression sample is ``y_{k+1} = theta^T x_k + w_{k+1}``; row ``k`` of a
:class:`Dataset` holds ``(x_k, y_{k+1})``.
"""

from __future__ import annotations

import csv
import enum
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numba import njit

from .errors import ArgumentError, DataError
from .losses import LossSpec, _deriv, _value


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered observations ``(x_k, y_{k+1})``.

    ``X`` has shape ``(N, d)``, ``y`` shape ``(N,)``. ``k`` carries the time
    index of each row (``1..N`` unless the data came from a longer trace).
    """

    X: np.ndarray
    y: np.ndarray
    k: np.ndarray = field(default=None)

    def __post_init__(self):
        X = np.array(self.X, dtype=float, copy=True)
        y = np.array(self.y, dtype=float, copy=True).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[1] < 1:
            raise ArgumentError(f"X must be an (N, d) array, got shape {X.shape}")
        if X.shape[0] < 1 or X.shape[0] != y.shape[0]:
            raise ArgumentError(f"need N >= 1 rows with matching y, got {X.shape[0]} and {y.shape[0]}")
        k = np.arange(1, X.shape[0] + 1) if self.k is None else np.array(self.k, dtype=np.int64).reshape(-1)
        if k.shape[0] != X.shape[0]:
            raise ArgumentError("index column length differs from row count")
        for arr in (X, y, k):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "k", k)

    @classmethod
    def from_rows(cls, rows) -> "Dataset":
        rows = list(rows)
        if not rows:
            raise ArgumentError("dataset needs at least one row")
        d = len(rows[0][0])
        if any(len(x) != d for x, _ in rows):
            raise ArgumentError("all regressors must have the same length")
        return cls(np.array([x for x, _ in rows], dtype=float), np.array([y for _, y in rows], dtype=float))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def rows(self) -> list[tuple[np.ndarray, float]]:
        return [(self.X[i], float(self.y[i])) for i in range(self.n)]

    def slice(self, start: int, stop: int) -> "Dataset":
        return Dataset(self.X[start:stop], self.y[start:stop], self.k[start:stop])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.k, other.k)
        )

    __hash__ = None


# ----------------------------------------------------------------- CSV I/O


def _fmt(v: float) -> str:
    return np.format_float_positional(float(v), unique=True, trim="-")


def write_dataset_csv(data: Dataset, path) -> None:
    """Write ``k,x1,...,xd,y`` rows in round-trip decimal notation."""
    if not (np.all(np.isfinite(data.X)) and np.all(np.isfinite(data.y))):
        raise DataError("refusing to write non-finite values")
    header = ["k", *[f"x{j + 1}" for j in range(data.d)], "y"]
    lines = [",".join(header)]
    for i in range(data.n):
        lines.append(",".join([str(int(data.k[i])), *map(_fmt, data.X[i]), _fmt(data.y[i])]))
    Path(path).write_text("\n".join(lines) + "\n", newline="")


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        d = len(header) - 2
        expected = ["k", *[f"x{j + 1}" for j in range(d)], "y"]
        if d < 1 or [h.strip() for h in header] != expected:
            raise DataError(f"{path}: bad header {header}")
        ks, xs, ys = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise DataError(f"{path}:{lineno}: expected {d + 2} fields, got {len(row)}")
            try:
                ks.append(int(row[0]))
                xs.append([float(v) for v in row[1:-1]])
                ys.append(float(row[-1]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not ks:
        raise DataError(f"{path}: no data rows")
    X, y = np.array(xs), np.array(ys)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError(f"{path}: non-finite values")
    return Dataset(X, y, np.array(ks))


# ----------------------------------------------------------------- risk


@njit(cache=True)
def _risk(X, y, code, p, theta):
    n, d = X.shape
    total = 0.0
    for i in range(n):
        r = y[i]
        for j in range(d):
            r -= X[i, j] * theta[j]
        total += _value(code, p, r)
    return total / n


@njit(cache=True)
def _risk_and_subgradient(X, y, code, p, theta):
    n, d = X.shape
    total = 0.0
    g = np.zeros(d)
    for i in range(n):
        r = y[i]
        for j in range(d):
            r -= X[i, j] * theta[j]
        total += _value(code, p, r)
        s = _deriv(code, p, r)
        for j in range(d):
            g[j] -= X[i, j] * s
    for j in range(d):
        g[j] /= n
    return total / n, g


def _check_theta(data: Dataset, theta) -> np.ndarray:
    theta = np.ascontiguousarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] != data.d:
        raise ArgumentError(f"theta has length {theta.shape[0]}, data has d={data.d}")
    return theta


def empirical_risk(data: Dataset, spec: LossSpec, theta) -> float:
    """Mean loss of the residuals ``y_{k+1} - theta^T x_k``."""
    theta = _check_theta(data, theta)
    return float(_risk(data.X, data.y, spec.code, spec.param, theta))


def empirical_risk_subgradient(data: Dataset, spec: LossSpec, theta) -> np.ndarray:
    """``-(1/N) sum_k x_k * loss'(y_{k+1} - theta^T x_k)``; the gradient for smooth losses."""
    theta = _check_theta(data, theta)
    return _risk_and_subgradient(data.X, data.y, spec.code, spec.param, theta)[1]


# ----------------------------------------------------------------- solver


class StepRule(enum.Enum):
    BACKTRACKING_GRADIENT = "BacktrackingGradient"
    POLYAK_SUBGRADIENT = "PolyakSubgradient"


@dataclass(frozen=True)
class BatchSolverConfig:
    """Settings for :func:`fit_batch`.

    ``step_rule=None`` picks backtracking gradient descent for smooth losses
    and the Polyak subgradient method for losses with a kink.
    """

    max_iters: int = 10000
    tol: float = 1e-8
    step_rule: StepRule | None = None
    averaging: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ArgumentError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ArgumentError("tol must be > 0")
        if self.step_rule is not None and not isinstance(self.step_rule, StepRule):
            object.__setattr__(self, "step_rule", StepRule(self.step_rule))


class BatchFit(NamedTuple):
    theta: np.ndarray
    risk: float
    iters: int
    converged: bool


def _preconditioner(X: np.ndarray) -> np.ndarray:
    # fixed metric (X^T X / N)^+ ; equivalent to working in whitened coordinates
    G = X.T @ X / X.shape[0]
    if not np.any(G):
        return np.eye(X.shape[1])
    return np.linalg.pinv(G, hermitian=True)


def _fit_smooth(X, y, spec, cfg, P):
    code, p = spec.code, spec.param
    theta = np.zeros(X.shape[1])
    f, g = _risk_and_subgradient(X, y, code, p, theta)
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if np.linalg.norm(g) <= cfg.tol * (1.0 + np.linalg.norm(theta)):
            converged = True
            it -= 1
            break
        direction = -(P @ g)
        slope = float(g @ direction)
        if not slope < 0.0:
            break
        t = 1.0
        while True:
            cand = theta + t * direction
            f_new, g_new = _risk_and_subgradient(X, y, code, p, cand)
            if f_new <= f + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                break
        if t < 1e-12:
            # round-off floor on risk differences: secant on the directional derivative
            _, g1 = _risk_and_subgradient(X, y, code, p, theta + direction)
            curv = float(g1 @ direction) - slope
            if not curv > 0.0:
                break
            cand = theta - (slope / curv) * direction
            f_new, g_new = _risk_and_subgradient(X, y, code, p, cand)
            if not (np.linalg.norm(g_new) < np.linalg.norm(g) and f_new <= f + 1e-12 * (1.0 + abs(f))):
                break
        theta, f, g = cand, f_new, g_new
    else:
        converged = np.linalg.norm(g) <= cfg.tol * (1.0 + np.linalg.norm(theta))
    return theta, f, it, bool(converged)


@njit(cache=True)
def _polyak_loop(X, y, code, p, P, theta0, max_iters, averaging):
    d = X.shape[1]
    theta = theta0.copy()
    f0 = _risk(X, y, code, p, theta)
    best = f0
    best_theta = theta.copy()
    avg = np.zeros(d)
    wsum = 0.0
    level = 0.5 * f0 + 1e-300
    start_avg = max_iters // 2
    it = 0
    for it in range(max_iters):
        f, g = _risk_and_subgradient(X, y, code, p, theta)
        if f < best:
            best = f
            best_theta[:] = theta
        pg = P @ g
        q = 0.0
        for j in range(d):
            q += g[j] * pg[j]
        if q <= 0.0:
            # zero is a subgradient: theta is optimal
            best = f
            best_theta[:] = theta
            break
        # Polyak step toward the target level best - level / sqrt(t + 1)
        step = (f - best + level / math.sqrt(it + 1.0)) / q
        if averaging and it >= start_avg:
            avg += step * theta
            wsum += step
        theta = theta - step * pg
    if wsum > 0.0:
        avg /= wsum
    else:
        avg[:] = best_theta
    return best_theta, best, avg, it + 1


def _vertex_polish(X, y, spec, theta, f, rounds=50):
    """Walk over interpolating points of the rows with the smallest residuals.

    Piecewise-linear risks attain their minimum where ``d`` residuals vanish.
    A candidate is accepted if it lowers the risk, or ties it (relative 1e-12)
    and is lexicographically smaller, so flat minimizer sets resolve to
    their lexicographically smallest vertex.
    """
    n, d = X.shape
    m = min(n, d + 4)
    code, p = spec.code, spec.param
    tried = set()
    for _ in range(rounds):
        resid = np.abs(y - X @ theta)
        near = np.argsort(resid, kind="stable")[:m]
        improved = False
        for rows in itertools.combinations(sorted(near), d):
            if rows in tried:
                continue
            tried.add(rows)
            A = X[list(rows)]
            if np.linalg.matrix_rank(A) < d:
                continue
            cand = np.linalg.solve(A, y[list(rows)])
            fc = _risk(X, y, code, p, cand)
            slack = 1e-12 * (1.0 + abs(f))
            if fc < f - slack or (fc <= f + slack and tuple(cand) < tuple(theta)):
                theta, f, improved = cand, min(f, fc), True
        if not improved:
            break
    return theta, f


def fit_batch(data: Dataset, spec: LossSpec, cfg: BatchSolverConfig | None = None) -> BatchFit:
    """Minimize the empirical risk starting from ``theta = 0``.

    Returns the estimate, its risk, the iteration count and a convergence
    flag. For smooth losses convergence means ``|grad| <= tol (1 + |theta|)``;
    for losses with a kink the solver runs its full budget (or stops at an
    exact zero subgradient) and returns the best of the averaged iterate, the
    best visited iterate and a vertex refinement of those.
    """
    cfg = cfg or BatchSolverConfig()
    X, y = data.X, data.y
    P = _preconditioner(X)
    rule = cfg.step_rule
    if rule is None:
        rule = StepRule.BACKTRACKING_GRADIENT if spec.is_smooth else StepRule.POLYAK_SUBGRADIENT
    if rule is StepRule.BACKTRACKING_GRADIENT:
        if not spec.is_smooth:
            raise ArgumentError(f"backtracking gradient needs a smooth loss, got {spec}")
        theta, f, iters, converged = _fit_smooth(X, y, spec, cfg, P)
        return BatchFit(theta, float(f), iters, converged)

    best_theta, best, avg, iters = _polyak_loop(
        X, y, spec.code, spec.param, P, np.zeros(data.d), cfg.max_iters, cfg.averaging
    )
    f_avg = _risk(X, y, spec.code, spec.param, avg)
    converged = f_avg <= best + cfg.tol
    theta, f = (avg, f_avg) if f_avg <= best else (best_theta, best)
    if not spec.is_smooth:
        theta, f = _vertex_polish(X, y, spec, theta, f)
    return BatchFit(np.asarray(theta, dtype=float), float(f), int(iters), bool(converged))
