"""Kernel-regularized least squares baseline.

Minimizes ``(1/N) sum (y_{k+1} - theta^T x_k)^2 + lam * theta^T P^{-1} theta``
with ``P`` a block-diagonal TC, DC, SS or identity kernel, one block per ARX
polynomial. Hyperparameters are chosen by grid search on a time-ordered
holdout split.
"""

from __future__ import annotations

import enum
import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .criterion import Dataset
from .errors import ArgumentError, ConfigurationError, NumericalError


class KernelKind(enum.Enum):
    TC = "tc"
    DC = "dc"
    SS = "ss"
    IDENTITY = "identity"


@dataclass(frozen=True)
class KernelHyper:
    c: float = 1.0
    decay: float = 0.9
    rho: float = 0.5

    def validate(self, kind: KernelKind) -> None:
        if kind is KernelKind.IDENTITY:
            return
        if not self.c > 0:
            raise ConfigurationError(f"kernel scale must be positive, got {self.c}")
        if not 0 < self.decay < 1:
            raise ConfigurationError(f"kernel decay must lie in (0, 1), got {self.decay}")
        if kind is KernelKind.DC and not -1 < self.rho < 1:
            raise ConfigurationError(f"DC correlation must lie in (-1, 1), got {self.rho}")


@dataclass(frozen=True)
class ReglsConfig:
    kernel: KernelKind = KernelKind.TC
    hyper: KernelHyper = field(default_factory=KernelHyper)
    reg_lambda: float = 1e-3
    block_sizes: tuple[int, ...] = (2, 2)

    def __post_init__(self):
        if not isinstance(self.kernel, KernelKind):
            object.__setattr__(self, "kernel", KernelKind(self.kernel))
        object.__setattr__(self, "block_sizes", tuple(int(b) for b in self.block_sizes))
        if not self.reg_lambda > 0:
            raise ConfigurationError(f"reg_lambda must be positive, got {self.reg_lambda}")
        if not self.block_sizes or min(self.block_sizes) < 1:
            raise ConfigurationError("block sizes must be positive")
        self.hyper.validate(self.kernel)


def _block(kind: KernelKind, hyper: KernelHyper, m: int) -> np.ndarray:
    i = np.arange(1, m + 1, dtype=float)[:, None]
    j = i.T
    lam, c = hyper.decay, hyper.c
    top = np.maximum(i, j)
    if kind is KernelKind.TC:
        return c * lam**top
    if kind is KernelKind.DC:
        return c * lam ** ((i + j) / 2) * hyper.rho ** np.abs(i - j)
    if kind is KernelKind.SS:
        return c * (lam ** (i + j + top) / 2 - lam ** (3 * top) / 6)
    return np.eye(m)


def kernel_matrix(kind, hyper: KernelHyper, block_sizes) -> np.ndarray:
    """Block-diagonal kernel, symmetrized and checked positive semi-definite."""
    kind = KernelKind(kind)
    hyper.validate(kind)
    sizes = [int(b) for b in block_sizes]
    d = sum(sizes)
    P = np.zeros((d, d))
    start = 0
    for m in sizes:
        P[start:start + m, start:start + m] = _block(kind, hyper, m)
        start += m
    P = (P + P.T) / 2
    lo = np.linalg.eigvalsh(P)[0]
    if lo < -1e-10:
        raise ConfigurationError(f"kernel is not PSD (smallest eigenvalue {lo:.3e})")
    return P


def regls_fit(data: Dataset, cfg: ReglsConfig) -> np.ndarray:
    """Solve ``(X^T X + N lam P^{-1}) theta = X^T y``."""
    if sum(cfg.block_sizes) != data.d:
        raise ConfigurationError(f"block sizes {cfg.block_sizes} do not sum to d={data.d}")
    P = kernel_matrix(cfg.kernel, cfg.hyper, cfg.block_sizes)
    d = data.d
    if np.linalg.eigvalsh(P)[0] <= 1e-12 * max(1.0, np.abs(P).max()):
        warnings.warn("kernel is singular; adding 1e-10 * I before inversion", RuntimeWarning, stacklevel=2)
        P = P + 1e-10 * np.eye(d)
    X, y = data.X, data.y
    A = X.T @ X + data.n * cfg.reg_lambda * np.linalg.inv(P)
    A = (A + A.T) / 2
    b = X.T @ y
    try:
        theta = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"RegLS system is singular: {exc}; cond={np.linalg.cond(A):.3e}") from None
    scale = max(np.linalg.norm(b), np.finfo(float).tiny)
    rel = np.linalg.norm(A @ theta - b) / scale
    if rel > 1e-10:
        # one round of iterative refinement
        theta = theta + np.linalg.solve(A, b - A @ theta)
        rel = np.linalg.norm(A @ theta - b) / scale
    if not (np.all(np.isfinite(theta)) and rel <= 1e-10):
        raise NumericalError(
            f"RegLS solve inaccurate: relative residual {rel:.3e}, cond={np.linalg.cond(A):.3e}"
        )
    return theta


def regls_objective(data: Dataset, cfg: ReglsConfig, theta) -> float:
    P = kernel_matrix(cfg.kernel, cfg.hyper, cfg.block_sizes)
    theta = np.asarray(theta, dtype=float)
    r = data.y - data.X @ theta
    return float(np.mean(r * r) + cfg.reg_lambda * theta @ np.linalg.solve(P, theta))


@dataclass(frozen=True)
class HyperGrid:
    """Candidate values; only those relevant to the kernel are searched."""

    c: tuple[float, ...] = (1.0,)
    decay: tuple[float, ...] = (0.3, 0.5, 0.7, 0.8, 0.9)
    rho: tuple[float, ...] = (0.0, 0.5, 0.9)
    reg_lambda: tuple[float, ...] = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    holdout_fraction: float = 0.2

    def __post_init__(self):
        for name in ("c", "decay", "rho", "reg_lambda"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not 0 < self.holdout_fraction < 1:
            raise ArgumentError("holdout_fraction must lie in (0, 1)")

    def points(self, kind) -> list[tuple[KernelHyper, float]]:
        """Grid points in search order; the last listed parameter varies fastest."""
        kind = KernelKind(kind)
        if kind is KernelKind.IDENTITY:
            axes = [(1.0,), (0.5,), (0.0,), self.reg_lambda]
        elif kind is KernelKind.DC:
            axes = [self.c, self.decay, self.rho, self.reg_lambda]
        else:
            axes = [self.c, self.decay, (0.0,), self.reg_lambda]
        if any(len(a) == 0 for a in axes):
            raise ArgumentError("hyperparameter grid is empty")
        return [(KernelHyper(c, lam, rho), reg) for c, lam, rho, reg in itertools.product(*axes)]

    @classmethod
    def from_dict(cls, d: dict) -> "HyperGrid":
        known = {"c", "decay", "rho", "reg_lambda", "holdout_fraction"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown grid keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "c": list(self.c),
            "decay": list(self.decay),
            "rho": list(self.rho),
            "reg_lambda": list(self.reg_lambda),
            "holdout_fraction": self.holdout_fraction,
        }


def holdout_split(data: Dataset, holdout_fraction: float) -> tuple[Dataset, Dataset]:
    n_hold = max(1, int(round(data.n * holdout_fraction)))
    n_fit = data.n - n_hold
    if n_fit < data.d:
        raise ArgumentError(f"{data.n} rows are too few to split for d={data.d}")
    return data.slice(0, n_fit), data.slice(n_fit, data.n)


def tune_hyperparameters(data: Dataset, kind, grid: HyperGrid, block_sizes=(2, 2)) -> ReglsConfig:
    """Grid point with the smallest holdout one-step prediction MSE (first wins ties)."""
    kind = KernelKind(kind)
    fit, hold = holdout_split(data, grid.holdout_fraction)
    best, best_mse = None, math.inf
    for hyper, reg in grid.points(kind):
        cfg = ReglsConfig(kind, hyper, reg, tuple(block_sizes))
        theta = regls_fit(fit, cfg)
        r = hold.y - hold.X @ theta
        mse = float(np.mean(r * r))
        if mse < best_mse:
            best, best_mse = cfg, mse
    if best is None:
        # every candidate produced a non-finite error; fall back to the first
        hyper, reg = grid.points(kind)[0]
        best = ReglsConfig(kind, hyper, reg, tuple(block_sizes))
    return best


def tune_and_fit(data: Dataset, kind, grid: HyperGrid, block_sizes=(2, 2)) -> tuple[np.ndarray, ReglsConfig]:
    cfg = tune_hyperparameters(data, kind, grid, block_sizes)
    return regls_fit(data, cfg), cfg


def config_to_dict(cfg: ReglsConfig) -> dict:
    return {
        "kernel": cfg.kernel.value,
        "c": cfg.hyper.c,
        "decay": cfg.hyper.decay,
        "rho": cfg.hyper.rho,
        "reg_lambda": cfg.reg_lambda,
        "block_sizes": list(cfg.block_sizes),
    }

