"""ARX data generation, regressor construction and leverage-point outliers.

The system is ``A(q^-1) y_k = B(q^-1) u_k + w_k`` with
``A = 1 + a1 q^-1 + ... + a_na q^-na`` and ``B = b1 q^-1 + ... + b_nb q^-nb``,
which is the regression ``y_{k+1} = theta*^T x_k + w_{k+1}`` with
``x_k = [-y_k, ..., -y_{k-na+1}, u_k, ..., u_{k-nb+1}]`` and
``theta* = [a1, ..., a_na, b1, ..., b_nb]`` (so the default polynomials give
``theta* = [-1.5, 0.7, 1, 0.5]``).

Random numbers come from numpy's PCG64. A run's stream is seeded with
``SeedSequence(master_seed, spawn_key=(run_index,))``; within a stream the
inputs ``u`` are drawn first, then the noise ``w``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .criterion import Dataset
from .errors import ArgumentError, ConfigurationError


@dataclass(frozen=True)
class InputModel:
    """``kind`` is ``"uniform"`` (lo, hi), ``"gaussian"`` (mean, var) or ``"explicit"`` (values)."""

    kind: str = "gaussian"
    lo: float = -0.5
    hi: float = 0.5
    mean: float = 0.0
    var: float = 1.0
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian", "explicit"):
            raise ConfigurationError(f"unknown input model {self.kind!r}")
        if self.kind == "uniform" and not self.lo < self.hi:
            raise ConfigurationError("uniform input needs lo < hi")
        if self.kind == "gaussian" and not self.var >= 0:
            raise ConfigurationError("gaussian input needs var >= 0")

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "InputModel":
        return cls("uniform", lo=lo, hi=hi)

    @classmethod
    def gaussian(cls, mean: float = 0.0, var: float = 1.0) -> "InputModel":
        return cls("gaussian", mean=mean, var=var)

    @classmethod
    def explicit(cls, values) -> "InputModel":
        return cls("explicit", values=tuple(float(v) for v in values))


@dataclass(frozen=True)
class NoiseModel:
    kind: str = "gaussian"
    mean: float = 0.0
    var: float = 0.1

    def __post_init__(self):
        if self.kind not in ("gaussian", "none"):
            raise ConfigurationError(f"unknown noise model {self.kind!r}")
        if self.kind == "gaussian" and not self.var >= 0:
            raise ConfigurationError("gaussian noise needs var >= 0")

    @classmethod
    def gaussian(cls, mean: float = 0.0, var: float = 0.1) -> "NoiseModel":
        return cls("gaussian", mean=mean, var=var)

    @classmethod
    def none(cls) -> "NoiseModel":
        return cls("none")


@dataclass(frozen=True)
class ArxConfig:
    a_coeffs: tuple[float, ...] = (-1.5, 0.7)
    b_coeffs: tuple[float, ...] = (1.0, 0.5)
    input_model: InputModel = field(default_factory=InputModel)
    noise_model: NoiseModel = field(default_factory=NoiseModel)
    n_samples: int = 2202
    seed: int = 0
    burn_in: int = 200

    def __post_init__(self):
        object.__setattr__(self, "a_coeffs", tuple(float(a) for a in self.a_coeffs))
        object.__setattr__(self, "b_coeffs", tuple(float(b) for b in self.b_coeffs))
        if not self.a_coeffs or not self.b_coeffs:
            raise ConfigurationError("need at least one a and one b coefficient")
        if self.n_samples < 1 or self.burn_in < 0:
            raise ConfigurationError("n_samples >= 1 and burn_in >= 0 required")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if self.input_model.kind == "explicit" and len(self.input_model.values) != self.n_samples:
            raise ConfigurationError("explicit input length must equal n_samples")

    @property
    def theta_star(self) -> np.ndarray:
        return np.array(self.a_coeffs + self.b_coeffs)

    @property
    def deterministic(self) -> bool:
        return self.input_model.kind == "explicit" and self.noise_model.kind == "none"

    def pole_moduli(self) -> np.ndarray:
        return np.abs(np.roots([1.0, *self.a_coeffs]))

    def is_stable(self) -> bool:
        return bool(np.all(self.pole_moduli() < 1.0))


@dataclass(frozen=True, eq=False)
class RawTrace:
    """Input and output samples ``u_k``, ``y_k`` for ``k = 1..n``."""

    u: np.ndarray
    y: np.ndarray

    def __len__(self):
        return self.u.shape[0]

    def __eq__(self, other):
        if not isinstance(other, RawTrace):
            return NotImplemented
        return np.array_equal(self.u, other.u) and np.array_equal(self.y, other.y)

    __hash__ = None


def derive_seed(master_seed: int, run_index: int) -> int:
    """64-bit seed of run ``run_index`` drawn from ``master_seed``."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(run_index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@njit(cache=True)
def _arx_recursion(a, b, u, w):
    n = u.shape[0]
    y = np.zeros(n)
    for k in range(n):
        acc = 0.0
        for j in range(a.shape[0]):
            if k - 1 - j >= 0:
                acc += a[j] * y[k - 1 - j]
        for j in range(b.shape[0]):
            if k - 1 - j >= 0:
                acc += b[j] * u[k - 1 - j]
        y[k] = acc + w[k]
    return y


def simulate_arx(cfg: ArxConfig) -> tuple[RawTrace, np.ndarray]:
    """Simulate the ARX system from zero initial conditions.

    Returns the trace after discarding ``burn_in`` samples (none for an
    explicit input without noise) and ``theta* = [a, b]``.
    """
    if not cfg.is_stable():
        raise ConfigurationError(f"unstable A polynomial, pole moduli {cfg.pole_moduli()}")
    burn = 0 if cfg.deterministic else cfg.burn_in
    total = cfg.n_samples + burn
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    im, nm = cfg.input_model, cfg.noise_model
    if im.kind == "uniform":
        u = rng.uniform(im.lo, im.hi, total)
    elif im.kind == "gaussian":
        u = rng.normal(im.mean, math.sqrt(im.var), total)
    else:
        u = np.concatenate([np.zeros(burn), np.array(im.values, dtype=float)])
    if nm.kind == "gaussian":
        w = rng.normal(nm.mean, math.sqrt(nm.var), total)
    else:
        w = np.zeros(total)
    # y_k = -a1 y_{k-1} - ... + b1 u_{k-1} + ... + w_k, i.e. theta* . x_{k-1} + w_k
    y = _arx_recursion(-np.array(cfg.a_coeffs), np.array(cfg.b_coeffs), u, w)
    return RawTrace(u[burn:].copy(), y[burn:].copy()), cfg.theta_star


def build_regressors(raw: RawTrace, na: int = 2, nb: int = 2) -> Dataset:
    """Rows ``(x_k, y_{k+1})`` with ``x_k = [-y_k, ..., -y_{k-na+1}, u_k, ..., u_{k-nb+1}]``.

    Time indices are 1-based; the first usable row is ``k = max(na, nb)``.
    """
    n = len(raw)
    lag = max(na, nb)
    if n < lag + 1:
        raise ArgumentError(f"trace of length {n} is too short for {na}+{nb} lags")
    ks = np.arange(lag, n)  # 1-based k = lag..n-1, array position k-1
    cols = [-raw.y[ks - 1 - j] for j in range(na)] + [raw.u[ks - 1 - j] for j in range(nb)]
    return Dataset(np.column_stack(cols), raw.y[ks], ks)


@dataclass(frozen=True)
class OutlierConfig:
    fraction: float = 0.01
    alpha: float = 15.0
    n: int = 20
    placement: str = "every_mth"

    def __post_init__(self):
        if not 0 <= self.fraction < 1:
            raise ConfigurationError("outlier fraction must lie in [0, 1)")
        if not self.alpha > 0 or self.n < 1:
            raise ConfigurationError("alpha > 0 and n >= 1 required")
        if self.placement != "every_mth":
            raise ConfigurationError(f"unknown placement {self.placement!r}")

    def positions(self, n_rows: int) -> np.ndarray:
        """1-based row positions ``M, 2M, ...`` with ``M = round(1 / fraction)``."""
        count = math.floor(n_rows * self.fraction)
        if count == 0:
            return np.zeros(0, dtype=np.int64)
        m = round(1.0 / self.fraction)
        return np.arange(1, count + 1, dtype=np.int64) * m


def inject_outliers(data: Dataset, ocfg: OutlierConfig) -> Dataset:
    """Replace rows ``M, 2M, ...`` by ``(X^T y / (alpha n), mean(y))``."""
    pos = ocfg.positions(data.n)
    if pos.size == 0:
        return data
    if pos[-1] > data.n:
        raise ArgumentError("outlier positions exceed the number of rows")
    x_otl = data.X.T @ data.y / (ocfg.alpha * ocfg.n)
    y_otl = float(np.mean(data.y))
    X = data.X.copy()
    y = data.y.copy()
    X[pos - 1] = x_otl
    y[pos - 1] = y_otl
    return Dataset(X, y, data.k)


def write_raw_csv(raw: RawTrace, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "u", "y"])
        for i in range(len(raw)):
            w.writerow([i + 1, repr(float(raw.u[i])), repr(float(raw.y[i]))])
