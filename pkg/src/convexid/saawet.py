"""Recursive estimators: stochastic approximation with expanding truncations.

Every rule moves the estimate along ``x_k * s(y_{k+1} - theta_k^T x_k)`` with
step ``a_k = a0 / k``. If the candidate leaves the ball of radius
``M(sigma_k)`` the estimate is reset to the origin and ``sigma`` grows by one,
so the bound expands until the iterates stay inside it.

The scalar ``s`` is the loss derivative for smooth losses, ``sgn`` for the
L1 rule and ``gamma`` / ``gamma - 1`` for the quantile rule. All three are
the same compiled kernel :func:`convexid.losses._deriv`.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .criterion import Dataset
from .errors import ArgumentError, ConfigurationError, DataError
from .losses import LossKind, LossSpec, _deriv, growth_exponent


class BoundKind(enum.Enum):
    POWER_LAW = "PowerLaw"
    GEOMETRIC = "Geometric"


@dataclass(frozen=True)
class Schedule:
    """Step sizes ``a_k = a0 / k`` and the truncation bounds ``M(sigma)``.

    ``POWER_LAW``: ``M(sigma) = m0 * sigma ** (1 / (1 + 2 l))``.
    ``GEOMETRIC``: ``M(sigma) = m0 * r ** (sigma - 1)``.

    The power-law scale defaults to ``m0 = 3``. With ``m0 = 1`` the bound
    stays below the norm of typical parameter vectors for many truncations,
    and each reset restarts the recursion with an already small step. A
    scale far above ``|theta*|`` lets early iterates drift, and with
    ``a_k = 1/k`` that excursion decays slowly along weakly excited
    directions. Raise ``m0`` for systems with larger parameters.
    """

    bound_kind: BoundKind = BoundKind.GEOMETRIC
    a0: float = 1.0
    m0: float = 10.0
    r: float = 2.0
    l: float = 1.0

    def __post_init__(self):
        if not isinstance(self.bound_kind, BoundKind):
            object.__setattr__(self, "bound_kind", BoundKind(self.bound_kind))
        if not (self.a0 > 0 and math.isfinite(self.a0)):
            raise ConfigurationError(f"a0 must be positive, got {self.a0}")
        if not (self.m0 > 0 and math.isfinite(self.m0)):
            raise ConfigurationError(f"m0 must be positive, got {self.m0}")
        if self.bound_kind is BoundKind.GEOMETRIC and not self.r > 1:
            raise ConfigurationError(f"geometric growth factor must exceed 1, got {self.r}")
        if self.bound_kind is BoundKind.POWER_LAW and not self.l > 0:
            raise ConfigurationError(f"power-law exponent needs l > 0, got {self.l}")

    @classmethod
    def power_law(cls, l: float, m0: float = 3.0, a0: float = 1.0) -> "Schedule":
        return cls(BoundKind.POWER_LAW, a0=a0, m0=m0, l=l)

    @classmethod
    def geometric(cls, m0: float = 10.0, r: float = 2.0, a0: float = 1.0) -> "Schedule":
        return cls(BoundKind.GEOMETRIC, a0=a0, m0=m0, r=r)

    @property
    def _code(self) -> int:
        return 0 if self.bound_kind is BoundKind.POWER_LAW else 1

    @property
    def _shape(self) -> float:
        # exponent for the power law, growth factor for the geometric law
        return 1.0 / (1.0 + 2.0 * self.l) if self.bound_kind is BoundKind.POWER_LAW else self.r


def default_schedule(spec: LossSpec, a0: float = 1.0) -> Schedule:
    """Power law with the loss's growth exponent for smooth losses, geometric otherwise."""
    if spec.is_smooth:
        return Schedule.power_law(growth_exponent(spec), a0=a0)
    return Schedule.geometric(a0=a0)


class RuleKind(enum.Enum):
    SMOOTH_GRADIENT = "SmoothGradient"
    SIGN_LAD = "SignLAD"
    QUANTILE_ASYMMETRIC = "QuantileAsymmetric"


@dataclass(frozen=True)
class UpdateRule:
    kind: RuleKind
    spec: LossSpec

    def __post_init__(self):
        if not isinstance(self.kind, RuleKind):
            object.__setattr__(self, "kind", RuleKind(self.kind))
        if self.kind is RuleKind.SMOOTH_GRADIENT and not self.spec.is_smooth:
            raise ConfigurationError(f"SmoothGradient needs a smooth loss, got {self.spec}")
        if self.kind is RuleKind.SIGN_LAD and not (self.spec.kind is LossKind.LL and self.spec.l == 1.0):
            raise ConfigurationError(f"SignLAD is the L1 rule, got {self.spec}")
        if self.kind is RuleKind.QUANTILE_ASYMMETRIC and self.spec.kind is not LossKind.QUANTILE:
            raise ConfigurationError(f"QuantileAsymmetric needs a quantile loss, got {self.spec}")

    @classmethod
    def for_loss(cls, spec: LossSpec) -> "UpdateRule":
        if spec.kind is LossKind.QUANTILE:
            return cls(RuleKind.QUANTILE_ASYMMETRIC, spec)
        if spec.is_smooth:
            return cls(RuleKind.SMOOTH_GRADIENT, spec)
        return cls(RuleKind.SIGN_LAD, spec)

    @classmethod
    def sign_lad(cls) -> "UpdateRule":
        return cls(RuleKind.SIGN_LAD, LossSpec.ll(1.0))


@dataclass(frozen=True, eq=False)
class RecursiveState:
    """Estimate ``theta_k``, truncation counter ``sigma_k`` and step index ``k``."""

    theta: np.ndarray
    sigma: int = 1
    k: int = 1
    truncation_log: tuple[int, ...] = ()

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).reshape(-1)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if self.sigma < 1 or self.k < 1:
            raise ArgumentError("sigma and k start at 1")

    @classmethod
    def initial(cls, d: int | None = None, theta1=None) -> "RecursiveState":
        if theta1 is None:
            if d is None:
                raise ArgumentError("need d or theta1")
            theta1 = np.zeros(d)
        theta1 = np.asarray(theta1, dtype=float)
        if not np.all(np.isfinite(theta1)):
            raise DataError("initial estimate must be finite")
        return cls(theta1)

    def __eq__(self, other):
        if not isinstance(other, RecursiveState):
            return NotImplemented
        return (
            np.array_equal(self.theta, other.theta)
            and self.sigma == other.sigma
            and self.k == other.k
            and self.truncation_log == other.truncation_log
        )

    __hash__ = None


# ------------------------------------------------------------------ kernel


@njit(cache=True)
def _bound(bkind, m0, shape, sigma):
    if bkind == 0:
        return m0 * sigma**shape
    return m0 * shape ** (sigma - 1.0)


@njit(cache=True)
def _run(X, Y, code, p, a0, bkind, m0, shape, theta, sigma, k, record_every, rec_k, rec_theta, rec_sigma, trunc):
    # the update is written out in the loop body; a helper returning the
    # truncation flag ran about four times slower
    n, d = X.shape
    rec_k[0] = k
    rec_theta[0, :] = theta
    rec_sigma[0] = sigma
    n_rec = 1
    n_trunc = 0
    bound = _bound(bkind, m0, shape, sigma)
    countdown = record_every
    for i in range(n):
        r = Y[i]
        for j in range(d):
            r -= theta[j] * X[i, j]
        scale = (a0 / k) * _deriv(code, p, r)
        sq = 0.0
        for j in range(d):
            c = theta[j] + scale * X[i, j]
            theta[j] = c
            sq += c * c
        if math.sqrt(sq) > bound:
            for j in range(d):
                theta[j] = 0.0
            trunc[n_trunc] = k
            n_trunc += 1
            sigma += 1
            bound = _bound(bkind, m0, shape, sigma)
        k += 1
        countdown -= 1
        if countdown == 0 or i == n - 1:
            countdown = record_every
            rec_k[n_rec] = k
            rec_theta[n_rec, :] = theta
            rec_sigma[n_rec] = sigma
            n_rec += 1
    return sigma, k, n_rec, n_trunc


@njit(cache=True)
def _first_bad_row(X, Y):
    for i in range(X.shape[0]):
        if not math.isfinite(Y[i]):
            return i
        for j in range(X.shape[1]):
            if not math.isfinite(X[i, j]):
                return i
    return -1


# ------------------------------------------------------------------ API


def truncation_bound(sched: Schedule, sigma: int) -> float:
    if sigma < 1:
        raise ArgumentError(f"sigma must be >= 1, got {sigma}")
    return float(_bound(sched._code, sched.m0, sched._shape, float(sigma)))


def step_size(sched: Schedule, k: int) -> float:
    return sched.a0 / k


def sa_step(
    state: RecursiveState,
    rule: UpdateRule,
    sched: Schedule,
    x,
    y: float,
    step: float | None = None,
) -> RecursiveState:
    """Advance the recursion by one observation ``(x_k, y_{k+1})``.

    ``step`` overrides ``a_k``; it exists for the quantile / scaled-LAD
    equivalence and is not needed otherwise.
    """
    x = np.ascontiguousarray(x, dtype=float).reshape(-1)
    if x.shape[0] != state.theta.shape[0]:
        raise ArgumentError(f"x has length {x.shape[0]}, theta has {state.theta.shape[0]}")
    y = float(y)
    if not (np.all(np.isfinite(x)) and math.isfinite(y)):
        raise DataError(f"non-finite observation at k={state.k}")
    a_k = sched.a0 / state.k if step is None else float(step)
    theta = state.theta.copy()
    rec = np.empty(2, dtype=np.int64)
    # one pass of the batch kernel with k = 1 so that its step a0 / k is a_k exactly
    _, _, _, n_trunc = _run(
        x.reshape(1, -1), np.array([y]), rule.spec.code, rule.spec.param, a_k,
        sched._code, sched.m0, sched._shape, theta, state.sigma, 1,
        1, rec, np.empty((2, x.shape[0])), rec, rec,
    )
    if n_trunc:
        return RecursiveState(theta, state.sigma + 1, state.k + 1, state.truncation_log + (state.k,))
    return RecursiveState(theta, state.sigma, state.k + 1, state.truncation_log)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded ``(k, theta_k, sigma_k)``; the first record is the starting state."""

    k: np.ndarray
    theta: np.ndarray
    sigma: np.ndarray

    def __len__(self):
        return self.k.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield int(self.k[i]), self.theta[i], int(self.sigma[i])

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            np.array_equal(self.k, other.k)
            and np.array_equal(self.theta, other.theta)
            and np.array_equal(self.sigma, other.sigma)
        )

    __hash__ = None


def run_recursive(
    data: Dataset,
    rule: UpdateRule,
    sched: Schedule,
    theta1=None,
    record_every: int = 1,
    state: RecursiveState | None = None,
) -> tuple[Trajectory, RecursiveState]:
    """Apply :func:`sa_step` over the rows of ``data`` in order.

    Starts from ``state`` if given (to continue a run), otherwise from
    ``theta1`` (default zero) with ``sigma = 1``, ``k = 1``.
    """
    if record_every < 1:
        raise ArgumentError("record_every must be >= 1")
    if state is None:
        state = RecursiveState.initial(data.d, theta1)
    if state.theta.shape[0] != data.d:
        raise ArgumentError(f"theta has length {state.theta.shape[0]}, data has d={data.d}")
    bad = _first_bad_row(data.X, data.y)
    if bad >= 0:
        raise DataError(f"non-finite observation in row {bad + 1}")

    n = data.n
    n_slots = n // record_every + 2
    rec_k = np.empty(n_slots, dtype=np.int64)
    rec_theta = np.empty((n_slots, data.d))
    rec_sigma = np.empty(n_slots, dtype=np.int64)
    trunc = np.empty(n, dtype=np.int64)
    theta = state.theta.copy()
    sigma, k, n_rec, n_trunc = _run(
        data.X, data.y, rule.spec.code, rule.spec.param, sched.a0,
        sched._code, sched.m0, sched._shape, theta, state.sigma, state.k,
        record_every, rec_k, rec_theta, rec_sigma, trunc,
    )
    final = RecursiveState(theta, int(sigma), int(k), state.truncation_log + tuple(int(t) for t in trunc[:n_trunc]))
    traj = Trajectory(rec_k[:n_rec].copy(), rec_theta[:n_rec].copy(), rec_sigma[:n_rec].copy())
    return traj, final


def quantile_as_scaled_lad(rule: UpdateRule, residual_sign: int, a_k: float) -> float:
    """Step that makes the L1 rule reproduce a quantile step.

    ``a_k * gamma`` for a nonnegative residual, ``a_k * (1 - gamma)`` otherwise.
    """
    if rule.kind is not RuleKind.QUANTILE_ASYMMETRIC:
        raise ArgumentError("only defined for the quantile rule")
    gamma = rule.spec.gamma
    return a_k * gamma if residual_sign >= 0 else a_k * (1.0 - gamma)


def write_trajectory_csv(traj: Trajectory, path, theta_star=None) -> None:
    d = traj.theta.shape[1]
    header = ["k", *[f"theta_{j + 1}" for j in range(d)], "sigma"]
    if theta_star is not None:
        theta_star = np.asarray(theta_star, dtype=float)
        header.append("error")
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, theta, sigma in traj:
            row = [k, *(repr(float(v)) for v in theta), sigma]
            if theta_star is not None:
                row.append(repr(float(np.linalg.norm(theta - theta_star))))
            w.writerow(row)
