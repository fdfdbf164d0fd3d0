"""Convex loss family used by the identification criteria.

Four families are supported: ``|t|**l`` (l >= 1), Huber, log-cosh and the
quantile (pinball) loss. Scalar kernels are compiled with numba so the batch
solver and the recursive estimators evaluate exactly the same arithmetic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigurationError


class LossKind(enum.Enum):
    LL = "Ll"
    HUBER = "Huber"
    LOGCOSH = "LogCosh"
    QUANTILE = "Quantile"


# integer codes understood by the compiled kernels
KIND_CODE = {LossKind.LL: 0, LossKind.HUBER: 1, LossKind.LOGCOSH: 2, LossKind.QUANTILE: 3}


class Smoothness(enum.Enum):
    SMOOTH_EVERYWHERE = "SmoothEverywhere"
    KINK_AT_ZERO = "KinkAtZero"


@dataclass(frozen=True)
class SmoothnessClass:
    kind: Smoothness
    kink_points: tuple[float, ...] = ()


@dataclass(frozen=True)
class LossSpec:
    """A member of the convex loss family.

    Only the parameter belonging to ``kind`` is meaningful: ``l`` for
    :attr:`LossKind.LL`, ``delta`` for Huber and ``gamma`` for the quantile
    loss. Construction validates the parameter.
    """

    kind: LossKind
    l: float = 2.0
    delta: float = 1.0
    gamma: float = 0.5
    _param: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.kind, LossKind):
            object.__setattr__(self, "kind", LossKind(self.kind))
        if self.kind is LossKind.LL:
            if not (math.isfinite(self.l) and self.l >= 1.0):
                raise ConfigurationError(f"Ll loss needs l >= 1, got {self.l}")
            param = float(self.l)
        elif self.kind is LossKind.HUBER:
            if not (math.isfinite(self.delta) and self.delta > 0.0):
                raise ConfigurationError(f"Huber loss needs delta > 0, got {self.delta}")
            param = float(self.delta)
        elif self.kind is LossKind.QUANTILE:
            if not (0.0 < self.gamma < 1.0):
                raise ConfigurationError(f"quantile loss needs 0 < gamma < 1, got {self.gamma}")
            param = float(self.gamma)
        else:
            param = 0.0
        object.__setattr__(self, "_param", param)

    # convenience constructors
    @classmethod
    def ll(cls, l: float) -> "LossSpec":
        return cls(LossKind.LL, l=l)

    @classmethod
    def huber(cls, delta: float = 1.0) -> "LossSpec":
        return cls(LossKind.HUBER, delta=delta)

    @classmethod
    def logcosh(cls) -> "LossSpec":
        return cls(LossKind.LOGCOSH)

    @classmethod
    def quantile(cls, gamma: float) -> "LossSpec":
        return cls(LossKind.QUANTILE, gamma=gamma)

    @property
    def code(self) -> int:
        return KIND_CODE[self.kind]

    @property
    def param(self) -> float:
        """The single numeric parameter passed to the compiled kernels."""
        return self._param

    @property
    def smoothness(self) -> SmoothnessClass:
        return smoothness_class(self)

    @property
    def is_smooth(self) -> bool:
        return self.smoothness.kind is Smoothness.SMOOTH_EVERYWHERE

    def __str__(self) -> str:
        return format_loss(self)


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def _value(code, p, t):
    a = abs(t)
    if code == 0:
        if p == 1.0:
            return a
        if p == 2.0:
            return a * a
        if p == 1.5:
            return a * math.sqrt(a)
        return a**p
    if code == 1:
        if a <= p:
            return 0.5 * a * a
        return p * a - 0.5 * p * p
    if code == 2:
        if a > 20.0:
            # log cosh t = |t| + log((1 + exp(-2|t|)) / 2), no overflow
            return a + math.log1p(math.exp(-2.0 * a)) - math.log(2.0)
        return math.log(math.cosh(t))
    if t >= 0.0:
        return p * t
    return (p - 1.0) * t


@njit(cache=True)
def _tanh(t):
    # libm tanh sits on the recursion's critical path and is slow; this form
    # is within ~12 ulp of it
    a = abs(t)
    if a < 0.01:
        a2 = a * a
        r = a * (1.0 - a2 * (1.0 / 3.0 - a2 * (2.0 / 15.0 - a2 * (17.0 / 315.0))))
    else:
        e = math.exp(-2.0 * a)
        r = (1.0 - e) / (1.0 + e)
    return r if t >= 0.0 else -r


@njit(cache=True)
def _deriv(code, p, t):
    # kinks take the t >= 0 branch (sgn(0) = 1)
    if code == 0:
        if p == 1.0:
            return 1.0 if t >= 0.0 else -1.0
        if p == 2.0:
            return 2.0 * t
        if p == 1.5:
            return 1.5 * math.sqrt(t) if t >= 0.0 else -1.5 * math.sqrt(-t)
        if t >= 0.0:
            return p * t ** (p - 1.0)
        return -p * (-t) ** (p - 1.0)
    if code == 1:
        if abs(t) <= p:
            return t
        return p if t >= 0.0 else -p
    if code == 2:
        return _tanh(t)
    if t >= 0.0:
        return p
    return p - 1.0


@njit(cache=True)
def _value_array(code, p, t):
    out = np.empty(t.shape[0])
    for i in range(t.shape[0]):
        out[i] = _value(code, p, t[i])
    return out


@njit(cache=True)
def _deriv_array(code, p, t):
    out = np.empty(t.shape[0])
    for i in range(t.shape[0]):
        out[i] = _deriv(code, p, t[i])
    return out


def _apply(kernel, array_kernel, spec, t):
    if np.ndim(t) == 0:
        return float(kernel(spec.code, spec.param, float(t)))
    arr = np.asarray(t, dtype=float)
    flat = np.ascontiguousarray(arr.ravel())
    return array_kernel(spec.code, spec.param, flat).reshape(arr.shape)


# ---------------------------------------------------------------- public API


def loss_value(spec: LossSpec, t):
    """Evaluate the loss at residual(s) ``t``; scalars in, scalars out."""
    return _apply(_value, _value_array, spec, t)


def loss_subgradient(spec: LossSpec, t):
    """Derivative of the loss, or the ``t >= 0`` one-sided slope at a kink.

    The selection at the kink matches the recursive update rules: the L1
    loss returns +1 and the quantile loss returns ``gamma`` at ``t = 0``.
    """
    return _apply(_deriv, _deriv_array, spec, t)


def growth_exponent(spec: LossSpec) -> float:
    """Smallest ``l`` with ``loss(t) <= c (|t|**l + 1)``."""
    if spec.kind is LossKind.LL:
        return float(spec.l)
    return 1.0


def smoothness_class(spec: LossSpec) -> SmoothnessClass:
    if spec.kind is LossKind.QUANTILE or (spec.kind is LossKind.LL and spec.l == 1.0):
        return SmoothnessClass(Smoothness.KINK_AT_ZERO, (0.0,))
    return SmoothnessClass(Smoothness.SMOOTH_EVERYWHERE)


def parse_loss(text: str) -> LossSpec:
    """Parse ``l1``, ``l2``, ``l1.5``, ``huber:<delta>``, ``logcosh`` or ``quantile:<gamma>``."""
    s = text.strip().lower()
    try:
        if s == "logcosh":
            return LossSpec.logcosh()
        if s.startswith("huber:"):
            return LossSpec.huber(float(s.split(":", 1)[1]))
        if s.startswith("quantile:"):
            return LossSpec.quantile(float(s.split(":", 1)[1]))
        if s.startswith("l") and len(s) > 1:
            return LossSpec.ll(float(s[1:]))
    except ValueError as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"cannot parse loss {text!r}") from exc
    raise ConfigurationError(f"cannot parse loss {text!r}")


def _num(x: float) -> str:
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def format_loss(spec: LossSpec) -> str:
    """Inverse of :func:`parse_loss`."""
    if spec.kind is LossKind.LL:
        return f"l{_num(spec.l)}"
    if spec.kind is LossKind.HUBER:
        return f"huber:{_num(spec.delta)}"
    if spec.kind is LossKind.QUANTILE:
        return f"quantile:{_num(spec.gamma)}"
    return "logcosh"
