import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from convexid import ConfigurationError, LossKind, LossSpec, growth_exponent, loss_subgradient, loss_value, parse_loss
from convexid.losses import Smoothness, format_loss, smoothness_class

from conftest import ALL_LOSSES, KINKED_LOSSES, SMOOTH_LOSSES

reals = st.floats(-50, 50, allow_nan=False)
ids = [str(s) for s in ALL_LOSSES]


# --- worked values -------------------------------------------------------


@pytest.mark.parametrize(
    "spec, t, expected",
    [
        (LossSpec.huber(1.0), 0.5, 0.125),
        (LossSpec.quantile(0.4), -2.0, 1.2),
        (LossSpec.ll(2.0), 3.0, 9.0),
        (LossSpec.ll(1.0), -2.5, 2.5),
        (LossSpec.huber(1.0), 3.0, 2.5),
        (LossSpec.quantile(0.4), 2.0, 0.8),
    ],
)
def test_loss_value_examples(spec, t, expected):
    assert loss_value(spec, t) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("spec", ALL_LOSSES, ids=ids)
def test_value_at_zero(spec):
    assert loss_value(spec, 0.0) == 0.0


@pytest.mark.parametrize(
    "spec, t, expected",
    [
        (LossSpec.logcosh(), 1.0, 0.7615941559557649),
        (LossSpec.huber(1.0), 3.0, 1.0),
        (LossSpec.huber(1.0), -3.0, -1.0),
        (LossSpec.ll(1.0), 0.0, 1.0),
        (LossSpec.quantile(0.4), -0.1, -0.6),
        (LossSpec.quantile(0.4), 0.0, 0.4),
        (LossSpec.ll(2.0), -1.5, -3.0),
    ],
)
def test_subgradient_examples(spec, t, expected):
    assert loss_subgradient(spec, t) == pytest.approx(expected, rel=1e-12)


def test_logcosh_tanh_oracle():
    # independent high-precision evaluation
    import mpmath

    mpmath.mp.dps = 40
    for t in (-7.0, -0.3, 1.0, 2.5, 19.0):
        assert loss_subgradient(LossSpec.logcosh(), t) == pytest.approx(float(mpmath.tanh(t)), rel=1e-14)
        assert loss_value(LossSpec.logcosh(), t) == pytest.approx(float(mpmath.log(mpmath.cosh(t))), rel=1e-13)


def test_logcosh_no_overflow():
    spec = LossSpec.logcosh()
    for t in (25.0, 710.0, 1e6, -1e300):
        v = loss_value(spec, t)
        assert math.isfinite(v)
        assert v == pytest.approx(abs(t) - math.log(2.0), rel=1e-15)


@pytest.mark.parametrize(
    "spec, expected",
    [(LossSpec.ll(2.0), 2.0), (LossSpec.ll(1.5), 1.5), (LossSpec.huber(1.0), 1.0),
     (LossSpec.logcosh(), 1.0), (LossSpec.quantile(0.3), 1.0)],
)
def test_growth_exponent(spec, expected):
    assert growth_exponent(spec) == expected


def test_smoothness_classes():
    assert smoothness_class(LossSpec.ll(1.0)).kind is Smoothness.KINK_AT_ZERO
    assert smoothness_class(LossSpec.ll(1.0)).kink_points == (0.0,)
    assert smoothness_class(LossSpec.quantile(0.4)).kink_points == (0.0,)
    for s in (LossSpec.ll(1.01), LossSpec.huber(2.0), LossSpec.logcosh()):
        assert smoothness_class(s).kind is Smoothness.SMOOTH_EVERYWHERE
        assert smoothness_class(s).kink_points == ()


@pytest.mark.parametrize(
    "kwargs",
    [dict(kind=LossKind.LL, l=0.5), dict(kind=LossKind.HUBER, delta=0.0), dict(kind=LossKind.HUBER, delta=-1),
     dict(kind=LossKind.QUANTILE, gamma=0.0), dict(kind=LossKind.QUANTILE, gamma=1.0),
     dict(kind=LossKind.LL, l=float("nan"))],
)
def test_invalid_specs(kwargs):
    with pytest.raises(ConfigurationError):
        LossSpec(**kwargs)


def test_array_evaluation_matches_scalar():
    t = np.linspace(-5, 5, 41).reshape(41, 1)
    for spec in ALL_LOSSES:
        v = loss_value(spec, t)
        assert v.shape == t.shape
        assert all(v[i, 0] == loss_value(spec, float(t[i, 0])) for i in range(41))


# --- parsing -------------------------------------------------------------


@pytest.mark.parametrize(
    "text, spec",
    [("l1", LossSpec.ll(1)), ("l2", LossSpec.ll(2)), ("l1.5", LossSpec.ll(1.5)), ("L3", LossSpec.ll(3)),
     ("huber:1", LossSpec.huber(1.0)), ("huber:0.25", LossSpec.huber(0.25)), ("logcosh", LossSpec.logcosh()),
     ("quantile:0.4", LossSpec.quantile(0.4))],
)
def test_parse(text, spec):
    assert parse_loss(text) == spec


@pytest.mark.parametrize("text", ["", "l", "l0.5", "huber", "huber:x", "quantile:1.2", "tukey", "logcosh:1"])
def test_parse_rejects(text):
    with pytest.raises(ConfigurationError):
        parse_loss(text)


@pytest.mark.parametrize("spec", ALL_LOSSES, ids=ids)
def test_format_round_trip(spec):
    assert parse_loss(format_loss(spec)) == spec


# --- properties ----------------------------------------------------------


@pytest.mark.parametrize("spec", ALL_LOSSES, ids=ids)
def test_strict_minimum_at_zero(spec):
    t = np.linspace(-10, 10, 1001)
    t = t[t != 0]
    assert np.all(loss_value(spec, t) > 0.0)


@pytest.mark.parametrize("spec", ALL_LOSSES, ids=ids)
def test_convexity_random_triples(spec, rng):
    a, b = rng.uniform(-20, 20, (2, 1000))
    lam = rng.uniform(0, 1, 1000)
    lhs = loss_value(spec, lam * a + (1 - lam) * b)
    rhs = lam * loss_value(spec, a) + (1 - lam) * loss_value(spec, b)
    assert np.all(lhs <= rhs + 1e-12 * (1 + np.abs(rhs)))


@pytest.mark.parametrize("spec", ALL_LOSSES, ids=ids)
def test_subgradient_inequality_random(spec, rng):
    y, t = rng.uniform(-20, 20, (2, 1000))
    gap = loss_value(spec, y) - loss_value(spec, t) - loss_subgradient(spec, t) * (y - t)
    assert np.all(gap >= -1e-12 * (1 + np.abs(loss_value(spec, y))))


@pytest.mark.parametrize("spec", ALL_LOSSES, ids=ids)
@given(y=reals, t=reals)
def test_subgradient_inequality_property(spec, y, t):
    gap = loss_value(spec, y) - loss_value(spec, t) - loss_subgradient(spec, t) * (y - t)
    assert gap >= -1e-12 * (1 + abs(loss_value(spec, y)))


@pytest.mark.parametrize("spec", ALL_LOSSES, ids=ids)
def test_finite_difference(spec, rng):
    t = rng.uniform(-10, 10, 1000)
    if not spec.is_smooth:
        t = t[np.abs(t) > 1e-3]
    h = 1e-6
    fd = (loss_value(spec, t + h) - loss_value(spec, t - h)) / (2 * h)
    g = loss_subgradient(spec, t)
    assert np.max(np.abs(g - fd) / (1 + np.abs(g))) < 1e-6


@pytest.mark.parametrize("spec", SMOOTH_LOSSES, ids=[str(s) for s in SMOOTH_LOSSES])
def test_smooth_losses_have_zero_slope_at_zero(spec):
    assert loss_subgradient(spec, 0.0) == 0.0


@pytest.mark.parametrize("spec", KINKED_LOSSES, ids=[str(s) for s in KINKED_LOSSES])
def test_kink_selection_is_right_slope(spec):
    assert loss_subgradient(spec, 0.0) == loss_subgradient(spec, 1e-9)


@pytest.mark.parametrize("spec", ALL_LOSSES, ids=ids)
def test_growth_bound(spec):
    l = growth_exponent(spec)
    assert l >= 1
    t = np.linspace(-10, 10, 2001)
    c = 2 * np.max(loss_value(spec, t) / (np.abs(t) ** l + 1))
    wide = np.linspace(-100, 100, 20001)
    assert np.all(np.abs(loss_value(spec, wide)) <= c * (np.abs(wide) ** l + 1))
