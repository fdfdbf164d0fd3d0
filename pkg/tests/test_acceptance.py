"""Acceptance criteria, each checked at its stated tolerance.

Every check records a verdict line (printed in the terminal summary) before
asserting, so the report lists all criteria even when some fail.
"""

import time

import numpy as np
import pytest
from numba import njit

from convexid import (
    ArxConfig,
    BatchSolverConfig,
    Dataset,
    HyperGrid,
    InputModel,
    KernelHyper,
    KernelKind,
    LossSpec,
    NoiseModel,
    OutlierConfig,
    RecursiveState,
    ReglsConfig,
    Schedule,
    UpdateRule,
    build_regressors,
    default_schedule,
    empirical_risk,
    empirical_risk_subgradient,
    fit_batch,
    inject_outliers,
    kernel_matrix,
    parse_loss,
    quantile_as_scaled_lad,
    regls_fit,
    run_recursive,
    sa_step,
    simulate_arx,
    truncation_bound,
    tune_hyperparameters,
)
from convexid.bench import error_metric
from convexid.losses import _value
from convexid.simulate import derive_seed

from conftest import ACCEPTANCE, THETA_STAR

LOSSES = ["l1", "l1.5", "l2", "huber:1", "logcosh", "quantile:0.4"]
SMOOTH = ["l1.5", "l2", "huber:1", "logcosh"]
N_RUNS = 100
# master seeds fixed once; run index i uses derive_seed(seed, i)
EX1_SEED = 20240601
EX1_OUTLIER_SEED = 20240602
EX2_SEED = 20261016
BATCH = BatchSolverConfig(max_iters=2000)

pytestmark = pytest.mark.slow


def record(key, ok, detail):
    ACCEPTANCE[key] = (bool(ok), detail)
    return bool(ok)


def example1(run, master=EX1_SEED, n=2000):
    raw, _ = simulate_arx(
        ArxConfig(input_model=InputModel.uniform(-0.5, 0.5), noise_model=NoiseModel.gaussian(0, 0.1),
                  n_samples=n + 2, seed=derive_seed(master, run))
    )
    return build_regressors(raw)


def example2(run, n=10000):
    raw, _ = simulate_arx(
        ArxConfig(input_model=InputModel.gaussian(0, 1), noise_model=NoiseModel.gaussian(0, 0.1),
                  n_samples=n + 2, seed=derive_seed(EX2_SEED, run))
    )
    return build_regressors(raw)


@pytest.fixture(scope="module")
def ex2_runs():
    """Final states of every loss on 100 Example-2 runs of 10000 steps."""
    out = {name: [] for name in LOSSES}
    for i in range(1, N_RUNS + 1):
        data = example2(i)
        for name in LOSSES:
            spec = parse_loss(name)
            _, final = run_recursive(data, UpdateRule.for_loss(spec), default_schedule(spec), record_every=1000)
            out[name].append(final)
    return out


# --- 1 ---------------------------------------------------------------------


def test_criterion_1_recursive_consistency(ex2_runs):
    t0 = time.perf_counter()
    worst = {n: float(np.max(np.abs(ex2_runs[n][0].theta - THETA_STAR))) for n in LOSSES}
    medians = {n: float(np.median([error_metric(s.theta, THETA_STAR) for s in ex2_runs[n]])) for n in LOSSES}
    single_ok = all(v <= 0.05 for v in worst.values())
    mc_ok = all(v <= 0.05 for v in medians.values())
    record("1a", single_ok, "single run, max |theta_j - theta*_j| per loss: "
           + ", ".join(f"{n}={v:.4f}" for n, v in worst.items()) + " (<= 0.05)")
    record("1b", mc_ok, "median error over 100 runs: " + ", ".join(f"{n}={v:.4f}" for n, v in medians.items()) + " (<= 0.05)")
    assert single_ok and mc_ok
    assert time.perf_counter() - t0 < 60


# --- 2, 3 ------------------------------------------------------------------


@pytest.fixture(scope="module")
def ex1_errors():
    errs = {n: [] for n in LOSSES}
    for i in range(1, N_RUNS + 1):
        data = example1(i)
        for n in LOSSES:
            errs[n].append(error_metric(fit_batch(data, parse_loss(n), BATCH).theta, THETA_STAR))
    return {n: float(np.median(v)) for n, v in errs.items()}


def test_criterion_2_batch_consistency(ex1_errors):
    ok = all(v <= 0.1 for v in ex1_errors.values())
    record("2", ok, "Example-1 median batch error: " + ", ".join(f"{n}={v:.4f}" for n, v in ex1_errors.items()) + " (<= 0.1)")
    assert ok


def test_criterion_3_robustness_ordering():
    names = ["l2", "l1", "huber:1", "quantile:0.4"]
    errs = {n: [] for n in names}
    ocfg = OutlierConfig(fraction=0.01, alpha=15, n=20)
    for i in range(1, N_RUNS + 1):
        data = inject_outliers(example1(i, master=EX1_OUTLIER_SEED), ocfg)
        for n in names:
            errs[n].append(error_metric(fit_batch(data, parse_loss(n), BATCH).theta, THETA_STAR))
    med = {n: float(np.median(v)) for n, v in errs.items()}
    ok = all(med[n] < med["l2"] for n in names[1:])
    record("3", ok, "median error with 1% outliers: " + ", ".join(f"{n}={v:.4f}" for n, v in med.items())
           + " (robust losses < l2)")
    assert ok


# --- 4 ---------------------------------------------------------------------


def test_criterion_4_gradient_and_zero_point():
    rng = np.random.default_rng(4)
    worst = 0.0
    h = 1e-6
    for name in SMOOTH:
        spec = parse_loss(name)
        for _ in range(100):
            n, d = int(rng.integers(5, 80)), int(rng.integers(1, 5))
            X = rng.normal(size=(n, d))
            data = Dataset(X, X @ rng.normal(size=d) + rng.normal(size=n))
            theta = rng.normal(size=d) * 2
            g = empirical_risk_subgradient(data, spec, theta)
            fd = np.array([
                (empirical_risk(data, spec, theta + h * e) - empirical_risk(data, spec, theta - h * e)) / (2 * h)
                for e in np.eye(d)
            ])
            worst = max(worst, float(np.linalg.norm(g - fd) / (1 + np.linalg.norm(g))))
    grad_ok = worst < 1e-6
    record("4a", grad_ok, f"max relative gradient/finite-difference gap over 400 cases = {worst:.2e} (< 1e-6)")

    # symmetric noise: theta* is the zero of the expected subgradient; the
    # quantile rule's zero sits at the noise gamma-quantile, so gamma = 0.5 here
    raw, _ = simulate_arx(ArxConfig(input_model=InputModel.gaussian(0, 1), n_samples=100_000, seed=derive_seed(EX2_SEED, 0)))
    data = build_regressors(raw)
    norms = {n: float(np.linalg.norm(empirical_risk_subgradient(data, parse_loss(n), THETA_STAR)))
             for n in ["l1", "l1.5", "l2", "huber:1", "logcosh", "quantile:0.5"]}
    zero_ok = all(v <= 0.02 for v in norms.values())
    record("4b", zero_ok, "|subgradient at theta*| with N=1e5: " + ", ".join(f"{n}={v:.4f}" for n, v in norms.items()) + " (<= 0.02)")
    assert grad_ok and zero_ok


# --- 5 ---------------------------------------------------------------------


@njit
def _grid_min_2d(X, y, code, p, lo, step, m):
    best = np.inf
    n = X.shape[0]
    for i in range(m):
        a = lo + i * step
        for j in range(m):
            b = lo + j * step
            s = 0.0
            for k in range(n):
                s += _value(code, p, y[k] - a * X[k, 0] - b * X[k, 1])
            s /= n
            if s < best:
                best = s
    return best


def test_criterion_5_oracle_equivalence():
    rng = np.random.default_rng(5)
    worst = -np.inf
    for name in LOSSES:
        spec = parse_loss(name)
        for _ in range(20):
            X = rng.uniform(-1, 1, (50, 2))
            y = X @ rng.uniform(-2.5, 2.5, 2) + rng.laplace(scale=0.4, size=50)
            data = Dataset(X, y)
            oracle = _grid_min_2d(data.X, data.y, spec.code, spec.param, -3.0, 0.01, 601)
            worst = max(worst, fit_batch(data, spec).risk - oracle)
    ones = lambda *v: Dataset(np.ones((len(v), 1)), np.array(v, float))
    lad = fit_batch(ones(1, 2, 9), parse_loss("l1")).theta[0]
    q = fit_batch(ones(1, 2, 3, 4, 5), parse_loss("quantile:0.4")).theta[0]
    ok = worst <= 1e-4 and lad == 2.0 and q == 2.0
    record("5", ok, f"max(fit risk - grid oracle) over 120 instances = {worst:.2e} (<= 1e-4); "
           f"LAD median = {float(lad)!r}, quantile order statistic = {float(q)!r} (both 2.0)")
    assert ok


# --- 6 ---------------------------------------------------------------------


def test_criterion_6_saawet_mechanics(ex2_runs):
    # bound invariant on every step, stepping one observation at a time
    violations = 0
    steps = 0
    for name in LOSSES:
        spec = parse_loss(name)
        rule = UpdateRule.for_loss(spec)
        for sched in (default_schedule(spec), Schedule(default_schedule(spec).bound_kind, m0=0.2, r=1.5, l=spec.l)):
            state = RecursiveState.initial(4)
            for x, yv in example2(1, n=2000).rows:
                state = sa_step(state, rule, sched, x, yv)
                steps += 1
                if state.theta.any() and np.linalg.norm(state.theta) > truncation_bound(sched, state.sigma):
                    violations += 1
    bound_ok = violations == 0
    record("6a", bound_ok, f"bound invariant violations: {violations} of {steps} steps")

    rng = np.random.default_rng(6)
    lad = UpdateRule.sign_lad()
    sched = Schedule.geometric(m0=1e300)
    mismatches = 0
    for _ in range(10_000):
        d = int(rng.integers(1, 6))
        rule = UpdateRule.for_loss(LossSpec.quantile(float(rng.uniform(0.01, 0.99))))
        theta, x, yv = rng.normal(size=d) * 3, rng.normal(size=d) * 3, float(rng.normal() * 3)
        state = RecursiveState(theta, k=int(rng.integers(1, 100_000)))
        r = yv
        for t, v in zip(theta, x):
            r -= t * v
        step = quantile_as_scaled_lad(rule, 1 if r >= 0 else -1, sched.a0 / state.k)
        a = sa_step(state, rule, sched, x, yv).theta
        b = sa_step(state, lad, sched, x, yv, step=step).theta
        mismatches += a.tobytes() != b.tobytes()
    bit_ok = mismatches == 0
    record("6b", bit_ok, f"quantile vs scaled-LAD bitwise mismatches: {mismatches} of 10000")

    settled = {n: sum(all(t <= 2000 for t in s.truncation_log) for s in ex2_runs[n]) for n in LOSSES}
    fin_ok = all(v >= 95 for v in settled.values())
    record("6c", fin_ok, "runs with sigma constant after k=2000: " + ", ".join(f"{n}={v}" for n, v in settled.items()) + " (>= 95/100)")
    assert bound_ok and bit_ok and fin_ok


# --- 7 ---------------------------------------------------------------------


def _best_time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def test_criterion_7_online_efficiency():
    data = example2(1)
    ratios, speedups = {}, {}
    grid = HyperGrid()
    assert len(grid.points("tc")) >= 25
    t_regls = _best_time(lambda: tune_hyperparameters(data, "tc", grid), 5)
    for name in LOSSES:
        spec = parse_loss(name)
        rule, sched = UpdateRule.for_loss(spec), default_schedule(spec)
        _, mid = run_recursive(data.slice(0, 9000), rule, sched)
        first, last = data.slice(0, 1000), data.slice(9000, 10000)
        run_recursive(first, rule, sched)  # compile / warm caches
        t_first = _best_time(lambda: run_recursive(first, rule, sched), 200)
        t_last = _best_time(lambda: run_recursive(last, rule, sched, state=mid), 200)
        ratios[name] = t_last / t_first
        t_full = _best_time(lambda: run_recursive(data, rule, sched, record_every=100), 20)
        speedups[name] = t_regls / t_full
    flat_ok = all(v <= 2.0 for v in ratios.values())
    fast_ok = all(v >= 10.0 for v in speedups.values())
    record("7a", flat_ok, "time(steps 9001-10000) / time(steps 1-1000): " + ", ".join(f"{n}={v:.2f}" for n, v in ratios.items()) + " (<= 2)")
    record("7b", fast_ok, f"35-point TC grid search {t_regls * 1e3:.2f} ms; speedup of a 10000-step recursive fit: "
           + ", ".join(f"{n}={v:.1f}x" for n, v in speedups.items()) + " (>= 10x)")
    assert flat_ok and fast_ok


# --- 8 ---------------------------------------------------------------------


def test_criterion_8_baseline_sanity():
    data = example1(1)
    th_r = regls_fit(data, ReglsConfig(KernelKind.TC, KernelHyper(decay=0.8), reg_lambda=1e-12))
    th_b = fit_batch(data, parse_loss("l2")).theta
    gap = float(np.max(np.abs(th_r - th_b)))
    match_ok = gap <= 1e-6

    rng = np.random.default_rng(8)
    min_eig = np.inf
    for kind in ("tc", "dc", "ss", "identity"):
        for _ in range(50):
            h = KernelHyper(float(rng.uniform(0.01, 10)), float(rng.uniform(0.01, 0.99)), float(rng.uniform(-0.99, 0.99)))
            min_eig = min(min_eig, float(np.linalg.eigvalsh(kernel_matrix(kind, h, [2, 2]))[0]))
    psd_ok = min_eig >= -1e-10

    errs = []
    for i in range(1, N_RUNS + 1):
        d = example1(i)
        errs.append(error_metric(regls_fit(d, tune_hyperparameters(d, "tc", HyperGrid())), THETA_STAR))
    med = float(np.median(errs))
    tc_ok = med <= 0.1
    record("8", match_ok and psd_ok and tc_ok,
           f"RegLS(lambda=1e-12) vs batch L2 max gap {gap:.1e} (<= 1e-6); min kernel eigenvalue {min_eig:.1e} (>= -1e-10); "
           f"RegLS-TC median error {med:.4f} (<= 0.1)")
    assert match_ok and psd_ok and tc_ok
