import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from convexid import LossSpec

settings.register_profile(
    "default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ALL_LOSSES = [
    LossSpec.ll(1.0),
    LossSpec.ll(1.5),
    LossSpec.ll(2.0),
    LossSpec.ll(3.0),
    LossSpec.huber(1.0),
    LossSpec.huber(0.3),
    LossSpec.logcosh(),
    LossSpec.quantile(0.4),
    LossSpec.quantile(0.8),
]
SMOOTH_LOSSES = [s for s in ALL_LOSSES if s.is_smooth]
KINKED_LOSSES = [s for s in ALL_LOSSES if not s.is_smooth]

THETA_STAR = np.array([-1.5, 0.7, 1.0, 0.5])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria register their verdicts here; printed after the run
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda s: (int(s.split(".")[0].rstrip("abc")), s)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")
