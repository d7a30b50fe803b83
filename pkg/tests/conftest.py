import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from risisac.config import ScenarioConfig
from risisac.oracles import random_channel_set

settings.register_profile(
    "default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_cfg():
    return ScenarioConfig(n_ris=8, noise_power_w=1.0, tx_power_budget_w=1.0, rate_threshold=0.0)


@pytest.fixture
def unit_channels(rng):
    return random_channel_set(rng, n_tx=4, n_rx=4, n_ris=8, n_users=2, n_scatterers=2)


def cscg(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record and print one pass/fail line for an acceptance criterion."""

    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
