import math
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("mrsle", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("mrsle")


def random_config(rng: np.random.Generator, n: int, min_gap: float = 0.1) -> np.ndarray:
    """Sorted angles with every cyclic gap at least ``min_gap``."""
    free = 2 * math.pi - n * min_gap
    g = rng.dirichlet(np.ones(n)) * free + min_gap
    return rng.uniform(0, 2 * math.pi) + np.concatenate(([0.0], np.cumsum(g[:-1])))


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: long-running acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
