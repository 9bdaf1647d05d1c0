import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lindblad_geo import DissipationParams

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def pair_params():
    return DissipationParams(2.5, 2.0)


@pytest.fixture
def barrier_params():
    return DissipationParams(4.5, 2.0)


@pytest.fixture
def grusin_params():
    return DissipationParams(2.0, 2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


PAIR = dict(phi0=math.pi / 4, p_r=1.0, p_theta=2.0)
BARRIER = dict(phi0=2 * math.pi / 5, p_r=0.25, p_theta=8.0,
            seeds=(-50.0, -10.0, 0.0, 2.637, 3.0, 5.0, 10.0, 50.0))
GRUSIN_SWEEP = dict(phi0=math.pi / 4, p_r=0.5, p_theta=2.0, p_phi0=tuple(np.linspace(-3.0, 3.0, 25)))


def pytest_terminal_summary(terminalreporter):
    lines = [v for rep in terminalreporter.stats.get("passed", []) + terminalreporter.stats.get("failed", [])
             if getattr(rep, "when", "call") == "call"
             for k, v in getattr(rep, "user_properties", ()) if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines):
            terminalreporter.write_line(line)
