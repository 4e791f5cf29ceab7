import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from circlekam import GOLDEN, PeriodicMap, RandomEnsemble

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SILVER = math.sqrt(2.0) - 1.0
TWO_PI = 2.0 * math.pi


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def golden():
    return RandomEnsemble.single(GOLDEN)


@pytest.fixture
def golden_mix():
    """Golden mean or zero, each with probability one half."""
    return RandomEnsemble((0.5, 0.5), (GOLDEN, 0.0))


def shape_b():
    """Two-atom perturbation used by the quadratic-law checks."""
    z1 = PeriodicMap.from_trig(cos=[0.5], sin=[1.0, 0.0, 0.3]) / TWO_PI
    z2 = PeriodicMap.from_trig(cos=[-0.4, 0.2], sin=[0.0, 1.0]) / TWO_PI
    return [z1, z2]


ACCEPTANCE: list[str] = []


def record(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {title}  [{detail}]"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
