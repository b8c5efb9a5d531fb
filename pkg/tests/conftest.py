import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from asynclti import LtiSystem, NoiseSpec  # noqa: E402
from asynclti.fixtures import A1, A2  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def sys_a1():
    return LtiSystem(A1, np.ones((3, 1)))


@pytest.fixture
def sys_a2():
    return LtiSystem(A2, np.ones((3, 1)))


@pytest.fixture
def unit_noise():
    return NoiseSpec(np.eye(1), 1.0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS.values():
        terminalreporter.write_line(line)
