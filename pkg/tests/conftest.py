import sys

import pytest

from soliton_lab import shrinker
from soliton_lab.core import derive_params


@pytest.fixture(scope="session")
def p01():
    return derive_params(0.1)


@pytest.fixture(scope="session")
def round01(p01):
    return shrinker.round_shrinker(p01, 512)


@pytest.fixture(scope="session")
def fold3(p01):
    return shrinker.shoot_shrinker(p01, 3, 512)


@pytest.fixture(scope="session")
def fold3_dual(p01):
    return shrinker.dual_shrinker(p01, 3, 512)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for ln in lines:
            terminalreporter.write_line(ln)
