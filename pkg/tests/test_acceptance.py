"""Acceptance criteria, one test each. Every test prints its pass/fail line; the
collected lines are repeated in the terminal summary (see conftest.py)."""
import subprocess
import sys

import pytest

from soliton_lab import acceptance

LINES: list[str] = []


def _check(fn, *args):
    res = fn(*args)
    line = res.line()
    print(line)
    LINES.append(line)
    return res


@pytest.mark.parametrize("number", range(1, len(acceptance.CHECKS) + 1))
def test_criterion(number):
    fn = acceptance.CHECKS[number - 1]
    res = _check(fn, 0.1) if fn in acceptance._USES_ALPHA else _check(fn)
    assert res.number == number
    assert res.passed, res.line()


def test_report_bytes_repeat():
    cmd = [sys.executable, "-m", "soliton_lab.cli", "report", "--only", "1,3,5"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b
    assert a.decode().splitlines()[-1] == "3/3 criteria passed"
