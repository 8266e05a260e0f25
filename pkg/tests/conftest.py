from fractions import Fraction
from pathlib import Path

import pytest

from momentcert.polycore import MomentVector, Polynomial, SemialgebraicDescription

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

_ACCEPTANCE: list = []


def ball(n, R=1):
    c = {(0,) * n: R}
    for i in range(n):
        c[tuple(2 if j == i else 0 for j in range(n))] = -1
    return Polynomial(n, c)


def interval_pair():
    """g = (1 - x, 1 + x)."""
    return SemialgebraicDescription(1, (Polynomial(1, {(0,): 1, (1,): -1}),
                                        Polynomial(1, {(0,): 1, (1,): 1})))


def unconstrained(n):
    return SemialgebraicDescription(n, ())


def y_example_3_8():
    return MomentVector.from_map(2, 6, {(0, 0): 32, (2, 0): 34, (0, 2): 34, (4, 0): 43, (0, 4): 43,
                                        (2, 2): 30, (6, 0): 128, (0, 6): 128, (4, 2): 28, (2, 4): 28})


def unit_disc():
    return SemialgebraicDescription(2, (ball(2),))


@pytest.fixture
def acceptance_record():
    """Collects one line per acceptance criterion for the terminal summary."""
    def record(label, passed, detail=""):
        _ACCEPTANCE.append((label, passed, detail))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}")
