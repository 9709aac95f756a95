from fractions import Fraction

import pytest

from dualnest.dynamics import Parameter
from dualnest.puzzle import Puzzle

C_I = Parameter(1j, Fraction(1, 3))
# real root of c^3 + 2c^2 + c + 1: the period-3 "airplane" centre
AIRPLANE = Parameter(-1.7548776662466927, Fraction(1, 2))

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def ci_puzzle():
    return Puzzle.build(C_I, 6)


@pytest.fixture(scope="session")
def ci_puzzle_deep():
    return Puzzle.build(C_I, 10)


@pytest.fixture(scope="session")
def airplane_puzzle():
    return Puzzle.build(AIRPLANE, 10)


@pytest.fixture(scope="session")
def small_nest():
    from dualnest.nest import synthetic_nest
    return synthetic_nest({"window": 800}, seed=3)


@pytest.fixture
def acceptance():
    """Record the outcome of one acceptance criterion for the summary."""
    def record(number, passed, detail=""):
        _ACCEPTANCE[number] = (bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
