from fractions import Fraction

import pytest

from pseudomarket.economy import AgentType, Economy

A, B, AB, E0 = (1, 0), (0, 1), (1, 1), (0, 0)

# criterion id -> (passed, detail); filled by test_acceptance.py
CRITERIA: dict = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    CRITERIA[criterion] = (passed, detail)
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        passed, detail = CRITERIA[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture
def greedy_type():
    """{a,b} > {a} > {b} > empty."""
    return AgentType.from_order([AB, A, B, E0])


@pytest.fixture
def symmetric_economy(greedy_type):
    return Economy.build([greedy_type, greedy_type], [1, 1])


@pytest.fixture
def half():
    return Fraction(1, 2)
