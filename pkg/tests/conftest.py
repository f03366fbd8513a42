import numpy as np
import pytest

from qpballistic import FrequencyVector, TrigPotential


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def golden():
    return FrequencyVector.golden()


@pytest.fixture
def amo():
    return TrigPotential.almost_mathieu()


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion and print it."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
