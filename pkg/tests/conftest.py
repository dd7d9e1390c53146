import numpy as np
import pytest

from arakelovlab.families import flat_torus, genus2_mesh
from arakelovlab.invariants import Surface


@pytest.fixture(scope="session")
def torus():
    return Surface(flat_torus(0.3 + 1.1j, 16))


@pytest.fixture(scope="session")
def octagon():
    return Surface(genus2_mesh("octagon", 2))


@pytest.fixture(scope="session")
def double_torus():
    return Surface(genus2_mesh("double-torus", 4))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


def format_line(number, ok, summary):
    return f"criterion {number:2d} {'pass' if ok else 'FAIL'}: {summary}"


@pytest.fixture
def acceptance():
    def record(number, ok, summary):
        line = format_line(number, ok, summary)
        ACCEPTANCE[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
