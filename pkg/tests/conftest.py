import math

import pytest

from crossext.geometry import BoundaryArcSet, make_disk
from crossext.harmonic import harmonic_measure_grid


@pytest.fixture(scope="session")
def disk():
    return make_disk(0j, 1.0)


@pytest.fixture(scope="session")
def half_arcs():
    return BoundaryArcSet.from_pairs([(0.0, math.pi)])


@pytest.fixture(scope="session")
def half_grid_256(disk, half_arcs):
    return harmonic_measure_grid(disk, half_arcs, 256)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line; returns ``ok`` for the assertion."""

    def record(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
