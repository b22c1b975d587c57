import numpy as np
import pytest

from lma.algebra import Partition

ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    """Log one pass/fail line per acceptance criterion."""

    def _record(number, name, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES.append(f"[{status}] criterion {number}: {name} {detail}".rstrip())
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_partition(rng, n):
    cuts = sorted(rng.choice(np.arange(1, n), size=rng.integers(0, n), replace=False)) if n > 1 else []
    bounds = [0, *[int(c) for c in cuts], n]
    return Partition(tuple(bounds[i + 1] - bounds[i] for i in range(len(bounds) - 1)))


def unit(n, i, j):
    e = np.zeros((n, n), dtype=complex)
    e[i, j] = 1.0
    return e
