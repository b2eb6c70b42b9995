from __future__ import annotations

import numpy as np
import pytest

from pillarstokes.geometry import BoundaryLabel
from pillarstokes.mesher import Mesh


def two_triangle_square() -> Mesh:
    """Unit square split along the (0,0)-(1,1) diagonal."""
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    t = np.array([[0, 1, 2], [0, 2, 3]])
    e = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])
    lab = np.array([BoundaryLabel.WALL, BoundaryLabel.OUTLET, BoundaryLabel.WALL, BoundaryLabel.INLET], dtype=np.int64)
    return Mesh(v, t, e, lab)


def single_triangle() -> Mesh:
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    t = np.array([[0, 1, 2]])
    e = np.array([[0, 1], [1, 2], [2, 0]])
    lab = np.full(3, int(BoundaryLabel.WALL), dtype=np.int64)
    return Mesh(v, t, e, lab)


@pytest.fixture
def square2() -> Mesh:
    return two_triangle_square()


@pytest.fixture
def tri1() -> Mesh:
    return single_triangle()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance verdicts

_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        request.config.stash.setdefault(_VERDICTS, []).append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
