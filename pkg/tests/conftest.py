import math

import numpy as np
import pytest

from swarmnav.scene import build_scene


def make_scene(obstacles=(), w=5.0, h=5.0, start=(0.5, 0.5), goal=(4.5, 4.5), origin=(0.0, 0.0)):
    return build_scene({"arena": {"w": w, "h": h, "origin": list(origin)}, "start": list(start),
                        "goal": list(goal), "obstacles": list(obstacles)})


@pytest.fixture
def empty_scene():
    return make_scene()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def polyline_distance(p, poly):
    """Distance from point p to a polyline (independent of the package)."""
    best = math.inf
    for a, b in zip(poly[:-1], poly[1:]):
        ab = b - a
        L = float(ab @ ab)
        t = 0.0 if L == 0 else min(max(float((p - a) @ ab) / L, 0.0), 1.0)
        best = min(best, float(np.hypot(*(a + t * ab - p))))
    return best


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[n])
