import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from planarnav.worldsim import Landmark, World, WorldParams, generate_world

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def room(nx=20, ny=20, resolution=0.5, landmarks=(), blocks=()):
    """Walled rectangular room; ``blocks`` are (i0, i1, j0, j1) occupied ranges."""
    g = np.zeros((nx, ny), bool)
    g[0, :] = g[-1, :] = g[:, 0] = g[:, -1] = True
    for i0, i1, j0, j1 in blocks:
        g[i0:i1, j0:j1] = True
    lms = tuple(Landmark(k, x, y) for k, (x, y) in enumerate(landmarks))
    return World(g, resolution, lms)


def ring_landmarks(cx, cy, radius, n, phase=0.1):
    return [(cx + radius * math.cos(phase + 2 * math.pi * k / n),
             cy + radius * math.sin(phase + 2 * math.pi * k / n)) for k in range(n)]


@pytest.fixture(scope="session")
def world():
    return generate_world(11, WorldParams())


@pytest.fixture(scope="session")
def open_room():
    # 10 m square, landmarks scattered on a grid of free points
    pts = [(1.3 + 1.7 * a + 0.11 * b, 1.1 + 1.6 * b + 0.07 * a) for a in range(5) for b in range(5)]
    return room(21, 21, 0.5, pts)


# one line per acceptance criterion, filled by test_acceptance and echoed in the summary
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
