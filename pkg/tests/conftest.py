import sys

import numpy as np
import pytest

from ilscale.parametric import Direction, QuadraticSurface


def random_surface(rng: np.random.Generator, direction: Direction = Direction.MINIMIZE) -> QuadraticSurface:
    """A surface with a strictly convex (or concave) restriction to every FLOP constraint."""
    bN2, bD2 = rng.uniform(0.002, 0.05, 2)
    # keep den = 2(bN2 + bD2 - bND) safely positive
    bND = rng.uniform(-0.5, 0.9) * min(bN2, bD2)
    surf = QuadraticSurface(
        b0=rng.uniform(-2, 8), bN=rng.uniform(-0.6, 0.1), bD=rng.uniform(-0.6, 0.1),
        bN2=bN2, bND=bND, bD2=bD2,
    )
    return surf if direction is Direction.MINIMIZE else surf.flipped()


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
