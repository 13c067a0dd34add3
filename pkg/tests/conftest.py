from functools import lru_cache

import numpy as np
import pytest

from cutfrac.presets import load_preset


@lru_cache(maxsize=None)
def preset(name, variant=None):
    return load_preset(name, variant)


@lru_cache(maxsize=None)
def solved(name, nx=10, tau1=1e-2, tau2=1e-3, variant=None):
    from cutfrac.fem import solve_domain

    return solve_domain(preset(name, variant), nx, tau1, tau2)


def green_moments(poly):
    """Exact integrals of 1, x, y, x^2, xy, y^2 over a ccw polygon (Green's theorem)."""
    x, y = np.asarray(poly, dtype=float).T
    x1, y1 = np.roll(x, -1), np.roll(y, -1)
    c = x * y1 - x1 * y
    return np.array([
        c.sum() / 2,
        ((x + x1) * c).sum() / 6,
        ((y + y1) * c).sum() / 6,
        ((x * x + x * x1 + x1 * x1) * c).sum() / 12,
        ((x * y1 + 2 * x * y + 2 * x1 * y1 + x1 * y) * c).sum() / 24,
        ((y * y + y * y1 + y1 * y1) * c).sum() / 12,
    ])


def monomials(x):
    return np.column_stack([np.ones(len(x)), x[:, 0], x[:, 1], x[:, 0] ** 2, x[:, 0] * x[:, 1], x[:, 1] ** 2])


def random_convex_polygon(rng, n=None, lo=0.0, hi=1.0):
    from scipy.spatial import ConvexHull

    while True:
        pts = rng.uniform(lo, hi, size=(n or rng.integers(3, 9), 2))
        try:
            hull = ConvexHull(pts)
        except Exception:
            continue
        poly = pts[hull.vertices]  # counter-clockwise in 2D
        if hull.volume > 1e-6:
            return poly


def random_triangle(rng, lo=0.0, hi=1.0):
    while True:
        t = rng.uniform(lo, hi, size=(3, 2))
        e1, e2 = t[1] - t[0], t[2] - t[0]
        a = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
        if abs(a) > 1e-4:
            return t if a > 0 else t[[0, 2, 1]]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# lines reported by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
