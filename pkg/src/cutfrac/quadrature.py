"""Quadrature rules on segments, triangles and convex polygons.

All rules return points in physical coordinates and weights that already
include the measure of the integration entity.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

# Degree-2 rule with three interior points (weights relative to the area).
_TRI_DEG2 = (
    np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]]),
    np.full(3, 1 / 3),
)


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def segment_points(order: int) -> int:
    # three points is the minimum we ever use on segments
    return max(3, (order + 2) // 2)


@lru_cache(maxsize=None)
def reference_triangle_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Rule on the unit right triangle, exact for polynomials of total degree `order`.

    Weights sum to one (i.e. they are relative to the triangle area).
    """
    if order <= 2:
        return _TRI_DEG2
    # collapsed (Duffy) tensor Gauss rule
    n = (order + 3) // 2
    s, ws = gauss_legendre(n)
    u, v = np.meshgrid(s, s, indexing="ij")
    wu, wv = np.meshgrid(ws, ws, indexing="ij")
    x = u
    y = v * (1.0 - u)
    w = wu * wv * (1.0 - u) * 2.0
    return np.column_stack([x.ravel(), y.ravel()]), w.ravel()


def segment_rule(p, q, order: int = 5):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    s, w = gauss_legendre(segment_points(order))
    length = np.hypot(*(q - p))
    return p + s[:, None] * (q - p), w * length


def triangle_area(tri) -> float:
    tri = np.asarray(tri, dtype=float)
    e1 = tri[1] - tri[0]
    e2 = tri[2] - tri[0]
    return 0.5 * (e1[0] * e2[1] - e1[1] * e2[0])


def triangle_rule(tri, order: int = 2):
    tri = np.asarray(tri, dtype=float)
    ref, w = reference_triangle_rule(order)
    pts = tri[0] + ref[:, :1] * (tri[1] - tri[0]) + ref[:, 1:] * (tri[2] - tri[0])
    return pts, w * abs(triangle_area(tri))


def polygon_area(poly) -> float:
    poly = np.asarray(poly, dtype=float)
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_rule(poly, order: int = 2):
    """Fan-triangulate a convex polygon from its vertex centroid."""
    poly = np.asarray(poly, dtype=float)
    c = poly.mean(axis=0)
    pts, wts = [], []
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        p, w = triangle_rule(np.array([c, a, b]), order)
        pts.append(p)
        wts.append(w)
    return np.concatenate(pts), np.concatenate(wts)
