"""Small planar geometry helpers shared by the domain and mesh modules."""
from __future__ import annotations

import numpy as np


def cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def signed_area(poly) -> float:
    poly = np.asarray(poly, dtype=float)
    return 0.5 * float(cross2(poly, np.roll(poly, -1, axis=0)).sum())


def point_segment_distance(x, p, q):
    x, p, q = (np.asarray(a, dtype=float) for a in (x, p, q))
    e = q - p
    L2 = float(e @ e)
    if L2 == 0.0:
        return float(np.hypot(*(x - p))), 0.0
    t = float(np.clip((x - p) @ e / L2, 0.0, 1.0))
    return float(np.hypot(*(x - p - t * e))), t


def segments_intersect(a, b, c, d, eps=0.0) -> bool:
    """Proper or touching intersection of closed segments ab and cd."""
    a, b, c, d = (np.asarray(v, dtype=float) for v in (a, b, c, d))
    d1 = cross2(b - a, c - a)
    d2 = cross2(b - a, d - a)
    d3 = cross2(d - c, a - c)
    d4 = cross2(d - c, b - c)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and (
        (d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)
    ):
        return True
    for x, p, q in ((c, a, b), (d, a, b), (a, c, d), (b, c, d)):
        if point_segment_distance(x, p, q)[0] <= eps:
            return True
    return False


def is_simple(poly, eps) -> bool:
    poly = np.asarray(poly, dtype=float)
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            c, d = poly[j], poly[(j + 1) % n]
            if segments_intersect(a, b, c, d, eps):
                return False
    return True


def is_convex(poly, eps=0.0) -> bool:
    poly = np.asarray(poly, dtype=float)
    e = np.roll(poly, -1, axis=0) - poly
    turns = cross2(e, np.roll(e, -1, axis=0))
    return bool(np.all(turns >= -eps))


def _in_triangle(x, a, b, c, eps):
    return (
        cross2(b - a, x - a) >= -eps
        and cross2(c - b, x - b) >= -eps
        and cross2(a - c, x - c) >= -eps
    )


def ear_clip(poly, eps=0.0) -> list[np.ndarray]:
    """Triangulate a simple counter-clockwise polygon by ear clipping."""
    pts = np.asarray(poly, dtype=float)
    idx = list(range(len(pts)))
    tris = []
    guard = 0
    while len(idx) > 3:
        n = len(idx)
        for k in range(n):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % n]
            a, b, c = pts[i0], pts[i1], pts[i2]
            turn = cross2(b - a, c - b)
            if turn <= eps:
                continue
            if any(
                _in_triangle(pts[j], a, b, c, -eps)
                for j in idx
                if j not in (i0, i1, i2)
            ):
                continue
            tris.append(np.array([a, b, c]))
            del idx[k]
            break
        else:
            # only collinear vertices left that cannot form an ear: drop one
            guard += 1
            if guard > len(pts):
                raise ValueError("ear clipping failed; polygon not simple?")
            del idx[0]
    tris.append(pts[idx])
    return [t for t in tris if signed_area(t) > eps]


def convex_pieces(poly, eps=0.0) -> list[np.ndarray]:
    poly = np.asarray(poly, dtype=float)
    if is_convex(poly, eps):
        return [poly]
    return ear_clip(poly, eps)
