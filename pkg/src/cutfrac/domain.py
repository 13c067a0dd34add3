"""Fractured (mixed-dimensional) domains in the plane.

A domain is a set of bulk polygons (d=2), straight-segment crack polylines
(d=1) and bifurcation points (d=0) inside a rectangular bounding box.
Cracks carry the adjacency: for every segment the bulk component on its left
and on its right, and for every endpoint either the outer boundary or a point
component.  Orientation conventions:

* crack tangent ``t`` follows the vertex order, the left normal is ``n = R90 t``;
* the bulk on the left of a crack has exterior normal ``-n`` on the crack,
  the bulk on the right has ``+n``;
* at a crack endpoint the exterior normal is ``-t`` at the first vertex and
  ``+t`` at the last one.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Mapping

import numpy as np

from .errors import AdjacencyError, DomainError, FieldError, GeometryError
from .geometry import (
    convex_pieces,
    is_simple,
    point_segment_distance,
    signed_area,
)
from .quadrature import polygon_rule, segment_rule


@dataclass(frozen=True, order=True)
class ComponentId:
    d: int
    i: int

    def __post_init__(self):
        if self.d not in (0, 1, 2):
            raise DomainError(f"component dimension must be 0, 1 or 2, got {self.d}")
        if self.i < 1:
            raise DomainError(f"component index is 1-based, got {self.i}")

    def __str__(self):
        return f"({self.d},{self.i})"


def _as_points(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# coefficient fields

_BUILTINS: dict[str, tuple[Callable, Callable]] = {
    "exp(-2y)": (
        lambda x: np.exp(-2.0 * x[:, 1]),
        lambda x: np.column_stack([np.zeros(len(x)), -2.0 * np.exp(-2.0 * x[:, 1])]),
    ),
    "exp(-x)": (
        lambda x: np.exp(-x[:, 0]),
        lambda x: np.column_stack([-np.exp(-x[:, 0]), np.zeros(len(x))]),
    ),
    "sin(pi x) sin(pi y)": (
        lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]),
        lambda x: np.pi
        * np.column_stack(
            [
                np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]),
                np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1]),
            ]
        ),
    ),
}


@dataclass(frozen=True)
class FieldSpec:
    """Scalar or 2-vector field: constant, affine, or a named builtin (scalar only).

    Affine scalars are ``c + g.x``; affine vectors are ``b + M x``.
    """

    kind: str
    value: np.ndarray
    grad: np.ndarray
    name: str | None = None

    @property
    def is_vector(self) -> bool:
        return self.value.shape == (2,)

    @classmethod
    def constant(cls, value) -> "FieldSpec":
        v = np.asarray(value, dtype=float)
        g = np.zeros((2, 2)) if v.shape == (2,) else np.zeros(2)
        return cls("constant", v, g)

    @classmethod
    def affine(cls, value, grad) -> "FieldSpec":
        v = np.asarray(value, dtype=float)
        g = np.asarray(grad, dtype=float)
        if g.shape != ((2, 2) if v.shape == (2,) else (2,)):
            raise FieldError(f"affine gradient has shape {g.shape} for value shape {v.shape}")
        return cls("affine", v, g)

    @classmethod
    def builtin(cls, name: str) -> "FieldSpec":
        if name not in _BUILTINS:
            raise FieldError(f"unknown builtin field {name!r}; known: {sorted(_BUILTINS)}")
        return cls("builtin", np.asarray(0.0), np.zeros(2), name)

    @classmethod
    def parse(cls, obj, vector: bool = False) -> "FieldSpec":
        if isinstance(obj, FieldSpec):
            spec = obj
        elif isinstance(obj, (int, float)):
            spec = cls.constant(float(obj))
        elif isinstance(obj, (list, tuple)):
            spec = cls.constant(obj)
        elif isinstance(obj, Mapping) and "affine" in obj:
            a = obj["affine"]
            if vector:
                spec = cls.affine(a.get("b", [0.0, 0.0]), a["M"])
            else:
                spec = cls.affine(a.get("c", 0.0), a["grad"])
        elif isinstance(obj, Mapping) and "builtin" in obj:
            spec = cls.builtin(obj["builtin"])
        else:
            raise FieldError(f"cannot parse field spec {obj!r}")
        if spec.is_vector != vector:
            raise FieldError(f"expected a {'vector' if vector else 'scalar'} field, got {obj!r}")
        return spec

    def to_json(self):
        if self.kind == "constant":
            return self.value.tolist()
        if self.kind == "affine":
            if self.is_vector:
                return {"affine": {"b": self.value.tolist(), "M": self.grad.tolist()}}
            return {"affine": {"c": float(self.value), "grad": self.grad.tolist()}}
        return {"builtin": self.name}

    def __call__(self, x) -> np.ndarray:
        x = _as_points(x)
        if self.kind == "builtin":
            return _BUILTINS[self.name][0](x)
        if self.is_vector:
            return self.value + x @ self.grad.T
        return self.value + x @ self.grad

    def gradient(self, x) -> np.ndarray:
        """Gradient (scalar fields) or Jacobian (vector fields) at each point."""
        x = _as_points(x)
        if self.kind == "builtin":
            return _BUILTINS[self.name][1](x)
        return np.broadcast_to(self.grad, (len(x),) + self.grad.shape).copy()

    def divergence(self, x) -> np.ndarray:
        if not self.is_vector:
            raise FieldError("divergence of a scalar field")
        x = _as_points(x)
        return np.full(len(x), np.trace(self.grad))


@dataclass(frozen=True)
class Analytic:
    """Smooth function given by value and gradient callables on (n, 2) arrays."""

    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return np.asarray(self.f(_as_points(x)), dtype=float)

    def gradient(self, x):
        return np.asarray(self.df(_as_points(x)), dtype=float)


def pick(v, cid: ComponentId):
    """Per-component member of `v` (a mapping keyed by ComponentId, or one field for all)."""
    if isinstance(v, Mapping):
        try:
            return v[cid]
        except KeyError:
            raise FieldError(f"no value supplied for component {cid}") from None
    return v


# ---------------------------------------------------------------------------
# components

OUTER = None  # boundary tag: segment/endpoint lies on the outer boundary


@dataclass
class BulkComponent:
    cid: ComponentId
    vertices: np.ndarray
    tags: tuple  # per segment: None (outer) or crack ComponentId
    beta: FieldSpec
    alpha: FieldSpec
    f: FieldSpec
    g: FieldSpec
    exact: FieldSpec | None = None
    pieces: list = field(default_factory=list)

    def segments(self):
        n = len(self.vertices)
        for k in range(n):
            yield self.vertices[k], self.vertices[(k + 1) % n], self.tags[k]

    @property
    def measure(self) -> float:
        return signed_area(self.vertices)


@dataclass
class CrackComponent:
    cid: ComponentId
    vertices: np.ndarray
    speed: FieldSpec
    alpha: FieldSpec
    f: FieldSpec
    g: FieldSpec
    endpoints: tuple  # (start tag, end tag): None or point ComponentId
    sides: tuple  # per segment: (left bulk, right bulk), entries may be None
    exact: FieldSpec | None = None

    def __post_init__(self):
        e = np.diff(self.vertices, axis=0)
        self.lengths = np.hypot(e[:, 0], e[:, 1])
        self.tangents = e / self.lengths[:, None]
        self.normals = np.column_stack([-self.tangents[:, 1], self.tangents[:, 0]])

    @property
    def nseg(self) -> int:
        return len(self.vertices) - 1

    @property
    def measure(self) -> float:
        return float(self.lengths.sum())

    def endpoint(self, end: int) -> np.ndarray:
        return self.vertices[0] if end == 0 else self.vertices[-1]

    def endpoint_normal(self, end: int) -> np.ndarray:
        return -self.tangents[0] if end == 0 else self.tangents[-1].copy()

    def endpoint_segment(self, end: int) -> int:
        return 0 if end == 0 else self.nseg - 1

    def locate(self, x, eps: float) -> np.ndarray:
        """Segment index of each point; GeometryError if a point is off the crack."""
        x = _as_points(x)
        seg = np.empty(len(x), dtype=int)
        for k, xk in enumerate(x):
            best, dist = -1, np.inf
            for s in range(self.nseg):
                dd = point_segment_distance(xk, self.vertices[s], self.vertices[s + 1])[0]
                if dd < dist:
                    best, dist = s, dd
            if dist > eps:
                raise GeometryError(f"point {xk} is not on crack {self.cid} (distance {dist:.3g})")
            seg[k] = best
        return seg

    def beta(self, x, seg) -> np.ndarray:
        return self.speed(x)[:, None] * self.tangents[seg]

    def div_tangential(self, x, seg) -> np.ndarray:
        # div_1 (s t) = t . grad s for straight segments
        return np.einsum("ij,ij->i", self.speed.gradient(x), self.tangents[seg])

    def side_normal(self, seg, side: str) -> np.ndarray:
        if side == "left":
            return -self.normals[seg]
        if side == "right":
            return self.normals[seg]
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")


@dataclass
class PointComponent:
    cid: ComponentId
    x: np.ndarray
    alpha: float = 0.0
    f: float = 0.0
    exact: FieldSpec | None = None
    incident: tuple = ()  # (crack ComponentId, end) pairs, filled by the domain

    @property
    def measure(self) -> float:
        return 1.0


# ---------------------------------------------------------------------------
# the domain


class FracturedDomain:
    """Bulk, crack and point components with their adjacency; immutable after construction."""

    def __init__(self, bulks, cracks, points, bounding_box=((0.0, 0.0), (1.0, 1.0)), name=""):
        self.name = name
        self.bbox = np.asarray(bounding_box, dtype=float)
        self.diam = float(np.hypot(*(self.bbox[1] - self.bbox[0])))
        self.eps = 1e-10 * self.diam
        self.bulks = list(bulks)
        self.cracks = list(cracks)
        self.points = list(points)
        self._by_id = {c.cid: c for c in self.components()}
        if len(self._by_id) != len(self.bulks) + len(self.cracks) + len(self.points):
            raise DomainError("duplicate component ids")
        self._link_points()
        self._validate()
        for b in self.bulks:
            b.pieces = convex_pieces(b.vertices, self.eps * self.eps)

    # -- access ------------------------------------------------------------

    def components(self) -> Iterator:
        """All components in (d, i) order."""
        yield from self.points
        yield from self.cracks
        yield from self.bulks

    def __getitem__(self, cid: ComponentId):
        try:
            return self._by_id[cid]
        except KeyError:
            raise AdjacencyError(f"no component {cid}") from None

    def __contains__(self, cid) -> bool:
        return cid in self._by_id

    @property
    def counts(self) -> tuple[int, int, int]:
        return len(self.points), len(self.cracks), len(self.bulks)

    def on_outer_boundary(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        lo, hi = self.bbox
        inside = np.all(x >= lo - self.eps) and np.all(x <= hi + self.eps)
        near = np.any(np.abs(x - lo) <= self.eps) or np.any(np.abs(x - hi) <= self.eps)
        return bool(inside and near)

    # -- construction checks ------------------------------------------------

    def _link_points(self):
        incident = {p.cid: [] for p in self.points}
        for c in self.cracks:
            for end, tag in enumerate(c.endpoints):
                if tag is None:
                    continue
                if tag not in incident:
                    raise AdjacencyError(f"crack {c.cid} endpoint references unknown point {tag}")
                incident[tag].append((c.cid, end))
        for p in self.points:
            p.incident = tuple(incident[p.cid])

    def _validate(self):
        eps = self.eps
        lo, hi = self.bbox
        for b in self.bulks:
            v = b.vertices
            if len(v) < 3 or len(b.tags) != len(v):
                raise DomainError(f"bulk {b.cid}: need >= 3 vertices and one tag per segment")
            if signed_area(v) <= 0:
                raise DomainError(f"bulk {b.cid}: boundary loop must be counter-clockwise")
            if not is_simple(v, eps):
                raise DomainError(f"bulk {b.cid}: boundary loop self-intersects")
            if np.any(v < lo - eps) or np.any(v > hi + eps):
                raise GeometryError(f"bulk {b.cid} leaves the bounding box")
            for p, q, tag in b.segments():
                if tag is None:
                    if not (self.on_outer_boundary(p) and self.on_outer_boundary(q)
                            and self.on_outer_boundary(0.5 * (p + q))):
                        raise DomainError(f"bulk {b.cid}: outer segment {p}->{q} not on the boundary")
                    continue
                if tag not in self._by_id or tag.d != 1:
                    raise AdjacencyError(f"bulk {b.cid}: interface tag {tag} is not a crack")
                crack = self[tag]
                for x in (p, q, 0.5 * (p + q)):
                    crack.locate(x, eps)
        for c in self.cracks:
            if len(c.vertices) < 2 or np.any(c.lengths <= eps):
                raise DomainError(f"crack {c.cid}: degenerate polyline")
            if np.any(c.vertices < lo - eps) or np.any(c.vertices > hi + eps):
                raise GeometryError(f"crack {c.cid} leaves the bounding box")
            if len(c.sides) != c.nseg:
                raise DomainError(f"crack {c.cid}: need one (left, right) pair per segment")
            for end, tag in enumerate(c.endpoints):
                x = c.endpoint(end)
                if tag is None:
                    if not self.on_outer_boundary(x):
                        raise DomainError(
                            f"crack {c.cid}: endpoint {x} tagged outer but lies inside the domain"
                        )
                elif np.hypot(*(self[tag].x - x)) > eps:
                    raise GeometryError(f"crack {c.cid}: endpoint {x} does not meet point {tag}")
            for s, pair in enumerate(c.sides):
                for side, bid in zip(("left", "right"), pair):
                    if bid is None:
                        p, q = c.vertices[s], c.vertices[s + 1]
                        if not (self.on_outer_boundary(p) and self.on_outer_boundary(q)):
                            raise AdjacencyError(
                                f"crack {c.cid} segment {s}: no {side} bulk but not on the boundary"
                            )
                        continue
                    if bid not in self._by_id or bid.d != 2:
                        raise AdjacencyError(f"crack {c.cid}: {side} neighbour {bid} is not a bulk")
                    self._check_side(c, s, side, self[bid])
        for p in self.points:
            if len(p.incident) < 2:
                raise DomainError(f"point {p.cid}: a bifurcation needs >= 2 incident cracks")

    def _check_side(self, crack, s, side, bulk):
        mid = 0.5 * (crack.vertices[s] + crack.vertices[s + 1])
        t = crack.tangents[s]
        for p, q, tag in bulk.segments():
            if tag != crack.cid:
                continue
            if point_segment_distance(mid, p, q)[0] > self.eps:
                continue
            along = float((q - p) @ t)
            if (along > 0) == (side == "left"):
                return
            raise AdjacencyError(
                f"crack {crack.cid} segment {s}: bulk {bulk.cid} is not on the {side} side"
            )
        raise AdjacencyError(
            f"crack {crack.cid} segment {s}: bulk {bulk.cid} has no boundary segment on it"
        )

    # -- mixed-dimensional calculus ---------------------------------------------

    def exterior_normal(self, crack: ComponentId, side: str, point) -> np.ndarray:
        """Exterior unit normal on a crack.

        ``side`` 'left'/'right' gives the normal of the bulk on that side
        (pointing out of the bulk, across the crack); 'end' gives the crack's own
        exterior normal at an endpoint (unit tangent pointing out of the crack).
        """
        c = self[crack]
        if c.cid.d != 1:
            raise AdjacencyError(f"{crack} is not a crack")
        x = np.asarray(point, dtype=float)
        if side == "end":
            for end in (0, 1):
                if np.hypot(*(c.endpoint(end) - x)) <= self.eps:
                    return c.endpoint_normal(end)
            raise GeometryError(f"{x} is not an endpoint of crack {crack}")
        seg = int(c.locate(x, self.eps)[0])
        k = 0 if side == "left" else 1
        if side not in ("left", "right"):
            raise ValueError(f"side must be 'left', 'right' or 'end', got {side!r}")
        if c.sides[seg][k] is None:
            raise AdjacencyError(f"crack {crack} has no bulk on its {side} side at {x}")
        return c.side_normal(seg, side)

    def crack_neighbours(self, crack: CrackComponent, seg):
        """(bulk, exterior normal array) for every existing side of the given segments.

        ``seg`` is an integer array; all entries must share the same neighbours
        per side, which holds for the points of one cut sub-segment.
        """
        seg = np.atleast_1d(seg)
        out = []
        for k, side in enumerate(("left", "right")):
            bids = {crack.sides[s][k] for s in np.unique(seg)}
            if len(bids) != 1:
                # mixed neighbours: caller should split per segment
                raise AdjacencyError(f"crack {crack.cid}: points span segments with different {side} bulks")
            bid = bids.pop()
            if bid is not None:
                out.append((self[bid], crack.side_normal(seg, side), side))
        return out

    def flux_into(self, cid: ComponentId, x, seg=None) -> np.ndarray:
        """Sum over incident (d+1)-components of nu . beta at the given points."""
        comp = self[cid]
        x = _as_points(x)
        if cid.d == 2:
            return np.zeros(len(x))
        if cid.d == 1:
            if seg is None:
                seg = comp.locate(x, self.eps)
            total = np.zeros(len(x))
            for s in np.unique(seg):
                m = seg == s
                for bulk, nu, _ in self.crack_neighbours(comp, seg[m]):
                    total[m] += np.einsum("ij,ij->i", nu, bulk.beta(x[m]))
            return total
        total = 0.0
        for crack_id, end in comp.incident:
            c = self[crack_id]
            xe = c.endpoint(end)[None]
            s = np.array([c.endpoint_segment(end)])
            total += float(c.endpoint_normal(end) @ c.beta(xe, s)[0])
        return np.full(len(x), total)

    def div_beta(self, cid: ComponentId, x, seg=None) -> np.ndarray:
        comp = self[cid]
        x = _as_points(x)
        if cid.d == 2:
            return comp.beta.divergence(x)
        if cid.d == 1:
            if seg is None:
                seg = comp.locate(x, self.eps)
            return comp.div_tangential(x, seg) - self.flux_into(cid, x, seg)
        return -self.flux_into(cid, x)

    def alpha(self, cid: ComponentId, x) -> np.ndarray:
        comp = self[cid]
        x = _as_points(x)
        if cid.d == 0:
            return np.full(len(x), float(comp.alpha))
        return comp.alpha(x)

    def source(self, cid: ComponentId, x) -> np.ndarray:
        comp = self[cid]
        x = _as_points(x)
        if cid.d == 0:
            return np.full(len(x), float(comp.f))
        return comp.f(x)

    def gamma(self, cid: ComponentId, x, seg=None) -> np.ndarray:
        return self.alpha(cid, x) + self.div_beta(cid, x, seg)

    # -- serialisation ----------------------------------------------------------

    @classmethod
    def from_json(cls, data) -> "FracturedDomain":
        return _domain_from_json(data)

    @classmethod
    def load(cls, path) -> "FracturedDomain":
        with open(path) as fh:
            data = json.load(fh)
        data.setdefault("name", Path(path).stem)
        return _domain_from_json(data)

    def to_json(self) -> dict:
        def ref(cid):
            return None if cid is None else cid.i

        def opt(spec):
            return None if spec is None else spec.to_json()

        return {
            "name": self.name,
            "bounding_box": self.bbox.tolist(),
            "components": {
                "points": [
                    {"x": p.x.tolist(), "alpha": p.alpha, "f": p.f, "exact": opt(p.exact)}
                    for p in self.points
                ],
                "cracks": [
                    {
                        "vertices": c.vertices.tolist(),
                        "speed": c.speed.to_json(),
                        "alpha": c.alpha.to_json(),
                        "f": c.f.to_json(),
                        "g": c.g.to_json(),
                        "endpoints": ["outer" if t is None else {"point": t.i} for t in c.endpoints],
                        "sides": [[ref(a), ref(b)] for a, b in c.sides],
                        "exact": opt(c.exact),
                    }
                    for c in self.cracks
                ],
                "bulk": [
                    {
                        "vertices": b.vertices.tolist(),
                        "tags": ["outer" if t is None else {"crack": t.i} for t in b.tags],
                        "beta": b.beta.to_json(),
                        "alpha": b.alpha.to_json(),
                        "f": b.f.to_json(),
                        "g": b.g.to_json(),
                        "exact": opt(b.exact),
                    }
                    for b in self.bulks
                ],
            },
        }


_KNOWN_KEYS = {
    "top": {"name", "bounding_box", "components", "description", "variants", "notes"},
    "bulk": {"vertices", "tags", "beta", "alpha", "f", "g", "exact", "label"},
    "cracks": {"vertices", "speed", "beta", "alpha", "f", "g", "endpoints", "sides", "exact", "label"},
    "points": {"x", "alpha", "f", "exact", "label"},
}


def _check_keys(obj, kind, where):
    unknown = set(obj) - _KNOWN_KEYS[kind]
    if unknown:
        raise DomainError(f"{where}: unknown keys {sorted(unknown)}")


def _opt_field(obj, key, default=None, vector=False):
    if key not in obj or obj[key] is None:
        return default
    return FieldSpec.parse(obj[key], vector=vector)


def _crack_speed(obj, vertices, where, eps):
    if "speed" in obj and "beta" in obj:
        raise DomainError(f"{where}: give either 'speed' or 'beta', not both")
    if "beta" in obj:
        beta = np.asarray(obj["beta"], dtype=float)
        if beta.shape != (2,):
            raise DomainError(f"{where}: crack 'beta' must be a constant 2-vector")
        e = np.diff(vertices, axis=0)
        t = e / np.hypot(e[:, 0], e[:, 1])[:, None]
        speeds = t @ beta
        normal_part = np.abs(t[:, 0] * beta[1] - t[:, 1] * beta[0])
        if np.any(normal_part > 1e-12 * max(1.0, np.hypot(*beta))) or np.ptp(speeds) > 1e-12:
            raise FieldError(f"{where}: beta {beta.tolist()} is not tangential to every segment")
        return FieldSpec.constant(float(speeds[0]))
    return FieldSpec.parse(obj.get("speed", 1.0))


def _domain_from_json(data) -> FracturedDomain:
    if not isinstance(data, Mapping):
        raise DomainError("domain document must be a JSON object")
    _check_keys(data, "top", "domain")
    comps = data.get("components", {})
    unknown = set(comps) - {"bulk", "cracks", "points"}
    if unknown:
        raise DomainError(f"components: unknown keys {sorted(unknown)}")
    zero = FieldSpec.constant(0.0)

    def ref(obj, d, where):
        if obj is None or obj == "outer":
            return None
        if isinstance(obj, int):
            return ComponentId(d, obj)
        key = {0: "point", 1: "crack", 2: "bulk"}[d]
        if isinstance(obj, Mapping) and key in obj:
            return ComponentId(d, int(obj[key]))
        raise DomainError(f"{where}: bad reference {obj!r}")

    points = []
    for i, p in enumerate(comps.get("points", []), start=1):
        _check_keys(p, "points", f"points[{i}]")
        points.append(
            PointComponent(
                ComponentId(0, i),
                np.asarray(p["x"], dtype=float),
                alpha=float(p.get("alpha", 0.0)),
                f=float(p.get("f", 0.0)),
                exact=_opt_field(p, "exact"),
            )
        )
    cracks = []
    for i, c in enumerate(comps.get("cracks", []), start=1):
        where = f"cracks[{i}]"
        _check_keys(c, "cracks", where)
        v = np.asarray(c["vertices"], dtype=float)
        ends = c.get("endpoints", ["outer", "outer"])
        if len(ends) != 2:
            raise DomainError(f"{where}: endpoints must have two entries")
        cracks.append(
            CrackComponent(
                ComponentId(1, i),
                v,
                speed=_crack_speed(c, v, where, 0.0),
                alpha=_opt_field(c, "alpha", zero),
                f=_opt_field(c, "f", zero),
                g=_opt_field(c, "g", zero),
                endpoints=tuple(ref(e, 0, where) for e in ends),
                sides=tuple(tuple(ref(b, 2, where) for b in pair) for pair in c.get("sides", [])),
                exact=_opt_field(c, "exact"),
            )
        )
    bulks = []
    for i, b in enumerate(comps.get("bulk", []), start=1):
        where = f"bulk[{i}]"
        _check_keys(b, "bulk", where)
        v = np.asarray(b["vertices"], dtype=float)
        tags = tuple(ref(t, 1, where) for t in b.get("tags", ["outer"] * len(v)))
        bulks.append(
            BulkComponent(
                ComponentId(2, i),
                v,
                tags,
                beta=_opt_field(b, "beta", FieldSpec.constant([0.0, 0.0]), vector=True),
                alpha=_opt_field(b, "alpha", zero),
                f=_opt_field(b, "f", zero),
                g=_opt_field(b, "g", zero),
                exact=_opt_field(b, "exact"),
            )
        )
    return FracturedDomain(
        bulks, cracks, points, data.get("bounding_box", [[0, 0], [1, 1]]), data.get("name", "")
    )


# ---------------------------------------------------------------------------
# operations on analytic functions


def codim_jump(entries) -> float:
    """Sum of (nu.beta) * quantity over the incident higher-dimensional components.

    ``entries`` holds ``(weight, quantity)`` pairs; an empty list (top
    dimension) gives 0.
    """
    return float(sum(w * q for w, q in entries))


def interface_jump(d: int, v_trace: float, v_lower: float) -> float:
    if d == 0:
        return 0.0
    return v_trace - v_lower


def _crack_trace_at_end(domain, v, crack_id, end):
    c = domain[crack_id]
    xe = c.endpoint(end)[None]
    return float(pick(v, crack_id)(xe)[0])


def d_beta_analytic(domain: FracturedDomain, v, cid: ComponentId, point) -> np.ndarray:
    """Mixed-dimensional directional derivative D_beta v at points of a component."""
    comp = domain[cid]
    x = _as_points(point)
    vd = pick(v, cid)
    if cid.d == 2:
        return np.einsum("ij,ij->i", comp.beta(x), vd.gradient(x))
    if cid.d == 1:
        seg = comp.locate(x, domain.eps)
        out = comp.speed(x) * np.einsum("ij,ij->i", comp.tangents[seg], vd.gradient(x))
        own = vd(x)
        for s in np.unique(seg):
            m = seg == s
            for bulk, nu, _ in domain.crack_neighbours(comp, seg[m]):
                flux = np.einsum("ij,ij->i", nu, bulk.beta(x[m]))
                out[m] += flux * (own[m] - pick(v, bulk.cid)(x[m]))
        return out
    v0 = float(vd(comp.x[None])[0])
    total = 0.0
    for crack_id, end in comp.incident:
        c = domain[crack_id]
        xe = c.endpoint(end)[None]
        s = np.array([c.endpoint_segment(end)])
        flux = float(c.endpoint_normal(end) @ c.beta(xe, s)[0])
        total += flux * (v0 - _crack_trace_at_end(domain, v, crack_id, end))
    return np.full(len(x), total)


def _component_rules(domain, order):
    """Quadrature on the exact geometry: {cid: (points, weights, segment index or None)}."""
    rules = {}
    for b in domain.bulks:
        pts, wts = zip(*(polygon_rule(piece, order) for piece in b.pieces))
        rules[b.cid] = (np.concatenate(pts), np.concatenate(wts), None)
    for c in domain.cracks:
        pts, wts, seg = [], [], []
        for s in range(c.nseg):
            p, w = segment_rule(c.vertices[s], c.vertices[s + 1], order)
            pts.append(p)
            wts.append(w)
            seg.append(np.full(len(w), s))
        rules[c.cid] = (np.concatenate(pts), np.concatenate(wts), np.concatenate(seg))
    for p in domain.points:
        rules[p.cid] = (p.x[None].copy(), np.ones(1), None)
    return rules


def verify_partial_integration(domain: FracturedDomain, v, w, quad_order: int = 4) -> float:
    """Absolute residual of the mixed-dimensional partial integration formula.

    Evaluates (D v, w) + (v, D w) + ((Div beta) v, w) - (nu.beta [v], [w])_I
    - (nu.beta v, w)_B with all integrals taken on the exact component geometry.
    """
    rules = _component_rules(domain, quad_order)
    volume = 0.0
    for comp in domain.components():
        x, wts, seg = rules[comp.cid]
        vd, wd = pick(v, comp.cid)(x), pick(w, comp.cid)(x)
        dv = d_beta_analytic(domain, v, comp.cid, x)
        dw = d_beta_analytic(domain, w, comp.cid, x)
        div = domain.div_beta(comp.cid, x, seg)
        volume += float(np.sum(wts * (dv * wd + vd * dw + div * vd * wd)))

    boundary = 0.0
    for b in domain.bulks:
        vb, wb = pick(v, b.cid), pick(w, b.cid)
        for p, q, tag in b.segments():
            x, wts = segment_rule(p, q, quad_order)
            e = (q - p) / np.hypot(*(q - p))
            nu = np.array([e[1], -e[0]])
            flux = b.beta(x) @ nu
            jv, jw = vb(x), wb(x)
            if tag is not None:
                jv = jv - pick(v, tag)(x)
                jw = jw - pick(w, tag)(x)
            boundary += float(np.sum(wts * flux * jv * jw))
    for c in domain.cracks:
        vc, wc = pick(v, c.cid), pick(w, c.cid)
        for end, tag in enumerate(c.endpoints):
            xe = c.endpoint(end)[None]
            s = np.array([c.endpoint_segment(end)])
            flux = float(c.endpoint_normal(end) @ c.beta(xe, s)[0])
            jv, jw = float(vc(xe)[0]), float(wc(xe)[0])
            if tag is not None:
                jv -= float(pick(v, tag)(domain[tag].x[None])[0])
                jw -= float(pick(w, tag)(domain[tag].x[None])[0])
            boundary += flux * jv * jw
    return abs(volume - boundary)


def coercivity_indicator(domain: FracturedDomain, sample_density: int = 8) -> float:
    """Minimum of 2 alpha + Div beta over sample points of every component."""
    rules = _component_rules(domain, max(2, sample_density))
    lows = []
    for comp in domain.components():
        x, _, seg = rules[comp.cid]
        if comp.cid.d == 1:
            # include the endpoints, where affine fields attain their extremes
            x = np.vstack([x, comp.vertices])
            seg = np.concatenate([seg, np.arange(comp.nseg), [comp.nseg - 1]])
        val = 2.0 * domain.alpha(comp.cid, x) + domain.div_beta(comp.cid, x, seg)
        lows.append(float(val.min()))
    return min(lows) if lows else 0.0
