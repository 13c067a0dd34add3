"""Background triangulation, active meshes and cut quadrature.

The background mesh is a structured grid of ``nx x nx`` cells, each split into
two triangles along the same diagonal.  For every component the active mesh
collects the background triangles it cuts with positive measure, together
with the cut geometry (convex polygons, sub-segments or the point itself) and
quadrature rules on it.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .domain import ComponentId, FracturedDomain
from .errors import GeometryError, ParameterError
from .quadrature import polygon_area, polygon_rule, segment_rule

BARY_TOL = 1e-11
SIDE_OFFSET = 1e-8  # times h


@dataclass(frozen=True, eq=False)
class BackgroundMesh:
    nx: int
    vertices: np.ndarray
    triangles: np.ndarray
    origin: np.ndarray
    size: np.ndarray
    edges: np.ndarray
    edge_triangles: np.ndarray  # (n_edges, 2), -1 on the boundary
    _inv: np.ndarray = field(repr=False)
    grads: np.ndarray = field(repr=False)  # (ntri, 3, 2) gradients of the P1 basis

    @property
    def h(self) -> float:
        """Mesh parameter: the cell size (the longest edge is sqrt(2) h)."""
        return float(self.size.max() / self.nx)

    @property
    def max_edge(self) -> float:
        return float(np.hypot(*self.size) / self.nx)

    @property
    def ntri(self) -> int:
        return len(self.triangles)

    @property
    def eps(self) -> float:
        return 1e-10 * float(np.hypot(*self.size))

    def tri_xy(self, t) -> np.ndarray:
        return self.vertices[self.triangles[t]]

    def areas(self) -> np.ndarray:
        xy = self.vertices[self.triangles]
        e1 = xy[:, 1] - xy[:, 0]
        e2 = xy[:, 2] - xy[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def barycentric(self, t, x) -> np.ndarray:
        """Barycentric coordinates of points x (n, 2) in triangles t (scalar or (n,))."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t = np.broadcast_to(np.asarray(t), (len(x),))
        a = self.vertices[self.triangles[t, 0]]
        lam12 = np.einsum("nij,nj->ni", self._inv[t], x - a)
        return np.column_stack([1.0 - lam12.sum(axis=1), lam12])

    def candidates(self, lo, hi) -> np.ndarray:
        """Triangles of all cells meeting the box [lo, hi] (inclusive, slightly padded)."""
        lo = (np.asarray(lo, dtype=float) - self.origin) / self.size * self.nx
        hi = (np.asarray(hi, dtype=float) - self.origin) / self.size * self.nx
        pad = 1e-9
        i0, j0 = np.clip(np.floor(lo - pad).astype(int), 0, self.nx - 1)
        i1, j1 = np.clip(np.floor(hi + pad).astype(int), 0, self.nx - 1)
        cells = (np.arange(j0, j1 + 1)[:, None] * self.nx + np.arange(i0, i1 + 1)[None, :]).ravel()
        return np.sort(np.concatenate([2 * cells, 2 * cells + 1]))

    def containing(self, x, tol: float = BARY_TOL) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        cand = self.candidates(x, x)
        lam = self.barycentric(cand, np.repeat(x[None], len(cand), axis=0))
        return cand[np.all(lam >= -tol, axis=1)]


def build_background_mesh(nx: int, bounding_box=((0.0, 0.0), (1.0, 1.0))) -> BackgroundMesh:
    if int(nx) != nx or nx < 2:
        raise ParameterError(f"nx must be an integer >= 2, got {nx}")
    nx = int(nx)
    lo, hi = np.asarray(bounding_box, dtype=float)
    size = hi - lo
    xs = np.linspace(lo[0], hi[0], nx + 1)
    ys = np.linspace(lo[1], hi[1], nx + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    j, i = np.meshgrid(np.arange(nx), np.arange(nx), indexing="ij")
    v00 = (j * (nx + 1) + i).ravel()
    v10, v01 = v00 + 1, v00 + nx + 1
    v11 = v01 + 1
    tris = np.empty((2 * nx * nx, 3), dtype=int)
    tris[0::2] = np.column_stack([v00, v10, v11])
    tris[1::2] = np.column_stack([v00, v11, v01])

    xy = vertices[tris]
    B = np.stack([xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]], axis=2)  # columns are edges
    inv = np.linalg.inv(B)
    grads = np.empty((len(tris), 3, 2))
    grads[:, 1:, :] = inv
    grads[:, 0, :] = -inv.sum(axis=1)

    local = np.array([[0, 1], [1, 2], [2, 0]])
    e = np.sort(tris[:, local].reshape(-1, 2), axis=1)
    edges, inverse = np.unique(e, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    owner = np.repeat(np.arange(len(tris)), 3)
    edge_tris = np.full((len(edges), 2), -1)
    order = np.argsort(inverse, kind="stable")
    for k in order:
        slot = 0 if edge_tris[inverse[k], 0] < 0 else 1
        edge_tris[inverse[k], slot] = owner[k]
    return BackgroundMesh(nx, vertices, tris, lo, size, edges, edge_tris, inv, grads)


# ---------------------------------------------------------------------------
# clipping


def _edge_distances(tri, pts, eps):
    """Signed distances of pts to the three edge lines of a ccw triangle, snapped to 0."""
    tri = np.asarray(tri, dtype=float)
    a = tri
    e = np.roll(tri, -1, axis=0) - tri
    L = np.hypot(e[:, 0], e[:, 1])
    d = (e[None, :, 0] * (pts[:, None, 1] - a[None, :, 1])
         - e[None, :, 1] * (pts[:, None, 0] - a[None, :, 0])) / L[None, :]
    d[np.abs(d) <= eps] = 0.0
    return d


def segment_interval(p, q, tri, eps: float = 1e-10):
    """Parameter interval (t0, t1) of segment p->q inside triangle, or None."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = _edge_distances(tri, np.array([p, q]), eps)
    t0, t1 = 0.0, 1.0
    for k in range(3):
        s0, s1 = d[0, k], d[1, k]
        if s0 >= 0 and s1 >= 0:
            continue
        if s0 < 0 and s1 < 0:
            return None
        t = s0 / (s0 - s1)
        if s0 < 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
    length = np.hypot(*(q - p))
    if (t1 - t0) * length < eps:
        return None
    return t0, t1


def clip_segment_triangle(p, q, tri, eps: float = 1e-10):
    """Sub-segment of p->q inside the triangle as a (2, 2) array, or None."""
    iv = segment_interval(p, q, tri, eps)
    if iv is None:
        return None
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return np.array([p + iv[0] * (q - p), p + iv[1] * (q - p)])


def clip_polygon_triangle(poly, tri, eps: float = 1e-10):
    """Intersection of a convex polygon with a ccw triangle (Sutherland-Hodgman), or None."""
    out = np.asarray(poly, dtype=float)
    tri = np.asarray(tri, dtype=float)
    for k in range(3):
        if len(out) < 3:
            return None
        a, b = tri[k], tri[(k + 1) % 3]
        e = b - a
        s = (e[0] * (out[:, 1] - a[1]) - e[1] * (out[:, 0] - a[0])) / np.hypot(*e)
        s[np.abs(s) <= eps] = 0.0
        if np.all(s >= 0):
            continue
        if np.all(s <= 0):
            return None
        kept = []
        n = len(out)
        for i in range(n):
            j = (i + 1) % n
            if s[i] >= 0:
                kept.append(out[i])
            if (s[i] > 0 and s[j] < 0) or (s[i] < 0 and s[j] > 0):
                t = s[i] / (s[i] - s[j])
                kept.append(out[i] + t * (out[j] - out[i]))
        out = np.array(kept)
    # drop repeated vertices
    keep = np.hypot(*(out - np.roll(out, -1, axis=0)).T) > eps
    out = out[keep]
    if len(out) < 3 or polygon_area(out) < eps * eps:
        return None
    return out


# ---------------------------------------------------------------------------
# active meshes


@dataclass
class ActiveMesh:
    cid: ComponentId
    triangles: np.ndarray
    cells: dict  # triangle -> list of cut entities
    qx: np.ndarray
    qw: np.ndarray
    qtri: np.ndarray
    qseg: np.ndarray | None = None  # crack segment of each quadrature point
    end_tri: tuple = ()  # cracks: host triangle at the start and end vertex
    # bulk: quadrature on outer boundary segments
    bx: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    bw: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bnu: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    btri: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    mask: np.ndarray | None = field(default=None, repr=False)

    @property
    def measure(self) -> float:
        if self.cid.d == 0:
            return 1.0
        return float(self.qw.sum())

    def entity_measures(self):
        """(triangle, measure) for every cut entity."""
        for t in sorted(self.cells):
            for ent in self.cells[t]:
                if self.cid.d == 2:
                    yield t, polygon_area(ent)
                elif self.cid.d == 1:
                    yield t, float(np.hypot(*(ent[1] - ent[0])))
                else:
                    yield t, 0.0


def split_segment(p, q, mesh: BackgroundMesh, eps: float):
    """Tile segment p->q by background triangles.

    Returns ``(pieces, touched)``: pieces are ``(triangle, t0, t1)`` covering
    [0, 1] without overlap (a piece on a shared edge goes to the lower-indexed
    triangle); ``touched`` are all triangles meeting the segment with positive
    length.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    L = float(np.hypot(*(q - p)))
    cand = mesh.candidates(np.minimum(p, q), np.maximum(p, q))
    hits = []
    for t in cand:
        iv = segment_interval(p, q, mesh.tri_xy(t), eps)
        if iv is not None:
            hits.append((int(t), iv[0], iv[1]))
    if not hits:
        raise GeometryError(f"segment {p}->{q} lies outside the background mesh")
    breaks = sorted({0.0, 1.0, *(h[1] for h in hits), *(h[2] for h in hits)})
    merged = [breaks[0]]
    for b in breaks[1:]:
        if (b - merged[-1]) * L > eps:
            merged.append(b)
    merged[-1] = 1.0
    pieces = []
    for a, b in zip(merged[:-1], merged[1:]):
        mid = 0.5 * (a + b)
        owners = [t for t, t0, t1 in hits if t0 - eps / L <= mid <= t1 + eps / L]
        if not owners:
            raise GeometryError(f"segment {p}->{q} leaves the background mesh near t={mid:.3g}")
        t = min(owners)
        if pieces and pieces[-1][0] == t and abs(pieces[-1][2] - a) * L <= eps:
            pieces[-1] = (t, pieces[-1][1], b)
        else:
            pieces.append((t, a, b))
    return pieces, sorted({h[0] for h in hits})


def locate_point(active: ActiveMesh, mesh: BackgroundMesh, point, side_hint=None) -> int:
    """Lowest-indexed active triangle containing the point.

    ``side_hint = (nu, sign)`` first moves the point by ``sign * 1e-8 h * nu``,
    which picks the triangle on a definite side when the point lies on an edge.
    """
    x = np.asarray(point, dtype=float)
    if side_hint is not None:
        nu, sign = side_hint
        x = x + sign * SIDE_OFFSET * mesh.h * np.asarray(nu, dtype=float)
    for t in mesh.containing(x):
        if active.mask[t]:
            return int(t)
    raise GeometryError(f"no triangle of the active mesh of {active.cid} contains {x}")


def _finish(cid, mesh, cells, qx, qw, qtri, **extra):
    tris = np.array(sorted(cells), dtype=int)
    mask = np.zeros(mesh.ntri, dtype=bool)
    mask[tris] = True
    return ActiveMesh(
        cid,
        tris,
        cells,
        np.asarray(qx, dtype=float).reshape(-1, 2),
        np.asarray(qw, dtype=float),
        np.asarray(qtri, dtype=int),
        mask=mask,
        **extra,
    )


def _bulk_active(domain, bulk, mesh, order):
    eps = domain.eps
    cells: dict[int, list] = {}
    qx, qw, qt = [], [], []
    for piece in bulk.pieces:
        for t in mesh.candidates(piece.min(axis=0), piece.max(axis=0)):
            poly = clip_polygon_triangle(piece, mesh.tri_xy(t), eps)
            if poly is None:
                continue
            cells.setdefault(int(t), []).append(poly)
    for t in sorted(cells):
        for poly in cells[t]:
            x, w = polygon_rule(poly, order)
            qx.append(x)
            qw.append(w)
            qt.append(np.full(len(w), t))
    if not cells:
        raise GeometryError(f"bulk {bulk.cid} does not intersect the background mesh")
    am = _finish(bulk.cid, mesh, cells, np.concatenate(qx), np.concatenate(qw), np.concatenate(qt))
    # outer boundary quadrature, hosts resolved from the inside
    bx, bw, bnu, bt = [], [], [], []
    for p, q, tag in bulk.segments():
        if tag is not None:
            continue
        e = (q - p) / np.hypot(*(q - p))
        nu = np.array([e[1], -e[0]])
        pieces, _ = split_segment(p, q, mesh, eps)
        for _, t0, t1 in pieces:
            x, w = segment_rule(p + t0 * (q - p), p + t1 * (q - p), order=5)
            mid = p + 0.5 * (t0 + t1) * (q - p)
            host = locate_point(am, mesh, mid, (nu, -1.0))
            bx.append(x)
            bw.append(w)
            bnu.append(np.repeat(nu[None], len(w), axis=0))
            bt.append(np.full(len(w), host))
    if bx:
        am.bx = np.concatenate(bx)
        am.bw = np.concatenate(bw)
        am.bnu = np.concatenate(bnu)
        am.btri = np.concatenate(bt)
    return am


def _crack_active(domain, crack, mesh, order):
    eps = domain.eps
    cells: dict[int, list] = {}
    qx, qw, qt, qs = [], [], [], []
    first = last = None
    for s in range(crack.nseg):
        p, q = crack.vertices[s], crack.vertices[s + 1]
        pieces, touched = split_segment(p, q, mesh, eps)
        for t in touched:
            cells.setdefault(t, [])
        for t, t0, t1 in pieces:
            a, b = p + t0 * (q - p), p + t1 * (q - p)
            cells[t].append(np.array([a, b]))
            x, w = segment_rule(a, b, order=max(order, 5))
            qx.append(x)
            qw.append(w)
            qt.append(np.full(len(w), t))
            qs.append(np.full(len(w), s))
        if s == 0:
            first = pieces[0][0]
        last = pieces[-1][0]
    return _finish(
        crack.cid, mesh, cells,
        np.concatenate(qx), np.concatenate(qw), np.concatenate(qt),
        qseg=np.concatenate(qs), end_tri=(first, last),
    )


def _point_active(domain, point, mesh):
    hosts = mesh.containing(point.x)
    if len(hosts) == 0:
        raise GeometryError(f"point {point.cid} at {point.x} lies outside the background mesh")
    t = int(hosts.min())
    return _finish(point.cid, mesh, {t: [point.x[None].copy()]}, point.x[None], np.ones(1), [t])


def extract_active_mesh(domain: FracturedDomain, cid: ComponentId, mesh: BackgroundMesh,
                        order: int = 2) -> ActiveMesh:
    comp = domain[cid]
    if cid.d == 2:
        return _bulk_active(domain, comp, mesh, order)
    if cid.d == 1:
        return _crack_active(domain, comp, mesh, order)
    return _point_active(domain, comp, mesh)


# ---------------------------------------------------------------------------
# interface quadrature


@dataclass
class InterfaceQuadrature:
    """Quadrature along one crack with one-sided host triangles in the bulk meshes.

    ``bulk[k]`` / ``host[k]`` hold, for side k (0 = left, 1 = right), the
    0-based index into ``domain.bulks`` (or -1) and the host triangle of the
    trace (or -1) at every quadrature point.
    """

    cid: ComponentId
    x: np.ndarray
    w: np.ndarray
    seg: np.ndarray
    crack_tri: np.ndarray
    normal: np.ndarray  # left normal of the crack segment
    bulk: np.ndarray  # (2, nq)
    host: np.ndarray  # (2, nq)

    def exterior_normal(self, k: int) -> np.ndarray:
        return -self.normal if k == 0 else self.normal


def build_interface_quadrature(domain: FracturedDomain, actives: dict, mesh: BackgroundMesh):
    bulk_index = {b.cid: k for k, b in enumerate(domain.bulks)}
    out = {}
    for crack in domain.cracks:
        am = actives[crack.cid]
        nq = len(am.qw)
        normal = crack.normals[am.qseg]
        bulk = np.full((2, nq), -1)
        host = np.full((2, nq), -1)
        for q in range(nq):
            s = am.qseg[q]
            for k in (0, 1):
                bid = crack.sides[s][k]
                if bid is None:
                    continue
                nu = -normal[q] if k == 0 else normal[q]
                try:
                    host[k, q] = locate_point(actives[bid], mesh, am.qx[q], (nu, -1.0))
                except GeometryError as err:
                    raise GeometryError(
                        f"crack {crack.cid}: no host for the {('left', 'right')[k]} trace "
                        f"at {am.qx[q]} in bulk {bid} ({err})"
                    ) from None
                bulk[k, q] = bulk_index[bid]
        out[crack.cid] = InterfaceQuadrature(
            crack.cid, am.qx, am.qw, am.qseg, am.qtri, normal, bulk, host
        )
    return out


# ---------------------------------------------------------------------------


@dataclass
class CutMesh:
    """Background mesh with the active meshes and interface rules of a domain."""

    domain: FracturedDomain
    mesh: BackgroundMesh
    actives: dict
    interfaces: dict

    @property
    def h(self) -> float:
        return self.mesh.h


def build_cut_mesh(domain: FracturedDomain, nx: int, order: int = 2, workers: int = 1) -> CutMesh:
    mesh = build_background_mesh(nx, domain.bbox)
    cids = [c.cid for c in domain.components()]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            ams = list(pool.map(lambda c: extract_active_mesh(domain, c, mesh, order), cids))
    else:
        ams = [extract_active_mesh(domain, c, mesh, order) for c in cids]
    actives = dict(zip(cids, ams))
    return CutMesh(domain, mesh, actives, build_interface_quadrature(domain, actives, mesh))


def dump_cut_geometry(cut: CutMesh, path) -> None:
    """CSV with one row per cut entity: component, triangle, measure."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["d", "i", "triangle", "measure"])
        for cid, am in cut.actives.items():
            for t, m in am.entity_measures():
                wr.writerow([cid.d, cid.i, t, repr(float(m))])
