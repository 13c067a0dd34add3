"""P1 cut finite element discretization with GLS and full-gradient stabilization.

Every component of dimension 1 or 2 carries its own continuous P1 space on
its active mesh; a bifurcation point carries a single scalar.  All terms are
assembled from *functionals*: at each quadrature point a quantity such as
``v``, ``L v`` or an interface jump is represented by index/coefficient
arrays ``(idx, coef)`` with ``value = sum(coef * u[idx])``.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .domain import ComponentId, FracturedDomain
from .errors import AssemblyError, GeometryError, ParameterError
from .linalg import TripletBuffer, solve_lu
from .mesh import BackgroundMesh, CutMesh, build_cut_mesh, locate_point


# ---------------------------------------------------------------------------
# basis functions


def eval_basis(tri, point, eps: float = 1e-10):
    """Values and gradients of the three P1 basis functions of a triangle at a point."""
    tri = np.asarray(tri, dtype=float)
    x = np.asarray(point, dtype=float)
    B = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
    inv = np.linalg.inv(B)
    l12 = inv @ (x - tri[0])
    lam = np.array([1.0 - l12.sum(), l12[0], l12[1]])
    # distance-like tolerance: barycentric scaled by the triangle size
    scale = np.hypot(*B[:, 0]) + np.hypot(*B[:, 1])
    if np.any(lam * scale < -eps):
        raise GeometryError(f"point {x} lies outside triangle {tri.tolist()}")
    grads = np.vstack([-inv.sum(axis=0), inv])
    return lam, grads


# ---------------------------------------------------------------------------
# functionals


@dataclass
class Fn:
    """Pointwise linear functional: value[q] = sum_k coef[q, k] * u[idx[q, k]]."""

    idx: np.ndarray
    coef: np.ndarray

    def __add__(self, other: "Fn") -> "Fn":
        return Fn(np.hstack([self.idx, other.idx]), np.hstack([self.coef, other.coef]))

    def scaled(self, s) -> "Fn":
        return Fn(self.idx, self.coef * np.asarray(s)[:, None])

    def take(self, m) -> "Fn":
        return Fn(self.idx[m], self.coef[m])

    def apply(self, u) -> np.ndarray:
        u = np.asarray(u)
        if u.ndim == 2:  # several coefficient vectors as columns
            return np.einsum("qk,qkm->qm", self.coef, u[self.idx])
        return np.sum(self.coef * u[self.idx], axis=1)


# ---------------------------------------------------------------------------
# degrees of freedom


@dataclass
class DofMap:
    cut: CutMesh
    vertices: dict  # cid -> ascending background vertex indices (empty for points)
    offsets: dict  # cid -> first global dof
    local: dict  # cid -> array over background vertices: global dof or -1
    n: int

    @property
    def mesh(self) -> BackgroundMesh:
        return self.cut.mesh

    def count(self, cid: ComponentId) -> int:
        return 1 if cid.d == 0 else len(self.vertices[cid])

    def component_slice(self, cid: ComponentId) -> slice:
        return slice(self.offsets[cid], self.offsets[cid] + self.count(cid))

    def owner(self, dof: int) -> ComponentId:
        for cid, off in self.offsets.items():
            if off <= dof < off + self.count(cid):
                return cid
        raise IndexError(dof)

    def value(self, cid: ComponentId, x, tri) -> Fn:
        """Evaluation functional of component cid at points x hosted by triangles tri."""
        if cid.d == 0:
            n = len(np.atleast_2d(x))
            return Fn(np.full((n, 1), self.offsets[cid]), np.ones((n, 1)))
        tri = np.asarray(tri, dtype=int)
        idx = self.local[cid][self.mesh.triangles[tri]]
        if np.any(idx < 0):
            raise GeometryError(f"host triangle outside the active mesh of {cid}")
        return Fn(idx, self.mesh.barycentric(tri, x))

    def gradient(self, cid: ComponentId, tri):
        """(idx, G) with G[q, k] the gradient of basis k in triangle tri[q]."""
        tri = np.asarray(tri, dtype=int)
        return self.local[cid][self.mesh.triangles[tri]], self.mesh.grads[tri]


def build_dof_map(cut: CutMesh) -> DofMap:
    vertices, offsets, local = {}, {}, {}
    n = 0
    nv = len(cut.mesh.vertices)
    for comp in cut.domain.components():
        cid = comp.cid
        offsets[cid] = n
        if cid.d == 0:
            vertices[cid] = np.zeros(0, dtype=int)
            local[cid] = np.full(nv, -1)
            n += 1
            continue
        am = cut.actives[cid]
        verts = np.unique(cut.mesh.triangles[am.triangles])
        vertices[cid] = verts
        loc = np.full(nv, -1)
        loc[verts] = n + np.arange(len(verts))
        local[cid] = loc
        n += len(verts)
    return DofMap(cut, vertices, offsets, local, n)


# ---------------------------------------------------------------------------
# the operator L and the boundary functionals


def stabilization_scale(d: int, h: float, tau2: float, n: int = 2) -> float:
    return tau2 * h ** (3 - (n - d))


def point_trace(dm: DofMap, crack_id: ComponentId, end: int) -> Fn:
    """Value of a crack at one of its endpoints."""
    crack = dm.cut.domain[crack_id]
    t = dm.cut.actives[crack_id].end_tri[end]
    return dm.value(crack_id, crack.endpoint(end)[None], [t])


def operator_L(dm: DofMap, cid: ComponentId):
    """(points, weights, L functional, value functional) on the cut quadrature of cid."""
    cut = dm.cut
    dom = cut.domain
    comp = dom[cid]
    if cid.d == 2:
        am = cut.actives[cid]
        x, w, tri = am.qx, am.qw, am.qtri
        V = dm.value(cid, x, tri)
        idx, G = dm.gradient(cid, tri)
        gamma = dom.gamma(cid, x)
        coef = np.einsum("qj,qkj->qk", comp.beta(x), G) + gamma[:, None] * V.coef
        return x, w, Fn(idx, coef), V
    if cid.d == 1:
        iq = cut.interfaces[cid]
        x, w, tri, seg = iq.x, iq.w, iq.crack_tri, iq.seg
        V = dm.value(cid, x, tri)
        idx, G = dm.gradient(cid, tri)
        react = comp.div_tangential(x, seg) + dom.alpha(cid, x)
        coef = np.einsum("qj,qkj->qk", comp.beta(x, seg), G) + react[:, None] * V.coef
        L = Fn(idx, coef)
        for k in (0, 1):
            cols_i = V.idx.copy()
            cols_c = np.zeros_like(V.coef)
            for b in np.unique(iq.bulk[k][iq.bulk[k] >= 0]):
                m = iq.bulk[k] == b
                bulk = dom.bulks[b]
                nu = iq.exterior_normal(k)[m]
                flux = np.einsum("qj,qj->q", nu, bulk.beta(x[m]))
                Tb = dm.value(bulk.cid, x[m], iq.host[k][m])
                cols_i[m] = Tb.idx
                cols_c[m] = -flux[:, None] * Tb.coef
            L = L + Fn(cols_i, cols_c)
        return x, w, L, V
    # point
    x = comp.x[None]
    V = dm.value(cid, x, None)
    L = V.scaled(np.array([float(comp.alpha)]))
    for crack_id, end in comp.incident:
        crack = dom[crack_id]
        s = np.array([crack.endpoint_segment(end)])
        flux = float(crack.endpoint_normal(end) @ crack.beta(x, s)[0])
        L = L + point_trace(dm, crack_id, end).scaled(np.array([-flux]))
    return x, np.ones(1), L, V


@dataclass
class BoundaryTerm:
    """Weighted product term sum_q w[q] * J v * J w (+ rhs w[q] g[q] * J w)."""

    kind: str  # 'interface' or 'boundary'
    cid: ComponentId
    w: np.ndarray  # quadrature weight times nu.beta (signed)
    J: Fn
    g: np.ndarray | None = None
    x: np.ndarray | None = None
    tri: np.ndarray | None = None
    plus: ComponentId | None = None  # J = v_plus - v_minus at x
    minus: ComponentId | None = None


def boundary_terms(dm: DofMap, cid: ComponentId) -> list[BoundaryTerm]:
    """Interface and outer-boundary terms owned by a component, with signed flux weights.

    Bulks own their outer boundary; cracks own their interfaces with the bulk
    on each side and their endpoint terms.  Points own nothing.
    """
    cut = dm.cut
    dom = cut.domain
    comp = dom[cid]
    out = []
    if cid.d == 2:
        am = cut.actives[cid]
        if len(am.bw):
            flux = np.einsum("qj,qj->q", am.bnu, comp.beta(am.bx))
            J = dm.value(cid, am.bx, am.btri)
            out.append(BoundaryTerm("boundary", cid, am.bw * flux, J, comp.g(am.bx), am.bx, am.btri, cid))
        return out
    if cid.d == 1:
        iq = cut.interfaces[cid]
        Vc = dm.value(cid, iq.x, iq.crack_tri)
        for k in (0, 1):
            for b in np.unique(iq.bulk[k][iq.bulk[k] >= 0]):
                m = iq.bulk[k] == b
                bulk = dom.bulks[b]
                flux = np.einsum("qj,qj->q", iq.exterior_normal(k)[m], bulk.beta(iq.x[m]))
                Tb = dm.value(bulk.cid, iq.x[m], iq.host[k][m])
                J = Tb + Vc.take(m).scaled(-np.ones(m.sum()))
                out.append(BoundaryTerm("interface", cid, iq.w[m] * flux, J, None, iq.x[m], iq.host[k][m],
                                       bulk.cid, cid))
        for end, tag in enumerate(comp.endpoints):
            P = comp.endpoint(end)[None]
            s = np.array([comp.endpoint_segment(end)])
            flux = np.array([float(comp.endpoint_normal(end) @ comp.beta(P, s)[0])])
            T = point_trace(dm, cid, end)
            tri = np.array([cut.actives[cid].end_tri[end]])
            if tag is None:
                out.append(BoundaryTerm("boundary", cid, flux, T, comp.g(P), P, tri, cid))
            else:
                J = T + dm.value(tag, P, None).scaled(np.array([-1.0]))
                out.append(BoundaryTerm("interface", cid, flux, J, None, P, tri, cid, tag))
    return out


# ---------------------------------------------------------------------------
# assembly


@dataclass
class AssembledSystem:
    A: sp.csr_matrix
    b: np.ndarray
    dofmap: DofMap
    tau1: float
    tau2: float
    timings: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.dofmap.n


def _check_finite(cid, term, vals, tri):
    vals = np.asarray(vals)
    if np.all(np.isfinite(vals)):
        return
    bad = np.argwhere(~np.isfinite(vals.reshape(len(vals), -1)))[0, 0]
    t = None if tri is None else int(np.asarray(tri).ravel()[bad])
    raise AssemblyError(f"non-finite {term} contribution in component {cid}, triangle {t}")


def _component_contributions(dm: DofMap, cid: ComponentId, tau1: float, tau2: float):
    cut = dm.cut
    h = cut.h
    buf = TripletBuffer(dm.n)
    rhs_idx, rhs_val = [], []
    comp = cut.domain[cid]
    x, w, L, V = operator_L(dm, cid)
    tri = None if cid.d == 0 else (
        cut.actives[cid].qtri if cid.d == 2 else cut.interfaces[cid].crack_tri
    )
    f = cut.domain.source(cid, x)
    _check_finite(cid, "L", L.coef, tri)
    _check_finite(cid, "source", f, tri)
    # (L v, w) and (tau1 h L v, L w)
    buf.add_outer(L.idx, L.coef, V.idx, V.coef, w)
    buf.add_outer(L.idx, L.coef, L.idx, L.coef, tau1 * h * w)
    rhs_idx += [V.idx, L.idx]
    rhs_val += [(w * f)[:, None] * V.coef, (tau1 * h * w * f)[:, None] * L.coef]
    # full gradient stabilization on whole active triangles
    if cid.d >= 1 and tau2 > 0:
        am = cut.actives[cid]
        idx, G = dm.gradient(cid, am.triangles)
        area = cut.mesh.areas()[am.triangles]
        K = stabilization_scale(cid.d, h, tau2) * area[:, None, None] * np.einsum("tkj,tlj->tkl", G, G)
        _check_finite(cid, "stabilization", K, am.triangles)
        buf.add(np.broadcast_to(idx[:, :, None], K.shape), np.broadcast_to(idx[:, None, :], K.shape), K)
    # inflow terms
    for term in boundary_terms(dm, cid):
        neg = np.maximum(-term.w, 0.0)
        _check_finite(cid, term.kind, term.J.coef, term.tri)
        buf.add_outer(term.J.idx, term.J.coef, term.J.idx, term.J.coef, neg)
        if term.kind == "boundary":
            _check_finite(cid, "boundary data", term.g, term.tri)
            rhs_idx.append(term.J.idx)
            rhs_val.append((neg * term.g)[:, None] * term.J.coef)
    del comp
    return buf, rhs_idx, rhs_val


def assemble(dm: DofMap, tau1: float = 1e-2, tau2: float = 1e-3, workers: int = 1) -> AssembledSystem:
    """Assemble a_h and l_h.

    Contributions are computed per component (optionally in threads) and then
    concatenated in component order, so the result does not depend on the
    number of workers.
    """
    if not tau1 > 0:
        raise ParameterError(f"tau1 must be positive, got {tau1}")
    if not tau2 >= 0:
        raise ParameterError(f"tau2 must be nonnegative, got {tau2}")
    t0 = time.perf_counter()
    cids = [c.cid for c in dm.cut.domain.components()]
    work = lambda cid: _component_contributions(dm, cid, tau1, tau2)  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(work, cids))
    else:
        parts = [work(c) for c in cids]
    total = TripletBuffer(dm.n)
    b = np.zeros(dm.n)
    for buf, ridx, rval in parts:
        total.extend(buf)
        for i, v in zip(ridx, rval):
            np.add.at(b, i.ravel(), v.ravel())
    A = total.compress()
    return AssembledSystem(A, b, dm, tau1, tau2, {"assemble": time.perf_counter() - t0})


def untouched_dofs(A, rel: float = 1e-12) -> np.ndarray:
    """Rows whose entries are all negligible (dofs without any coupling)."""
    A = sp.csr_matrix(A)
    scale = abs(A).max() if A.nnz else 0.0
    rowmax = np.zeros(A.shape[0])
    nz = np.diff(A.indptr) > 0
    if A.nnz:
        rowmax[nz] = np.maximum.reduceat(np.abs(A.data), A.indptr[:-1][nz])
    return np.flatnonzero(rowmax <= rel * scale)


def pin_untouched(system: AssembledSystem):
    """Replace negligible rows/columns by identity rows with zero right-hand side.

    Without gradient stabilization a dof of an active vertex can be left
    without any coupling when its basis function vanishes at all cut
    quadrature points.
    """
    pinned = untouched_dofs(system.A)
    if len(pinned) == 0:
        return system.A, system.b, pinned
    keep = np.ones(system.n)
    keep[pinned] = 0.0
    D = sp.diags(keep)
    A = (D @ system.A @ D + sp.diags(1.0 - keep)).tocsr()
    A.sort_indices()
    b = system.b * keep
    return A, b, pinned


# ---------------------------------------------------------------------------
# solution


@dataclass
class SolutionField:
    coefficients: np.ndarray
    dofmap: DofMap
    system: AssembledSystem | None = None
    pinned: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def cut(self) -> CutMesh:
        return self.dofmap.cut

    @property
    def domain(self) -> FracturedDomain:
        return self.dofmap.cut.domain

    def with_coefficients(self, u) -> "SolutionField":
        return SolutionField(np.asarray(u, dtype=float), self.dofmap)

    def host(self, cid: ComponentId, point, side_hint=None) -> int:
        am = self.cut.actives[cid]
        return locate_point(am, self.cut.mesh, point, side_hint)

    def eval_fe(self, cid: ComponentId, point, side_hint=None) -> float:
        """Value of component cid at a point (one-sided with side_hint = (nu, sign))."""
        if cid.d == 0:
            return float(self.coefficients[self.dofmap.offsets[cid]])
        x = np.asarray(point, dtype=float)
        t = self.host(cid, x, side_hint)
        return float(self.dofmap.value(cid, x[None], [t]).apply(self.coefficients)[0])

    def values(self, cid: ComponentId, x, tri) -> np.ndarray:
        return self.dofmap.value(cid, x, tri).apply(self.coefficients)

    def gradients(self, cid: ComponentId, tri) -> np.ndarray:
        idx, G = self.dofmap.gradient(cid, tri)
        return np.einsum("qk,qkj->qj", self.coefficients[idx], G)

    def component(self, cid: ComponentId) -> np.ndarray:
        return self.coefficients[self.dofmap.component_slice(cid)]

    def max_abs(self) -> float:
        return float(np.abs(self.coefficients).max()) if len(self.coefficients) else 0.0


def residual_L(u, cid: ComponentId, point, dofmap: DofMap | None = None) -> float:
    """Strong operator L applied to u at one point of component cid.

    ``u`` is a SolutionField or an analytic description (a mapping cid ->
    field, or one field for all components); analytic input requires
    ``dofmap`` only for its domain, which may also be passed as the domain.
    """
    from .domain import d_beta_analytic, pick

    x = np.asarray(point, dtype=float)
    if isinstance(u, SolutionField):
        dm = u.dofmap
        dom = dm.cut.domain
        comp = dom[cid]
        c = u.coefficients
        if cid.d == 2:
            t = u.host(cid, x)
            grad = u.gradients(cid, [t])[0]
            return float(comp.beta(x[None])[0] @ grad + dom.gamma(cid, x[None])[0] * u.eval_fe(cid, x))
        if cid.d == 1:
            s = comp.locate(x[None], dom.eps)
            t = u.host(cid, x)
            grad = u.gradients(cid, [t])[0]
            val = float(comp.speed(x[None])[0] * (comp.tangents[s[0]] @ grad))
            val += float(comp.div_tangential(x[None], s)[0] + dom.alpha(cid, x[None])[0]) * u.eval_fe(cid, x)
            for k, side in enumerate(("left", "right")):
                bid = comp.sides[s[0]][k]
                if bid is None:
                    continue
                nu = comp.side_normal(s[0], side)
                flux = float(nu @ dom[bid].beta(x[None])[0])
                val -= flux * u.eval_fe(bid, x, (nu, -1.0))
            return val
        val = float(comp.alpha) * float(c[dm.offsets[cid]])
        for crack_id, end in comp.incident:
            crack = dom[crack_id]
            s = np.array([crack.endpoint_segment(end)])
            flux = float(crack.endpoint_normal(end) @ crack.beta(x[None], s)[0])
            val -= flux * float(point_trace(dm, crack_id, end).apply(c)[0])
        return val
    dom = dofmap if isinstance(dofmap, FracturedDomain) else dofmap.cut.domain
    own = float(pick(u, cid)(x[None])[0])
    seg = dom[cid].locate(x[None], dom.eps) if cid.d == 1 else None
    return float(d_beta_analytic(dom, u, cid, x[None])[0] + dom.gamma(cid, x[None], seg)[0] * own)


@dataclass
class Discretization:
    domain: FracturedDomain
    cut: CutMesh
    dofmap: DofMap

    @property
    def h(self) -> float:
        return self.cut.h


def discretize(domain: FracturedDomain, nx: int, order: int = 2, workers: int = 1) -> Discretization:
    cut = build_cut_mesh(domain, nx, order, workers)
    return Discretization(domain, cut, build_dof_map(cut))


def solve(system: AssembledSystem) -> SolutionField:
    A, b, pinned = pin_untouched(system)
    t0 = time.perf_counter()
    u = solve_lu(A, b)
    system.timings["solve"] = time.perf_counter() - t0
    return SolutionField(u, system.dofmap, system, pinned)


def solve_domain(domain: FracturedDomain, nx: int, tau1: float = 1e-2, tau2: float = 1e-3,
                 workers: int = 1) -> SolutionField:
    disc = discretize(domain, nx, workers=workers)
    return solve(assemble(disc.dofmap, tau1, tau2, workers))
