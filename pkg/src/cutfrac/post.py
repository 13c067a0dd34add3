"""Error norms, convergence rates, flux balance at bifurcation points and export."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .domain import ComponentId, d_beta_analytic, pick
from .fem import (
    DofMap,
    SolutionField,
    boundary_terms,
    operator_L,
    point_trace,
    stabilization_scale,
)
from .quadrature import polygon_rule, triangle_rule

ERROR_ORDER = 6


# ---------------------------------------------------------------------------
# quadrature for error integrals


def component_rule(dm: DofMap, cid: ComponentId, order: int = ERROR_ORDER):
    """(points, weights, host triangles, crack segments) on the cut geometry of cid."""
    cut = dm.cut
    if cid.d == 0:
        return cut.domain[cid].x[None], np.ones(1), None, None
    if cid.d == 1:
        iq = cut.interfaces[cid]
        return iq.x, iq.w, iq.crack_tri, iq.seg
    am = cut.actives[cid]
    xs, ws, ts = [], [], []
    for t in sorted(am.cells):
        for poly in am.cells[t]:
            x, w = polygon_rule(poly, order)
            xs.append(x)
            ws.append(w)
            ts.append(np.full(len(w), t))
    return np.concatenate(xs), np.concatenate(ws), np.concatenate(ts), None


def exact_solution(domain) -> dict:
    """Mapping cid -> exact field, for components that declare one."""
    return {c.cid: c.exact for c in domain.components() if c.exact is not None}


def _fe_values(u: SolutionField, cid, x, tri):
    if cid.d == 0:
        return np.full(len(x), u.coefficients[u.dofmap.offsets[cid]])
    return u.values(cid, x, tri)


def l2_error(u_h: SolutionField, u_exact, cid: ComponentId, order: int = ERROR_ORDER) -> float:
    """L2 norm of u_h - u on the component (absolute difference at a point).

    ``u_exact`` may also be a SolutionField on the same dof map; ``None``
    means zero.
    """
    x, w, tri, _ = component_rule(u_h.dofmap, cid, order)
    a = _fe_values(u_h, cid, x, tri)
    if u_exact is None:
        b = 0.0
    elif isinstance(u_exact, SolutionField):
        b = _fe_values(u_exact, cid, x, tri)
    else:
        b = pick(u_exact, cid)(x)
    e = a - b
    if cid.d == 0:
        return float(abs(e[0]))
    return float(math.sqrt(max(float(np.sum(w * e * e)), 0.0)))


def linf_error(u_h: SolutionField, u_exact, cid: ComponentId, order: int = ERROR_ORDER) -> float:
    """Maximum of |u_h - u| over the quadrature points and vertices lying on the component."""
    x, w, tri, _ = component_rule(u_h.dofmap, cid, order)
    err = np.abs(_fe_values(u_h, cid, x, tri) - pick(u_exact, cid)(x))
    return float(err.max())


# ---------------------------------------------------------------------------
# energy norm


@dataclass
class ComponentError:
    l2: float = 0.0
    mass: float = 0.0  # ||e||^2
    residual: float = 0.0  # h ||L e||^2
    stab: float = 0.0  # s_h(e, e)
    interface: float = 0.0  # || [e] ||^2 with weight |nu.beta|
    boundary: float = 0.0  # || e ||^2 with weight |nu.beta|

    @property
    def energy_sq(self) -> float:
        return self.mass + self.residual + self.stab + self.interface + self.boundary


@dataclass
class ErrorReport:
    h: float
    ndofs: int
    components: dict = field(default_factory=dict)

    def total(self, name: str) -> float:
        return float(sum(getattr(c, name) for c in self.components.values()))

    @property
    def l2(self) -> float:
        return math.sqrt(sum(c.l2**2 for c in self.components.values()))

    @property
    def energy(self) -> float:
        return math.sqrt(sum(c.energy_sq for c in self.components.values()))

    def rows(self):
        for cid, c in self.components.items():
            yield {"d": cid.d, "i": cid.i, "l2": c.l2, "mass": c.mass, "residual": c.residual,
                   "stab": c.stab, "interface": c.interface, "boundary": c.boundary}


def _L_exact(domain, u_exact, cid, x, seg):
    own = pick(u_exact, cid)(x)
    return d_beta_analytic(domain, u_exact, cid, x) + domain.gamma(cid, x, seg) * own


def _stab_sq(u_h: SolutionField, u_exact, cid, tau2, order=ERROR_ORDER) -> float:
    if cid.d == 0 or tau2 == 0:
        return 0.0
    dm = u_h.dofmap
    mesh = dm.mesh
    am = dm.cut.actives[cid]
    ex = pick(u_exact, cid) if u_exact is not None else None
    grads = u_h.gradients(cid, am.triangles)
    if ex is None:
        area = mesh.areas()[am.triangles]
        return stabilization_scale(cid.d, dm.cut.h, tau2) * float(np.sum(area * np.einsum("tj,tj->t", grads, grads)))
    total = 0.0
    for t, g in zip(am.triangles, grads):
        x, w = triangle_rule(mesh.tri_xy(t), order)
        diff = g[None, :] - ex.gradient(x)
        total += float(np.sum(w * np.einsum("qj,qj->q", diff, diff)))
    return stabilization_scale(cid.d, dm.cut.h, tau2) * total


def energy_error(u_h: SolutionField, u_exact, tau1: float | None = None, tau2: float | None = None,
                 order: int = ERROR_ORDER) -> ErrorReport:
    """All terms of the energy norm of e = u_h - u.

    ``u_exact=None`` gives the norm of u_h itself.  The stabilization term
    uses the natural extension of the exact solution to the active triangles.
    """
    dm = u_h.dofmap
    dom = dm.cut.domain
    h = dm.cut.h
    if tau2 is None:
        tau2 = u_h.system.tau2 if u_h.system is not None else 0.0
    report = ErrorReport(h, dm.n)
    c = u_h.coefficients
    for comp in dom.components():
        cid = comp.cid
        ce = ComponentError()
        ce.l2 = l2_error(u_h, u_exact, cid, order)
        ce.mass = ce.l2**2
        # residual on the same points the operator is assembled on (cracks, points)
        # or on the high-order rule (bulks)
        if cid.d == 2:
            x, w, tri, seg = component_rule(dm, cid, order)
            idx, G = dm.gradient(cid, tri)
            grad = np.einsum("qk,qkj->qj", c[idx], G)
            Lh = np.einsum("qj,qj->q", comp.beta(x), grad) + dom.gamma(cid, x) * u_h.values(cid, x, tri)
        else:
            x, w, Lfn, _ = operator_L(dm, cid)
            seg = dm.cut.interfaces[cid].seg if cid.d == 1 else None
            Lh = Lfn.apply(c)
        Le = Lh - (_L_exact(dom, u_exact, cid, x, seg) if u_exact is not None else 0.0)
        ce.residual = h * float(np.sum(w * Le * Le))
        ce.stab = _stab_sq(u_h, u_exact, cid, tau2, order)
        for term in boundary_terms(dm, cid):
            jh = term.J.apply(c)
            if u_exact is not None:
                jh = jh - _exact_jump(dom, u_exact, term)
            val = float(np.sum(np.abs(term.w) * jh * jh))
            if term.kind == "interface":
                ce.interface += val
            else:
                ce.boundary += val
        report.components[cid] = ce
    return report


def _exact_jump(dom, u_exact, term):
    """Exact counterpart of a boundary term functional."""
    val = pick(u_exact, term.plus)(term.x)
    if term.minus is not None:
        val = val - pick(u_exact, term.minus)(term.x)
    return val


# ---------------------------------------------------------------------------
# coercivity identity


def coercivity_terms(u: SolutionField, tau1: float, tau2: float) -> dict:
    """Right-hand side terms of the discrete coercivity identity for v = u.

    Evaluated pointwise from the coefficient vector, independently of the
    assembled matrix.
    """
    dm = u.dofmap
    dom = dm.cut.domain
    h = dm.cut.h
    c = u.coefficients
    out = {"reaction": 0.0, "interface": 0.0, "boundary": 0.0, "gls": 0.0, "stab": 0.0}
    for comp in dom.components():
        cid = comp.cid
        x, w, L, V = operator_L(dm, cid)
        seg = dm.cut.interfaces[cid].seg if cid.d == 1 else None
        v = V.apply(c)
        Lv = L.apply(c)
        coef = dom.alpha(cid, x) + 0.5 * dom.div_beta(cid, x, seg)
        out["reaction"] += float(np.sum(w * coef * v * v))
        out["gls"] += tau1 * h * float(np.sum(w * Lv * Lv))
        out["stab"] += _stab_sq(u, None, cid, tau2)
        for term in boundary_terms(dm, cid):
            j = term.J.apply(c)
            out[term.kind] += 0.5 * float(np.sum(np.abs(term.w) * j * j))
    out["total"] = sum(out.values())
    return out


# ---------------------------------------------------------------------------
# rates


@dataclass
class Rates:
    slope: float
    pairwise: list


def convergence_rates(levels) -> Rates:
    """Least-squares slope of log(error) against log(h) plus pairwise rates.

    ``levels`` is a sequence of (h, error) with h strictly decreasing; pairs
    involving a nonpositive error get a NaN rate.
    """
    levels = [(float(h), float(e)) for h, e in levels]
    if len(levels) < 3:
        from .errors import ParameterError

        raise ParameterError("convergence rates need at least 3 levels")
    hs = np.array([h for h, _ in levels])
    if np.any(np.diff(hs) >= 0):
        from .errors import ParameterError

        raise ParameterError("mesh sizes must be strictly decreasing")
    pairwise = []
    for (h0, e0), (h1, e1) in zip(levels[:-1], levels[1:]):
        if e0 > 0 and e1 > 0:
            pairwise.append(math.log(e0 / e1) / math.log(h0 / h1))
        else:
            pairwise.append(float("nan"))
    es = np.array([e for _, e in levels])
    ok = es > 0
    slope = float(np.polyfit(np.log(hs[ok]), np.log(es[ok]), 1)[0]) if ok.sum() >= 2 else float("nan")
    return Rates(slope, pairwise)


# ---------------------------------------------------------------------------
# flux balance at bifurcation points


def point_balance(u_h: SolutionField, cid: ComponentId, mode: str = "upwind") -> float:
    """Residual of the flux balance |sum_i nu_i.beta_i u_i(x0) - alpha0 u0 + f0|.

    ``mode='upwind'`` takes the value carried by each crack across the point:
    the crack's endpoint trace for cracks flowing into the point and the point
    value for cracks fed by it (their inflow condition).  ``mode='raw'`` uses
    the crack endpoint traces for all cracks.
    """
    if mode not in ("upwind", "raw"):
        raise ValueError(f"mode must be 'upwind' or 'raw', got {mode!r}")
    dm = u_h.dofmap
    dom = dm.cut.domain
    comp = dom[cid]
    u0 = float(u_h.coefficients[dm.offsets[cid]])
    total = -float(comp.alpha) * u0 + float(comp.f)
    for crack_id, end in comp.incident:
        crack = dom[crack_id]
        x = crack.endpoint(end)[None]
        s = np.array([crack.endpoint_segment(end)])
        flux = float(crack.endpoint_normal(end) @ crack.beta(x, s)[0])
        trace = float(point_trace(dm, crack_id, end).apply(u_h.coefficients)[0])
        total += flux * (u0 if (mode == "upwind" and flux < 0) else trace)
    return abs(total)


def point_balance_values(entries, alpha0: float = 0.0, u0: float = 0.0, f0: float = 0.0) -> float:
    """Balance residual from explicit (nu.beta, value) pairs."""
    return abs(sum(w * v for w, v in entries) - alpha0 * u0 + f0)


# ---------------------------------------------------------------------------
# export

VTK_VERTEX, VTK_LINE, VTK_TRIANGLE = 1, 3, 5


def export_vtk(u_h: SolutionField | None, domain, path) -> None:
    """Legacy ASCII VTK: bulk active triangles, crack cut sub-segments and points.

    Point data ``u`` holds the component's own values; cell data ``dim`` and
    ``component`` identify the component of every cell.
    """
    lines = ["# vtk DataFile Version 3.0", f"cutfrac {getattr(domain, 'name', '')}".strip(),
             "ASCII", "DATASET UNSTRUCTURED_GRID"]
    if u_h is None:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        return
    dm = u_h.dofmap
    mesh = dm.mesh
    pts, vals, cells, types, dims, comps = [], [], [], [], [], []
    for comp in domain.components():
        cid = comp.cid
        if cid.d == 2:
            verts = dm.vertices[cid]
            base = len(pts)
            where = {v: base + k for k, v in enumerate(verts)}
            pts.extend(mesh.vertices[verts])
            vals.extend(u_h.component(cid))
            for t in dm.cut.actives[cid].triangles:
                cells.append([where[v] for v in mesh.triangles[t]])
                types.append(VTK_TRIANGLE)
                dims.append(2)
                comps.append(cid.i)
        elif cid.d == 1:
            am = dm.cut.actives[cid]
            for t in sorted(am.cells):
                for seg in am.cells[t]:
                    base = len(pts)
                    pts.extend(seg)
                    vals.extend(u_h.values(cid, seg, [t, t]))
                    cells.append([base, base + 1])
                    types.append(VTK_LINE)
                    dims.append(1)
                    comps.append(cid.i)
        else:
            pts.append(comp.x)
            vals.append(u_h.coefficients[dm.offsets[cid]])
            cells.append([len(pts) - 1])
            types.append(VTK_VERTEX)
            dims.append(0)
            comps.append(cid.i)
    lines.append(f"POINTS {len(pts)} double")
    lines += [f"{p[0]!r} {p[1]!r} 0.0" for p in np.asarray(pts, dtype=float)]
    size = sum(len(c) + 1 for c in cells)
    lines.append(f"CELLS {len(cells)} {size}")
    lines += [" ".join(map(str, [len(c), *c])) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(t) for t in types]
    lines.append(f"CELL_DATA {len(cells)}")
    lines += ["SCALARS dim int 1", "LOOKUP_TABLE default", *map(str, dims)]
    lines += ["SCALARS component int 1", "LOOKUP_TABLE default", *map(str, comps)]
    lines.append(f"POINT_DATA {len(pts)}")
    lines += ["SCALARS u double 1", "LOOKUP_TABLE default", *(repr(float(v)) for v in vals)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def export_csv(rows, path, columns=None) -> None:
    """Write dict rows with 17 significant digits (locale independent)."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_fmt(r[c]) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
