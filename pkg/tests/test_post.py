import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutfrac.domain import FieldSpec, FracturedDomain
from cutfrac.errors import ParameterError
from cutfrac.fem import SolutionField, discretize
from cutfrac.post import (
    convergence_rates,
    energy_error,
    exact_solution,
    export_csv,
    export_vtk,
    l2_error,
    point_balance,
    point_balance_values,
    read_csv,
)

from conftest import preset, solved


def zero_field(name="example1", nx=10):
    disc = discretize(preset(name), nx)
    return SolutionField(np.zeros(disc.dofmap.n), disc.dofmap)


def test_l2_error_closed_forms():
    u = zero_field()
    d = preset("example1")
    one = FieldSpec.constant(1.0)
    twoy = FieldSpec.affine(0.0, [0.0, 2.0])
    assert np.isclose(l2_error(u, one, d.bulks[0].cid), math.sqrt(0.5))
    assert np.isclose(l2_error(u, twoy, d.cracks[0].cid), math.sqrt(4 / 3))
    assert l2_error(u, None, d.cracks[0].cid) == 0.0


def test_l2_error_unit_bulk():
    d = FracturedDomain.from_json({"components": {"bulk": [{"vertices": [[0, 0], [1, 0], [1, 1], [0, 1]]}]}})
    disc = discretize(d, 4)
    u = SolutionField(np.zeros(disc.dofmap.n), disc.dofmap)
    assert np.isclose(l2_error(u, FieldSpec.constant(1.0), d.bulks[0].cid), 1.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_l2_symmetry_and_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    base = zero_field("example4", 6)
    a, b, c = (base.with_coefficients(rng.standard_normal(base.dofmap.n)) for _ in range(3))
    for cid in base.dofmap.offsets:
        ab, ba = l2_error(a, b, cid), l2_error(b, a, cid)
        assert np.isclose(ab, ba, rtol=1e-14, atol=0)
        assert ab <= l2_error(a, c, cid) + l2_error(c, b, cid) + 1e-12


def test_energy_of_zero_is_zero():
    d = preset("example2")
    u = zero_field("example2")
    rep = energy_error(u, None, tau2=1e-3)
    assert rep.energy == 0.0
    rep = energy_error(u, exact_solution(d), tau2=1e-3)
    for c in rep.components.values():
        assert min(c.l2, c.mass, c.residual, c.stab, c.interface, c.boundary) >= 0.0
    assert np.isclose(rep.energy**2, sum(c.energy_sq for c in rep.components.values()))


def test_energy_constant_error_single_bulk():
    d = FracturedDomain.from_json({"components": {"bulk": [{
        "vertices": [[0, 0], [1, 0], [1, 1], [0, 1]], "beta": [0, 0], "alpha": 1.0}]}})
    disc = discretize(d, 5)
    u = SolutionField(np.full(disc.dofmap.n, 3.0), disc.dofmap)
    rep = energy_error(u, FieldSpec.constant(0.0), tau2=0.0)
    c = rep.components[d.bulks[0].cid]
    assert np.isclose(c.mass, 9.0)
    assert np.isclose(c.residual, disc.h * 9.0)


def test_example2_energy_baseline():
    # regression baseline recorded from the first verified run
    u = solved("example2", 10)
    rep = energy_error(u, exact_solution(preset("example2")))
    assert np.isclose(rep.energy, 1.845271e-02, rtol=1e-5)
    assert np.isclose(rep.l2, 1.072505e-03, rtol=1e-5)


@pytest.mark.parametrize("p,slope", [(1.5, 1.5), (0.0, 0.0), (2.0, 2.0)])
def test_convergence_rates_synthetic(p, slope):
    hs = [0.2, 0.1, 0.05, 0.025]
    r = convergence_rates([(h, 3.0 * h**p) for h in hs])
    assert np.isclose(r.slope, slope, atol=1e-12)
    np.testing.assert_allclose(r.pairwise, slope, atol=1e-12)


def test_convergence_rates_errors():
    with pytest.raises(ParameterError):
        convergence_rates([(0.1, 1.0), (0.05, 0.5)])
    with pytest.raises(ParameterError):
        convergence_rates([(0.1, 1.0), (0.2, 0.5), (0.05, 0.1)])
    r = convergence_rates([(0.2, 1.0), (0.1, 0.0), (0.05, 0.25)])
    assert math.isnan(r.pairwise[0]) and math.isnan(r.pairwise[1])


def test_point_balance_synthetic():
    assert point_balance_values([(1.0, 2.0), (-1.0, 1.0), (-1.0, 1.0)]) == 0.0
    entries = [(1.0, 0.7), (-0.4, 0.7), (-0.6, 0.7)]
    assert point_balance_values(entries) < 1e-15
    # adding a constant keeps the balance only if the fluxes sum to zero
    shifted = [(w, v + 5.0) for w, v in entries]
    assert point_balance_values(shifted) < 1e-14
    unbalanced = [(1.0, 2.0), (-1.0, 1.0)]
    assert point_balance_values(unbalanced) == 1.0
    assert point_balance_values([(w, v + 5.0) for w, v in unbalanced]) == 1.0
    skew = [(1.0, 2.0), (-0.5, 1.0), (-0.5, 1.0)]
    assert point_balance_values(skew) == 1.0
    assert point_balance_values([(w, v + 1.0) for w, v in skew]) == 1.0


def test_point_balance_on_solutions():
    for name, variant in (("example4", None), ("example4", "diff"), ("example5", None)):
        u = solved(name, 10, variant=variant)
        for p in preset(name, variant).points:
            assert point_balance(u, p.cid) <= 1e-10 * u.max_abs()
            assert point_balance(u, p.cid, "raw") >= 0.0
    with pytest.raises(ValueError):
        point_balance(u, p.cid, "nope")


def test_vtk_export(tmp_path):
    u = solved("example1", 10)
    d = preset("example1")
    path = tmp_path / "ex1.vtk"
    export_vtk(u, d, path)
    text = path.read_text().splitlines()
    npts = int(next(line for line in text if line.startswith("POINTS")).split()[1])
    bulk_vertices = sum(len(u.dofmap.vertices[b.cid]) for b in d.bulks)
    crack_pieces = sum(len(v) for v in u.cut.actives[d.cracks[0].cid].cells.values())
    assert npts == bulk_vertices + 2 * crack_pieces
    types = text[text.index(next(line for line in text if line.startswith("CELL_TYPES"))) + 1:]
    assert types[: 200 + crack_pieces].count("3") == crack_pieces
    empty = tmp_path / "empty.vtk"
    export_vtk(None, d, empty)
    assert empty.read_text().splitlines()[-1] == "DATASET UNSTRUCTURED_GRID"


def test_csv_round_trip(tmp_path):
    rows = [{"h": 0.1, "l2": 1 / 3, "energy": math.pi, "rate": float("nan")},
            {"h": 0.05, "l2": 2 / 3, "energy": math.e, "rate": 1.5},
            {"h": 0.025, "l2": 1e-17, "energy": 0.1 + 0.2, "rate": 2.0}]
    path = tmp_path / "t.csv"
    export_csv(rows, path)
    back = read_csv(path)
    assert len(back) == 3
    assert list(back[0]) == ["h", "l2", "energy", "rate"]
    for a, b in zip(rows, back):
        for k in a:
            if not math.isnan(a[k]):
                assert float(b[k]) == a[k]
