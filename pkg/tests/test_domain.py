import copy
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutfrac.domain import (
    Analytic,
    ComponentId,
    FieldSpec,
    FracturedDomain,
    codim_jump,
    coercivity_indicator,
    d_beta_analytic,
    interface_jump,
    verify_partial_integration,
)
from cutfrac.errors import AdjacencyError, DomainError, FieldError
from cutfrac.geometry import convex_pieces, ear_clip, is_convex, is_simple, signed_area
from cutfrac.presets import NAMES, apply_overrides, available, preset_json

from conftest import preset

LINEAR = Analytic(lambda x: x[:, 0] + x[:, 1], lambda x: np.tile([1.0, 1.0], (len(x), 1)))
BILINEAR = Analytic(lambda x: x[:, 0] * x[:, 1], lambda x: x[:, ::-1].copy())


def test_component_id_order():
    ids = [ComponentId(2, 1), ComponentId(0, 2), ComponentId(1, 1), ComponentId(0, 1)]
    assert sorted(ids) == [ComponentId(0, 1), ComponentId(0, 2), ComponentId(1, 1), ComponentId(2, 1)]
    with pytest.raises(DomainError):
        ComponentId(3, 1)


def test_field_spec_forms():
    x = np.array([[0.25, 0.5]])
    assert FieldSpec.parse(2.0)(x)[0] == 2.0
    aff = FieldSpec.parse({"affine": {"c": 1.0, "grad": [0.0, 2.0]}})
    assert aff(x)[0] == 2.0
    np.testing.assert_allclose(aff.gradient(x), [[0.0, 2.0]])
    vec = FieldSpec.parse([1.0, -1.0], vector=True)
    np.testing.assert_allclose(vec(x), [[1.0, -1.0]])
    assert vec.divergence(x)[0] == 0.0
    e = FieldSpec.parse({"builtin": "exp(-2y)"})
    assert np.isclose(e(x)[0], np.exp(-1.0))
    assert FieldSpec.parse(e.to_json())(x)[0] == e(x)[0]
    with pytest.raises(FieldError):
        FieldSpec.parse({"builtin": "nope"})


@pytest.mark.parametrize("name", NAMES)
def test_presets_load_and_round_trip(name):
    d = preset(name)
    again = FracturedDomain.from_json(json.loads(json.dumps(d.to_json())))
    assert again.counts == d.counts
    for a, b in zip(d.components(), again.components()):
        assert a.cid == b.cid


def test_preset_catalogue():
    assert set(NAMES) <= set(available())
    with pytest.raises(DomainError):
        preset_json("example9")
    with pytest.raises(DomainError):
        preset_json("example4", "nope")
    data = apply_overrides(preset_json("example4"), {"cracks": {"2": {"speed": 0.5}}})
    assert data["components"]["cracks"][1]["speed"] == 0.5


def test_example1_normals_and_divergence():
    d = preset("example1")
    c = d.cracks[0].cid
    np.testing.assert_allclose(d.exterior_normal(c, "left", [0.5, 0.3]), [1, 0])
    np.testing.assert_allclose(d.exterior_normal(c, "right", [0.5, 0.3]), [-1, 0])
    np.testing.assert_allclose(d.exterior_normal(c, "end", [0.5, 1.0]), [0, 1])
    np.testing.assert_allclose(d.exterior_normal(c, "end", [0.5, 0.0]), [0, -1])
    assert d.div_beta(c, [[0.5, 0.3]])[0] == -2.0
    assert d.div_beta(d.bulks[0].cid, [[0.2, 0.3]])[0] == 0.0
    assert coercivity_indicator(d) == -2.0


def test_example4_point_divergence():
    d = preset("example4")
    p = d.points[0]
    assert len(p.incident) == 3
    # one unit crack in, two unit cracks out
    assert np.isclose(d.div_beta(p.cid, p.x[None])[0], 1.0, rtol=0, atol=1e-14)


def test_codim_jump_and_interface_jump():
    assert codim_jump([]) == 0.0
    assert codim_jump([(1.0, 2.0), (-1.0, 1.0), (-1.0, 1.0)]) == 0.0
    assert interface_jump(1, 3.0, 1.0) == 2.0
    assert interface_jump(0, 3.0, 1.0) == 0.0


def test_d_beta_on_example1_exact_solution():
    d = preset("example1")
    exact = {c.cid: c.exact for c in d.components()}
    c = d.cracks[0].cid
    x = np.array([[0.5, 0.2], [0.5, 0.7]])
    # d/dy (2y) plus the jump terms (u_crack - u_bulk) * nu.beta on both sides
    expected = 2.0 + 2 * (2 * x[:, 1] - 1.0)
    np.testing.assert_allclose(d_beta_analytic(d, exact, c, x), expected)


@pytest.mark.parametrize("name", NAMES)
def test_partial_integration(name):
    assert verify_partial_integration(preset(name), LINEAR, BILINEAR, quad_order=4) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_partial_integration_random_affine(c):
    v = Analytic(lambda x: c[0] + c[1] * x[:, 0] + c[2] * x[:, 1],
                 lambda x: np.tile([c[1], c[2]], (len(x), 1)))
    w = Analytic(lambda x: c[3] + c[4] * x[:, 0] + c[5] * x[:, 1],
                 lambda x: np.tile([c[4], c[5]], (len(x), 1)))
    assert verify_partial_integration(preset("example5"), v, w) <= 1e-10


def _broken(mutate):
    data = preset_json("example1")
    data = copy.deepcopy(data)
    mutate(data)
    return data


def test_validation_errors():
    def cw(d):
        d["components"]["bulk"][0]["vertices"].reverse()

    with pytest.raises(DomainError):
        FracturedDomain.from_json(_broken(cw))

    def unknown_key(d):
        d["components"]["bulk"][0]["colour"] = "red"

    with pytest.raises(DomainError):
        FracturedDomain.from_json(_broken(unknown_key))

    def wrong_side(d):
        d["components"]["cracks"][0]["sides"] = [[2, 1]]

    with pytest.raises(AdjacencyError):
        FracturedDomain.from_json(_broken(wrong_side))

    def normal_beta(d):
        d["components"]["cracks"][0].pop("beta", None)
        d["components"]["cracks"][0]["beta"] = [1, 0]

    with pytest.raises(FieldError):
        FracturedDomain.from_json(_broken(normal_beta))


def test_polygon_helpers():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    assert is_convex(sq) and is_simple(sq, 1e-12)
    bow = np.array([[0, 0], [1, 1], [1, 0], [0, 1]], dtype=float)
    assert not is_simple(bow, 1e-12)
    L = np.array([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]], dtype=float)
    assert not is_convex(L)
    tris = ear_clip(L)
    assert np.isclose(sum(signed_area(t) for t in tris), signed_area(L))
    assert len(convex_pieces(sq)) == 1
