import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutfrac.errors import GeometryError, ParameterError
from cutfrac.mesh import (
    build_background_mesh,
    build_cut_mesh,
    clip_polygon_triangle,
    clip_segment_triangle,
    dump_cut_geometry,
    extract_active_mesh,
    locate_point,
    split_segment,
)
from cutfrac.quadrature import polygon_area

from conftest import preset, random_convex_polygon, random_triangle

EPS = 1e-10 * np.sqrt(2)


def test_background_mesh_layout():
    m = build_background_mesh(4)
    assert m.ntri == 32
    assert len(m.vertices) == 25
    assert m.h == 0.25
    assert np.isclose(m.max_edge, np.sqrt(2) / 4)
    assert np.all(m.areas() > 0)
    assert np.isclose(m.areas().sum(), 1.0)
    # first cell, split along the (0,0)-(1,1) diagonal
    np.testing.assert_array_equal(m.triangles[0], [0, 1, 6])
    np.testing.assert_array_equal(m.triangles[1], [0, 6, 5])
    # interior edges have two triangles, boundary edges one
    nboundary = np.sum(m.edge_triangles[:, 1] < 0)
    assert nboundary == 16


@pytest.mark.parametrize("nx", [0, 1, 2.5, -3])
def test_background_mesh_rejects_bad_nx(nx):
    with pytest.raises(ParameterError):
        build_background_mesh(nx)


def test_barycentric_and_containing():
    m = build_background_mesh(3)
    lam = m.barycentric(0, m.tri_xy(0).mean(axis=0)[None])
    np.testing.assert_allclose(lam, [[1 / 3, 1 / 3, 1 / 3]])
    # a vertex shared by six triangles
    v = m.vertices[5]
    assert len(m.containing(v)) == 6


def test_clip_segment_examples():
    tri = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
    seg = clip_segment_triangle([-1, 0.25], [2, 0.25], tri)
    np.testing.assert_allclose(seg, [[0, 0.25], [0.75, 0.25]])
    assert clip_segment_triangle([2, 2], [3, 3], tri) is None
    # touching a vertex only
    assert clip_segment_triangle([1, 0], [2, -1], tri) is None
    # along an edge
    np.testing.assert_allclose(clip_segment_triangle([0, 0], [1, 0], tri), [[0, 0], [1, 0]])


def test_clip_polygon_examples():
    tri = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    assert np.isclose(polygon_area(clip_polygon_triangle(sq, tri)), 0.5)
    assert clip_polygon_triangle(sq + 2, tri) is None
    # sharing only an edge
    other = np.array([[1, 0], [1, 1], [0, 1]], dtype=float)
    assert clip_polygon_triangle(other, tri) is None


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_polygon_measure_partition(seed):
    rng = np.random.default_rng(seed)
    poly = random_convex_polygon(rng)
    mesh = build_background_mesh(int(rng.integers(2, 9)))
    total = sum(
        polygon_area(c) for t in range(mesh.ntri)
        if (c := clip_polygon_triangle(poly, mesh.tri_xy(t), EPS)) is not None
    )
    assert np.isclose(total, polygon_area(poly), rtol=1e-12, atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_clipping_idempotent(seed):
    rng = np.random.default_rng(seed)
    poly, tri = random_convex_polygon(rng), random_triangle(rng)
    once = clip_polygon_triangle(poly, tri, EPS)
    if once is not None:
        twice = clip_polygon_triangle(once, tri, EPS)
        assert np.isclose(polygon_area(twice), polygon_area(once), rtol=1e-12, atol=1e-15)
    p, q = rng.uniform(0, 1, (2, 2))
    s1 = clip_segment_triangle(p, q, tri, EPS)
    if s1 is not None:
        s2 = clip_segment_triangle(s1[0], s1[1], tri, EPS)
        np.testing.assert_allclose(s2, s1, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_segment_split_partition(seed):
    rng = np.random.default_rng(seed)
    mesh = build_background_mesh(int(rng.integers(2, 12)))
    p, q = rng.uniform(0, 1, (2, 2))
    if rng.random() < 0.3:  # snap onto grid lines to exercise shared edges
        p, q = np.round(p * mesh.nx) / mesh.nx, np.round(q * mesh.nx) / mesh.nx
    if np.hypot(*(q - p)) < 1e-6:
        return
    pieces, touched = split_segment(p, q, mesh, EPS)
    assert pieces[0][1] == 0.0 and pieces[-1][2] == 1.0
    for (_, _, b), (_, a, _) in zip(pieces[:-1], pieces[1:]):
        assert a == b
    assert {t for t, _, _ in pieces} <= set(touched)


def test_example1_active_meshes():
    d = preset("example1")
    mesh = build_background_mesh(10)
    crack = extract_active_mesh(d, d.cracks[0].cid, mesh)
    # the crack lies on grid edges: both neighbouring columns are active
    assert len(crack.triangles) == 20
    assert np.isclose(crack.measure, 1.0)
    left = extract_active_mesh(d, d.bulks[0].cid, mesh)
    assert len(left.triangles) == 100
    assert np.isclose(left.measure, 0.5)
    # outer boundary rule covers the three outer sides of the left half
    assert np.isclose(left.bw.sum(), 2.0)


@pytest.mark.parametrize("name", ["example1", "example2", "example3", "example4", "example5"])
@pytest.mark.parametrize("nx", [7, 10])
def test_active_measures_match_geometry(name, nx):
    d = preset(name)
    cut = build_cut_mesh(d, nx)
    for comp in d.components():
        if comp.cid.d > 0:
            assert np.isclose(cut.actives[comp.cid].measure, comp.measure, rtol=1e-12)
    for cid, iq in cut.interfaces.items():
        crack = d[cid]
        for k in (0, 1):
            has = np.array([crack.sides[s][k] is not None for s in iq.seg])
            assert np.all((iq.host[k] >= 0) == has)


def test_workers_do_not_change_geometry():
    d = preset("example5")
    a = build_cut_mesh(d, 9)
    b = build_cut_mesh(d, 9, workers=4)
    for cid in a.actives:
        np.testing.assert_array_equal(a.actives[cid].triangles, b.actives[cid].triangles)
        np.testing.assert_array_equal(a.actives[cid].qw, b.actives[cid].qw)


def test_locate_point_side_hint():
    d = preset("example1")
    mesh = build_background_mesh(10)
    left = extract_active_mesh(d, d.bulks[0].cid, mesh)
    right = extract_active_mesh(d, d.bulks[1].cid, mesh)
    x = np.array([0.5, 0.33])
    tl = locate_point(left, mesh, x, (np.array([1.0, 0.0]), -1.0))
    tr = locate_point(right, mesh, x, (np.array([-1.0, 0.0]), -1.0))
    assert mesh.tri_xy(tl)[:, 0].max() <= 0.5 + 1e-12
    assert mesh.tri_xy(tr)[:, 0].min() >= 0.5 - 1e-12
    with pytest.raises(GeometryError):
        locate_point(left, mesh, [0.9, 0.5])


def test_dump_cut_geometry(tmp_path):
    cut = build_cut_mesh(preset("example4"), 6)
    path = tmp_path / "cut.csv"
    dump_cut_geometry(cut, path)
    rows = path.read_text().splitlines()
    assert rows[0] == "d,i,triangle,measure"
    assert len(rows) > 10
