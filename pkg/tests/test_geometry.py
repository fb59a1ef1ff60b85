import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttft.geometry import (ClosedCurve, CurvePrimitiveSpec, GeometryError, LoopSystem, PerturbationError,
                           check_disjoint, make_circle, make_ellipse, make_link_family, make_torus_link,
                           perturb_isotopy, point_segment_distances, sample_segments, segment_distances)
from ttft.invariants import gauss_linking


def test_square_from_four_segment_circle():
    c = make_circle((0, 0, 0), (0, 0, 1), 1.0, 4)
    expected = np.array([[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]], dtype=float)
    np.testing.assert_allclose(c.vertices, expected, atol=1e-15)


def test_circle_translation():
    a = make_circle((0, 0, 0), (0, 0, 1), 1.0, 32)
    b = make_circle((0, 0, 5), (0, 0, 1), 1.0, 32)
    np.testing.assert_allclose(b.vertices, a.vertices + [0, 0, 5], atol=1e-15)


def test_perimeter_converges_quadratically():
    errs = [2 * math.pi - make_circle((0, 0, 0), (0, 0, 1), 1.0, n).length() for n in (64, 256)]
    assert errs[0] > errs[1] > 0
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=1e-2)


def test_circle_orientation_follows_normal():
    for normal in [(0, 0, 1), (1, 2, -0.5), (0, -1, 0)]:
        c = make_circle((1, 2, 3), normal, 2.0, 64)
        n = np.asarray(normal, float) / np.linalg.norm(normal)
        area = 0.5 * np.cross(c.starts - c.centroid(), c.ends - c.centroid()).sum(axis=0)
        assert np.dot(area, n) > 0
        np.testing.assert_allclose(np.linalg.norm(c.vertices - [1, 2, 3], axis=1), 2.0)


def test_validation_errors():
    with pytest.raises(GeometryError):
        ClosedCurve(np.zeros((2, 3)))
    with pytest.raises(GeometryError):
        ClosedCurve(np.array([[0, 0, 0], [1, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float))
    with pytest.raises(GeometryError):
        ClosedCurve(np.array([[0, 0, 0], [1, 0, 0], [np.nan, 0, 0]]))
    # figure-eight polygon crossing itself
    with pytest.raises(GeometryError):
        ClosedCurve(np.array([[0, 0, 0], [1, 1, 0], [1, 0, 0], [0, 1, 0]], dtype=float))


def test_loop_system_invariants():
    a = make_circle((0, 0, 0), (0, 0, 1), 1.0, 32, "a")
    b = make_circle((5, 0, 0), (0, 0, 1), 1.0, 32, "b")
    c = make_circle((0, 5, 0), (0, 0, 1), 1.0, 32, "c")
    LoopSystem((a, b, c))
    with pytest.raises(GeometryError):
        LoopSystem((a, b))
    with pytest.raises(GeometryError):
        LoopSystem((a, b, c), kappa=0.0)
    with pytest.raises(GeometryError):
        LoopSystem((a, b, make_circle((0.5, 0, 0), (0, 0, 1), 0.5, 32, "x")))


def test_vertices_are_read_only():
    c = make_circle((0, 0, 0), (0, 0, 1), 1.0, 8)
    with pytest.raises(ValueError):
        c.vertices[0, 0] = 3.0


def test_hopf_pair_is_clear():
    h = make_link_family(CurvePrimitiveSpec(kind="hopf_pair", label="h", segments=64))
    assert [c.label for c in h] == ["h1", "h2"]
    assert h[0].distance_to(h[1]) > 0.5


def _plane_crossings(curve: ClosedCurve, disk: ClosedCurve) -> list[int]:
    # signed crossings of curve's segments through the flat region bounded by a planar convex disk curve
    c = disk.centroid()
    n = np.cross(disk.vertices[1] - c, disk.vertices[0] - c)
    n = -n / np.linalg.norm(n)
    h0 = (curve.starts - c) @ n
    h1 = (curve.ends - c) @ n
    signs = []
    for i in np.nonzero(np.sign(h0) != np.sign(h1))[0]:
        t = h0[i] / (h0[i] - h1[i])
        p = curve.starts[i] + t * (curve.ends[i] - curve.starts[i])
        # inside the convex polygon: same side of every edge
        e = np.cross(disk.edges, p - disk.starts) @ n
        if np.all(e > 0) or np.all(e < 0):
            signs.append(int(np.sign(h1[i] - h0[i])))
    return signs


def test_borromean_pairs_unlinked_but_interlocked():
    rings = make_link_family(CurvePrimitiveSpec(kind="borromean_triple", label="r", semi_axes=(2.0, 1.0),
                                                segments=128))
    for i in range(3):
        for j in range(3):
            if i == j:
                continue
            assert abs(gauss_linking(rings[i], rings[j])) < 1e-9
        # ring i+1 passes through the flat disk of ring i: no plane separates them
        hits = _plane_crossings(rings[i], rings[(i + 1) % 3]) + _plane_crossings(rings[(i + 1) % 3], rings[i])
        assert len(hits) == 2 and sum(hits) == 0


def test_polyline_is_echoed():
    verts = ((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0))
    (c,) = make_link_family(CurvePrimitiveSpec(kind="polyline", label="p", vertices=verts))
    np.testing.assert_array_equal(c.vertices, np.array(verts))


def test_unknown_kind_rejected():
    with pytest.raises(GeometryError):
        make_link_family(CurvePrimitiveSpec(kind="trefoil"))


def test_torus_link_components():
    comps = make_torus_link(2, 4, 64)
    assert len(comps) == 2
    assert len(make_torus_link(2, 3, 64)) == 1
    check_disjoint(comps)


def test_ellipse_semi_axes():
    e = make_ellipse((0, 0, 0), (3, 0, 0), (0, 1, 0), 400)
    assert e.vertices[:, 0].max() == pytest.approx(3.0)
    assert e.vertices[:, 1].max() == pytest.approx(1.0, rel=1e-4)


def test_sample_segments_properties():
    c = make_circle((0.3, -1, 2), (1, 1, 1), 1.7, 50)
    for n in (1, 2, 5):
        pts, tan = sample_segments(c, n)
        np.testing.assert_allclose(tan.sum(axis=0), 0.0, atol=1e-12)
        assert np.linalg.norm(tan, axis=1).sum() == pytest.approx(c.length(), abs=1e-12)
    square = ClosedCurve(np.array([[1, 1, 0], [-1, 1, 0], [-1, -1, 0], [1, -1, 0]], dtype=float))
    pts, tan = sample_segments(square, 1)
    np.testing.assert_allclose(pts, [[0, 1, 0], [-1, 0, 0], [0, -1, 0], [1, 0, 0]], atol=1e-15)
    np.testing.assert_allclose(np.linalg.norm(tan, axis=1), 2.0)


def test_perturb_isotopy_contract():
    c = make_circle((0, 0, 0), (0, 0, 1), 1.0, 64, "c")
    assert perturb_isotopy(c, 0.0, seed=3) is c
    a = perturb_isotopy(c, 0.01, seed=7)
    b = perturb_isotopy(c, 0.01, seed=7)
    np.testing.assert_array_equal(a.vertices, b.vertices)
    assert not np.array_equal(a.vertices, perturb_isotopy(c, 0.01, seed=8).vertices)
    disp = np.linalg.norm(a.vertices - c.vertices, axis=1)
    assert disp.max() <= 0.01 + 1e-15
    with pytest.raises(PerturbationError):
        perturb_isotopy(c, -1.0, seed=0)


def test_perturbed_hopf_pair_keeps_linking():
    h1, h2 = make_link_family(CurvePrimitiveSpec(kind="hopf_pair", label="h", segments=256))
    for seed in range(3):
        p1 = perturb_isotopy(h1, 0.02, seed, [h2])
        p2 = perturb_isotopy(h2, 0.02, seed + 100, [p1])
        assert abs(gauss_linking(p1, p2) - 1.0) < 1e-3


def test_perturbation_respects_clearance():
    a = make_circle((0, 0, 0), (0, 0, 1), 1.0, 64, "a")
    b = make_circle((2.05, 0, 0), (0, 0, 1), 1.0, 64, "b")
    moved = perturb_isotopy(a, 0.2, seed=1, system=[b])
    assert moved.distance_to(b) > 0
    assert np.linalg.norm(moved.vertices - a.vertices, axis=1).max() < 0.05


def test_canonical_form():
    c = make_circle((0.1, 0.2, 0.3), (0.3, -1, 0.2), 1.0, 33, "c")
    canon, s = c.canonical()
    rcanon, rs = c.reversed().canonical()
    np.testing.assert_array_equal(canon.vertices, rcanon.vertices)
    assert s == -rs
    shifted = ClosedCurve(np.roll(c.vertices, 5, axis=0), "c")
    np.testing.assert_array_equal(shifted.canonical()[0].vertices, canon.vertices)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=12, max_size=12))
def test_segment_distance_against_sampling(coords):
    p0, p1, q0, q1 = (np.array(coords[i:i + 3]) for i in range(0, 12, 3))
    d = float(segment_distances(p0, p1, q0, q1))
    s = np.linspace(0, 1, 201)
    a = p0 + s[:, None] * (p1 - p0)
    b = q0 + s[:, None] * (q1 - q0)
    brute = np.linalg.norm(a[:, None] - b[None], axis=2).min()
    assert d <= brute + 1e-12
    step = max(np.linalg.norm(p1 - p0), np.linalg.norm(q1 - q0)) / 200
    assert brute - d <= step + 1e-12
    pd = float(point_segment_distances(q0, p0, p1))
    assert pd <= np.linalg.norm(a - q0, axis=1).min() + 1e-12
