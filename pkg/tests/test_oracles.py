import math

import numpy as np
import pytest

from ttft.geometry import CurvePrimitiveSpec, make_circle, make_link_family, make_torus_link
from ttft.invariants import gauss_linking, triple_integrand
from ttft.oracles import OracleError, finite_difference, linking_by_crossings, project_crossings, riemann_volume
from ttft.quadrature import QuadratureSpec, integrate_volume


def gaussian(x):
    return np.exp(-np.einsum("ij,ij->i", x, x))


def test_crossings_hopf():
    h1, h2 = make_link_family(CurvePrimitiveSpec(kind="hopf_pair", label="h", segments=64))
    assert linking_by_crossings(h1, h2) == 1
    assert linking_by_crossings(h1.reversed(), h2) == -1
    diagram = project_crossings(h1, h2, (0.1, 0.2, 1.0))
    assert len(diagram.crossings) == 2
    assert {c.sign for c in diagram.crossings} == {1}


def test_crossings_split_and_torus():
    a = make_circle((0, 0, 0), (0, 0, 1), 1.0, 64)
    far = make_circle((10, 0, 0), (0, 1, 0), 1.0, 64)
    assert linking_by_crossings(a, far) == 0
    t1, t2 = make_torus_link(2, 4, 128)
    assert linking_by_crossings(t1, t2) == 2


def test_crossings_agree_with_gauss_on_families():
    for spec in [CurvePrimitiveSpec(kind="hopf_pair", label="h", segments=256),
                 CurvePrimitiveSpec(kind="torus_knot", label="t", p=2, q=4, segments=256),
                 CurvePrimitiveSpec(kind="borromean_triple", label="r", semi_axes=(2.0, 1.0), segments=128)]:
        comps = make_link_family(spec)
        for i in range(len(comps)):
            for j in range(i + 1, len(comps)):
                lk = gauss_linking(comps[i], comps[j])
                n = linking_by_crossings(comps[i], comps[j], seed=i + j)
                assert abs(lk - n) < 1e-3


def test_edge_on_projection_is_rejected():
    a = make_circle((0, 0, 0), (0, 0, 1), 1.0, 16)
    b = make_circle((3, 0, 0), (0, 0, 1), 1.0, 16)
    with pytest.raises(OracleError):
        project_crossings(a, b, (0, 1, 0))


def test_riemann_gaussian():
    value = riemann_volume(gaussian, [], 6.0, 64)
    assert value == pytest.approx(math.pi ** 1.5, rel=0.05)
    assert riemann_volume(lambda x: np.zeros(len(x)), [], 6.0, 16) == 0.0


def test_riemann_skips_cells_on_curves():
    # a grid-aligned curve through cell centers: those cells are dropped, not evaluated
    c = make_circle((0.25, 0.25, 0.25), (0, 0, 1), 0.5, 4)
    hits = []

    def f(x):
        hits.append(np.min(c.distance_to_points(x)))
        return np.ones(len(x))

    value = riemann_volume(f, [c], 1.0, 4)
    assert min(hits) > 1e-6
    assert value < 8.0


def test_finite_difference_exact_on_linear_fields():
    m = np.array([[1.0, 2.0, -1.0], [0.5, -3.0, 0.0], [2.0, 1.0, 4.0]])
    d = finite_difference(lambda x: m @ x, [0.3, -0.2, 1.1], 1e-3)
    np.testing.assert_allclose(d.jacobian, m, atol=1e-9)
    assert d.divergence == pytest.approx(2.0, abs=1e-9)
    np.testing.assert_allclose(d.curl, [1.0 - 0.0, -1.0 - 2.0, 0.5 - 2.0], atol=1e-9)
    const = finite_difference(lambda x: np.array([1.0, 2.0, 3.0]), [0, 0, 0], 1e-2)
    assert np.all(const.jacobian == 0.0)
    scalar = finite_difference(lambda x: x @ x, [1.0, 2.0, 3.0], 1e-3)
    np.testing.assert_allclose(scalar.gradient, [2.0, 4.0, 6.0], atol=1e-9)


def test_finite_difference_is_second_order():
    def f(x):
        return np.array([np.sin(x[0]) * np.cos(x[1]), np.exp(0.3 * x[2]), x[0] * x[1] * x[2]])

    x = np.array([0.4, -0.7, 0.2])
    exact = np.array([np.cos(0.4) * np.cos(-0.7), -np.sin(0.4) * np.sin(-0.7), 0.0])
    errs = [np.abs(finite_difference(f, x, h).jacobian[0] - exact).max() for h in (1e-2, 5e-3)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_riemann_against_octree_on_triple_integrand():
    a = make_circle((0, 0, 0), (0.3, 0.2, 1), 1.0, 24, "a")
    b = make_circle((3.5, 0, 0.5), (0, 1, 0.4), 1.0, 24, "b")
    c = make_circle((1.5, 3.2, -0.5), (1, 0.3, 0.2), 1.0, 24, "c")
    curves = [a, b, c]
    f = triple_integrand(curves)
    L = 8.0
    coarse, fine = riemann_volume(f, curves, L, 32), riemann_volume(f, curves, L, 64)
    oct_ = integrate_volume(f, curves, QuadratureSpec(truncation_radius=L, max_depth=3, abs_tol=1e-6, rel_tol=1e-3))
    combined = abs(fine - coarse) + oct_.error_estimate
    assert abs(fine - oct_.value) <= 3.0 * combined
