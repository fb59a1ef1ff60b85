import math

import numpy as np
import pytest

from ttft.fields import eval_b
from ttft.geometry import make_circle
from ttft.invariants import triple_integrand
from ttft.quadrature import IntegrandError, MeshError, QuadratureSpec, integrate_line, integrate_surface, integrate_volume
from ttft.surfaces import cone_surface

SQRT_PI3 = math.pi ** 1.5


def gaussian(x):
    return np.exp(-np.einsum("ij,ij->i", x, x))


def test_gaussian_within_tolerance():
    spec = QuadratureSpec(truncation_radius=6.0, base_cells_per_axis=4, max_depth=5, abs_tol=1e-9, rel_tol=1e-6,
                          rule_order=4)
    res = integrate_volume(gaussian, [], spec)
    err = abs(res.value - SQRT_PI3)
    assert err <= 1e-6 * SQRT_PI3
    assert res.converged
    # the estimate must not understate the true error
    assert res.error_estimate >= err


def test_zero_integrand_is_exactly_zero():
    c = make_circle((0, 0, 0), (0, 0, 1), 1.0, 32)
    res = integrate_volume(lambda x: np.zeros(len(x)), [c], QuadratureSpec(max_depth=2))
    assert res.value == 0.0 and res.error_estimate == 0.0


def test_repeated_curve_triple_product_vanishes():
    c = make_circle((0, 0, 0), (0, 0, 1), 1.0, 32)
    res = integrate_volume(triple_integrand([c, c, c]), [c], QuadratureSpec(max_depth=2))
    assert res.value == 0.0


def test_slow_decay_rejected():
    with pytest.raises(IntegrandError):
        integrate_volume(lambda x: 1.0 / (1.0 + np.einsum("ij,ij->i", x, x)), [],
                         QuadratureSpec(truncation_radius=4.0, max_depth=1))


def test_workers_do_not_change_result():
    spec = QuadratureSpec(truncation_radius=5.0, base_cells_per_axis=4, max_depth=4, abs_tol=1e-8, rel_tol=1e-6)
    one = integrate_volume(gaussian, [], spec, workers=1)
    three = integrate_volume(gaussian, [], spec, workers=3)
    assert one.value == three.value
    assert one.error_estimate == three.error_estimate
    assert one.cell_count == three.cell_count


def test_error_decreases_with_depth():
    errs = []
    for depth in (1, 2, 3):
        spec = QuadratureSpec(truncation_radius=6.0, base_cells_per_axis=2, max_depth=depth, abs_tol=1e-14,
                              rel_tol=1e-14, rule_order=3)
        res = integrate_volume(gaussian, [], spec)
        errs.append(abs(res.value - SQRT_PI3))
        assert not res.converged
    assert errs[0] > errs[1] > errs[2]


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(max_depth=-1)
    with pytest.raises(ValueError):
        QuadratureSpec(abs_tol=0.0)
    c = make_circle((0, 0, 0), (0, 0, 1), 2.0, 16)
    with pytest.raises(ValueError):
        QuadratureSpec(truncation_radius=1.0).resolved_radius([c])
    assert QuadratureSpec().resolved_radius([c]) == pytest.approx(8.0)


@pytest.fixture(scope="module")
def disk():
    c = make_circle((0, 0, 0), (0, 0, 1), 1.0, 64)
    return c, cone_surface(c, (0, 0, 0))


def test_constant_flux_through_disk(disk):
    curve, surf = disk
    res = integrate_surface(lambda x: np.tile([0.0, 0.0, 2.5], (len(x), 1)), surf)
    polygon_area = 0.5 * 64 * math.sin(2 * math.pi / 64)
    assert res.value == pytest.approx(2.5 * polygon_area, rel=1e-12)
    assert res.value == pytest.approx(2.5 * math.pi, rel=2e-3)


def test_tangent_field_has_no_flux(disk):
    _, surf = disk
    res = integrate_surface(lambda x: np.tile([1.0, -0.5, 0.0], (len(x), 1)), surf)
    assert abs(res.value) < 1e-14


def test_distant_loop_flux(disk):
    _, surf = disk
    far = make_circle((30, 5, -10), (1, 0.2, 0.5), 1.0, 64)
    res = integrate_surface(lambda x: eval_b(far, 1.0, x), surf)
    approx = eval_b(far, 1.0, (0, 0, 0))[2] * math.pi
    assert res.value == pytest.approx(approx, rel=1e-2)


def test_degenerate_mesh_rejected():
    tri = np.array([[[0, 0, 0], [1, 0, 0], [2, 0, 0]]], dtype=float)
    with pytest.raises(MeshError):
        integrate_surface(lambda x: x, tri)
    with pytest.raises(MeshError):
        integrate_surface(lambda x: x, np.zeros((3, 3)))


def test_line_integrals():
    c = make_circle((0.5, -1, 0), (0, 0, 1), 2.0, 100)
    grad = integrate_line(lambda x: np.stack([2 * x[:, 0], np.cos(x[:, 1]), np.zeros(len(x))], axis=1), c)
    assert abs(grad.value) < 1e-12
    green = integrate_line(lambda x: np.stack([-0.5 * (x[:, 1] + 1), 0.5 * (x[:, 0] - 0.5), np.zeros(len(x))],
                                              axis=1), c)
    polygon_area = 0.5 * 100 * math.sin(2 * math.pi / 100) * 4.0
    assert green.value == pytest.approx(polygon_area, rel=1e-12)
    assert green.value == pytest.approx(4 * math.pi, rel=1e-3)


def test_line_rule_refinement():
    c = make_circle((0, 0, 0), (0, 0, 1), 1.0, 16)

    def g(x):
        return np.stack([np.sin(3 * x[:, 1]), np.exp(x[:, 0]), np.zeros(len(x))], axis=1)

    a = integrate_line(g, c, nodes_per_segment=1)
    b = integrate_line(g, c, nodes_per_segment=2)
    assert b.error_estimate < a.error_estimate
    ref = integrate_line(g, c, nodes_per_segment=16).value
    assert abs(b.value - ref) < abs(a.value - ref)
