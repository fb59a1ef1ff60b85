import math

import numpy as np
import pytest

from ttft.geometry import LoopSystem, make_circle, make_torus_link
from ttft.invariants import (amplitude_phase, epsilon_contraction, gauss_linking, hopf_flux, hopf_volume,
                             invariance_suite, linking_report, pauli_check, pauli_contraction, triple_product,
                             two_loop_amplitude)
from ttft.quadrature import QuadratureSpec
from ttft.surfaces import cone_surface

FAST = QuadratureSpec(base_cells_per_axis=4, max_depth=2, abs_tol=1e-6, rel_tol=1e-2)


@pytest.fixture(scope="module")
def spread():
    # three unlinked circles a few radii apart with generic normals
    a = make_circle((0, 0, 0), (0.3, 0.2, 1), 1.0, 48, "a")
    b = make_circle((3.5, 0, 0.5), (0, 1, 0.4), 1.0, 48, "b")
    c = make_circle((1.5, 3.2, -0.5), (1, 0.3, 0.2), 1.0, 48, "c")
    return LoopSystem((a, b, c))


@pytest.fixture(scope="module")
def hopf():
    a = make_circle((0, 0, 0), (0, 0, 1), 1.0, 256, "a")
    b = make_circle((1, 0, 0), (0, 1, 0), 1.0, 256, "b")
    return a, b


def test_hopf_link_and_symmetry(hopf):
    a, b = hopf
    lk = gauss_linking(a, b)
    assert abs(lk - 1.0) < 1e-3
    assert gauss_linking(b, a) == lk
    assert gauss_linking(a.reversed(), b) == -lk
    assert gauss_linking(a, b.reversed()) == -lk


def test_torus_link_and_split_pair():
    t1, t2 = make_torus_link(2, 4, 256)
    assert abs(gauss_linking(t1, t2) - 2.0) < 1e-3
    a = make_circle((0, 0, 0), (0, 0, 1), 1.0, 64)
    far = make_circle((10, 0, 0), (0, 1, 0), 1.0, 64)
    assert abs(gauss_linking(a, far)) < 1e-3


def test_linking_report(hopf):
    rep = linking_report(*hopf)
    assert rep.details["nearest_integer"] == 1
    assert rep.details["distance_to_integer"] < 1e-3
    assert rep.error_estimate < 1e-3
    assert len(rep.inputs_hash) == 64


def test_two_loop_amplitude_ignores_cubic_coupling(hopf):
    a, b = hopf
    r1 = two_loop_amplitude(a, b, kappa=1.0)
    r2 = two_loop_amplitude(a, b, kappa=1.0)
    assert r1.value == r2.value == gauss_linking(a, b)
    assert "lambda" not in r1.details


def test_epsilon_identity(rng):
    b1, b2, b3 = rng.normal(size=(3, 50, 3))
    np.testing.assert_allclose(epsilon_contraction(b1, b2, b3), 2.0 * triple_product(b1, b2, b3), rtol=1e-12,
                               atol=1e-12)


def test_pauli_trace_identity(rng):
    b1, b2, b3 = rng.normal(size=(3, 20, 3))
    tr = pauli_contraction(b1, b2, b3)
    # against the full eps-eps sum, i.e. three times the normalised contraction
    np.testing.assert_allclose(tr, 2j * 3.0 * epsilon_contraction(b1, b2, b3), atol=1e-11)


def test_pauli_check_on_fields(spread, rng):
    pts = rng.normal(size=(20, 3)) * 2 + [1.5, 1.0, 0]
    rep = pauli_check(spread, pts)
    assert abs(rep.value - 2j) < 1e-9
    assert rep.details["ratio_spread"] < 1e-9
    assert rep.details["max_abs_real_trace"] < 1e-9 * rep.details["max_abs_trace"]
    dropped = pauli_check(spread, pts, drop=1)
    # two fields left: the trace vanishes analytically, up to rounding of the 2x2 products
    assert dropped.details["max_abs_trace"] < 1e-12 * rep.details["max_abs_trace"]
    assert dropped.details["max_abs_epsilon"] == 0.0


@pytest.fixture(scope="module")
def spread_volume(spread):
    return hopf_volume(spread, FAST)


def test_volume_kappa_scaling(spread, spread_volume):
    doubled = hopf_volume(LoopSystem(spread.curves, kappa=2.0), FAST)
    assert doubled.value == spread_volume.value / 8.0
    assert doubled.error_estimate == spread_volume.error_estimate / 8.0


def test_volume_antisymmetry(spread, spread_volume):
    a, b, c = spread.curves
    assert hopf_volume(LoopSystem((a, c, b)), FAST).value == -spread_volume.value
    assert hopf_volume(LoopSystem((c, a, b)), FAST).value == spread_volume.value
    assert hopf_volume(LoopSystem((a.reversed(), b, c)), FAST).value == -spread_volume.value


@pytest.fixture(scope="module")
def spread_flux(spread):
    return hopf_flux(spread, rule_order=3, abs_tol=1e-9, rel_tol=1e-6, max_level=4)


def test_flux_antisymmetry_and_scaling(spread, spread_flux):
    a, b, c = spread.curves
    swapped = hopf_flux(LoopSystem((a, c, b)), rule_order=3, abs_tol=1e-9, rel_tol=1e-6, max_level=4)
    assert swapped.value == -spread_flux.value
    doubled = hopf_flux(LoopSystem(spread.curves, kappa=2.0), rule_order=3, abs_tol=1e-9, rel_tol=1e-6,
                        max_level=4)
    assert doubled.value == spread_flux.value / 8.0


def test_flux_apex_is_used(spread):
    a, b, c = spread.curves
    surfaces = [cone_surface(a, a.centroid() + [0, 0, 0.3]), None, None]
    rep = hopf_flux(spread, surfaces=surfaces, rule_order=3, abs_tol=1e-9, rel_tol=1e-6, max_level=4)
    assert rep.details["apexes"][0] == pytest.approx(list(a.centroid() + [0, 0, 0.3]))


def test_amplitude_phase(spread, spread_volume):
    T = spread_volume.details["T"]
    one = amplitude_phase(LoopSystem(spread.curves, lam=0.0), T=T)
    assert one.value == complex(1.0, 0.0)
    p1 = amplitude_phase(LoopSystem(spread.curves, lam=1.0), T=T)
    p2 = amplitude_phase(LoopSystem(spread.curves, lam=2.0), T=T)
    assert abs(p1.value) == pytest.approx(1.0, abs=1e-15)
    assert p2.value == pytest.approx(p1.value ** 2, abs=1e-14)
    assert p1.value.imag == pytest.approx(-math.sin(T), abs=1e-15)


def test_amplitude_runs_volume_when_needed(spread, spread_volume):
    rep = amplitude_phase(spread, FAST)
    assert rep.details["T"] == spread_volume.details["T"]
    assert rep.as_dict()["value"] == {"re": rep.value.real, "im": rep.value.imag}


def test_zero_amplitude_perturbation_is_exact(spread):
    rep = invariance_suite(spread, FAST, n_perturbations=2, amplitude=0.0)
    assert rep.value == 0.0
    assert rep.details["max_linking_deviation"] < 1e-12


def test_hopf_pair_linking_survives_perturbation(hopf):
    far = make_circle((12, 0, 0), (0, 0, 1), 1.0, 64, "far")
    sys_ = LoopSystem((*hopf, far))
    rep = invariance_suite(sys_, n_perturbations=3, amplitude=0.02, include_volume=False)
    assert rep.details["base_linking_integers"] == [1, 0, 0]
    assert rep.details["max_linking_deviation"] < 1e-3
    assert not rep.details["failures"]


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="the triple integral changes under isotopy when the loops are entangled")
def test_entangled_triple_integral_is_not_isotopy_invariant(scenes):
    scene = scenes("entangled")
    system = scene.system()
    a, b, c = system.curves
    d = c.centroid() - 0.5 * (a.centroid() + b.centroid())
    d /= np.linalg.norm(d)
    # straight-line move of c that never touches a or b: an isotopy
    for t in np.linspace(0.0, 1.0, 41):
        moved = c.translated(t * d)
        assert min(moved.distance_to(a), moved.distance_to(b)) > 0.05
    spec = scene.quadrature.with_overrides(max_depth=3)
    base = hopf_volume(system, spec)
    shifted = hopf_volume(system.with_curve(2, c.translated(d)), spec)
    assert abs(shifted.value - base.value) <= base.error_estimate + shifted.error_estimate
