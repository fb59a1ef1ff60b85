"""Observables of three Wilson loops: linking numbers, the cubic invariant H and the amplitude phase.

Conventions (all fields from :mod:`ttft.fields`):

* ``T = integral of b1 . (b2 x b3)`` over R^3 and ``H = 2 T``.
* The flux form is ``H = -(8 pi / 3 kappa) (F1 + F2 + F3)`` with
  ``F1 = flux of b2 x b3 through S1`` and cyclic.
* The amplitude phase is ``exp(-i lambda T)``.

Every multi-curve computation first replaces each curve by its canonical
orientation and sorts the curves by vertex bytes; the orientation signs and
the permutation parity are applied at the end.  This makes reversal of a
curve and odd relabelings flip the sign of the result exactly.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fields import FieldSingularityError, biot_savart_sum
from .geometry import ClosedCurve, LoopSystem, PerturbationError, perturb_isotopy, sample_segments
from .quadrature import IntegralResult, QuadratureSpec, integrate_surface, integrate_volume
from .surfaces import SpanningSurface, check_clearance, cone_surface, default_surface

_PAIR_CHUNK = 1 << 20

PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)

LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    LEVI_CIVITA[_i, _j, _k] = 1.0
    LEVI_CIVITA[_i, _k, _j] = -1.0


@dataclass
class InvariantReport:
    name: str
    value: float | complex
    error_estimate: float
    details: dict = field(default_factory=dict)
    inputs_hash: str = ""

    def as_dict(self) -> dict:
        value = self.value
        if isinstance(value, complex):
            value = {"re": value.real, "im": value.imag}
        return {
            "name": self.name,
            "value": value,
            "error_estimate": self.error_estimate,
            "details": self.details,
            "inputs_hash": self.inputs_hash,
        }


def inputs_hash(name: str, curves: Sequence[ClosedCurve], **params) -> str:
    """sha256 over the method name, the curve vertices and labels, and JSON-encoded parameters."""
    h = hashlib.sha256(name.encode())
    for c in curves:
        h.update(c.label.encode() + b"\0")
        h.update(np.ascontiguousarray(c.vertices, dtype="<f8").tobytes())
    h.update(json.dumps(params, sort_keys=True, default=str).encode())
    return h.hexdigest()


def _canonical_order(curves: Sequence[ClosedCurve], antisymmetric: bool = True
                     ) -> tuple[list[ClosedCurve], int, list[int]]:
    """Canonical curves sorted by key, the overall sign, and the sorting permutation.

    The sign is the product of the orientation signs, times the permutation
    parity when the quantity is ``antisymmetric`` in its curves.
    """
    canon = [c.canonical() for c in curves]
    sign = 1
    for _, s in canon:
        sign *= s
    order = sorted(range(len(curves)), key=lambda i: canon[i][0].key())
    if not antisymmetric:
        return [canon[i][0] for i in order], sign, order
    # parity of the sorting permutation
    seen = [False] * len(order)
    for i in range(len(order)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = order[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return [canon[i][0] for i in order], sign, order


def _b_unit(curve: ClosedCurve, pts: np.ndarray) -> np.ndarray:
    # b at kappa = 1
    return -biot_savart_sum(curve.starts, curve.ends, pts, 1e-12, curve.label)


# ---------------------------------------------------------------- linking


def _gauss_sum(c1: ClosedCurve, c2: ClosedCurve, nodes: int) -> float:
    x1, t1 = sample_segments(c1, nodes)
    x2, t2 = sample_segments(c2, nodes)
    step = max(1, _PAIR_CHUNK // len(x2))
    partial = []
    for lo in range(0, len(x1), step):
        d = x1[lo:lo + step, None, :] - x2[None, :, :]
        r3 = np.einsum("nmi,nmi->nm", d, d) ** 1.5
        cross = np.cross(t1[lo:lo + step, None, :], t2[None, :, :])
        partial.extend((np.einsum("nmi,nmi->nm", cross, d) / r3).sum(axis=1).tolist())
    return math.fsum(partial) / (4.0 * math.pi)


def gauss_linking(c1: ClosedCurve, c2: ClosedCurve, nodes_per_segment: int = 4) -> float:
    """Gauss double integral with Gauss-Legendre nodes on every segment pair.

    Exactly symmetric in its arguments and exactly odd under reversal of
    either curve.
    """
    gap = c1.distance_to(c2)
    if gap <= 1e-9:
        raise FieldSingularityError(f"curves {c1.label!r} and {c2.label!r} are {gap:.3g} apart")
    (a, b), sign, _ = _canonical_order([c1, c2], antisymmetric=False)
    return sign * _gauss_sum(a, b, nodes_per_segment)


def linking_report(c1: ClosedCurve, c2: ClosedCurve, nodes_per_segment: int = 4) -> InvariantReport:
    """Gauss linking number with a nearest-integer summary.

    The error estimate is the change from the rule with half as many nodes.
    """
    value = gauss_linking(c1, c2, nodes_per_segment)
    coarse = gauss_linking(c1, c2, max(1, nodes_per_segment // 2))
    nearest = int(round(value))
    return InvariantReport(
        name="gauss_linking",
        value=value,
        error_estimate=abs(value - coarse),
        details={
            "pair": [c1.label, c2.label],
            "nearest_integer": nearest,
            "distance_to_integer": abs(value - nearest),
            "nodes_per_segment": nodes_per_segment,
            "min_distance": c1.distance_to(c2),
        },
        inputs_hash=inputs_hash("gauss_linking", [c1, c2], nodes=nodes_per_segment),
    )


def two_loop_amplitude(c1: ClosedCurve, c2: ClosedCurve, kappa: float = 1.0,
                       nodes_per_segment: int = 4) -> InvariantReport:
    """Topological content of a two-loop amplitude: the Gauss linking number only.

    The cubic coupling does not enter, so lambda is not an input.
    """
    report = linking_report(c1, c2, nodes_per_segment)
    report.name = "two_loop_amplitude"
    report.details["kappa"] = kappa
    report.details["content"] = "gauss linking number; cubic terms do not contribute"
    report.inputs_hash = inputs_hash("two_loop_amplitude", [c1, c2], kappa=kappa, nodes=nodes_per_segment)
    return report


# ---------------------------------------------------------------- pointwise identities


def epsilon_contraction(b1, b2, b3) -> np.ndarray:
    """(1/3) eps^{mu nu rho} eps^{ijk} b^i_mu b^j_nu b^k_rho, summed term by term (36 nonzero terms)."""
    fields = np.stack([np.atleast_2d(b1), np.atleast_2d(b2), np.atleast_2d(b3)], axis=1)  # (n, i, mu)
    total = np.einsum("ijk,abc,nia,njb,nkc->n", LEVI_CIVITA, LEVI_CIVITA, fields, fields, fields)
    return total / 3.0


def triple_product(b1, b2, b3) -> np.ndarray:
    return np.einsum("ni,ni->n", np.atleast_2d(b1), np.cross(np.atleast_2d(b2), np.atleast_2d(b3)))


def pauli_contraction(b1, b2, b3) -> np.ndarray:
    """eps^{mu nu rho} Tr[B_mu B_nu B_rho] with B_mu = sum_i sigma^i b^i_mu, as complex numbers."""
    fields = np.stack([np.atleast_2d(b1), np.atleast_2d(b2), np.atleast_2d(b3)], axis=1)
    mats = np.einsum("nim,iab->nmab", fields.astype(complex), PAULI)  # (n, mu, 2, 2)
    out = np.zeros(len(fields), dtype=complex)
    for m, n, r in zip(*np.nonzero(LEVI_CIVITA)):
        prod = mats[:, m] @ mats[:, n] @ mats[:, r]
        out += LEVI_CIVITA[m, n, r] * np.trace(prod, axis1=1, axis2=2)
    return out


def pauli_check(system: LoopSystem, points, drop: int | None = None) -> InvariantReport:
    """Compare the Pauli-trace contraction with the full eps-eps contraction point by point.

    The value is the mean ratio trace/eps (expected 2i); ``drop`` zeroes one
    of the three fields.  Points where the eps contraction is too small for a
    ratio are skipped and counted.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    b = [_b_unit(c, pts) / system.kappa for c in system.curves]
    if drop is not None:
        b[drop] = np.zeros_like(b[drop])
    eps_side = 3.0 * epsilon_contraction(*b)
    trace_side = pauli_contraction(*b)
    scale = np.prod([np.linalg.norm(x, axis=1) for x in b], axis=0)
    usable = np.abs(eps_side) > 1e-8 * scale
    ratios = trace_side[usable] / eps_side[usable]
    if len(ratios):
        constant = complex(np.mean(ratios))
        spread = float(np.max(np.abs(ratios - constant)))
    else:
        constant, spread = complex("nan"), 0.0
    return InvariantReport(
        name="pauli_check",
        value=constant,
        error_estimate=spread,
        details={
            "n_points": len(pts),
            "n_ratio_points": int(usable.sum()),
            "max_abs_trace": float(np.max(np.abs(trace_side))),
            "max_abs_epsilon": float(np.max(np.abs(eps_side))),
            "max_abs_real_trace": float(np.max(np.abs(trace_side.real))),
            "ratio_spread": spread,
            "dropped_field": drop,
        },
        inputs_hash=inputs_hash("pauli_check", system.curves, kappa=system.kappa,
                                points=pts.tolist(), drop=drop),
    )


# ---------------------------------------------------------------- volume form


def triple_integrand(curves: Sequence[ClosedCurve]):
    """Point function b1 . (b2 x b3) at kappa = 1 for three curves, in the given order."""
    c1, c2, c3 = curves

    def f(pts: np.ndarray) -> np.ndarray:
        return triple_product(_b_unit(c1, pts), _b_unit(c2, pts), _b_unit(c3, pts))

    return f


def triple_volume_integral(system: LoopSystem, spec: QuadratureSpec = QuadratureSpec(),
                           workers: int = 1) -> tuple[float, float, IntegralResult]:
    """T with its error estimate and the raw kappa = 1 integration result."""
    ordered, sign, _ = _canonical_order(system.curves)
    result = integrate_volume(triple_integrand(ordered), ordered, spec, workers=workers)
    scale = (1.0 / system.kappa) ** 3
    return sign * scale * result.value, abs(scale) * result.error_estimate, result


def hopf_volume(system: LoopSystem, spec: QuadratureSpec = QuadratureSpec(), workers: int = 1) -> InvariantReport:
    """H = 2 T by adaptive cubature of the triple product over R^3.

    Tolerances in ``spec`` apply to the kappa = 1 integral.
    """
    T, T_err, result = triple_volume_integral(system, spec, workers)
    return InvariantReport(
        name="hopf_volume",
        value=2.0 * T,
        error_estimate=2.0 * T_err,
        details={
            "T": T,
            "T_error": T_err,
            "kappa": system.kappa,
            "labels": [c.label for c in system.curves],
            "quadrature": result.as_dict(),
            "truncation_radius": result.details["truncation_radius"],
            "tail_estimate": result.tail_estimate,
            "converged": result.converged,
        },
        inputs_hash=inputs_hash("hopf_volume", system.curves, kappa=system.kappa, spec=spec.as_dict()),
    )


# ---------------------------------------------------------------- flux form


def _surface_over(curve: ClosedCurve, template: SpanningSurface | None, others) -> SpanningSurface:
    if template is None:
        return default_surface(curve, others)
    apex = template.info.get("apex")
    if apex is None:
        raise ValueError("flux form needs cone surfaces (apex recorded in surface info)")
    surface = cone_surface(curve, apex)
    check_clearance(surface, others)
    return surface


def hopf_flux(system: LoopSystem, surfaces: Sequence[SpanningSurface | None] | None = None,
              rule_order: int = 4, abs_tol: float = 1e-10, rel_tol: float = 1e-8,
              max_level: int = 6) -> InvariantReport:
    """H from fluxes of b_j x b_k through cone surfaces spanning each curve.

    ``surfaces`` gives one cone per curve in system order (None picks a
    default apex).  Each cone is rebuilt from its apex over the canonical
    curve, so only the apex of a supplied surface matters.  Raises
    :class:`~ttft.surfaces.SurfaceCapabilityError` when a surface comes
    within the separation distance of another curve.
    """
    if surfaces is None:
        surfaces = [None, None, None]
    if len(surfaces) != 3:
        raise ValueError("hopf_flux needs one surface per curve")
    ordered, sign, order = _canonical_order(system.curves)
    templates = [surfaces[i] for i in order]
    built = []
    for i, curve in enumerate(ordered):
        others = [ordered[j] for j in range(3) if j != i]
        built.append(_surface_over(curve, templates[i], others))

    fluxes, errors = [], []
    for i in range(3):
        cj, ck = ordered[(i + 1) % 3], ordered[(i + 2) % 3]

        def g(pts, cj=cj, ck=ck):
            return np.cross(_b_unit(cj, pts), _b_unit(ck, pts))

        r = integrate_surface(g, built[i], rule_order=rule_order, abs_tol=abs_tol, rel_tol=rel_tol,
                              max_level=max_level)
        fluxes.append(r.value)
        errors.append(r.error_estimate)
    scale = (1.0 / system.kappa) ** 3
    prefactor = -8.0 * math.pi / 3.0
    value = sign * scale * prefactor * math.fsum(fluxes)
    error = abs(scale * prefactor) * math.fsum(errors)
    inv = np.argsort(order)
    return InvariantReport(
        name="hopf_flux",
        value=value,
        error_estimate=error,
        details={
            "T": 0.5 * value,
            "fluxes_kappa1": {system.curves[order[i]].label: fluxes[i] for i in range(3)},
            "apexes": [built[int(inv[i])].info["apex"] for i in range(3)],
            "rule_order": rule_order,
            "kappa": system.kappa,
        },
        inputs_hash=inputs_hash("hopf_flux", system.curves, kappa=system.kappa, rule_order=rule_order,
                                abs_tol=abs_tol, rel_tol=rel_tol,
                                apexes=[None if s is None else s.info.get("apex") for s in surfaces]),
    )


def flux_through(surface: SpanningSurface, vector_field, rule_order: int = 4, abs_tol: float = 1e-10,
                 rel_tol: float = 1e-8, max_level: int = 6) -> IntegralResult:
    """Flux of an arbitrary vector field through a surface (thin wrapper for checks)."""
    return integrate_surface(vector_field, surface, rule_order=rule_order, abs_tol=abs_tol,
                             rel_tol=rel_tol, max_level=max_level)


# ---------------------------------------------------------------- amplitude


def amplitude_phase(system: LoopSystem, spec: QuadratureSpec = QuadratureSpec(), workers: int = 1,
                    T: float | None = None, T_error: float | None = None) -> InvariantReport:
    """Unit-modulus phase exp(-i lambda T) of the three-loop amplitude; normalization left out.

    A precomputed ``T`` (with ``T_error``) skips the volume integral.
    """
    details = {}
    if T is None:
        T, T_error, result = triple_volume_integral(system, spec, workers)
        details["quadrature"] = result.as_dict()
    T_error = 0.0 if T_error is None else T_error
    lam = system.lam
    phase = complex(1.0, 0.0) if lam == 0 else complex(math.cos(lam * T), -math.sin(lam * T))
    details.update({
        "T": T,
        "T_error": T_error,
        "H": 2.0 * T,
        "lambda": lam,
        "exponent": -lam * T,
        "modulus": abs(phase),
        "normalization": "constant factor independent of the curves, not included",
    })
    return InvariantReport(
        name="amplitude_phase",
        value=phase,
        error_estimate=abs(lam) * T_error,
        details=details,
        inputs_hash=inputs_hash("amplitude_phase", system.curves, kappa=system.kappa, lam=lam,
                                spec=spec.as_dict(), T=T),
    )


# ---------------------------------------------------------------- invariance


def perturbed_system(system: LoopSystem, amplitude: float, seed: int, draw: int) -> LoopSystem:
    """Perturb the three curves one after another, each against the already moved others."""
    ss = np.random.SeedSequence([seed, draw])
    seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(3)]
    current = system
    for i in range(3):
        moved = perturb_isotopy(current.curves[i], amplitude, seeds[i], current)
        current = current.with_curve(i, moved)
    return current


def invariance_suite(system: LoopSystem, spec: QuadratureSpec = QuadratureSpec(), n_perturbations: int = 5,
                     amplitude: float = 0.02, seed: int = 0, workers: int = 1,
                     include_volume: bool = True, nodes_per_segment: int = 4) -> InvariantReport:
    """Recompute the invariants on isotopy-perturbed copies and report the worst deviations.

    The value is the largest H deviation divided by the combined error
    estimate of the base and perturbed runs (<= 1 means invariant within
    error).  Pairwise linking deviations are measured from the base integer.
    """
    pairs = [(0, 1), (0, 2), (1, 2)]

    def linking(sys_):
        return [gauss_linking(sys_.curves[a], sys_.curves[b], nodes_per_segment) for a, b in pairs]

    base_lk = linking(system)
    base_int = [int(round(x)) for x in base_lk]
    base_H = hopf_volume(system, spec, workers) if include_volume else None
    draws, failures = [], []
    worst_lk, worst_ratio = 0.0, 0.0
    for k in range(n_perturbations):
        try:
            moved = perturbed_system(system, amplitude, seed, k)
        except PerturbationError as exc:
            failures.append({"draw": k, "error": str(exc)})
            continue
        lk = linking(moved)
        dev_lk = max(abs(x - n) for x, n in zip(lk, base_int))
        worst_lk = max(worst_lk, dev_lk)
        row = {"draw": k, "linking": lk, "linking_deviation": dev_lk,
               "max_displacement": max(float(np.linalg.norm(m.vertices - c.vertices, axis=1).max())
                                       for m, c in zip(moved.curves, system.curves))}
        if base_H is not None:
            H = hopf_volume(moved, spec, workers)
            dev = abs(H.value - base_H.value)
            combined = H.error_estimate + base_H.error_estimate
            ratio = dev / combined if combined > 0 else (0.0 if dev == 0 else math.inf)
            worst_ratio = max(worst_ratio, ratio)
            row.update({"H": H.value, "H_error": H.error_estimate, "H_deviation": dev,
                        "combined_error": combined, "ratio": ratio})
        draws.append(row)
    return InvariantReport(
        name="invariance_suite",
        value=worst_ratio,
        error_estimate=0.0,
        details={
            "base_linking": base_lk,
            "base_linking_integers": base_int,
            "base_H": None if base_H is None else base_H.value,
            "base_H_error": None if base_H is None else base_H.error_estimate,
            "max_linking_deviation": worst_lk,
            "max_H_ratio": worst_ratio,
            "draws": draws,
            "failures": failures,
            "amplitude": amplitude,
            "seed": seed,
        },
        inputs_hash=inputs_hash("invariance_suite", system.curves, kappa=system.kappa, spec=spec.as_dict(),
                                n=n_perturbations, amplitude=amplitude, seed=seed),
    )
