"""Numerical observables of Wilson loops in a truncated abelian topological field theory.

Closed polygonal curves generate the fields b, a and v; from these the
package computes Gauss linking numbers, the cubic invariant H (volume and
flux forms) and the phase of the three-loop amplitude, together with the
brute-force oracles used to check them.
"""
__version__ = "0.1.0"

from .fields import eval_a, eval_b, eval_v
from .geometry import ClosedCurve, CurvePrimitiveSpec, LoopSystem, make_circle, make_link_family, perturb_isotopy
from .invariants import (InvariantReport, amplitude_phase, gauss_linking, hopf_flux, hopf_volume,
                         invariance_suite, pauli_check, two_loop_amplitude)
from .quadrature import IntegralResult, QuadratureSpec, integrate_line, integrate_surface, integrate_volume
from .scene import Scene, load_scene
from .surfaces import SpanningSurface, alternate_surface, cone_surface

__all__ = [
    "ClosedCurve", "CurvePrimitiveSpec", "IntegralResult", "InvariantReport", "LoopSystem", "QuadratureSpec",
    "Scene", "SpanningSurface", "alternate_surface", "amplitude_phase", "cone_surface", "eval_a", "eval_b",
    "eval_v", "gauss_linking", "hopf_flux", "hopf_volume", "integrate_line", "integrate_surface",
    "integrate_volume", "invariance_suite", "load_scene", "make_circle", "make_link_family", "pauli_check",
    "perturb_isotopy", "two_loop_amplitude",
]
