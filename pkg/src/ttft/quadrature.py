"""Deterministic adaptive integration over R^3, triangle meshes and closed polylines.

Volume integrals use a level-synchronous octree over the truncation cube
[-L, L]^3 with a tensor-product Gauss-Legendre rule in every cell.  A cell's
error is estimated by comparing its own rule with the sum over its eight
children; a cell is accepted (with the children's sum as its value) once
that difference drops below its volume share of the tolerance, or once it
reaches ``max_depth``.  Cells near a curve are always split down to
``max_depth``.  Beyond the cube the integrand is bounded by ``C / r^6`` with
``C`` fitted on spherical shells, giving the tail term of the error.

Work is cut into fixed-size batches of cells, independently of the worker
count, and partial results are folded in sorted cell order, so any number of
workers gives bit-identical results.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .geometry import ClosedCurve, sample_segments

log = logging.getLogger(__name__)

BATCH_CELLS = 64


class IntegrandError(ValueError):
    """The integrand does not decay fast enough for the tail bound."""


class MeshError(ValueError):
    """Degenerate triangle in a surface mesh."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Settings shared by all volume and surface integrals.

    ``truncation_radius`` of None means four times the bounding radius of
    the curves.  ``near_curve_refine_distance`` of None means 0: only cells
    whose bounding sphere reaches a curve are forced to ``max_depth``.
    """

    truncation_radius: float | None = None
    base_cells_per_axis: int = 8
    max_depth: int = 6
    abs_tol: float = 1e-6
    rel_tol: float = 1e-2
    near_curve_refine_distance: float | None = None
    rule_order: int = 3

    def __post_init__(self):
        if self.truncation_radius is not None and not self.truncation_radius > 0:
            raise ValueError("truncation_radius must be positive")
        if self.base_cells_per_axis < 1:
            raise ValueError("base_cells_per_axis must be >= 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.rule_order < 1:
            raise ValueError("rule_order must be >= 1")
        if self.near_curve_refine_distance is not None and self.near_curve_refine_distance < 0:
            raise ValueError("near_curve_refine_distance must be >= 0")

    def resolved_radius(self, curves: Sequence[ClosedCurve]) -> float:
        bound = max((c.bounding_radius() for c in curves), default=0.0)
        if self.truncation_radius is None:
            if bound == 0.0:
                raise ValueError("truncation_radius is required when there are no curves")
            return 4.0 * bound
        if self.truncation_radius <= bound:
            raise ValueError(
                f"truncation radius {self.truncation_radius} does not enclose the curves (radius {bound:.4g})"
            )
        return float(self.truncation_radius)

    def with_overrides(self, **kw) -> "QuadratureSpec":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class IntegralResult:
    value: float
    error_estimate: float
    cell_count: int = 0
    evaluations: int = 0
    tail_estimate: float = 0.0
    converged: bool = True
    message: str = ""
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "error_estimate": self.error_estimate,
            "cell_count": self.cell_count,
            "evaluations": self.evaluations,
            "tail_estimate": self.tail_estimate,
            "converged": self.converged,
            "message": self.message,
        }


@lru_cache(maxsize=None)
def _cube_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    # nodes in [0, 1]^3 and weights summing to 1
    xi, w = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (xi + 1.0)
    w = 0.5 * w
    gx, gy, gz = np.meshgrid(s, s, s, indexing="ij")
    wx, wy, wz = np.meshgrid(w, w, w, indexing="ij")
    nodes = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    return nodes, (wx * wy * wz).ravel()


_CHILD_OFFSETS = np.array([(i, j, k) for i in (0, 1) for j in (0, 1) for k in (0, 1)], dtype=np.int64)


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


class _CellEvaluator:
    """Evaluates the cell rule on batches of integer cell coordinates."""

    def __init__(self, f, L: float, base: int, order: int, workers: int):
        self.f = f
        self.L = L
        self.base = base
        self.nodes, self.weights = _cube_rule(order)
        self.workers = max(1, int(workers))
        self.evaluations = 0

    def size(self, depth: int) -> float:
        return 2.0 * self.L / (self.base * (1 << depth))

    def _batch(self, depth: int, idx: np.ndarray) -> np.ndarray:
        h = self.size(depth)
        corners = -self.L + h * idx.astype(float)
        pts = corners[:, None, :] + h * self.nodes[None, :, :]
        vals = np.asarray(self.f(pts.reshape(-1, 3)), dtype=float).reshape(len(idx), -1)
        if not np.all(np.isfinite(vals)):
            raise IntegrandError("integrand returned non-finite values inside the domain")
        return (vals * self.weights[None, :]).sum(axis=1) * h ** 3

    def integrate(self, depth: int, idx: np.ndarray) -> np.ndarray:
        batches = [idx[lo:lo + BATCH_CELLS] for lo in range(0, len(idx), BATCH_CELLS)]
        self.evaluations += len(idx) * len(self.weights)
        if self.workers == 1 or len(batches) == 1:
            parts = [self._batch(depth, b) for b in batches]
        else:
            with ThreadPoolExecutor(self.workers) as pool:
                parts = list(pool.map(lambda b: self._batch(depth, b), batches))
        return np.concatenate(parts) if parts else np.zeros(0)


def _near_curves(curves, L, h, depth_idx, margin) -> np.ndarray:
    if not curves or len(depth_idx) == 0:
        return np.zeros(len(depth_idx), dtype=bool)
    centers = -L + h * (depth_idx.astype(float) + 0.5)
    reach = 0.5 * math.sqrt(3.0) * h + margin
    near = np.zeros(len(centers), dtype=bool)
    for c in curves:
        for lo in range(0, len(centers), 2048):
            near[lo:lo + 2048] |= c.distance_to_points(centers[lo:lo + 2048]) <= reach
    return near


def tail_bound(f, L: float, n_dirs: int = 128) -> tuple[float, list[float]]:
    """Bound on |integral of f over |x| > L| assuming |f| <= C / r^6, C fitted on shells.

    Shells at L, 2L and 4L are sampled; ``C`` growing by more than 16x
    between the first and last shell means the integrand does not decay
    like r^-6 and raises :class:`IntegrandError`.
    """
    dirs = _fibonacci_sphere(n_dirs)
    consts = []
    for r in (L, 2.0 * L, 4.0 * L):
        vals = np.abs(np.asarray(f(r * dirs), dtype=float))
        consts.append(float(vals.max()) * r ** 6)
    if consts[2] > 16.0 * consts[0] and consts[2] > 1e-300:
        raise IntegrandError(
            f"integrand does not decay like r^-6 (shell constants {consts[0]:.3g} -> {consts[2]:.3g})"
        )
    return 4.0 * math.pi * max(consts) / (3.0 * L ** 3), consts


def integrate_volume(f: Callable[[np.ndarray], np.ndarray], curves: Sequence[ClosedCurve],
                     spec: QuadratureSpec = QuadratureSpec(), workers: int = 1) -> IntegralResult:
    """Integrate a scalar field over R^3.

    ``f`` maps an (n, 3) array of points to n values and may be singular
    only on ``curves``.  The result is deterministic for a given
    ``(f, curves, spec)`` and independent of ``workers``.
    """
    curves = list(curves)
    L = spec.resolved_radius(curves)
    base = spec.base_cells_per_axis
    margin = spec.near_curve_refine_distance or 0.0
    ev = _CellEvaluator(f, L, base, spec.rule_order, workers)
    domain_volume = (2.0 * L) ** 3

    g = np.arange(base)
    idx = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3).astype(np.int64)
    q = ev.integrate(0, idx)
    cell_count = len(idx)

    accepted_vals: list[float] = []
    accepted_errs: list[float] = []
    stuck = False
    depth = 0
    while len(idx):
        h = ev.size(depth)
        order = np.lexsort(idx.T[::-1])
        idx, q = idx[order], q[order]
        child_idx = (2 * idx[:, None, :] + _CHILD_OFFSETS[None, :, :]).reshape(-1, 3)
        child_q = ev.integrate(depth + 1, child_idx).reshape(len(idx), 8)
        cell_count += len(child_idx)
        refined = child_q.sum(axis=1)
        err = np.abs(q - refined)

        estimate = math.fsum(accepted_vals) + math.fsum(refined.tolist())
        tol = max(spec.abs_tol, spec.rel_tol * abs(estimate))
        share = tol * h ** 3 / domain_volume
        if depth < spec.max_depth:
            split = (err > share) | _near_curves(curves, L, h, idx, margin)
        else:
            split = np.zeros(len(idx), dtype=bool)
            stuck = stuck or bool(np.any(err > share))
        keep = ~split
        accepted_vals.extend(refined[keep].tolist())
        accepted_errs.extend(err[keep].tolist())
        idx = child_idx.reshape(len(idx), 8, 3)[split].reshape(-1, 3)
        q = child_q[split].reshape(-1)
        depth += 1

    value = math.fsum(accepted_vals)
    interior_error = math.fsum(accepted_errs)
    tail, consts = tail_bound(f, L)
    error = interior_error + tail
    tol = max(spec.abs_tol, spec.rel_tol * abs(value))
    converged = error <= tol
    message = ""
    if not converged:
        message = f"error estimate {error:.3g} above tolerance {tol:.3g} at max_depth {spec.max_depth}"
        log.warning(message)
    return IntegralResult(
        value=value,
        error_estimate=error,
        cell_count=cell_count,
        evaluations=ev.evaluations + 3 * 128,
        tail_estimate=tail,
        converged=converged,
        message=message,
        details={"truncation_radius": L, "interior_error": interior_error, "shell_constants": consts,
                 "hit_max_depth": stuck},
    )


@lru_cache(maxsize=None)
def _triangle_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    # collapsed (Duffy) Gauss rule: barycentric (l1, l2) and weights summing to 1
    xi, w = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (xi + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(s, s, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    l1 = u.ravel()
    l2 = (v * (1.0 - u)).ravel()
    weights = (wu * wv * (1.0 - u)).ravel() * 2.0
    return np.stack([l1, l2], axis=1), weights


def _triangle_quadrature(g, tri: np.ndarray, order: int) -> np.ndarray:
    bary, weights = _triangle_rule(order)
    p0, p1, p2 = tri[:, 0], tri[:, 1], tri[:, 2]
    e1, e2 = p1 - p0, p2 - p0
    pts = p0[:, None, :] + bary[None, :, 0:1] * e1[:, None, :] + bary[None, :, 1:2] * e2[:, None, :]
    vec = np.asarray(g(pts.reshape(-1, 3)), dtype=float).reshape(len(tri), len(weights), 3)
    area_normal = 0.5 * np.cross(e1, e2)
    flux_density = np.einsum("tki,ti->tk", vec, area_normal)
    return (flux_density * weights[None, :]).sum(axis=1)


def _split_triangles(tri: np.ndarray) -> np.ndarray:
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
    kids = np.stack([
        np.stack([a, ab, ca], axis=1),
        np.stack([ab, b, bc], axis=1),
        np.stack([ca, bc, c], axis=1),
        np.stack([ab, bc, ca], axis=1),
    ], axis=1)
    return kids.reshape(-1, 3, 3)


def integrate_surface(g: Callable[[np.ndarray], np.ndarray], surface, rule_order: int = 4,
                      abs_tol: float = 1e-10, rel_tol: float = 1e-8, max_level: int = 6) -> IntegralResult:
    """Flux of the vector field ``g`` through an oriented triangle mesh.

    ``surface`` is a :class:`~ttft.surfaces.SpanningSurface` or an array of
    triangles of shape (t, 3, 3); the normal of each triangle follows its
    winding.  Triangles are split 1-to-4 where the rule and the split rule
    disagree by more than their area share of the tolerance.
    """
    tri = np.asarray(getattr(surface, "triangle_coordinates", surface), dtype=float)
    if tri.ndim != 3 or tri.shape[1:] != (3, 3):
        raise MeshError(f"triangles must have shape (t, 3, 3), got {tri.shape}")
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    edge = np.linalg.norm(tri - np.roll(tri, 1, axis=1), axis=2).max(axis=1)
    if np.any(areas <= 1e-14 * edge ** 2):
        raise MeshError(f"degenerate triangle at index {int(np.argmin(areas / edge ** 2))}")
    total_area = float(areas.sum())
    n_rule = len(_triangle_rule(rule_order)[1])

    q = _triangle_quadrature(g, tri, rule_order)
    evaluations = len(tri) * n_rule
    accepted_vals: list[float] = []
    accepted_errs: list[float] = []
    count = len(tri)
    level = 0
    while len(tri):
        kids = _split_triangles(tri)
        kq = _triangle_quadrature(g, kids, rule_order).reshape(len(tri), 4)
        evaluations += len(kids) * n_rule
        count += len(kids)
        refined = kq.sum(axis=1)
        err = np.abs(q - refined)
        estimate = math.fsum(accepted_vals) + math.fsum(refined.tolist())
        tol = max(abs_tol, rel_tol * abs(estimate))
        area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        split = (err > tol * area / total_area) if level < max_level else np.zeros(len(tri), dtype=bool)
        keep = ~split
        accepted_vals.extend(refined[keep].tolist())
        accepted_errs.extend(err[keep].tolist())
        tri = kids.reshape(len(tri), 4, 3, 3)[split].reshape(-1, 3, 3)
        q = kq[split].reshape(-1)
        level += 1

    value = math.fsum(accepted_vals)
    error = math.fsum(accepted_errs) + 1e-15 * math.fsum(abs(v) for v in accepted_vals)
    tol = max(abs_tol, rel_tol * abs(value))
    return IntegralResult(value=value, error_estimate=error, cell_count=count, evaluations=evaluations,
                          converged=error <= tol,
                          message="" if error <= tol else f"surface error {error:.3g} above tolerance {tol:.3g}")


def integrate_line(g: Callable[[np.ndarray], np.ndarray], curve: ClosedCurve,
                   nodes_per_segment: int = 4) -> IntegralResult:
    """``oint g . dl`` around ``curve`` with Gauss-Legendre nodes on every segment.

    The value uses ``2 * nodes_per_segment`` nodes; its difference from the
    ``nodes_per_segment`` rule is the error estimate.
    """
    def rule(n):
        pts, tan = sample_segments(curve, n)
        terms = np.einsum("ki,ki->k", np.asarray(g(pts), dtype=float).reshape(-1, 3), tan)
        return math.fsum(terms.tolist()), math.fsum(np.abs(terms).tolist())

    coarse, _ = rule(nodes_per_segment)
    fine, magnitude = rule(2 * nodes_per_segment)
    error = abs(fine - coarse) + 1e-14 * magnitude
    return IntegralResult(value=fine, error_estimate=error, cell_count=curve.n_segments,
                          evaluations=3 * nodes_per_segment * curve.n_segments)
