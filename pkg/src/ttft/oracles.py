"""Deliberately simple reference computations used to cross-check the main code paths.

Nothing here shares code with the quadrature or invariant modules: linking
numbers come from counting signed crossings in a planar projection, volume
integrals from a plain midpoint sum, derivatives from central differences.
Single-threaded by design.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ClosedCurve


class OracleError(RuntimeError):
    """The oracle could not produce a trustworthy answer."""


@dataclass
class Derivatives:
    """Central-difference derivatives of a field at one point.

    ``jacobian[i, j]`` is d F_i / d x_j for a vector field; for a scalar field
    it has a single row.
    """

    jacobian: np.ndarray
    h: float

    @property
    def gradient(self) -> np.ndarray:
        return self.jacobian[0]

    @property
    def divergence(self) -> float:
        return float(np.trace(self.jacobian))

    @property
    def curl(self) -> np.ndarray:
        j = self.jacobian
        return np.array([j[2, 1] - j[1, 2], j[0, 2] - j[2, 0], j[1, 0] - j[0, 1]])


def finite_difference(field_fn, x, h: float) -> Derivatives:
    """Second-order central differences of ``field_fn`` at ``x`` with step ``h``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(3):
        step = np.zeros(3)
        step[k] = h
        fp = np.atleast_1d(np.asarray(field_fn(x + step), dtype=float))
        fm = np.atleast_1d(np.asarray(field_fn(x - step), dtype=float))
        cols.append((fp - fm) / (2.0 * h))
    return Derivatives(np.stack(cols, axis=1), h)


@dataclass
class Crossing:
    over: str
    under: str
    sign: int
    point: np.ndarray


@dataclass
class ProjectionDiagram:
    direction: np.ndarray
    crossings: list = field(default_factory=list)

    def linking_number(self) -> int:
        total = sum(c.sign for c in self.crossings)
        if total % 2:
            raise OracleError("odd crossing-sign sum between two closed curves")
        return total // 2


def _plane_basis(direction):
    d = direction / np.linalg.norm(direction)
    a = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = a - np.dot(a, d) * d
    u /= np.linalg.norm(u)
    return u, np.cross(d, u), d


def project_crossings(c1: ClosedCurve, c2: ClosedCurve, direction, tol: float = 1e-9) -> ProjectionDiagram:
    """Signed crossings between ``c1`` and ``c2`` seen from ``direction``.

    The viewer sits at +infinity along ``direction``.  A crossing is
    positive when (over tangent x under tangent) points toward the viewer.
    Raises :class:`OracleError` if the projection is not generic.
    """
    u, w, d = _plane_basis(np.asarray(direction, dtype=float))
    A0, A1 = c1.starts, c1.ends
    B0, B1 = c2.starts, c2.ends

    def flat(p):
        return np.stack([p @ u, p @ w], axis=-1)

    a0, a1, b0, b1 = flat(A0), flat(A1), flat(B0), flat(B1)
    da = (a1 - a0)[:, None, :]
    db = (b1 - b0)[None, :, :]
    r = b0[None, :, :] - a0[:, None, :]
    den = da[..., 0] * db[..., 1] - da[..., 1] * db[..., 0]
    scale = np.linalg.norm(da, axis=-1) * np.linalg.norm(db, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (r[..., 0] * db[..., 1] - r[..., 1] * db[..., 0]) / den
        t = (r[..., 0] * da[..., 1] - r[..., 1] * da[..., 0]) / den
    near_parallel = np.abs(den) <= 1e-12 * scale
    hit = ~near_parallel & (s >= -tol) & (s <= 1 + tol) & (t >= -tol) & (t <= 1 + tol)
    if np.any(hit & ((np.abs(s) <= tol) | (np.abs(s - 1) <= tol) | (np.abs(t) <= tol) | (np.abs(t - 1) <= tol))):
        raise OracleError("projection passes through a vertex")
    if np.any(near_parallel):
        # overlapping collinear projections are not generic
        cross_r = np.abs(r[..., 0] * db[..., 1] - r[..., 1] * db[..., 0])
        if np.any(near_parallel & (cross_r <= 1e-12 * scale + 1e-300)):
            raise OracleError("collinear overlapping projected segments")
    diagram = ProjectionDiagram(direction=d)
    for i, j in zip(*np.nonzero(hit)):
        pa = A0[i] + s[i, j] * (A1[i] - A0[i])
        pb = B0[j] + t[i, j] * (B1[j] - B0[j])
        ha, hb = pa @ d, pb @ d
        if abs(ha - hb) <= tol:
            raise OracleError("curves meet along the viewing direction")
        ta, tb = A1[i] - A0[i], B1[j] - B0[j]
        if ha > hb:
            over, under, to, tu = c1.label, c2.label, ta, tb
        else:
            over, under, to, tu = c2.label, c1.label, tb, ta
        sign = 1 if np.dot(np.cross(to, tu), d) > 0 else -1
        diagram.crossings.append(Crossing(over, under, sign, 0.5 * (pa + pb)))
    return diagram


def linking_by_crossings(c1: ClosedCurve, c2: ClosedCurve, seed: int = 0, max_tries: int = 20) -> int:
    """Linking number as half the sum of crossing signs in a random generic projection."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        direction = rng.normal(size=3)
        try:
            return project_crossings(c1, c2, direction).linking_number()
        except OracleError:
            continue
    raise OracleError(f"no generic projection found in {max_tries} tries")


def riemann_volume(f, curves, L: float, n: int, eps: float = 1e-6, chunk: int = 1 << 12) -> float:
    """Midpoint sum of ``f`` on an n^3 grid over [-L, L]^3.

    Cells whose center lies within ``eps`` of a curve are skipped.
    """
    h = 2.0 * L / n
    axis = -L + h * (np.arange(n) + 0.5)
    total = 0.0
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    centers = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    for lo in range(0, len(centers), chunk):
        pts = centers[lo:lo + chunk]
        keep = np.ones(len(pts), dtype=bool)
        for c in curves:
            keep &= c.distance_to_points(pts) > eps
        if np.any(keep):
            total += float(np.sum(f(pts[keep])))
    return total * h ** 3
