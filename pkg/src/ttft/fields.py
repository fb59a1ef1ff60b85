"""Classical fields of a unit loop current: b (Biot-Savart), a (vector potential), v (solid angle).

Conventions, for a curve ``C`` with coupling ``kappa``::

    b(x) = -(1/kappa) oint_C dx' x (x - x') / |x - x'|^3
    a(x) = -(1/kappa) oint_C dx' / |x - x'|
    v(x) = Omega(x) / kappa,        b = -grad v = curl a

where ``Omega`` is the signed solid angle of the curve seen from ``x``.  With
these signs ``curl b = -(4 pi / kappa) J`` and the circulation of ``b`` around
a probe loop is ``-(4 pi / kappa)`` times the linking number.

All straight-segment integrals are done in closed form, so the only
discretisation error is polyline versus smooth curve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import ClosedCurve

EPS_FIELD = 1e-9
_CHUNK_ELEMENTS = 1 << 14


class FieldSingularityError(ValueError):
    """Evaluation point within the exclusion tube around a curve."""


def _points(x) -> tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 3:
        raise ValueError(f"points must have a trailing axis of length 3, got {pts.shape}")
    return pts.reshape(-1, 3), single


def _chunks(n_points: int, n_segments: int):
    step = max(1, _CHUNK_ELEMENTS // max(n_segments, 1))
    for lo in range(0, n_points, step):
        yield slice(lo, min(lo + step, n_points))


def _check_clear(x: np.ndarray, starts: np.ndarray, ends: np.ndarray, n1: np.ndarray, n2: np.ndarray,
                 length: np.ndarray, eps: float, label: str) -> None:
    # (|R1| + |R2| - L) / 2 is a lower bound on the distance to the segment;
    # the exact distance is only needed where the bound is small.
    bound = 0.5 * (n1 + n2 - length[None, :])
    suspect = np.nonzero((bound <= eps).any(axis=1))[0]
    if len(suspect) == 0:
        return
    from .geometry import point_segment_distances

    d = point_segment_distances(x[suspect, None, :], starts[None], ends[None])
    if np.any(d <= eps):
        raise FieldSingularityError(f"evaluation point within {eps:g} of curve {label!r}")


def _differences(x: np.ndarray, starts: np.ndarray, ends: np.ndarray):
    # per-component (n, m) arrays of R1 = x - start and R2 = x - end
    r1 = [x[:, None, k] - starts[None, :, k] for k in range(3)]
    r2 = [x[:, None, k] - ends[None, :, k] for k in range(3)]
    n1 = np.sqrt(r1[0] * r1[0] + r1[1] * r1[1] + r1[2] * r1[2])
    n2 = np.sqrt(r2[0] * r2[0] + r2[1] * r2[1] + r2[2] * r2[2])
    return r1, r2, n1, n2


def biot_savart_sum(starts: np.ndarray, ends: np.ndarray, points: np.ndarray,
                    eps: float = EPS_FIELD, label: str = "") -> np.ndarray:
    """``oint dx' x (x - x') / |x - x'|^3`` over the polyline segments, at every point.

    Each straight segment contributes the closed form
    ``(R1 x R2)(|R1| + |R2|) / (|R1| |R2| (|R1| |R2| + R1.R2))`` with
    ``R1 = x - start`` and ``R2 = x - end``.
    """
    out = np.empty_like(points)
    length = np.linalg.norm(ends - starts, axis=1)
    for sl in _chunks(len(points), len(starts)):
        x = points[sl]
        (ax, ay, az), (bx, by, bz), n1, n2 = _differences(x, starts, ends)
        _check_clear(x, starts, ends, n1, n2, length, eps, label)
        prod = n1 * n2
        factor = (n1 + n2) / (prod * (prod + ax * bx + ay * by + az * bz))
        out[sl, 0] = ((ay * bz - az * by) * factor).sum(axis=1)
        out[sl, 1] = ((az * bx - ax * bz) * factor).sum(axis=1)
        out[sl, 2] = ((ax * by - ay * bx) * factor).sum(axis=1)
    return out


def inverse_distance_sum(starts: np.ndarray, ends: np.ndarray, points: np.ndarray,
                         eps: float = EPS_FIELD, label: str = "") -> np.ndarray:
    """``oint dx' / |x - x'|`` over the polyline: ``t_hat * 2 artanh(L / (|R1| + |R2|))`` per segment."""
    out = np.empty_like(points)
    edges = ends - starts
    length = np.linalg.norm(edges, axis=1)
    unit = edges / length[:, None]
    for sl in _chunks(len(points), len(starts)):
        x = points[sl]
        _, _, n1, n2 = _differences(x, starts, ends)
        _check_clear(x, starts, ends, n1, n2, length, eps, label)
        weight = 2.0 * np.arctanh(length[None, :] / (n1 + n2))
        out[sl] = weight @ unit
    return out


def triangle_solid_angles(x: np.ndarray, p0: np.ndarray, p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    """Signed solid angle of triangles (p0, p1, p2) seen from points ``x``.

    ``x`` has shape (n, 3) and the vertices (m, 3); the result is (n, m).  The
    sign is negative when ``x`` lies on the side the right-hand normal of
    (p0, p1, p2) points to.  Points lying in the plane of a triangle get the
    limit approached from its back side: 2 pi inside, pi on an edge and the
    interior angle at a vertex; zero outside.
    """
    a = p0[None] - x[:, None]
    b = p1[None] - x[:, None]
    c = p2[None] - x[:, None]
    na = np.sqrt(np.einsum("nmi,nmi->nm", a, a))
    nb = np.sqrt(np.einsum("nmi,nmi->nm", b, b))
    nc = np.sqrt(np.einsum("nmi,nmi->nm", c, c))
    det = np.einsum("nmi,nmi->nm", a, np.cross(b, c))
    denom = (na * nb * nc + np.einsum("nmi,nmi->nm", a, b) * nc
             + np.einsum("nmi,nmi->nm", b, c) * na + np.einsum("nmi,nmi->nm", c, a) * nb)
    omega = 2.0 * np.arctan2(det, denom)

    scale = np.maximum(np.maximum(na, nb), nc)
    flat = np.abs(det) <= 1e-12 * scale ** 3
    if np.any(flat):
        omega[flat] = _in_plane_limit(x, p0, p1, p2, flat)
    return omega


def _in_plane_limit(x, p0, p1, p2, mask):
    n_idx, m_idx = np.nonzero(mask)
    q = x[n_idx]
    v0, v1, v2 = p0[m_idx], p1[m_idx], p2[m_idx]
    e1, e2, d = v1 - v0, v2 - v0, q - v0
    d11 = np.einsum("ki,ki->k", e1, e1)
    d12 = np.einsum("ki,ki->k", e1, e2)
    d22 = np.einsum("ki,ki->k", e2, e2)
    dd1 = np.einsum("ki,ki->k", d, e1)
    dd2 = np.einsum("ki,ki->k", d, e2)
    den = d11 * d22 - d12 * d12
    l1 = (d22 * dd1 - d12 * dd2) / den
    l2 = (d11 * dd2 - d12 * dd1) / den
    bary = np.stack([1.0 - l1 - l2, l1, l2], axis=1)
    tol = 1e-12
    outside = np.any(bary < -tol, axis=1)
    on_zero = np.abs(bary) <= tol
    n_zero = on_zero.sum(axis=1)
    result = np.where(n_zero == 0, 2.0 * np.pi, np.where(n_zero == 1, np.pi, 0.0))
    at_vertex = n_zero == 2
    if np.any(at_vertex):
        verts = np.stack([v0, v1, v2], axis=1)
        k = np.argmax(bary, axis=1)
        idx = np.arange(len(k))
        here = verts[idx, k]
        u = verts[idx, (k + 1) % 3] - here
        w = verts[idx, (k + 2) % 3] - here
        angle = np.arctan2(np.linalg.norm(np.cross(u, w), axis=1), np.einsum("ki,ki->k", u, w))
        result = np.where(at_vertex, angle, result)
    return np.where(outside, 0.0, result)


def fan_solid_angle(curve: ClosedCurve, points, apex=None) -> np.ndarray:
    """Signed solid angle of ``curve`` from ``points`` through the fan spanned from ``apex``.

    ``apex`` defaults to the vertex centroid.  The value is a branch of the
    multivalued solid angle that jumps by -4 pi when a point crosses the fan
    along its normal.
    """
    pts, _ = _points(points)
    apex = curve.centroid() if apex is None else np.asarray(apex, dtype=float)
    starts, ends = curve.starts, curve.ends
    apexes = np.broadcast_to(apex, starts.shape)
    out = np.empty(len(pts))
    for sl in _chunks(len(pts), len(starts)):
        out[sl] = triangle_solid_angles(pts[sl], apexes, starts, ends).sum(axis=1)
    return out


def _oriented(curve: ClosedCurve):
    canon, sign = curve.canonical()
    return canon.starts, canon.ends, sign


def eval_b(curve: ClosedCurve, kappa: float, x, eps: float = EPS_FIELD) -> np.ndarray:
    """Magnetic field b of ``curve`` at ``x`` (a point or an (n, 3) array)."""
    pts, single = _points(x)
    starts, ends, sign = _oriented(curve)
    out = (-sign / kappa) * biot_savart_sum(starts, ends, pts, eps, curve.label)
    return out[0] if single else out


def eval_a(curve: ClosedCurve, kappa: float, x, eps: float = EPS_FIELD) -> np.ndarray:
    """Vector potential a of ``curve`` at ``x``; divergence free with curl a = b."""
    pts, single = _points(x)
    starts, ends, sign = _oriented(curve)
    out = (-sign / kappa) * inverse_distance_sum(starts, ends, pts, eps, curve.label)
    return out[0] if single else out


def eval_v(curve: ClosedCurve, kappa: float, x, eps: float = EPS_FIELD) -> np.ndarray | float:
    """Solid-angle potential v = Omega / kappa, principal value in (-4 pi/kappa, 4 pi/kappa].

    The cut is the fan from the vertex centroid.  Points lying on the fan get
    the value from its back side, so at the center of a counterclockwise
    circle v = 2 pi / kappa and just above it v = -2 pi / kappa.
    """
    pts, single = _points(x)
    canon, sign = curve.canonical()
    gap = canon.distance_to_points(pts)
    if np.any(gap <= eps):
        raise FieldSingularityError(f"evaluation point within {eps:g} of curve {curve.label!r}")
    omega = fan_solid_angle(canon, pts, apex=curve.centroid())
    if sign < 0:
        # the reversed fan has the opposite normal: its back side is our front side
        omega = -omega
        on_cut = _on_fan(canon, pts, curve.centroid())
        omega = np.where(on_cut, omega + 4.0 * np.pi, omega)
    omega = 4.0 * np.pi - np.mod(4.0 * np.pi - omega, 8.0 * np.pi)
    out = omega / kappa
    return float(out[0]) if single else out


def _on_fan(curve: ClosedCurve, pts: np.ndarray, apex) -> np.ndarray:
    starts, ends = curve.starts, curve.ends
    apexes = np.broadcast_to(np.asarray(apex, dtype=float), starts.shape)
    hit = np.zeros(len(pts), dtype=bool)
    for sl in _chunks(len(pts), len(starts)):
        a = apexes[None] - pts[sl, None]
        b = starts[None] - pts[sl, None]
        c = ends[None] - pts[sl, None]
        det = np.einsum("nmi,nmi->nm", a, np.cross(b, c))
        scale = np.maximum(np.maximum(np.linalg.norm(a, axis=2), np.linalg.norm(b, axis=2)),
                           np.linalg.norm(c, axis=2))
        flat = np.abs(det) <= 1e-12 * scale ** 3
        if np.any(flat):
            inside = np.zeros_like(flat, dtype=float)
            inside[flat] = _in_plane_limit(pts[sl], apexes, starts, ends, flat)
            hit[sl] = np.any(inside > 0, axis=1)
    return hit


@dataclass
class FieldProbe:
    point: np.ndarray
    b: dict
    a: dict
    v: dict
    min_distance_to_curves: float


def probe(curves, kappa: float, x) -> FieldProbe:
    """All three fields of every curve at a single point."""
    x = np.asarray(x, dtype=float)
    return FieldProbe(
        point=x,
        b={c.label: eval_b(c, kappa, x) for c in curves},
        a={c.label: eval_a(c, kappa, x) for c in curves},
        v={c.label: eval_v(c, kappa, x) for c in curves},
        min_distance_to_curves=float(min(c.distance_to_points(x)[0] for c in curves)),
    )


def ampere_circulation(curve: ClosedCurve, kappa: float, probe_curve: ClosedCurve,
                       nodes_per_segment: int = 4, b_field=None):
    """Circulation of ``b`` of ``curve`` around ``probe_curve``; expect -(4 pi/kappa) lk.

    Returns an :class:`~ttft.quadrature.IntegralResult`.  ``b_field`` replaces
    :func:`eval_b` (same signature); the verify suite uses it for fault
    injection.
    """
    from .quadrature import integrate_line

    gap = curve.distance_to(probe_curve)
    if gap <= EPS_FIELD:
        raise FieldSingularityError(f"probe {probe_curve.label!r} touches curve {curve.label!r}")
    field = eval_b if b_field is None else b_field
    return integrate_line(lambda p: field(curve, kappa, p), probe_curve, nodes_per_segment)


@dataclass
class FieldResiduals:
    """Max finite-difference residuals over a probe set, each relative to the local |b|."""

    div_b: float
    curl_b: float
    div_a: float
    curl_a_minus_b: float
    h: float
    n_points: int
    per_point: dict

    def worst(self) -> float:
        return max(self.div_b, self.curl_b, self.div_a, self.curl_a_minus_b)

    def as_dict(self) -> dict:
        return {
            "div_b": self.div_b,
            "curl_b": self.curl_b,
            "div_a": self.div_a,
            "curl_a_minus_b": self.curl_a_minus_b,
            "h": self.h,
            "n_points": self.n_points,
        }


def field_equation_residuals(curve: ClosedCurve, kappa: float, points, h: float = 1e-4) -> FieldResiduals:
    """Check div b = 0, curl b = 0 (off the curve), curl a = b and div a = 0 by central differences."""
    from .oracles import finite_difference

    pts, _ = _points(points)
    gap = curve.distance_to_points(pts)
    if np.any(gap < 10 * h):
        raise ValueError(f"probe points must be at least 10h = {10 * h:g} from the curve")
    bvals = eval_b(curve, kappa, pts)
    per = {k: np.empty(len(pts)) for k in ("div_b", "curl_b", "div_a", "curl_a_minus_b")}
    for i, x in enumerate(pts):
        scale = np.linalg.norm(bvals[i])
        db = finite_difference(lambda p: eval_b(curve, kappa, p), x, h)
        da = finite_difference(lambda p: eval_a(curve, kappa, p), x, h)
        per["div_b"][i] = abs(db.divergence) / scale
        per["curl_b"][i] = np.linalg.norm(db.curl) / scale
        per["div_a"][i] = abs(da.divergence) / scale
        per["curl_a_minus_b"][i] = np.linalg.norm(da.curl - bvals[i]) / scale
    return FieldResiduals(
        div_b=float(per["div_b"].max()),
        curl_b=float(per["curl_b"].max()),
        div_a=float(per["div_a"].max()),
        curl_a_minus_b=float(per["curl_a_minus_b"].max()),
        h=h,
        n_points=len(pts),
        per_point=per,
    )


def potential_gradient_residual(curve: ClosedCurve, kappa: float, points, h: float = 1e-4) -> float:
    """Max relative error of ``-grad v`` against ``b`` by central differences.

    Points closer than 10 h to the reference fan would straddle the cut and
    are rejected.
    """
    from .oracles import finite_difference

    pts, _ = _points(points)
    worst = 0.0
    for x in pts:
        vals = fan_solid_angle(curve, x + h * np.vstack([np.eye(3), -np.eye(3)]))
        if np.ptp(vals) > math.pi:
            raise ValueError(f"point {x} lies within the finite-difference stencil of the cut")
        grad = finite_difference(lambda p: eval_v(curve, kappa, p), x, h).gradient
        b = eval_b(curve, kappa, x)
        worst = max(worst, float(np.linalg.norm(-grad - b) / np.linalg.norm(b)))
    return worst


def probe_points(curve: ClosedCurve, n: int, seed: int = 0, min_distance: float = 0.5,
                 spread: float = 2.0, cut_margin: float = 1e-3) -> np.ndarray:
    """``n`` seeded random points at least ``min_distance`` from ``curve``.

    Points are drawn in the ball of radius (curve radius + ``spread``) about
    the centroid.  Points within ``cut_margin`` of the potential's cut are
    redrawn so finite differences of v stay on one branch.
    """
    rng = np.random.default_rng(seed)
    c = curve.centroid()
    radius = curve.bounding_radius(c) + spread
    stencil = cut_margin * np.vstack([np.eye(3), -np.eye(3)])
    found = []
    while len(found) < n:
        cand = rng.uniform(-radius, radius, size=(4 * n, 3))
        cand = cand[np.linalg.norm(cand, axis=1) <= radius] + c
        cand = cand[curve.distance_to_points(cand) >= min_distance]
        for x in cand:
            if np.ptp(fan_solid_angle(curve, x + stencil)) <= math.pi:
                found.append(x)
                if len(found) == n:
                    break
    return np.array(found)
