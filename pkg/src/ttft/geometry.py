"""Closed oriented polylines in R^3 and the standard link families built from them.

Every curve is a closed polyline: vertex ``i`` connects to vertex ``i + 1`` and
the last vertex connects back to the first.  Orientation is the vertex order.
Circles are oriented counterclockwise when viewed from the tip of their normal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

EPS_SELF = 1e-6
EPS_SEP = 1e-6


class GeometryError(ValueError):
    """Invalid curve, link construction or loop system."""


class PerturbationError(GeometryError):
    """An isotopy perturbation could not satisfy the clearance constraints."""


def _as_points(vertices) -> np.ndarray:
    pts = np.array(vertices, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise GeometryError(f"vertices must have shape (n, 3), got {pts.shape}")
    return pts


def segment_distances(p0, p1, q0, q1) -> np.ndarray:
    """Minimum distance between segments [p0, p1] and [q0, q1].

    Arguments broadcast against each other with a trailing axis of length 3.
    The minimum is either an interior critical point of the squared distance
    or one of the four endpoint-to-segment distances.
    """
    p0, p1, q0, q1 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (p0, p1, q0, q1)))
    best = np.minimum.reduce([
        point_segment_distances(p0, q0, q1),
        point_segment_distances(p1, q0, q1),
        point_segment_distances(q0, p0, p1),
        point_segment_distances(q1, p0, p1),
    ])
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = np.einsum("...i,...i", d1, d1)
    e = np.einsum("...i,...i", d2, d2)
    b = np.einsum("...i,...i", d1, d2)
    c = np.einsum("...i,...i", d1, r)
    f = np.einsum("...i,...i", d2, r)
    denom = a * e - b * b
    ok = denom > 1e-12 * a * e
    safe = np.where(ok, denom, 1.0)
    s = (b * f - c * e) / safe
    t = (a * f - b * c) / safe
    inside = ok & (s >= 0) & (s <= 1) & (t >= 0) & (t <= 1)
    gap = np.linalg.norm(r + d1 * s[..., None] - d2 * t[..., None], axis=-1)
    return np.where(inside, np.minimum(gap, best), best)


def point_segment_distances(x, p0, p1) -> np.ndarray:
    """Distance from points ``x`` (..., 3) to segments [p0, p1] (..., 3), broadcast."""
    x, p0, p1 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, p0, p1)))
    d = p1 - p0
    dd = np.einsum("...i,...i", d, d)
    t = np.einsum("...i,...i", x - p0, d) / np.where(dd > 0, dd, 1.0)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm(x - (p0 + d * t[..., None]), axis=-1)


@dataclass(frozen=True, eq=False)
class ClosedCurve:
    """Oriented closed polyline.

    The vertex array is copied and made read-only on construction; the
    invariants (at least three vertices, finite coordinates, no zero-length
    segment, non-adjacent segments at least ``clearance`` apart) are checked
    there as well.
    """

    vertices: np.ndarray
    label: str = ""
    clearance: float = EPS_SELF

    def __post_init__(self):
        pts = _as_points(self.vertices).copy()
        pts.setflags(write=False)
        object.__setattr__(self, "vertices", pts)
        self.validate()

    def validate(self) -> None:
        pts = self.vertices
        n = len(pts)
        if n < 3:
            raise GeometryError(f"curve {self.label!r}: need at least 3 vertices, got {n}")
        if not np.all(np.isfinite(pts)):
            raise GeometryError(f"curve {self.label!r}: non-finite vertex coordinates")
        lengths = np.linalg.norm(self.edges, axis=1)
        if np.any(lengths <= 0.0):
            i = int(np.argmin(lengths))
            raise GeometryError(f"curve {self.label!r}: vertices {i} and {(i + 1) % n} coincide")
        if n > 3:
            gap = self.self_clearance()
            if gap <= self.clearance:
                raise GeometryError(
                    f"curve {self.label!r}: non-adjacent segments {gap:.3g} apart "
                    f"(clearance {self.clearance:g})"
                )

    @property
    def n_segments(self) -> int:
        return len(self.vertices)

    @property
    def starts(self) -> np.ndarray:
        return self.vertices

    @property
    def ends(self) -> np.ndarray:
        return np.roll(self.vertices, -1, axis=0)

    @property
    def edges(self) -> np.ndarray:
        return self.ends - self.starts

    def length(self) -> float:
        return float(np.linalg.norm(self.edges, axis=1).sum())

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def bounding_radius(self, about=(0.0, 0.0, 0.0)) -> float:
        return float(np.linalg.norm(self.vertices - np.asarray(about, dtype=float), axis=1).max())

    def reversed(self) -> "ClosedCurve":
        return ClosedCurve(self.vertices[::-1], self.label, self.clearance)

    def translated(self, offset) -> "ClosedCurve":
        return ClosedCurve(self.vertices + np.asarray(offset, dtype=float), self.label, self.clearance)

    def transformed(self, rotation, offset=(0.0, 0.0, 0.0)) -> "ClosedCurve":
        rot = np.asarray(rotation, dtype=float)
        return ClosedCurve(self.vertices @ rot.T + np.asarray(offset, dtype=float), self.label, self.clearance)

    def relabeled(self, label: str) -> "ClosedCurve":
        return ClosedCurve(self.vertices, label, self.clearance)

    def self_clearance(self) -> float:
        """Minimum distance between non-adjacent segments."""
        n = self.n_segments
        i, j = np.triu_indices(n, k=2)
        keep = ~((i == 0) & (j == n - 1))
        i, j = i[keep], j[keep]
        if len(i) == 0:
            return math.inf
        d = segment_distances(self.starts[i], self.ends[i], self.starts[j], self.ends[j])
        return float(d.min())

    def distance_to(self, other: "ClosedCurve") -> float:
        d = segment_distances(
            self.starts[:, None, :], self.ends[:, None, :],
            other.starts[None, :, :], other.ends[None, :, :],
        )
        return float(d.min())

    def distance_to_points(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = point_segment_distances(pts[:, None, :], self.starts[None, :, :], self.ends[None, :, :])
        return d.min(axis=1)

    def canonical(self) -> tuple["ClosedCurve", int]:
        """Orientation-independent representative and the sign relating it to ``self``.

        A curve and its reverse map to bit-identical vertex arrays, so any
        quantity computed on the canonical form and multiplied by the sign is
        exactly odd under orientation reversal.
        """
        pts = self.vertices
        start = int(np.lexsort(pts.T[::-1])[0])
        fwd = np.roll(pts, -start, axis=0)
        bwd = np.roll(pts[::-1], -(len(pts) - 1 - start), axis=0)
        for a, b in zip(fwd[1:], bwd[1:]):
            if tuple(a) != tuple(b):
                if tuple(a) < tuple(b):
                    return _unchecked(fwd, self), 1
                return _unchecked(bwd, self), -1
        return _unchecked(fwd, self), 1

    def key(self) -> bytes:
        return self.vertices.tobytes()


def _unchecked(vertices: np.ndarray, like: ClosedCurve) -> ClosedCurve:
    # Re-indexing an already validated curve cannot break its invariants.
    c = object.__new__(ClosedCurve)
    v = np.ascontiguousarray(vertices)
    v.setflags(write=False)
    object.__setattr__(c, "vertices", v)
    object.__setattr__(c, "label", like.label)
    object.__setattr__(c, "clearance", like.clearance)
    return c


@dataclass(frozen=True, eq=False)
class LoopSystem:
    """Three labeled disjoint closed curves plus the couplings kappa and lambda."""

    curves: tuple[ClosedCurve, ClosedCurve, ClosedCurve]
    kappa: float = 1.0
    lam: float = 1.0
    separation: float = EPS_SEP

    def __post_init__(self):
        curves = tuple(self.curves)
        object.__setattr__(self, "curves", curves)
        if len(curves) != 3:
            raise GeometryError(f"a loop system needs exactly three curves, got {len(curves)}")
        if not math.isfinite(self.kappa) or self.kappa == 0.0:
            raise GeometryError("kappa must be finite and non-zero")
        if not math.isfinite(self.lam):
            raise GeometryError("lambda must be finite")
        check_disjoint(curves, self.separation)

    def with_curve(self, index: int, curve: ClosedCurve) -> "LoopSystem":
        curves = list(self.curves)
        curves[index] = curve
        return LoopSystem(tuple(curves), self.kappa, self.lam, self.separation)

    def with_couplings(self, kappa: float | None = None, lam: float | None = None) -> "LoopSystem":
        return LoopSystem(
            self.curves,
            self.kappa if kappa is None else kappa,
            self.lam if lam is None else lam,
            self.separation,
        )

    def permuted(self, order: Sequence[int]) -> "LoopSystem":
        return LoopSystem(tuple(self.curves[i] for i in order), self.kappa, self.lam, self.separation)

    def bounding_radius(self) -> float:
        return max(c.bounding_radius() for c in self.curves)


def check_disjoint(curves: Sequence[ClosedCurve], separation: float = EPS_SEP) -> None:
    for a in range(len(curves)):
        for b in range(a + 1, len(curves)):
            d = curves[a].distance_to(curves[b])
            if d <= separation:
                raise GeometryError(
                    f"curves {curves[a].label!r} and {curves[b].label!r} are {d:.3g} apart "
                    f"(separation {separation:g})"
                )


def _frame(normal) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = np.asarray(normal, dtype=float)
    norm = np.linalg.norm(n)
    if n.shape != (3,) or not np.isfinite(norm) or norm == 0.0:
        raise GeometryError("normal must be a non-zero finite 3-vector")
    n = n / norm
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = a - np.dot(a, n) * n
    u /= np.linalg.norm(u)
    w = np.cross(n, u)
    return u, w, n


def make_circle(center, normal, radius: float, segments: int, label: str = "") -> ClosedCurve:
    """Regular polygon inscribed in a circle, counterclockwise seen from ``+normal``.

    For the normal ``(0, 0, 1)`` the first vertex lies on the +x axis.
    """
    if not (radius > 0 and math.isfinite(radius)):
        raise GeometryError(f"radius must be positive, got {radius}")
    if int(segments) != segments or segments < 3:
        raise GeometryError(f"segments must be an integer >= 3, got {segments}")
    u, w, _ = _frame(normal)
    theta = 2.0 * np.pi * np.arange(int(segments)) / int(segments)
    pts = np.asarray(center, dtype=float) + radius * (np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * w)
    return ClosedCurve(pts, label)


def make_ellipse(center, axis_a, axis_b, segments: int, label: str = "") -> ClosedCurve:
    """Polygon on the ellipse ``center + cos(t) axis_a + sin(t) axis_b``."""
    if int(segments) != segments or segments < 3:
        raise GeometryError(f"segments must be an integer >= 3, got {segments}")
    t = 2.0 * np.pi * np.arange(int(segments)) / int(segments)
    pts = (np.asarray(center, dtype=float) + np.cos(t)[:, None] * np.asarray(axis_a, dtype=float)
           + np.sin(t)[:, None] * np.asarray(axis_b, dtype=float))
    return ClosedCurve(pts, label)


def make_torus_link(p: int, q: int, segments: int, major: float = 2.0, minor: float = 1.0,
                    center=(0.0, 0.0, 0.0), label: str = "") -> list[ClosedCurve]:
    """Torus knot or link T(p, q) on the torus of radii ``major`` > ``minor`` around the z axis.

    ``p`` counts turns around the z axis and ``q`` turns around the tube.  The
    link has ``gcd(p, q)`` components, each sampled with ``segments`` vertices.
    The tube is wound so that all crossings are positive: T(2, 4) has
    linking number +2 and T(2, 2) is the positive Hopf link.
    """
    if p < 1 or q < 1:
        raise GeometryError("torus link needs p, q >= 1")
    if not (0 < minor < major):
        raise GeometryError("torus link needs 0 < minor < major")
    if segments < 3:
        raise GeometryError("segments must be >= 3")
    d = math.gcd(p, q)
    pp, qq = p // d, q // d
    t = 2.0 * np.pi * np.arange(int(segments)) / int(segments)
    comps = []
    for j in range(d):
        phi = pp * t
        psi = qq * t + 2.0 * np.pi * j / (d * pp)
        rho = major + minor * np.cos(psi)
        pts = np.stack([rho * np.cos(phi), rho * np.sin(phi), -minor * np.sin(psi)], axis=1)
        name = f"{label}{j + 1}" if label else str(j + 1)
        comps.append(ClosedCurve(pts + np.asarray(center, dtype=float), name))
    return comps


@dataclass(frozen=True)
class CurvePrimitiveSpec:
    """Declarative description of one curve primitive (or link family).

    ``kind`` is one of circle, ellipse, torus_knot, polyline, hopf_pair,
    borromean_triple.  Unused parameters are ignored for a given kind.
    """

    kind: str
    label: str = ""
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    normal: tuple[float, float, float] = (0.0, 0.0, 1.0)
    radius: float = 1.0
    segments: int = 256
    p: int = 2
    q: int = 3
    major: float = 2.0
    minor: float = 1.0
    axis_a: tuple[float, float, float] = (1.0, 0.0, 0.0)
    axis_b: tuple[float, float, float] = (0.0, 1.0, 0.0)
    semi_axes: tuple[float, float] = (1.0, 0.5)
    vertices: tuple[tuple[float, float, float], ...] = field(default_factory=tuple)

    KINDS = ("circle", "ellipse", "torus_knot", "polyline", "hopf_pair", "borromean_triple")


def make_link_family(spec: CurvePrimitiveSpec) -> list[ClosedCurve]:
    """Build the curves described by ``spec`` and check they are pairwise disjoint.

    Multi-component families label their components ``<label>1``, ``<label>2``, ...
    """
    kind = spec.kind
    center = np.asarray(spec.center, dtype=float)
    if kind not in CurvePrimitiveSpec.KINDS:
        raise GeometryError(f"unknown curve kind {kind!r}")
    if kind != "polyline" and (int(spec.segments) != spec.segments or spec.segments < 3):
        raise GeometryError(f"segments must be an integer >= 3, got {spec.segments}")

    def name(i):
        return f"{spec.label}{i}" if spec.label else str(i)

    if kind == "circle":
        curves = [make_circle(center, spec.normal, spec.radius, spec.segments, spec.label)]
    elif kind == "ellipse":
        curves = [make_ellipse(center, spec.axis_a, spec.axis_b, spec.segments, spec.label)]
    elif kind == "polyline":
        curves = [ClosedCurve(np.array(spec.vertices, dtype=float).reshape(-1, 3), spec.label)]
    elif kind == "torus_knot":
        curves = make_torus_link(spec.p, spec.q, spec.segments, spec.major, spec.minor, center, spec.label)
    elif kind == "hopf_pair":
        # second circle passes through the first one's center going +z: linking +1
        r = spec.radius
        curves = [
            make_circle(center, (0.0, 0.0, 1.0), r, spec.segments, name(1)),
            make_circle(center + (r, 0.0, 0.0), (0.0, 1.0, 0.0), r, spec.segments, name(2)),
        ]
    else:  # borromean_triple
        a, b = spec.semi_axes
        if not (a > b > 0):
            raise GeometryError("borromean_triple needs semi-axes a > b > 0")
        ex, ey, ez = np.eye(3)
        curves = [
            make_ellipse(center, a * ex, b * ey, spec.segments, name(1)),
            make_ellipse(center, a * ey, b * ez, spec.segments, name(2)),
            make_ellipse(center, a * ez, b * ex, spec.segments, name(3)),
        ]
    check_disjoint(curves)
    return curves


def sample_segments(curve: ClosedCurve, nodes_per_segment: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on every segment, with weights folded into the tangent.

    Returns ``(points, tangents)`` of shape ``(n_segments * nodes, 3)``.  The
    tangent rows of one segment sum to that segment's edge vector, so a line
    integral of ``g`` is ``sum(g(points) . tangents)``.
    """
    if nodes_per_segment < 1:
        raise ValueError("nodes_per_segment must be >= 1")
    xi, w = np.polynomial.legendre.leggauss(int(nodes_per_segment))
    s = 0.5 * (xi + 1.0)
    starts, edges = curve.starts, curve.edges
    points = starts[:, None, :] + s[None, :, None] * edges[:, None, :]
    tangents = (0.5 * w)[None, :, None] * edges[:, None, :]
    return points.reshape(-1, 3), tangents.reshape(-1, 3)


def _random_modes(rng: np.random.Generator, n_modes: int, max_wavenumber: float):
    k = rng.normal(size=(n_modes, 3))
    k *= (max_wavenumber * rng.uniform(0.3, 1.0, size=n_modes) / np.linalg.norm(k, axis=1))[:, None]
    amp = rng.normal(size=(n_modes, 3))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=n_modes)
    return k, amp, phase


def perturb_isotopy(curve: ClosedCurve, amplitude: float, seed: int,
                    system: LoopSystem | Sequence[ClosedCurve] | None = None,
                    max_wavenumber: float = 2.0, n_modes: int = 4, max_retries: int = 8) -> ClosedCurve:
    """Move every vertex by a smooth random displacement field of max norm <= ``amplitude``.

    The field is a sum of a few low-frequency plane waves.  A draw is accepted
    only if (a) its Lipschitz constant is below 1/2, so the straight-line
    homotopy ``x + s D(x)`` is injective for every ``s`` and cannot pass the
    curve through itself, and (b) its max displacement stays below the
    clearance to every other curve of ``system``.  Rejected draws are
    redrawn at half the amplitude.
    """
    if amplitude < 0 or not math.isfinite(amplitude):
        raise PerturbationError("amplitude must be a finite number >= 0")
    if amplitude == 0:
        return curve
    if system is None:
        others = []
    else:
        pool = system.curves if isinstance(system, LoopSystem) else list(system)
        others = [c for c in pool if c is not curve and c.key() != curve.key()]
    sep = system.separation if isinstance(system, LoopSystem) else EPS_SEP
    gap = min((curve.distance_to(o) for o in others), default=math.inf)

    rng = np.random.default_rng(seed)
    amp = float(amplitude)
    for _ in range(max_retries):
        k, a, phase = _random_modes(rng, n_modes, max_wavenumber)
        disp = np.sin(curve.vertices @ k.T + phase) @ a
        peak = np.linalg.norm(disp, axis=1).max()
        if peak == 0:
            continue
        scale = amp / peak
        lipschitz = scale * float(np.sum(np.linalg.norm(a, axis=1) * np.linalg.norm(k, axis=1)))
        if lipschitz < 0.5 and amp < gap - sep:
            try:
                moved = ClosedCurve(curve.vertices + scale * disp, curve.label, curve.clearance)
                check_disjoint([moved, *others], sep)
            except GeometryError:
                pass
            else:
                return moved
        amp *= 0.5
    raise PerturbationError(
        f"could not perturb curve {curve.label!r} within clearance after {max_retries} draws"
    )
