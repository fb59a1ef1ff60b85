"""Cone-shaped spanning surfaces for closed curves.

A cone over a curve is the fan of triangles (apex, v_i, v_i+1).  Its induced
boundary orientation is the curve orientation, so the triangle normals
follow the right-hand rule around the curve.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import EPS_SEP, ClosedCurve, segment_distances


class SurfaceError(ValueError):
    """A cone over the curve cannot be built from the requested apex."""


class SurfaceCapabilityError(SurfaceError):
    """The surface comes too close to another curve for the flux form."""


@dataclass(frozen=True, eq=False)
class SpanningSurface:
    """Oriented triangle mesh whose boundary is ``boundary_curve``.

    ``points[0]`` is the apex and ``points[1:]`` are the curve vertices, so the
    boundary edges share the curve's own vertex coordinates exactly.
    """

    points: np.ndarray
    triangles: np.ndarray
    boundary_curve: ClosedCurve
    info: dict = field(default_factory=dict)

    @property
    def triangle_coordinates(self) -> np.ndarray:
        return self.points[self.triangles]

    @property
    def normals(self) -> np.ndarray:
        """Area-weighted normals (half the cross product of two edges)."""
        t = self.triangle_coordinates
        return 0.5 * np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])

    def area(self) -> float:
        return float(np.linalg.norm(self.normals, axis=1).sum())

    def boundary_edges(self) -> set[tuple[int, int]]:
        """Directed edges used by exactly one triangle."""
        directed = {}
        for a, b, c in self.triangles.tolist():
            for e in ((a, b), (b, c), (c, a)):
                directed[e] = directed.get(e, 0) + 1
        return {e for e in directed if (e[1], e[0]) not in directed and directed[e] == 1}

    def validate(self) -> None:
        n = self.boundary_curve.n_segments
        expected = {(1 + i, 1 + (i + 1) % n) for i in range(n)}
        if self.boundary_edges() != expected:
            raise SurfaceError("mesh boundary does not match the curve's segments")
        t = self.triangle_coordinates
        area = np.linalg.norm(self.normals, axis=1)
        edge = np.linalg.norm(t - np.roll(t, 1, axis=1), axis=2).max(axis=1)
        if np.any(area <= 1e-12 * edge ** 2):
            raise SurfaceError(f"degenerate triangle {int(np.argmin(area / edge ** 2))}")

    def distance_to_curve(self, curve: ClosedCurve) -> float:
        return float(triangle_segment_distances(self.triangle_coordinates, curve.starts, curve.ends).min())


def point_triangle_distances(x: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Distances from points (n, 3) to triangles (m, 3, 3), shape (n, m)."""
    from .geometry import point_segment_distances

    p0, p1, p2 = tri[:, 0], tri[:, 1], tri[:, 2]
    e1, e2 = p1 - p0, p2 - p0
    normal = np.cross(e1, e2)
    nn = np.einsum("mi,mi->m", normal, normal)
    d = x[:, None, :] - p0[None]
    height = np.einsum("nmi,mi->nm", d, normal) / np.sqrt(nn)
    foot = d - (height / np.sqrt(nn))[..., None] * normal[None]
    d11 = np.einsum("mi,mi->m", e1, e1)
    d12 = np.einsum("mi,mi->m", e1, e2)
    d22 = np.einsum("mi,mi->m", e2, e2)
    f1 = np.einsum("nmi,mi->nm", foot, e1)
    f2 = np.einsum("nmi,mi->nm", foot, e2)
    den = d11 * d22 - d12 * d12
    l1 = (d22 * f1 - d12 * f2) / den
    l2 = (d11 * f2 - d12 * f1) / den
    inside = (l1 >= 0) & (l2 >= 0) & (l1 + l2 <= 1)
    xe = x[:, None, :]
    edges = np.minimum.reduce([
        point_segment_distances(xe, p0[None], p1[None]),
        point_segment_distances(xe, p1[None], p2[None]),
        point_segment_distances(xe, p2[None], p0[None]),
    ])
    return np.where(inside, np.abs(height), edges)


def triangle_segment_distances(tri: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Minimum distance between every triangle (m, 3, 3) and every segment (k, 3), shape (m, k).

    Zero where a segment pierces a triangle.
    """
    p0, p1, p2 = tri[:, None, 0], tri[:, None, 1], tri[:, None, 2]
    s0, s1 = starts[None], ends[None]
    best = np.minimum.reduce([
        segment_distances(p0, p1, s0, s1),
        segment_distances(p1, p2, s0, s1),
        segment_distances(p2, p0, s0, s1),
        point_triangle_distances(starts, tri).T,
        point_triangle_distances(ends, tri).T,
    ])
    # Moller-Trumbore style piercing test
    e1, e2 = p1 - p0, p2 - p0
    d = s1 - s0
    pvec = np.cross(d, e2)
    det = np.einsum("mki,mki->mk", np.broadcast_to(e1, pvec.shape), pvec)
    ok = np.abs(det) > 1e-300
    inv = 1.0 / np.where(ok, det, 1.0)
    tvec = s0 - p0
    u = np.einsum("mki,mki->mk", tvec, pvec) * inv
    qvec = np.cross(tvec, np.broadcast_to(e1, tvec.shape))
    v = np.einsum("mki,mki->mk", np.broadcast_to(d, qvec.shape), qvec) * inv
    t = np.einsum("mki,mki->mk", np.broadcast_to(e2, qvec.shape), qvec) * inv
    pierce = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= 0) & (t <= 1)
    return np.where(pierce, 0.0, best)


def _arcs_cross(a1, a2, b1, b2) -> np.ndarray:
    """Whether great-circle arcs (a1, a2) and (b1, b2) on the unit sphere intersect."""
    na = np.cross(a1, a2)
    nb = np.cross(b1, b2)
    p = np.cross(na, nb)
    norm = np.linalg.norm(p, axis=-1)
    valid = norm > 1e-14
    p = p / np.where(valid, norm, 1.0)[..., None]
    hits = np.zeros(norm.shape, dtype=bool)
    for cand in (p, -p):
        on_a = (np.einsum("...i,...i", np.cross(a1, cand), na) >= 0) & (np.einsum("...i,...i", np.cross(cand, a2), na) >= 0)
        on_b = (np.einsum("...i,...i", np.cross(b1, cand), nb) >= 0) & (np.einsum("...i,...i", np.cross(cand, b2), nb) >= 0)
        hits |= on_a & on_b
    return valid & hits


def cone_surface(curve: ClosedCurve, apex) -> SpanningSurface:
    """Fan of triangles (apex, v_i, v_i+1) spanning ``curve``.

    The cone is embedded exactly when the radial projection of the curve
    onto the unit sphere around the apex is a simple closed curve; that is
    what is checked (non-adjacent arcs must not meet and adjacent arcs must
    not fold back).
    """
    apex = np.asarray(apex, dtype=float)
    if apex.shape != (3,) or not np.all(np.isfinite(apex)):
        raise SurfaceError("apex must be a finite 3-vector")
    verts = curve.vertices
    n = len(verts)
    if curve.distance_to_points(apex)[0] <= 1e-9 * max(curve.bounding_radius(apex), 1.0):
        raise SurfaceError("apex lies on the curve")
    points = np.vstack([apex[None], verts])
    idx = np.arange(n)
    triangles = np.stack([np.zeros(n, dtype=np.int64), 1 + idx, 1 + (idx + 1) % n], axis=1)
    surface = SpanningSurface(points, triangles, curve, {"kind": "cone", "apex": apex.tolist()})
    surface.validate()

    rays = verts - apex
    rays = rays / np.linalg.norm(rays, axis=1)[:, None]
    nxt = np.roll(rays, -1, axis=0)
    # adjacent arcs fold back when consecutive fan normals point in opposite directions
    normals = np.cross(rays, nxt)
    turn = np.einsum("ki,ki->k", normals, np.roll(normals, -1, axis=0))
    if np.any(turn < -1e-12 * np.linalg.norm(normals, axis=1) * np.linalg.norm(np.roll(normals, -1, axis=0), axis=1)):
        raise SurfaceError("cone folds over itself at a vertex; choose another apex")
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    if len(i) and np.any(_arcs_cross(rays[i], nxt[i], rays[j], nxt[j])):
        raise SurfaceError("cone over the curve intersects itself; choose another apex")
    return surface


def alternate_surface(curve: ClosedCurve, apex2) -> SpanningSurface:
    """Second cone over the same curve; paired with :func:`cone_surface` to test surface independence."""
    surface = cone_surface(curve, apex2)
    surface.info["role"] = "alternate"
    return surface


def mean_normal(curve: ClosedCurve) -> np.ndarray:
    """Unit vector along the curve's vector area (right-hand rule)."""
    c = curve.centroid()
    area = 0.5 * np.cross(curve.starts - c, curve.ends - c).sum(axis=0)
    norm = np.linalg.norm(area)
    return area / norm if norm > 0 else np.array([0.0, 0.0, 1.0])


def check_clearance(surface: SpanningSurface, others: Sequence[ClosedCurve], separation: float = EPS_SEP) -> float:
    """Smallest distance from the surface to the other curves; raises if within ``separation``."""
    gap = min((surface.distance_to_curve(c) for c in others), default=np.inf)
    if gap <= separation:
        raise SurfaceCapabilityError(
            f"surface over {surface.boundary_curve.label!r} comes within {gap:.3g} of another curve"
        )
    return float(gap)


def default_surface(curve: ClosedCurve, others: Sequence[ClosedCurve] = (), apex=None,
                    separation: float = EPS_SEP) -> SpanningSurface:
    """First capable cone among a few candidate apexes.

    Candidates are the given ``apex``, then the centroid shifted along the
    mean normal by 0, +-0.5 and +-1 times the curve's radius about its
    centroid.  Raises :class:`SurfaceCapabilityError` if none works.
    """
    c = curve.centroid()
    nrm = mean_normal(curve)
    r = curve.bounding_radius(c)
    candidates = [] if apex is None else [np.asarray(apex, dtype=float)]
    candidates += [c + s * r * nrm for s in (0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0)]
    reasons = []
    for cand in candidates:
        try:
            surface = cone_surface(curve, cand)
            check_clearance(surface, others, separation)
            return surface
        except SurfaceError as exc:
            reasons.append(str(exc))
    raise SurfaceCapabilityError(
        f"no capable cone over curve {curve.label!r}: " + "; ".join(dict.fromkeys(reasons))
    )
