"""Scene files: a JSON document describing curves, couplings and quadrature overrides.

Example::

    {
      "format_version": 1,
      "name": "hopf_pair",
      "kappa": 1.0,
      "lambda": 1.0,
      "curves": [{"kind": "hopf_pair", "label": "h", "radius": 1.0, "segments": 256}],
      "loops": ["h1", "h2", "far"],
      "quadrature": {"max_depth": 5},
      "surfaces": {"far": [10.0, 0.0, 0.5]}
    }

Multi-component primitives (hopf_pair, borromean_triple, torus links) add
one curve per component, labelled ``<label>1``, ``<label>2``, ...
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import ClosedCurve, CurvePrimitiveSpec, GeometryError, LoopSystem, check_disjoint, make_link_family
from .quadrature import QuadratureSpec

FORMAT_VERSION = 1

_TOP_KEYS = {"format_version", "name", "description", "kappa", "lambda", "curves", "loops", "quadrature", "surfaces"}
_VECTORS = {"center", "normal", "axis_a", "axis_b"}
_INTS = {"segments", "p", "q"}
_FLOATS = {"radius", "major", "minor"}


class SceneError(ValueError):
    """Invalid scene file; the message names the offending field."""


@dataclass(frozen=True, eq=False)
class Scene:
    name: str
    primitives: tuple[CurvePrimitiveSpec, ...]
    curves: tuple[ClosedCurve, ...]
    kappa: float = 1.0
    lam: float = 1.0
    loops: tuple[str, ...] | None = None
    quadrature: QuadratureSpec = QuadratureSpec()
    quadrature_overrides: dict = field(default_factory=dict)
    surfaces: dict = field(default_factory=dict)
    description: str = ""

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.curves]

    def curve(self, label: str) -> ClosedCurve:
        for c in self.curves:
            if c.label == label:
                return c
        raise SceneError(f"label not found: {label!r} (scene has {', '.join(self.labels)})")

    def loop_labels(self) -> list[str]:
        if self.loops is not None:
            return list(self.loops)
        return self.labels

    def system(self, labels=None) -> LoopSystem:
        labels = list(labels) if labels else self.loop_labels()
        if len(labels) != 3:
            raise SceneError(f"hopf requires three curves, scene {self.name!r} selects {len(labels)}")
        try:
            return LoopSystem(tuple(self.curve(x) for x in labels), self.kappa, self.lam)
        except GeometryError as exc:
            raise SceneError(str(exc)) from exc

    def apex(self, label: str):
        hint = self.surfaces.get(label)
        return None if hint is None else np.asarray(hint, dtype=float)

    def with_segments(self, segments: int) -> "Scene":
        prims = [p if p.kind == "polyline" else dataclasses.replace(p, segments=int(segments))
                 for p in self.primitives]
        return build_scene(self.name, prims, self.kappa, self.lam, self.loops, self.quadrature_overrides,
                           self.surfaces, self.description)

    def with_quadrature(self, **overrides) -> "Scene":
        merged = {**self.quadrature_overrides, **overrides}
        return build_scene(self.name, list(self.primitives), self.kappa, self.lam, self.loops, merged,
                           self.surfaces, self.description)

    def with_couplings(self, kappa: float | None = None, lam: float | None = None) -> "Scene":
        return build_scene(self.name, list(self.primitives), self.kappa if kappa is None else kappa,
                           self.lam if lam is None else lam, self.loops, self.quadrature_overrides,
                           self.surfaces, self.description)

    def to_dict(self) -> dict:
        out = {
            "format_version": FORMAT_VERSION,
            "name": self.name,
            "kappa": self.kappa,
            "lambda": self.lam,
            "curves": [_primitive_to_dict(p) for p in self.primitives],
        }
        if self.description:
            out["description"] = self.description
        if self.loops is not None:
            out["loops"] = list(self.loops)
        if self.quadrature_overrides:
            out["quadrature"] = dict(self.quadrature_overrides)
        if self.surfaces:
            out["surfaces"] = {k: list(map(float, v)) for k, v in self.surfaces.items()}
        return out

    def content_hash(self) -> str:
        """sha256 of everything that determines results: vertices, labels, couplings, loops, quadrature."""
        h = hashlib.sha256()
        for c in self.curves:
            h.update(c.label.encode() + b"\0")
            h.update(np.ascontiguousarray(c.vertices, dtype="<f8").tobytes())
        extra = {"kappa": self.kappa, "lambda": self.lam, "loops": self.loops,
                 "quadrature": self.quadrature.as_dict(),
                 "surfaces": {k: list(map(float, v)) for k, v in sorted(self.surfaces.items())}}
        h.update(json.dumps(extra, sort_keys=True).encode())
        return h.hexdigest()


def _primitive_to_dict(p: CurvePrimitiveSpec) -> dict:
    default = CurvePrimitiveSpec(kind=p.kind)
    out = {"kind": p.kind, "label": p.label}
    for f in dataclasses.fields(CurvePrimitiveSpec):
        if f.name in ("kind", "label"):
            continue
        value = getattr(p, f.name)
        if f.name == "vertices":
            if p.kind == "polyline":
                out["vertices"] = [list(map(float, v)) for v in value]
            continue
        if value != getattr(default, f.name):
            out[f.name] = list(value) if isinstance(value, tuple) else value
    return out


def _number(value, where: str, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SceneError(f"{where}: expected a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise SceneError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if not np.isfinite(value):
        raise SceneError(f"{where}: must be finite")
    return float(value)


def _vector(value, where: str, n: int = 3) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise SceneError(f"{where}: expected a list of {n} numbers, got {value!r}")
    return tuple(_number(v, f"{where}[{i}]") for i, v in enumerate(value))


def _parse_primitive(entry, where: str) -> CurvePrimitiveSpec:
    if not isinstance(entry, dict):
        raise SceneError(f"{where}: expected an object")
    known = {f.name for f in dataclasses.fields(CurvePrimitiveSpec)}
    for key in entry:
        if key not in known:
            raise SceneError(f"{where}: unknown field {key!r}")
    kind = entry.get("kind")
    if kind not in CurvePrimitiveSpec.KINDS:
        raise SceneError(f"{where}.kind: expected one of {', '.join(CurvePrimitiveSpec.KINDS)}, got {kind!r}")
    label = entry.get("label")
    if not isinstance(label, str) or not label:
        raise SceneError(f"{where}.label: expected a non-empty string")
    kw = {"kind": kind, "label": label}
    for key, value in entry.items():
        path = f"{where}.{key}"
        if key in _VECTORS:
            kw[key] = _vector(value, path)
        elif key in _INTS:
            kw[key] = _number(value, path, integer=True)
        elif key in _FLOATS:
            kw[key] = _number(value, path)
        elif key == "semi_axes":
            kw[key] = _vector(value, path, 2)
        elif key == "vertices":
            if not isinstance(value, list):
                raise SceneError(f"{path}: expected a list of points")
            kw[key] = tuple(_vector(v, f"{path}[{i}]") for i, v in enumerate(value))
    if kind == "polyline" and not kw.get("vertices"):
        raise SceneError(f"{where}.vertices: required for a polyline")
    return CurvePrimitiveSpec(**kw)


def build_scene(name: str, primitives, kappa: float = 1.0, lam: float = 1.0, loops=None,
                quadrature: dict | None = None, surfaces: dict | None = None, description: str = "") -> Scene:
    """Construct curves from primitives and validate the whole scene."""
    curves = []
    for i, prim in enumerate(primitives):
        try:
            curves.extend(make_link_family(prim))
        except (GeometryError, ValueError) as exc:
            raise SceneError(f"curves[{i}] ({prim.label!r}): {exc}") from exc
    labels = [c.label for c in curves]
    dupes = sorted({x for x in labels if labels.count(x) > 1})
    if dupes:
        raise SceneError(f"curves: duplicate labels {', '.join(dupes)}")
    try:
        check_disjoint(curves)
    except GeometryError as exc:
        raise SceneError(f"curves: {exc}") from exc
    if kappa == 0 or not np.isfinite(kappa):
        raise SceneError("kappa: must be finite and non-zero")
    if loops is not None:
        loops = tuple(loops)
        for i, lab in enumerate(loops):
            if lab not in labels:
                raise SceneError(f"loops[{i}]: label not found: {lab!r}")
        if len(set(loops)) != len(loops):
            raise SceneError("loops: labels must be distinct")
    quadrature = dict(quadrature or {})
    known = {f.name for f in dataclasses.fields(QuadratureSpec)}
    for key in quadrature:
        if key not in known:
            raise SceneError(f"quadrature: unknown field {key!r}")
    try:
        spec = QuadratureSpec(**quadrature)
    except (TypeError, ValueError) as exc:
        raise SceneError(f"quadrature: {exc}") from exc
    surfaces = dict(surfaces or {})
    for lab, apex in surfaces.items():
        if lab not in labels:
            raise SceneError(f"surfaces.{lab}: label not found: {lab!r}")
        surfaces[lab] = _vector(apex, f"surfaces.{lab}")
    return Scene(name=name, primitives=tuple(primitives), curves=tuple(curves), kappa=float(kappa),
                 lam=float(lam), loops=loops, quadrature=spec, quadrature_overrides=quadrature,
                 surfaces=surfaces, description=description)


def parse_scene(data, source: str = "<scene>") -> Scene:
    """Validate a decoded scene document and build it."""
    if not isinstance(data, dict):
        raise SceneError(f"{source}: top level must be an object")
    for key in data:
        if key not in _TOP_KEYS:
            raise SceneError(f"{source}: unknown field {key!r}")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise SceneError(f"format_version: expected {FORMAT_VERSION}, got {version!r}")
    curves = data.get("curves")
    if not isinstance(curves, list) or not curves:
        raise SceneError("curves: expected a non-empty list")
    prims = [_parse_primitive(entry, f"curves[{i}]") for i, entry in enumerate(curves)]
    kappa = _number(data.get("kappa", 1.0), "kappa")
    lam = _number(data.get("lambda", 1.0), "lambda")
    loops = data.get("loops")
    if loops is not None and (not isinstance(loops, list) or not all(isinstance(x, str) for x in loops)):
        raise SceneError("loops: expected a list of labels")
    quadrature = data.get("quadrature", {})
    if not isinstance(quadrature, dict):
        raise SceneError("quadrature: expected an object")
    surfaces = data.get("surfaces", {})
    if not isinstance(surfaces, dict):
        raise SceneError("surfaces: expected an object mapping labels to apex points")
    name = data.get("name", Path(source).stem)
    return build_scene(str(name), prims, kappa, lam, loops, quadrature, surfaces,
                       str(data.get("description", "")))


def load_scene(path) -> Scene:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SceneError(f"{path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_scene(data, str(path))


def dump_scene(scene: Scene) -> str:
    return json.dumps(scene.to_dict(), indent=2, sort_keys=True) + "\n"


def scene_dir() -> Path:
    """Directory holding the bundled scene files."""
    return Path(__file__).resolve().parent / "scenes"


def bundled_scene(name: str) -> Scene:
    return load_scene(scene_dir() / f"{name}.json")
