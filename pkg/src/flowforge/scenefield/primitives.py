"""Analytic scene primitives and splat primitives.

Analytic primitives (sphere, half-space plane, axis-aligned box) carry a
procedural albedo plus a density profile, and expose two closed-form ray
queries:

  first_hit   exact surface intersection depth (the ground-truth oracle),
  density_spans   the [t0, t1] stretches of the pixel ray inside the
                  primitive's constant-density region.

Density profiles: "surface" places constant sigma in a shell of the
given thickness just inside the surface (silhouettes stay exact);
"volume" fills the whole solid, which models fog-like diffuse regions.

All ray queries use the pixel-depth parameterization: direction vectors
have unit camera-frame z, so the parameter t is the camera-frame depth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInputError

__all__ = [
    "Albedo",
    "DensityProfile",
    "Sphere",
    "Plane",
    "Box",
    "AnalyticPrimitive",
    "SplatPrimitive",
    "camera_ray_directions",
    "subtract_spans",
]

Span = tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class Albedo:
    """Procedural texture: checkerboard, axis gradient, or constant color."""

    kind: str = "constant"
    color_a: tuple[float, float, float] = (0.7, 0.7, 0.7)
    color_b: tuple[float, float, float] = (0.2, 0.2, 0.2)
    scale: float = 1.0
    axis: int = 0
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "checkerboard", "gradient"):
            raise InvalidInputError(f"unknown albedo kind {self.kind!r}")
        if self.kind == "checkerboard" and self.scale <= 0:
            raise InvalidInputError("checkerboard scale must be positive")
        if self.kind == "gradient" and self.hi <= self.lo:
            raise InvalidInputError("gradient needs lo < hi")

    def rgb(self, points: np.ndarray) -> np.ndarray:
        """Albedo color at world points, shape (..., 3)."""
        pts = np.asarray(points, dtype=np.float64)
        a = np.asarray(self.color_a, dtype=np.float64)
        b = np.asarray(self.color_b, dtype=np.float64)
        if self.kind == "constant":
            return np.broadcast_to(a, pts.shape).copy()
        if self.kind == "checkerboard":
            cells = np.floor(pts / self.scale).sum(axis=-1).astype(np.int64)
            parity = (cells % 2 == 0)[..., None]
            return np.where(parity, a, b)
        coord = pts[..., self.axis]
        f = np.clip((coord - self.lo) / (self.hi - self.lo), 0.0, 1.0)[..., None]
        return a * (1.0 - f) + b * f

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "color_a": list(self.color_a),
            "color_b": list(self.color_b),
            "scale": self.scale,
            "axis": self.axis,
            "lo": self.lo,
            "hi": self.hi,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Albedo":
        return cls(
            kind=obj.get("kind", "constant"),
            color_a=tuple(obj.get("color_a", (0.7, 0.7, 0.7))),
            color_b=tuple(obj.get("color_b", (0.2, 0.2, 0.2))),
            scale=float(obj.get("scale", 1.0)),
            axis=int(obj.get("axis", 0)),
            lo=float(obj.get("lo", 0.0)),
            hi=float(obj.get("hi", 1.0)),
        )


@dataclass(frozen=True)
class DensityProfile:
    """Constant-sigma region attached to a primitive."""

    mode: str = "surface"
    sigma: float = 60.0
    thickness: float = 0.4

    def __post_init__(self):
        if self.mode not in ("surface", "volume"):
            raise InvalidInputError(f"unknown density mode {self.mode!r}")
        if self.sigma < 0 or self.thickness <= 0:
            raise InvalidInputError("sigma must be >= 0 and thickness > 0")

    def to_json(self) -> dict:
        return {"mode": self.mode, "sigma": self.sigma, "thickness": self.thickness}

    @classmethod
    def from_json(cls, obj: dict) -> "DensityProfile":
        return cls(
            mode=obj.get("mode", "surface"),
            sigma=float(obj.get("sigma", 60.0)),
            thickness=float(obj.get("thickness", 0.4)),
        )


def camera_ray_directions(intrinsics, pose) -> np.ndarray:
    """World-frame ray directions with unit camera z, shape (H, W, 3)."""
    u, v = intrinsics.pixel_grid()
    d_cam = np.stack(
        [
            (u - intrinsics.cx) / intrinsics.fx,
            (v - intrinsics.cy) / intrinsics.fy,
            np.ones_like(u),
        ],
        axis=-1,
    )
    return d_cam @ pose.rotation.T


def subtract_spans(outer: list[Span], inner: list[Span]) -> list[Span]:
    """Pairwise set difference of ray spans, each inner nested in its outer.

    Shrunken solids always nest inside their originals along a ray, so
    the difference of one span pair is at most two spans. Empty spans
    are encoded with zero length and contribute nothing downstream.
    """
    result: list[Span] = []
    for (o0, o1), (i0, i1) in zip(outer, inner):
        has_inner = i1 > i0
        left_hi = np.where(has_inner, np.minimum(o1, i0), o1)
        right_lo = np.where(has_inner, np.maximum(i1, o0), o1)
        result.append((o0, np.maximum(left_hi, o0)))
        result.append((np.minimum(right_lo, o1), o1))
    return result


class _PrimitiveBase:
    """Shared density-span logic; subclasses provide solid spans and hits."""

    albedo: Albedo
    density: DensityProfile

    def solid_spans(self, origin: np.ndarray, dirs: np.ndarray, shrink: float = 0.0):
        raise NotImplementedError

    def first_hit(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def density_spans(self, origin: np.ndarray, dirs: np.ndarray) -> list[Span]:
        """Constant-sigma spans of each ray, clipped to t >= 0."""
        outer = self.solid_spans(origin, dirs)
        if self.density.mode == "volume":
            return outer
        inner = self.solid_spans(origin, dirs, shrink=self.density.thickness)
        return subtract_spans(outer, inner)


def _clip_span(t0: np.ndarray, t1: np.ndarray, hit: np.ndarray) -> Span:
    t0 = np.where(hit, np.maximum(t0, 0.0), 0.0)
    t1 = np.where(hit, np.maximum(t1, t0), t0)
    return t0, t1


@dataclass(frozen=True)
class Sphere(_PrimitiveBase):
    center: tuple[float, float, float]
    radius: float
    albedo: Albedo = field(default_factory=Albedo)
    density: DensityProfile = field(default_factory=DensityProfile)

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidInputError("sphere radius must be positive")

    def _roots(self, origin, dirs, radius):
        m = origin - np.asarray(self.center, dtype=np.float64)
        a = np.sum(dirs * dirs, axis=-1)
        b = 2.0 * (dirs @ m)
        c = float(m @ m) - radius * radius
        disc = b * b - 4.0 * a * c
        hit = disc > 0
        sq = np.sqrt(np.maximum(disc, 0.0))
        t0 = (-b - sq) / (2.0 * a)
        t1 = (-b + sq) / (2.0 * a)
        return t0, t1, hit

    def solid_spans(self, origin, dirs, shrink: float = 0.0):
        r = self.radius - shrink
        if r <= 0:
            zero = np.zeros(dirs.shape[:-1])
            return [(zero, zero)]
        t0, t1, hit = self._roots(origin, dirs, r)
        hit = hit & (t1 > 0)
        return [_clip_span(t0, t1, hit)]

    def first_hit(self, origin, dirs):
        t0, t1, hit = self._roots(origin, dirs, self.radius)
        t = np.where(t0 > 1e-9, t0, t1)
        t = np.where(hit & (t > 1e-9), t, np.inf)
        return t


@dataclass(frozen=True)
class Plane(_PrimitiveBase):
    """Half-space: the solid side satisfies normal . x <= offset."""

    normal: tuple[float, float, float]
    offset: float
    albedo: Albedo = field(default_factory=Albedo)
    density: DensityProfile = field(default_factory=DensityProfile)

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise InvalidInputError("plane normal must be unit length")

    def solid_spans(self, origin, dirs, shrink: float = 0.0):
        n = np.asarray(self.normal, dtype=np.float64)
        off = self.offset - shrink
        nd = dirs @ n
        no = float(origin @ n)
        far = np.full(dirs.shape[:-1], np.inf)
        zero = np.zeros(dirs.shape[:-1])
        with np.errstate(divide="ignore", invalid="ignore"):
            t_cross = (off - no) / nd
        parallel = np.abs(nd) < 1e-12
        inside_origin = no <= off
        # nd < 0: ray heads into the solid at t_cross; nd > 0: leaves at t_cross.
        t0 = np.where(nd < 0, np.maximum(t_cross, 0.0), 0.0)
        t1 = np.where(nd < 0, far, np.maximum(t_cross, 0.0))
        t0 = np.where(parallel, 0.0, t0)
        t1 = np.where(parallel, np.where(inside_origin, far, zero), t1)
        empty = (~parallel) & (nd > 0) & (t_cross <= 0)
        t0 = np.where(empty, 0.0, t0)
        t1 = np.where(empty, 0.0, t1)
        return [(t0, t1)]

    def first_hit(self, origin, dirs):
        n = np.asarray(self.normal, dtype=np.float64)
        nd = dirs @ n
        no = float(origin @ n)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.offset - no) / nd
        t = np.where((np.abs(nd) > 1e-12) & (t > 1e-9), t, np.inf)
        return t


@dataclass(frozen=True)
class Box(_PrimitiveBase):
    """Axis-aligned box between corners lo and hi."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    albedo: Albedo = field(default_factory=Albedo)
    density: DensityProfile = field(default_factory=DensityProfile)

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if np.any(lo >= hi):
            raise InvalidInputError("box needs lo < hi componentwise")

    def _slab(self, origin, dirs, lo, hi):
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (lo - origin) / dirs
            tb = (hi - origin) / dirs
        parallel = np.abs(dirs) < 1e-15
        lo_in = (origin >= lo) & (origin <= hi)
        ta = np.where(parallel, np.where(lo_in, -np.inf, np.inf), ta)
        tb = np.where(parallel, np.where(lo_in, np.inf, -np.inf), tb)
        t_near = np.minimum(ta, tb).max(axis=-1)
        t_far = np.maximum(ta, tb).min(axis=-1)
        return t_near, t_far

    def solid_spans(self, origin, dirs, shrink: float = 0.0):
        lo = np.asarray(self.lo, dtype=np.float64) + shrink
        hi = np.asarray(self.hi, dtype=np.float64) - shrink
        if np.any(lo >= hi):
            zero = np.zeros(dirs.shape[:-1])
            return [(zero, zero)]
        t_near, t_far = self._slab(origin, dirs, lo, hi)
        hit = (t_far > t_near) & (t_far > 0)
        return [_clip_span(t_near, t_far, hit)]

    def first_hit(self, origin, dirs):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        t_near, t_far = self._slab(origin, dirs, lo, hi)
        hit = t_far > np.maximum(t_near, 0.0)
        t = np.where(t_near > 1e-9, t_near, t_far)
        return np.where(hit & (t > 1e-9), t, np.inf)


AnalyticPrimitive = Sphere | Plane | Box

_PRIMITIVE_KINDS = {"sphere": Sphere, "plane": Plane, "box": Box}


def primitive_to_json(p: AnalyticPrimitive) -> dict:
    base = {"albedo": p.albedo.to_json(), "density": p.density.to_json()}
    if isinstance(p, Sphere):
        return {"kind": "sphere", "center": list(p.center), "radius": p.radius, **base}
    if isinstance(p, Plane):
        return {"kind": "plane", "normal": list(p.normal), "offset": p.offset, **base}
    return {"kind": "box", "lo": list(p.lo), "hi": list(p.hi), **base}


def primitive_from_json(obj: dict) -> AnalyticPrimitive:
    kind = obj.get("kind")
    if kind not in _PRIMITIVE_KINDS:
        raise InvalidInputError(f"unknown primitive kind {kind!r}")
    albedo = Albedo.from_json(obj.get("albedo", {}))
    density = DensityProfile.from_json(obj.get("density", {}))
    if kind == "sphere":
        return Sphere(tuple(obj["center"]), float(obj["radius"]), albedo, density)
    if kind == "plane":
        return Plane(tuple(obj["normal"]), float(obj["offset"]), albedo, density)
    return Box(tuple(obj["lo"]), tuple(obj["hi"]), albedo, density)


@dataclass(frozen=True)
class SplatPrimitive:
    """Anisotropic 3D gaussian with opacity and flat color."""

    mean: tuple[float, float, float]
    scale: tuple[float, float, float]
    quat: tuple[float, float, float, float]
    opacity: float
    color: tuple[float, float, float]

    def __post_init__(self):
        if np.any(np.asarray(self.scale) <= 0):
            raise InvalidInputError("splat scale components must be positive")
        q = np.asarray(self.quat, dtype=np.float64)
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise InvalidInputError("splat quaternion must be unit length")
        if not 0.0 <= self.opacity <= 1.0:
            raise InvalidInputError("splat opacity must be in [0, 1]")

    def rotation(self) -> np.ndarray:
        w, x, y, z = self.quat
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def covariance(self) -> np.ndarray:
        """World-frame 3x3 covariance R diag(scale^2) R^T."""
        R = self.rotation()
        return R @ np.diag(np.square(self.scale)) @ R.T

    def to_json(self) -> dict:
        return {
            "mean": list(self.mean),
            "scale": list(self.scale),
            "quat": list(self.quat),
            "opacity": self.opacity,
            "color": list(self.color),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SplatPrimitive":
        return cls(
            tuple(obj["mean"]),
            tuple(obj["scale"]),
            tuple(obj["quat"]),
            float(obj["opacity"]),
            tuple(obj["color"]),
        )
