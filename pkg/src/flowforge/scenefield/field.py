"""Per-ray surface-probability fields and the depth statistics built on them.

A ray-weight field stores, for every pixel, an ordered set of samples
along the pixel ray. Each sample is either a depth interval [t_lo, t_hi)
("interval" kind, produced by density-field ray marching) or a single
depth point ("point" kind, produced by splat compositing, t_lo == t_hi).
The weight of a sample is the probability mass that the first visible
surface lies there; per ray, weights sum to at most 1.

Sample positions are shared across the image (one t grid, or one sorted
splat depth list), with per-pixel weights of shape (H, W, S). Positions
are camera-frame z depths, so statistics of the field compare directly
to pinhole depth maps.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from ..errors import FileFormatError, InvalidInputError

__all__ = ["RaySample", "RayWeightField", "DepthMap", "mean_depth", "median_depth"]

WEIGHT_SUM_TOL = 1e-6
MEAN_WEIGHT_FLOOR = 0.05
MEDIAN_WEIGHT_FLOOR = 0.5

_DUMP_MAGIC = b"RWF1"


class RaySample(NamedTuple):
    """One sample of a single ray: interval bounds, mass, optional color."""

    t_lo: float
    t_hi: float
    weight: float
    color: Optional[tuple[float, float, float]] = None


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth in world units with a validity flag."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.shape != valid.shape or values.ndim != 2:
            raise InvalidInputError("depth values and validity must share a 2D shape")
        if np.any(~np.isfinite(values[valid])) or np.any(values[valid] <= 0):
            raise InvalidInputError("valid depths must be finite and positive")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class RayWeightField:
    """Ordered per-ray weight samples over an image grid.

    kind: "interval" for [t_lo, t_hi) density samples, "point" for
        degenerate splat samples (t_lo == t_hi).
    t_lo, t_hi: sample positions, shape (S,), strictly increasing t_lo,
        non-overlapping intervals.
    weights: per-pixel sample mass, shape (H, W, S), each ray summing
        to <= 1 within tolerance.
    """

    kind: str
    t_lo: np.ndarray
    t_hi: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.kind not in ("interval", "point"):
            raise InvalidInputError(f"unknown field kind {self.kind!r}")
        t_lo = np.asarray(self.t_lo, dtype=np.float64)
        t_hi = np.asarray(self.t_hi, dtype=np.float64)
        w = np.asarray(self.weights)
        if t_lo.ndim != 1 or t_lo.shape != t_hi.shape:
            raise InvalidInputError("t_lo/t_hi must be 1D and equal length")
        if w.ndim != 3 or w.shape[2] != t_lo.shape[0]:
            raise InvalidInputError("weights must be (H, W, S) matching sample count")
        if self.kind == "interval":
            if np.any(t_hi <= t_lo):
                raise InvalidInputError("intervals need t_lo < t_hi")
            if np.any(t_lo[1:] < t_hi[:-1] - 1e-12):
                raise InvalidInputError("intervals must be sorted and non-overlapping")
        else:
            if np.any(t_hi != t_lo):
                raise InvalidInputError("point samples need t_lo == t_hi")
            if np.any(np.diff(t_lo) < 0):
                raise InvalidInputError("point samples must be sorted by depth")
        if np.any(t_lo < 0):
            raise InvalidInputError("sample depths must be non-negative")
        if w.size and (np.min(w) < -1e-12 or np.max(np.sum(w, axis=2)) > 1.0 + WEIGHT_SUM_TOL):
            raise InvalidInputError("weights must be >= 0 and sum to <= 1 per ray")
        object.__setattr__(self, "t_lo", t_lo)
        object.__setattr__(self, "t_hi", t_hi)
        object.__setattr__(self, "weights", w)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape[:2]

    @property
    def sample_count(self) -> int:
        return self.t_lo.shape[0]

    @property
    def t_mid(self) -> np.ndarray:
        return 0.5 * (self.t_lo + self.t_hi)

    def total_weight(self) -> np.ndarray:
        """Accumulated mass per ray, shape (H, W)."""
        return np.sum(self.weights, axis=2, dtype=np.float64)

    def ray(self, row: int, col: int) -> list[RaySample]:
        """Samples of one pixel's ray, in depth order."""
        w = self.weights[row, col]
        return [
            RaySample(float(lo), float(hi), float(wi))
            for lo, hi, wi in zip(self.t_lo, self.t_hi, w)
        ]

    def dump(self, path) -> None:
        """Binary debug dump: per-pixel sample count + (t_lo, t_hi, w) triples."""
        h, w_, s = self.weights.shape
        kind_tag = 0 if self.kind == "interval" else 1
        with open(path, "wb") as f:
            f.write(_DUMP_MAGIC)
            f.write(struct.pack("<iiib", h, w_, s, kind_tag))
            counts = np.full((h, w_), s, dtype=np.int32)
            f.write(counts.tobytes())
            triples = np.empty((h, w_, s, 3), dtype=np.float32)
            triples[..., 0] = self.t_lo
            triples[..., 1] = self.t_hi
            triples[..., 2] = self.weights
            f.write(triples.tobytes())

    @classmethod
    def load(cls, path) -> "RayWeightField":
        """Read a dump() file. Only uniform per-pixel counts are representable."""
        with open(path, "rb") as f:
            magic = f.read(4)
            if magic != _DUMP_MAGIC:
                raise FileFormatError("not a ray-weight field dump")
            h, w_, s, kind_tag = struct.unpack("<iiib", f.read(13))
            counts = np.frombuffer(f.read(4 * h * w_), dtype=np.int32)
            if counts.size != h * w_ or np.any(counts != s):
                raise FileFormatError("truncated dump or non-uniform sample counts")
            raw = np.frombuffer(f.read(4 * h * w_ * s * 3), dtype=np.float32)
            if raw.size != h * w_ * s * 3:
                raise FileFormatError("truncated sample data")
        triples = raw.reshape(h, w_, s, 3)
        kind = "interval" if kind_tag == 0 else "point"
        return cls(
            kind=kind,
            t_lo=triples[0, 0, :, 0].astype(np.float64),
            t_hi=triples[0, 0, :, 1].astype(np.float64),
            weights=triples[..., 2].astype(np.float64),
        )


def mean_depth(field: RayWeightField, weight_floor: float = MEAN_WEIGHT_FLOOR) -> DepthMap:
    """Expectation of depth under the ray's weight distribution.

    Sum of w_i * t_mid_i per ray (point samples contribute at their own
    depth). Rays with total mass below `weight_floor` are invalid.
    """
    total = field.total_weight()
    values = np.tensordot(field.weights.astype(np.float64), field.t_mid, axes=([2], [0]))
    valid = (total >= weight_floor) & (values > 0)
    out = np.where(valid, values, 1.0)
    return DepthMap(out, valid)


def median_depth(field: RayWeightField, mode: str) -> DepthMap:
    """Depth at which cumulative ray weight reaches one half.

    nerf mode: the cumulative weight is piecewise linear across each
    interval; the 0.5 crossing is interpolated inside the crossing
    interval. splat mode: the sample whose cumulative weight is closest
    to 0.5 wins, ties to the smaller index, and its own depth is
    returned. Rays with total mass < 0.5 are invalid in both modes.
    """
    if mode not in ("nerf", "splat"):
        raise InvalidInputError(f"unknown median mode {mode!r}")
    if field.sample_count == 0:
        return DepthMap(np.ones(field.shape), np.zeros(field.shape, dtype=bool))
    cum = np.cumsum(field.weights.astype(np.float64), axis=2)
    total = cum[..., -1]
    valid = total >= MEDIAN_WEIGHT_FLOOR

    if mode == "splat":
        idx = np.argmin(np.abs(cum - 0.5), axis=2)
        values = field.t_lo[idx]
        # A zero-depth point sample would break DepthMap positivity.
        values = np.where(valid & (values > 0), values, 1.0)
        valid = valid & (field.t_lo[idx] > 0)
        return DepthMap(values, valid)

    values = _interpolate_cumulative_crossing(field, cum, 0.5)
    values = np.where(valid, values, 1.0)
    return DepthMap(values, valid)


def _interpolate_cumulative_crossing(
    field: RayWeightField, cum: np.ndarray, level: float
) -> np.ndarray:
    """Depth at which the piecewise-linear cumulative weight reaches `level`.

    The cumulative mass rises linearly from C_{i-1} at t_lo_i to C_i at
    t_hi_i and is constant in gaps between intervals. Rays that never
    reach `level` get the last sample's t_hi (callers gate validity).
    """
    h, w_, s = cum.shape
    reached = cum >= level - 1e-15
    idx = np.argmax(reached, axis=2)
    any_reached = reached[..., -1]
    idx = np.where(any_reached, idx, s - 1)

    flat = cum.reshape(-1, s)
    rows = np.arange(flat.shape[0])
    c_hi = flat[rows, idx.reshape(-1)]
    c_lo = np.where(idx.reshape(-1) > 0, flat[rows, np.maximum(idx.reshape(-1) - 1, 0)], 0.0)
    t_lo = field.t_lo[idx.reshape(-1)]
    t_hi = field.t_hi[idx.reshape(-1)]
    span = c_hi - c_lo
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(span > 0, (level - c_lo) / span, 1.0)
    frac = np.clip(frac, 0.0, 1.0)
    t = t_lo + frac * (t_hi - t_lo)
    t = np.where(any_reached.reshape(-1), t, t_hi)
    return t.reshape(h, w_)
