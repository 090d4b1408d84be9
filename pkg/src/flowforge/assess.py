"""Self-assessment of generated labels.

Three per-pixel quality metrics, each in [0, 1] with small = good:

  RC   reconstruction confidence: normalized spread (t_h - t_l) /
       (t_h + t_l) of the ray's weight distribution between a low and a
       high cumulative level. Tight distributions mean the backend is
       sure where the surface is.
  GC   geometric consistency: normalized disagreement between a
       reprojected depth and the depth rendered from the second view.
  VSS  visual structural similarity: 1 - SSIM between frame 1 and
       frame 2 warped into frame 1 by the candidate label.

Binarization thresholds and effective regions follow a fixed scheme: RC
is judged over the full image, the occlusion gate is restricted to
RC-confident pixels, and VSS/GC are judged only where the point is
visible in both frames.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping

import numpy as np
from scipy.ndimage import convolve1d

from .errors import InvalidInputError, UndefinedScoreError
from .geometry import CameraIntrinsics, RigidPose
from .interp import sample_bilinear
from .labelgen import DisparityMap, FlowField, OcclusionMask, reproject
from .scenefield.field import (
    DepthMap,
    RayWeightField,
    _interpolate_cumulative_crossing,
)

__all__ = [
    "MetricMap",
    "ThresholdConfig",
    "FusedLabel",
    "reconstruction_confidence",
    "geometric_consistency",
    "visual_structural_similarity",
    "fuse_labels",
    "gc_l_score",
    "ssim_map",
    "rgb_to_gray",
]

MASK_NAMES = ("rc", "occ", "vss", "gc")

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_RANGE = 1.0


@dataclass(frozen=True)
class MetricMap:
    """Per-pixel score in [0, 1] (small = good) with a validity flag."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.shape != valid.shape or values.ndim != 2:
            raise InvalidInputError("metric map must be (H, W) with matching validity")
        sel = values[valid]
        if sel.size and (sel.min() < 0 or sel.max() > 1 or not np.all(np.isfinite(sel))):
            raise InvalidInputError("valid metric values must lie in [0, 1]")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class ThresholdConfig:
    """Binarization thresholds and cumulative levels for the metric masks."""

    rc_nerf: float = 0.4
    rc_3dgs: float = 0.06
    vss: float = 0.1
    gc: float = 0.01
    occ_th: float = 0.3
    rc_low: float = 0.1
    rc_high: float = 0.9

    def __post_init__(self):
        for name in ("rc_nerf", "rc_3dgs", "vss", "gc", "occ_th", "rc_low", "rc_high"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise InvalidInputError(f"threshold {name} must be in (0, 1)")
        if self.rc_low >= self.rc_high:
            raise InvalidInputError("rc_low must be below rc_high")

    def rc_threshold(self, mode: str) -> float:
        if mode == "nerf":
            return self.rc_nerf
        if mode == "splat":
            return self.rc_3dgs
        raise InvalidInputError(f"unknown RC mode {mode!r}")

    def to_json(self) -> dict:
        return {
            "rc_nerf": self.rc_nerf,
            "rc_3dgs": self.rc_3dgs,
            "vss": self.vss,
            "gc": self.gc,
            "occ_th": self.occ_th,
            "rc_low": self.rc_low,
            "rc_high": self.rc_high,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ThresholdConfig":
        known = {f: obj[f] for f in cls.__dataclass_fields__ if f in obj}
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInputError(f"unknown threshold keys: {sorted(unknown)}")
        return cls(**known)


@dataclass(frozen=True)
class FusedLabel:
    """Label after mask fusion: invalid pixels are zeroed out."""

    kind: str  # "flow" | "disparity"
    values: np.ndarray
    valid: np.ndarray


def reconstruction_confidence(
    field: RayWeightField, mode: str, cfg: ThresholdConfig | None = None
) -> MetricMap:
    """Spread of each ray's weight distribution between two cumulative levels.

    nerf mode interpolates the piecewise-linear cumulative weight to the
    rc_low / rc_high levels; splat mode picks the samples whose
    cumulative weight is closest to each level. Rays that never
    accumulate rc_high mass score 1 (maximal uncertainty).
    """
    cfg = cfg or ThresholdConfig()
    if mode not in ("nerf", "splat"):
        raise InvalidInputError(f"unknown RC mode {mode!r}")
    h, w = field.shape
    if field.sample_count == 0:
        return MetricMap(np.ones((h, w)), np.ones((h, w), dtype=bool))
    cum = np.cumsum(field.weights.astype(np.float64), axis=2)
    total = cum[..., -1]
    reaches = total >= cfg.rc_high

    if mode == "nerf":
        t_l = _interpolate_cumulative_crossing(field, cum, cfg.rc_low)
        t_h = _interpolate_cumulative_crossing(field, cum, cfg.rc_high)
    else:
        idx_l = np.argmin(np.abs(cum - cfg.rc_low), axis=2)
        idx_h = np.argmin(np.abs(cum - cfg.rc_high), axis=2)
        t_l = field.t_lo[idx_l]
        t_h = field.t_lo[idx_h]

    denom = t_h + t_l
    with np.errstate(divide="ignore", invalid="ignore"):
        rc = np.where(denom > 0, (t_h - t_l) / denom, 0.0)
    rc = np.clip(rc, 0.0, 1.0)
    rc = np.where(reaches, rc, 1.0)
    return MetricMap(rc, np.ones((h, w), dtype=bool))


def geometric_consistency(
    depth1: DepthMap,
    depth2: DepthMap,
    intrinsics: CameraIntrinsics,
    pose1: RigidPose,
    pose2: RigidPose,
) -> MetricMap:
    """Normalized depth disagreement |Z1' - Z2(p')| / (Z1' + Z2(p')).

    Z1' is the frame-1 depth carried into camera 2; Z2 is sampled
    bilinearly at the reprojected pixel. Out-of-frame or invalid
    samples are invalid in the output.
    """
    uv2, z2, ok = reproject(depth1, intrinsics, pose1, pose2)
    sampled, ok2 = sample_bilinear(depth2.values, uv2, valid=depth2.valid)
    valid = ok & ok2 & (sampled > 0)
    denom = np.where(valid, sampled + z2, 1.0)
    m = np.where(valid, np.abs(z2 - sampled) / denom, 0.0)
    return MetricMap(m, valid)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-0.5 * (r / sigma) ** 2)
    return k / k.sum()


def rgb_to_gray(image: np.ndarray) -> np.ndarray:
    """Luma conversion; passes single-channel input through."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        return img
    return img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114


def ssim_map(
    a: np.ndarray,
    b: np.ndarray,
    data_range: float = SSIM_RANGE,
    window: int = SSIM_WINDOW,
    sigma: float = SSIM_SIGMA,
) -> np.ndarray:
    """Windowed SSIM between two grayscale images (full-size map)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise InvalidInputError("ssim_map expects two equal-shape grayscale images")
    kernel = _gaussian_kernel(window, sigma)

    def blur(x):
        return convolve1d(convolve1d(x, kernel, axis=0, mode="reflect"), kernel, axis=1, mode="reflect")

    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = blur(a)
    mu_b = blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def visual_structural_similarity(
    image1: np.ndarray, image2: np.ndarray, flow: FlowField
) -> MetricMap:
    """1 - SSIM between frame 1 and frame 2 warped into frame 1 by the label.

    Frame 2 is sampled bilinearly at p + flow(p). Pixels whose warp
    source is out of frame (or whose flow is invalid) are invalid; the
    SSIM map is clamped to [0, 1] so the output stays a metric map.
    """
    img1 = np.asarray(image1, dtype=np.float64)
    img2 = np.asarray(image2, dtype=np.float64)
    if img1.shape != img2.shape:
        raise InvalidInputError("images must share a shape")
    h, w = flow.shape
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    target = np.stack([u, v], axis=-1) + flow.values
    warped, ok = sample_bilinear(img2, target)
    valid = flow.valid & ok
    ssim = ssim_map(rgb_to_gray(img1), rgb_to_gray(warped))
    m = 1.0 - np.clip(ssim, 0.0, 1.0)
    return MetricMap(np.where(valid, m, 0.0), valid)


def binarize_masks(
    masks: Mapping[str, object], cfg: ThresholdConfig, mode: str
) -> dict[str, np.ndarray]:
    """Table-style binarization: True = pixel passes that gate.

    rc: value below the backend threshold, judged over the full image.
    occ: visible and RC-confident.
    vss / gc: value below threshold at a visible pixel.
    """
    rc: MetricMap = masks["rc"]
    occ: OcclusionMask = masks["occ"]
    out: dict[str, np.ndarray] = {}
    rc_bin = rc.valid & (rc.values < cfg.rc_threshold(mode))
    out["rc"] = rc_bin
    out["occ"] = occ.visible & rc_bin
    if "vss" in masks:
        vss: MetricMap = masks["vss"]
        out["vss"] = vss.valid & (vss.values < cfg.vss) & occ.visible
    if "gc" in masks:
        gc: MetricMap = masks["gc"]
        out["gc"] = gc.valid & (gc.values < cfg.gc) & occ.visible
    return out


def fuse_labels(
    label: FlowField | DisparityMap,
    masks: Mapping[str, object],
    cfg: ThresholdConfig,
    mode: str,
    selection: Iterable[str] = MASK_NAMES,
) -> FusedLabel:
    """Invalidate label pixels failing any selected binarized mask.

    `masks` maps "rc"/"occ"/"vss"/"gc" to their maps; rc and occ are
    always required because they define the other masks' effective
    regions. Invalid pixels carry value 0 so they drop out of any loss.
    """
    selection = tuple(selection)
    unknown = set(selection) - set(MASK_NAMES)
    if unknown:
        raise InvalidInputError(f"unknown mask selection: {sorted(unknown)}")
    for required in ("rc", "occ"):
        if required not in masks:
            raise InvalidInputError(f"mask {required!r} is required for fusion")
    gates = binarize_masks(masks, cfg, mode)
    valid = label.valid.copy()
    for name in selection:
        if name not in gates:
            raise InvalidInputError(f"selected mask {name!r} was not provided")
        valid &= gates[name]

    if isinstance(label, FlowField):
        values = np.where(valid[..., None], label.values, 0.0)
        return FusedLabel("flow", values, valid)
    values = np.where(valid, label.values, 0.0)
    return FusedLabel("disparity", values, valid)


def gc_l_score(gc: MetricMap, occ: OcclusionMask) -> float:
    """Mean GC over visible pixels, scaled by 100 (small = better labels)."""
    if gc.shape != occ.shape:
        raise InvalidInputError("GC map and occlusion mask must share the grid")
    domain = occ.visible & gc.valid
    if not domain.any():
        raise UndefinedScoreError("no visible pixels to score")
    return float(np.mean(gc.values[domain]) * 100.0)
