"""Dataset serialization: .flo, PFM, 16-bit disparity PNG, previews, manifests.

Byte-level layouts live in FORMATS.md. Every writer/reader pair round
trips bit-exact (or within the documented quantization for PNG16).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FileFormatError, InvalidConfigError, InvalidInputError, RangeError
from .geometry import CameraIntrinsics, RigidPose
from .labelgen import DisparityMap, FlowField
from .scenefield.field import DepthMap

__all__ = [
    "LabeledPair",
    "write_flo",
    "read_flo",
    "write_pfm",
    "read_pfm",
    "write_disparity_png16",
    "read_disparity_png16",
    "write_image_png",
    "read_image_png",
    "write_mask_png",
    "read_mask_png",
    "flow_colorwheel_png",
    "flow_to_colors",
    "heatmap_png",
    "DatasetManifest",
    "PairRecord",
    "RunConfig",
]

FLO_MAGIC = 202021.25
FLO_INVALID = 1e10
FLO_VALID_LIMIT = 1e9
PNG16_SCALE = 256.0
PNG16_MAX = (2**16 - 1) / PNG16_SCALE


@dataclass(frozen=True)
class LabeledPair:
    """The generated dataset unit: two frames, depths, and one label."""

    image1: np.ndarray
    image2: np.ndarray
    label: FlowField | DisparityMap
    depth1: DepthMap | None = None
    depth2: DepthMap | None = None

    @property
    def task(self) -> str:
        return "flow" if isinstance(self.label, FlowField) else "stereo"


# ---------------------------------------------------------------------------
# Middlebury .flo


def write_flo(flow: FlowField, path) -> None:
    """Magic float, int32 width/height, row-major float32 (du, dv) pairs.

    Invalid pixels are stored as the 1e10 sentinel (readers treat any
    magnitude above 1e9 as unknown flow).
    """
    h, w = flow.shape
    data = flow.values.astype(np.float32).copy()
    data[~flow.valid] = FLO_INVALID
    with open(path, "wb") as f:
        f.write(struct.pack("<fii", FLO_MAGIC, w, h))
        f.write(data.tobytes())


def read_flo(path) -> FlowField:
    with open(path, "rb") as f:
        header = f.read(12)
        if len(header) != 12:
            raise FileFormatError("truncated .flo header")
        magic, w, h = struct.unpack("<fii", header)
        if abs(magic - FLO_MAGIC) > 1e-3:
            raise FileFormatError(f"bad .flo magic {magic!r}")
        if w <= 0 or h <= 0:
            raise FileFormatError("bad .flo dimensions")
        raw = f.read(4 * 2 * w * h)
        if len(raw) != 4 * 2 * w * h:
            raise FileFormatError("truncated .flo data")
    values = np.frombuffer(raw, dtype=np.float32).reshape(h, w, 2).copy()
    valid = np.all(np.abs(values) < FLO_VALID_LIMIT, axis=-1)
    values[~valid] = 0.0
    return FlowField(values, valid)


# ---------------------------------------------------------------------------
# PFM (grayscale, float32, bottom-up scanlines)


def write_pfm(values: np.ndarray, path, valid: np.ndarray | None = None) -> None:
    """Grayscale PFM, little-endian. Invalid pixels encode as NaN."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise InvalidInputError("PFM writer expects a 2D map")
    if valid is not None:
        arr = arr.copy()
        arr[~np.asarray(valid, dtype=bool)] = np.nan
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(arr[::-1].tobytes())  # bottom row first


def read_pfm(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns (values float32, valid). NaNs decode as invalid (value 0)."""
    with open(path, "rb") as f:
        if f.readline().strip() != b"Pf":
            raise FileFormatError("not a grayscale PFM file")
        dims = f.readline().split()
        if len(dims) != 2:
            raise FileFormatError("bad PFM dimension line")
        try:
            w, h = int(dims[0]), int(dims[1])
            scale = float(f.readline().strip())
        except ValueError as exc:
            raise FileFormatError("bad PFM header") from exc
        count = w * h
        dtype = "<f4" if scale < 0 else ">f4"
        raw = f.read(4 * count)
        if len(raw) != 4 * count:
            raise FileFormatError("truncated PFM data")
    values = np.frombuffer(raw, dtype=dtype).reshape(h, w)[::-1].astype(np.float32)
    valid = np.isfinite(values)
    values = np.where(valid, values, 0.0).astype(np.float32)
    return values, valid


# ---------------------------------------------------------------------------
# 16-bit disparity PNG (value = round(256 * d), 0 = invalid)


def write_disparity_png16(disparity: DisparityMap, path) -> None:
    """KITTI-style quantized disparity. Requires d < 255.99.

    A valid disparity of exactly 0 quantizes to the invalid sentinel and
    reads back invalid (documented quirk of the encoding).
    """
    if disparity.values[disparity.valid].size and (
        disparity.values[disparity.valid].max() >= PNG16_MAX
    ):
        raise RangeError(f"disparity overflows PNG16 (max encodable {PNG16_MAX:.2f})")
    coded = np.rint(disparity.values * PNG16_SCALE).astype(np.uint16)
    coded[~disparity.valid] = 0
    Image.fromarray(coded).save(path)  # uint16 -> 16-bit grayscale PNG


def read_disparity_png16(path) -> DisparityMap:
    img = Image.open(path)
    coded = np.asarray(img, dtype=np.uint16)
    if coded.ndim != 2:
        raise FileFormatError("disparity PNG must be single-channel")
    valid = coded > 0
    values = np.where(valid, coded.astype(np.float64) / PNG16_SCALE, 0.0)
    return DisparityMap(values, valid)


# ---------------------------------------------------------------------------
# 8-bit image / mask PNG


def write_image_png(image: np.ndarray, path) -> None:
    """RGB image in [0, 1] stored as 8-bit PNG."""
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8)).save(path)


def read_image_png(path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64)
    return arr / 255.0


def write_mask_png(mask: np.ndarray, path) -> None:
    """Binary mask as 0/255 grayscale PNG."""
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def read_mask_png(path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("L"))
    return arr >= 128


# ---------------------------------------------------------------------------
# Flow color-wheel visualization


def _make_colorwheel() -> np.ndarray:
    """Piecewise-linear RY/YG/GC/CB/BM/MR wheel (55 colors), rows in [0, 1]."""
    ry, yg, gc, cb, bm, mr = 15, 6, 4, 11, 13, 6
    wheel = np.zeros((ry + yg + gc + cb + bm + mr, 3))
    col = 0
    wheel[0:ry, 0] = 1.0
    wheel[0:ry, 1] = np.arange(ry) / ry
    col += ry
    wheel[col : col + yg, 0] = 1.0 - np.arange(yg) / yg
    wheel[col : col + yg, 1] = 1.0
    col += yg
    wheel[col : col + gc, 1] = 1.0
    wheel[col : col + gc, 2] = np.arange(gc) / gc
    col += gc
    wheel[col : col + cb, 1] = 1.0 - np.arange(cb) / cb
    wheel[col : col + cb, 2] = 1.0
    col += cb
    wheel[col : col + bm, 2] = 1.0
    wheel[col : col + bm, 0] = np.arange(bm) / bm
    col += bm
    wheel[col : col + mr, 2] = 1.0 - np.arange(mr) / mr
    wheel[col : col + mr, 0] = 1.0
    return wheel


_COLORWHEEL = _make_colorwheel()


def flow_to_colors(flow: FlowField, max_magnitude: float | None = None) -> np.ndarray:
    """Map flow to the color wheel: zero = white, invalid = black.

    Hue follows the flow angle (pure +x flow hits wheel index 0, red);
    saturation scales with magnitude relative to `max_magnitude`
    (default: the field's own maximum).
    """
    u = flow.values[..., 0]
    v = flow.values[..., 1]
    mag = np.hypot(u, v)
    if max_magnitude is None:
        max_magnitude = float(mag[flow.valid].max()) if flow.valid.any() else 1.0
    max_magnitude = max(max_magnitude, 1e-9)
    rad = np.clip(mag / max_magnitude, 0.0, 1.0)
    angle = np.arctan2(v, u)  # 0 at +x, increasing toward +v
    ncols = _COLORWHEEL.shape[0]
    pos = (angle / (2 * np.pi)) % 1.0 * ncols
    i0 = np.floor(pos).astype(np.int64) % ncols
    i1 = (i0 + 1) % ncols
    f = pos - np.floor(pos)
    color = _COLORWHEEL[i0] * (1 - f[..., None]) + _COLORWHEEL[i1] * f[..., None]
    # fade toward white as magnitude drops
    color = 1.0 - rad[..., None] * (1.0 - color)
    color[~flow.valid] = 0.0
    return color


def flow_colorwheel_png(flow: FlowField, path, max_magnitude: float | None = None) -> None:
    write_image_png(flow_to_colors(flow, max_magnitude), path)


def heatmap_png(values: np.ndarray, path, valid: np.ndarray | None = None, vmax: float | None = None) -> None:
    """8-bit preview of a scalar map: blue (low) to red (high), black invalid."""
    arr = np.asarray(values, dtype=np.float64)
    if vmax is None:
        domain = arr[valid] if valid is not None else arr
        vmax = float(domain.max()) if domain.size else 1.0
    vmax = max(vmax, 1e-12)
    f = np.clip(arr / vmax, 0.0, 1.0)
    rgb = np.stack([f, 0.2 + 0.3 * np.sin(np.pi * f), 1.0 - f], axis=-1)
    if valid is not None:
        rgb[~valid] = 0.0
    write_image_png(rgb, path)


# ---------------------------------------------------------------------------
# Manifest


@dataclass(frozen=True)
class PairRecord:
    """One labeled pair: file paths plus the geometry that produced it."""

    index: int
    task: str
    frame1: str
    frame2: str
    label: str
    masks: dict
    intrinsics: CameraIntrinsics
    pose1: RigidPose
    pose2: RigidPose
    scene_id: str
    seed: int

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "task": self.task,
            "frame1": self.frame1,
            "frame2": self.frame2,
            "label": self.label,
            "masks": dict(sorted(self.masks.items())),
            "intrinsics": self.intrinsics.to_json(),
            "pose1": self.pose1.to_json(),
            "pose2": self.pose2.to_json(),
            "scene_id": self.scene_id,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PairRecord":
        return cls(
            index=int(obj["index"]),
            task=str(obj["task"]),
            frame1=obj["frame1"],
            frame2=obj["frame2"],
            label=obj["label"],
            masks=dict(obj.get("masks", {})),
            intrinsics=CameraIntrinsics.from_json(obj["intrinsics"]),
            pose1=RigidPose.from_json(obj["pose1"]),
            pose2=RigidPose.from_json(obj["pose2"]),
            scene_id=str(obj.get("scene_id", "")),
            seed=int(obj.get("seed", 0)),
        )


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple

    def write(self, path) -> None:
        """Validates referenced files exist, then writes stable JSON."""
        root = Path(path).parent
        for rec in self.records:
            for rel in [rec.frame1, rec.frame2, rec.label, *rec.masks.values()]:
                if not (root / rel).exists():
                    raise InvalidInputError(f"manifest references missing file {rel!r}")
        payload = {
            "pairs": [rec.to_json() for rec in sorted(self.records, key=lambda r: r.index)]
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        with open(path, "r", encoding="utf-8") as f:
            try:
                payload = json.load(f)
            except json.JSONDecodeError as exc:
                raise FileFormatError(f"manifest is not valid JSON: {exc}") from exc
        if "pairs" not in payload:
            raise FileFormatError("manifest missing 'pairs'")
        return cls(tuple(PairRecord.from_json(rec) for rec in payload["pairs"]))


# ---------------------------------------------------------------------------
# Run configuration


_RUNCONFIG_KEYS = {
    "scene",
    "backend",
    "task",
    "pairs",
    "seed",
    "depth",
    "baseline",
    "perturb_rotation",
    "perturb_translation",
    "sampling",
    "thresholds",
    "mask_selection",
    "occlusion_threshold",
    "occlusion_margin",
    "fb_alpha",
    "fb_beta",
    "foreground_max",
}


@dataclass(frozen=True)
class RunConfig:
    """Generation parameters; unknown keys in the file are rejected."""

    scene: str = "preset:wall"
    backend: str = "nerf_density"
    task: str = "flow"
    pairs: int = 1
    seed: int = 0
    depth: str = "median"
    baseline: float = 0.3
    perturb_rotation: float = 0.02
    perturb_translation: float = 0.1
    sampling: dict | None = None  # overrides the scene's sampling when set
    thresholds: dict | None = None
    mask_selection: tuple = ("rc", "occ", "vss", "gc")
    occlusion_threshold: float = 0.3
    occlusion_margin: float | None = None
    fb_alpha: float = 0.01
    fb_beta: float = 0.5
    foreground_max: int = 2

    def __post_init__(self):
        if self.backend not in ("analytic", "nerf_density", "splats"):
            raise InvalidConfigError(f"unknown backend {self.backend!r}")
        if self.task not in ("flow", "stereo"):
            raise InvalidConfigError(f"unknown task {self.task!r}")
        if self.depth not in ("median", "mean"):
            raise InvalidConfigError(f"unknown depth mode {self.depth!r}")
        if self.pairs < 0:
            raise InvalidConfigError("pairs must be >= 0")
        if self.baseline <= 0:
            raise InvalidConfigError("baseline must be positive")
        if self.foreground_max < 0 or self.foreground_max > 2:
            raise InvalidConfigError("foreground_max must be 0, 1, or 2")
        object.__setattr__(self, "mask_selection", tuple(self.mask_selection))

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        unknown = set(obj) - _RUNCONFIG_KEYS
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as f:
            try:
                obj = json.load(f)
            except json.JSONDecodeError as exc:
                raise InvalidConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise InvalidConfigError("config root must be a JSON object")
        return cls.from_json(obj)
