"""Flying-foreground pipeline: match segmented objects across a labeled
pair, extract them with quality-gated labels, synthesize 2D textured
polygons, and composite assets onto background pairs.

Matching warps each frame's segmentation masks into the other frame with
the pair's bidirectional flow, builds coverage-ratio (coincidence)
matrices, and accepts a pair of masks only when each is the other's
best match in both directions with coverage above a floor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from scipy.ndimage import binary_dilation

from .assess import MetricMap, ThresholdConfig
from .datasetio import LabeledPair
from .errors import InvalidInputError
from .interp import sample_bilinear, sample_nearest
from .labelgen import DisparityMap, FlowField

__all__ = [
    "SegMaskSet",
    "CoincidenceMatrix",
    "ForegroundAsset",
    "AffineMotion",
    "coincidence_matrices",
    "match_masks",
    "extract_foreground",
    "synth_2d_foreground",
    "composite",
    "load_mask_set",
    "save_asset",
    "load_asset",
]

COVERAGE_MIN = 0.95
ASSET_MIN_CLEAN = 0.5
STEREO_LAYER_MARGIN = 5.0
PLACEMENT_SCALE_RANGE = (0.5, 1.5)
PLACEMENT_MIN_IN_FRAME = 0.25


@dataclass(frozen=True)
class SegMaskSet:
    """Binary object masks over one image grid, each non-empty."""

    masks: np.ndarray  # (N, H, W) bool

    def __post_init__(self):
        m = np.asarray(self.masks, dtype=bool)
        if m.ndim != 3:
            raise InvalidInputError("mask set must be (N, H, W)")
        counts = m.sum(axis=(1, 2))
        if np.any(counts == 0):
            raise InvalidInputError("every segmentation mask must be non-empty")
        object.__setattr__(self, "masks", m)
        object.__setattr__(self, "_counts", counts)

    def __len__(self) -> int:
        return self.masks.shape[0]

    @property
    def counts(self) -> np.ndarray:
        return self._counts

    @property
    def shape(self) -> tuple[int, int]:
        return self.masks.shape[1:]


def load_mask_set(path) -> SegMaskSet:
    """Read masks from a directory of binary PNGs or one indexed PNG."""
    p = Path(path)
    if p.is_dir():
        files = sorted(f for f in p.iterdir() if f.suffix.lower() == ".png")
        if not files:
            raise InvalidInputError(f"no mask PNGs in {p}")
        masks = [np.asarray(Image.open(f).convert("L")) >= 128 for f in files]
        return SegMaskSet(np.stack(masks))
    indexed = np.asarray(Image.open(p))
    if indexed.ndim != 2:
        raise InvalidInputError("indexed mask PNG must be single-channel")
    ids = np.unique(indexed)
    ids = ids[ids != 0]
    if ids.size == 0:
        raise InvalidInputError("indexed mask PNG has no objects")
    return SegMaskSet(np.stack([indexed == i for i in ids]))


@dataclass(frozen=True)
class CoincidenceMatrix:
    """ratios[i, j]: fraction of source mask i covered by warped mask j."""

    ratios: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.ratios, dtype=np.float64)
        if r.ndim != 2 or (r.size and (r.min() < 0 or r.max() > 1 + 1e-9)):
            raise InvalidInputError("coincidence ratios must be a 2D [0,1] matrix")
        object.__setattr__(self, "ratios", r)


def _warp_masks(masks: np.ndarray, flow: FlowField) -> np.ndarray:
    """Pull each mask through the flow (nearest-neighbor, binary stays binary)."""
    h, w = flow.shape
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    target = np.stack([u, v], axis=-1) + flow.values
    warped = np.zeros_like(masks)
    for k in range(masks.shape[0]):
        sampled, ok = sample_nearest(masks[k].astype(np.float64), target)
        warped[k] = flow.valid & ok & (sampled > 0.5)
    return warped


def coincidence_matrices(
    set1: SegMaskSet,
    set2: SegMaskSet,
    flow_fwd: FlowField,
    flow_bwd: FlowField,
) -> tuple[CoincidenceMatrix, CoincidenceMatrix]:
    """Coverage matrices in both directions.

    Returns (m12, m21): m12 is (N1, N2) with set2 warped into frame 1 by
    the forward flow; m21 is (N2, N1) with set1 warped into frame 2 by
    the backward flow.
    """
    if set1.shape != flow_fwd.shape or set2.shape != flow_bwd.shape:
        raise InvalidInputError("masks and flows must share the image grid")
    warped2 = _warp_masks(set2.masks, flow_fwd)  # masks of frame 2 seen in frame 1
    warped1 = _warp_masks(set1.masks, flow_bwd)
    flat1 = set1.masks.reshape(len(set1), -1).astype(np.float64)
    flat2 = set2.masks.reshape(len(set2), -1).astype(np.float64)
    w2 = warped2.reshape(len(set2), -1).astype(np.float64)
    w1 = warped1.reshape(len(set1), -1).astype(np.float64)
    m12 = (flat1 @ w2.T) / set1.counts[:, None]
    m21 = (flat2 @ w1.T) / set2.counts[:, None]
    return CoincidenceMatrix(m12), CoincidenceMatrix(m21)


def match_masks(
    m12: CoincidenceMatrix,
    m21: CoincidenceMatrix,
    coverage_min: float = COVERAGE_MIN,
) -> list[tuple[int, int]]:
    """Mutual-argmax matches with coverage above the floor in both directions.

    (i, j) is accepted iff j is the best cover of mask i, i is the best
    cover of mask j, and both coverages exceed `coverage_min`. The
    mutual-argmax requirement rejects engulfing masks; each mask lands
    in at most one match.
    """
    a = m12.ratios
    b = m21.ratios
    if a.shape != b.shape[::-1]:
        raise InvalidInputError("coincidence matrices have inconsistent shapes")
    matches: list[tuple[int, int]] = []
    if a.size == 0:
        return matches
    best12 = np.argmax(a, axis=1)
    best21 = np.argmax(b, axis=1)
    for i in range(a.shape[0]):
        j = int(best12[i])
        if int(best21[j]) != i:
            continue
        if a[i, j] > coverage_min and b[j, i] > coverage_min:
            matches.append((i, j))
    return matches


@dataclass(frozen=True)
class AffineMotion:
    """Inter-frame motion q = A p + b in local (u, v) pixel coordinates."""

    matrix: np.ndarray  # 2x2
    offset: np.ndarray  # 2

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64).reshape(2, 2)
        o = np.asarray(self.offset, dtype=np.float64).reshape(2)
        if abs(np.linalg.det(m)) < 1e-9:
            raise InvalidInputError("affine motion must be invertible")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "offset", o)

    @classmethod
    def translation(cls, du: float, dv: float) -> "AffineMotion":
        return cls(np.eye(2), np.array([du, dv]))

    @classmethod
    def rotation_about(cls, center_uv, angle: float) -> "AffineMotion":
        c = np.asarray(center_uv, dtype=np.float64)
        rot = np.array(
            [[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]]
        )
        return cls(rot, c - rot @ c)

    def apply(self, uv: np.ndarray) -> np.ndarray:
        return uv @ self.matrix.T + self.offset


@dataclass(frozen=True)
class ForegroundAsset:
    """Matched crop pair with its own label, ready for compositing.

    label values are (du, dv) in local coordinates: crop-1 pixel p
    corresponds to crop-2 pixel p + label[p]. Stereo assets keep dv = 0
    and negative du (disparity = -du).
    """

    rgb1: np.ndarray
    rgb2: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    label: np.ndarray
    label_valid: np.ndarray
    task: str = "flow"
    bbox1: tuple = (0, 0)
    bbox2: tuple = (0, 0)

    def __post_init__(self):
        a1 = np.asarray(self.alpha1, dtype=bool)
        a2 = np.asarray(self.alpha2, dtype=bool)
        lv = np.asarray(self.label_valid, dtype=bool)
        if not a1.any() or not a2.any():
            raise InvalidInputError("asset alphas must be non-empty")
        if (lv & ~a1).any():
            raise InvalidInputError("label validity must be a subset of alpha")
        object.__setattr__(self, "alpha1", a1)
        object.__setattr__(self, "alpha2", a2)
        object.__setattr__(self, "label_valid", lv)


def _bbox_of(mask: np.ndarray) -> tuple[int, int, int, int]:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return int(rows[0]), int(cols[0]), int(rows[-1] + 1), int(cols[-1] + 1)


def extract_foreground(
    pair: LabeledPair,
    match: tuple[int, int],
    set1: SegMaskSet,
    set2: SegMaskSet,
    quality: dict[str, MetricMap],
    cfg: ThresholdConfig,
    rc_mode: str = "nerf",
    min_clean: float = ASSET_MIN_CLEAN,
) -> ForegroundAsset | None:
    """Crop one matched object with a defect-gated label.

    The label keeps only alpha pixels whose RC/GC/VSS values pass the
    binarization thresholds and whose target lands inside the frame-2
    alpha (slightly dilated to absorb rasterization). Returns None when
    fewer than `min_clean` of the object's pixels survive.
    """
    if isinstance(pair.label, FlowField):
        src_values = pair.label.values
        src_valid = pair.label.valid
        task = "flow"
    else:
        # Stereo pairs ride the same machinery as horizontal-only flow.
        src_values = np.stack(
            [-pair.label.values, np.zeros_like(pair.label.values)], axis=-1
        )
        src_valid = pair.label.valid
        task = "stereo"
    i, j = match
    mask1 = set1.masks[i]
    mask2 = set2.masks[j]
    r0, c0, r1, c1 = _bbox_of(mask1)
    s0, t0, s1, t1 = _bbox_of(mask2)
    if r1 - r0 < 2 or c1 - c0 < 2 or s1 - s0 < 2 or t1 - t0 < 2:
        return None

    alpha1 = mask1[r0:r1, c0:c1]
    alpha2 = mask2[s0:s1, t0:t1]
    rgb1 = pair.image1[r0:r1, c0:c1].copy()
    rgb2 = pair.image2[s0:s1, t0:t1].copy()

    flow_crop = src_values[r0:r1, c0:c1].copy()
    valid = src_valid[r0:r1, c0:c1] & alpha1
    # local target = p + flow + bbox1_origin - bbox2_origin
    flow_crop[..., 0] += c0 - t0
    flow_crop[..., 1] += r0 - s0

    gates = np.ones_like(valid)
    thresholds = {"rc": cfg.rc_threshold(rc_mode), "gc": cfg.gc, "vss": cfg.vss}
    for name, metric in quality.items():
        if name not in thresholds:
            raise InvalidInputError(f"unknown quality mask {name!r}")
        crop_v = metric.values[r0:r1, c0:c1]
        crop_ok = metric.valid[r0:r1, c0:c1]
        gates &= crop_ok & (crop_v < thresholds[name])
    valid &= gates

    # Targets must land on the matched object in frame 2.
    hh, ww = alpha1.shape
    u, v = np.meshgrid(np.arange(ww, dtype=np.float64), np.arange(hh, dtype=np.float64))
    target = np.stack([u, v], axis=-1) + flow_crop
    landed, ok = sample_nearest(
        binary_dilation(alpha2, iterations=1).astype(np.float64), target
    )
    valid &= ok & (landed > 0.5)

    if valid.sum() < min_clean * alpha1.sum():
        return None
    flow_crop[~valid] = 0.0
    return ForegroundAsset(
        rgb1=rgb1,
        rgb2=rgb2,
        alpha1=alpha1,
        alpha2=alpha2,
        label=flow_crop,
        label_valid=valid,
        task=task,
        bbox1=(r0, c0),
        bbox2=(s0, t0),
    )


def _polygon_mask(vertices_uv: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    img = Image.new("L", (shape[1], shape[0]), 0)
    ImageDraw.Draw(img).polygon(
        [(float(u), float(v)) for u, v in vertices_uv], fill=255
    )
    return np.asarray(img) >= 128


def _smooth_texture(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    from scipy.ndimage import gaussian_filter

    tex = rng.uniform(0.0, 1.0, size=shape + (3,))
    tex = gaussian_filter(tex, sigma=(1.5, 1.5, 0.0))
    lo, hi = tex.min(), tex.max()
    return (tex - lo) / max(hi - lo, 1e-9)


def synth_2d_foreground(
    texture_seed: int,
    size: tuple[int, int],
    motion: AffineMotion,
) -> ForegroundAsset:
    """Random textured polygon with an exact affine inter-frame label."""
    h, w = size
    if h < 8 or w < 8:
        raise InvalidInputError("foreground canvas must be at least 8x8")
    rng = np.random.default_rng(texture_seed)
    n_vert = int(rng.integers(5, 9))
    angles = np.sort(rng.uniform(0, 2 * np.pi, size=n_vert))
    radii = rng.uniform(0.25, 0.46, size=n_vert) * min(h, w)
    center = np.array([w / 2.0, h / 2.0])
    verts = center + np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=-1)

    alpha1 = _polygon_mask(verts, (h, w))
    alpha2 = _polygon_mask(motion.apply(verts), (h, w))
    if not alpha1.any() or not alpha2.any():
        raise InvalidInputError("degenerate polygon or motion leaves the canvas")
    rgb1 = _smooth_texture(rng, (h, w))

    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    uv = np.stack([u, v], axis=-1)
    inv = np.linalg.inv(motion.matrix)
    source = (uv - motion.offset) @ inv.T
    rgb2, _ = sample_bilinear(rgb1, source)
    rgb2[~alpha2] = 0.0

    label = motion.apply(uv) - uv
    label[~alpha1] = 0.0
    return ForegroundAsset(
        rgb1=rgb1,
        rgb2=rgb2,
        alpha1=alpha1,
        alpha2=alpha2,
        label=label,
        label_valid=alpha1.copy(),
        task="flow",
    )


def save_asset(asset: ForegroundAsset, directory) -> None:
    """Directory bundle: two RGB PNGs, two alpha PNGs, a .flo label, metadata."""
    from .datasetio import write_flo, write_image_png, write_mask_png

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_image_png(asset.rgb1, d / "rgb1.png")
    write_image_png(asset.rgb2, d / "rgb2.png")
    write_mask_png(asset.alpha1, d / "alpha1.png")
    write_mask_png(asset.alpha2, d / "alpha2.png")
    write_flo(FlowField(asset.label.astype(np.float32), asset.label_valid), d / "label.flo")
    meta = {
        "task": asset.task,
        "bbox1": list(asset.bbox1),
        "bbox2": list(asset.bbox2),
    }
    with open(d / "meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_asset(directory) -> ForegroundAsset:
    from .datasetio import read_flo, read_image_png, read_mask_png

    d = Path(directory)
    with open(d / "meta.json", "r", encoding="utf-8") as f:
        meta = json.load(f)
    label = read_flo(d / "label.flo")
    return ForegroundAsset(
        rgb1=read_image_png(d / "rgb1.png"),
        rgb2=read_image_png(d / "rgb2.png"),
        alpha1=read_mask_png(d / "alpha1.png"),
        alpha2=read_mask_png(d / "alpha2.png"),
        label=label.values.astype(np.float64),
        label_valid=label.valid,
        task=meta.get("task", "flow"),
        bbox1=tuple(meta.get("bbox1", (0, 0))),
        bbox2=tuple(meta.get("bbox2", (0, 0))),
    )


@dataclass(frozen=True)
class Placement:
    """Similarity placement of an asset: scale plus per-frame offsets."""

    scale: float
    offset1: np.ndarray  # (u, v) of the crop origin in frame 1
    offset2: np.ndarray  # (u, v) of the crop origin in frame 2


def _sample_placement(
    asset: ForegroundAsset,
    shape: tuple[int, int],
    rng: np.random.Generator,
    task: str,
) -> Placement:
    h, w = shape
    ah, aw = asset.alpha1.shape
    for _ in range(40):
        scale = float(rng.uniform(*PLACEMENT_SCALE_RANGE))
        sw, sh = aw * scale, ah * scale
        off = np.array(
            [rng.uniform(-0.5 * sw, w - 0.5 * sw), rng.uniform(-0.5 * sh, h - 0.5 * sh)]
        )
        u0, v0 = max(off[0], 0.0), max(off[1], 0.0)
        u1, v1 = min(off[0] + sw, w), min(off[1] + sh, h)
        frac = max(u1 - u0, 0.0) * max(v1 - v0, 0.0) / (sw * sh)
        if frac >= PLACEMENT_MIN_IN_FRAME:
            break
    else:
        off = np.array([(w - sw) / 2.0, (h - sh) / 2.0])
    if task == "stereo":
        delta = np.zeros(2)  # horizontal layering offset is added later
    else:
        delta = rng.uniform(-15.0, 15.0, size=2)
    return Placement(scale, off, off + delta)


def _paste_frame(
    image: np.ndarray,
    rgb: np.ndarray,
    alpha: np.ndarray,
    scale: float,
    offset: np.ndarray,
) -> np.ndarray:
    """Write scaled asset pixels into `image`; returns the pasted footprint."""
    h, w = image.shape[:2]
    ah, aw = alpha.shape
    u0 = max(int(np.floor(offset[0])), 0)
    v0 = max(int(np.floor(offset[1])), 0)
    u1 = min(int(np.ceil(offset[0] + aw * scale)) + 1, w)
    v1 = min(int(np.ceil(offset[1] + ah * scale)) + 1, h)
    footprint = np.zeros((h, w), dtype=bool)
    if u0 >= u1 or v0 >= v1:
        return footprint
    u, v = np.meshgrid(
        np.arange(u0, u1, dtype=np.float64), np.arange(v0, v1, dtype=np.float64)
    )
    local = np.stack([(u - offset[0]) / scale, (v - offset[1]) / scale], axis=-1)
    a, _ = sample_nearest(alpha.astype(np.float64), local)
    inside = a > 0.5
    if not inside.any():
        return footprint
    rgb_s, _ = sample_bilinear(rgb, local)
    region = image[v0:v1, u0:u1]
    region[inside] = rgb_s[inside]
    footprint[v0:v1, u0:u1] = inside
    return footprint


def composite(
    background: LabeledPair,
    assets: list[ForegroundAsset],
    seed: int,
) -> LabeledPair:
    """Overlay up to two foreground assets on a labeled pair.

    Inside the pasted frame-1 footprint the label becomes the asset's
    (scaled, shifted) label; background pixels whose own target is newly
    covered in frame 2 become invalid (occluded). Everything outside the
    footprints is preserved bit-exact. In stereo mode each asset gets a
    disparity offset that lifts it in front of the local background.
    """
    if len(assets) > 2:
        raise InvalidInputError("at most two foreground overlays per pair")
    rng = np.random.default_rng(seed)
    image1 = background.image1.copy()
    image2 = background.image2.copy()
    task = background.task
    if task == "flow":
        label_values = background.label.values.copy()
    else:
        label_values = background.label.values.copy()
    label_valid = background.label.valid.copy()
    h, w = label_valid.shape

    footprint2_all = np.zeros((h, w), dtype=bool)
    pasted_any = np.zeros((h, w), dtype=bool)

    for asset in assets:
        placement = _sample_placement(asset, (h, w), rng, task)
        scale = placement.scale
        offset1 = placement.offset1
        offset2 = placement.offset2

        if task == "stereo":
            # Lift the asset in front of whatever background it covers.
            probe = _paste_frame(image1.copy(), asset.rgb1, asset.alpha1, scale, offset1)
            if not probe.any():
                continue
            local_bg = background.label.values[probe & background.label.valid]
            bg_max = float(local_bg.max()) if local_bg.size else 0.0
            asset_d = -asset.label[..., 0][asset.label_valid]
            min_d = float(asset_d.min()) * scale if asset_d.size else 0.0
            delta = max(bg_max + STEREO_LAYER_MARGIN - min_d, 0.0)
            offset2 = offset2 + np.array([-delta, 0.0])
        else:
            delta = 0.0

        fp1 = _paste_frame(image1, asset.rgb1, asset.alpha1, scale, offset1)
        if not fp1.any():
            continue
        fp2 = _paste_frame(image2, asset.rgb2, asset.alpha2, scale, offset2)
        footprint2_all |= fp2
        pasted_any |= fp1

        # Label inside the frame-1 footprint.
        rows, cols = np.nonzero(fp1)
        local = np.stack(
            [(cols - offset1[0]) / scale, (rows - offset1[1]) / scale], axis=-1
        )
        lbl, ok_lbl = sample_bilinear(asset.label, local, valid=asset.label_valid)
        ok_v, _ = sample_nearest(asset.label_valid.astype(np.float64), local)
        ok = ok_lbl & (ok_v > 0.5)
        new_flow = lbl * scale + (offset2 - offset1)
        if task == "flow":
            target_u = cols + new_flow[:, 0]
            target_v = rows + new_flow[:, 1]
            in2 = (target_u >= 0) & (target_u <= w - 1) & (target_v >= 0) & (target_v <= h - 1)
            ok &= in2
            label_values[rows, cols] = np.where(ok[:, None], new_flow, 0.0)
        else:
            disp = -new_flow[:, 0]
            ok &= disp >= 0
            label_values[rows, cols] = np.where(ok, disp, 0.0)
        label_valid[rows, cols] = ok

    # Background pixels whose target is newly hidden by a pasted frame-2 region.
    if footprint2_all.any():
        bg_rows, bg_cols = np.nonzero(~pasted_any & background.label.valid)
        if task == "flow":
            tu = bg_cols + background.label.values[bg_rows, bg_cols, 0]
            tv = bg_rows + background.label.values[bg_rows, bg_cols, 1]
        else:
            tu = bg_cols - background.label.values[bg_rows, bg_cols]
            tv = bg_rows.astype(np.float64)
        ti = np.clip(np.rint(tv).astype(np.int64), 0, h - 1)
        tj = np.clip(np.rint(tu).astype(np.int64), 0, w - 1)
        inside = (tu >= -0.5) & (tu <= w - 0.5) & (tv >= -0.5) & (tv <= h - 0.5)
        hidden = inside & footprint2_all[ti, tj]
        label_valid[bg_rows[hidden], bg_cols[hidden]] = False
        if task == "flow":
            label_values[bg_rows[hidden], bg_cols[hidden]] = 0.0
        else:
            label_values[bg_rows[hidden], bg_cols[hidden]] = 0.0

    if task == "flow":
        label = FlowField(label_values, label_valid)
    else:
        label = DisparityMap(label_values, label_valid)
    return LabeledPair(
        image1=image1,
        image2=image2,
        label=label,
        depth1=background.depth1,
        depth2=background.depth2,
    )
