"""End-to-end chain: scene -> pose pair -> render -> depth -> label ->
occlusion -> metric masks -> fusion -> serialized pair.

Every pair is a pure function of (scene, config, pair index), so pairs
can be generated in any order or in parallel with identical results.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assess import (
    MetricMap,
    ThresholdConfig,
    FusedLabel,
    fuse_labels,
    geometric_consistency,
    reconstruction_confidence,
    visual_structural_similarity,
)
from .datasetio import (
    DatasetManifest,
    LabeledPair,
    PairRecord,
    RunConfig,
    write_disparity_png16,
    write_flo,
    write_image_png,
    write_mask_png,
    write_pfm,
)
from .errors import InvalidConfigError
from .geometry import CameraIntrinsics, RigidPose, backproject, compose_perturbed_pose, stereo_pose
from .interp import in_frame
from .labelgen import (
    DisparityMap,
    FlowField,
    OcclusionMask,
    disparity_from_flow,
    flow_from_depth,
    occlusion_by_fb_check,
    occlusion_by_ray_integral,
    reproject,
)
from .scenefield import (
    DepthMap,
    NerfSampling,
    Scene,
    hit_visibility,
    load_scene,
    make_preset,
    mean_depth,
    median_depth,
    render_analytic,
    render_rayfield_nerf,
    render_rayfield_splats,
)

logger = logging.getLogger(__name__)

__all__ = ["GeneratedPair", "generate_pair", "generate_dataset", "resolve_scene", "rc_mode_for_backend"]


@dataclass
class RenderedView:
    image: np.ndarray
    depth: DepthMap
    field: object = None  # RayWeightField for the non-analytic backends


@dataclass
class GeneratedPair:
    pair: LabeledPair
    raw_label: FlowField | DisparityMap
    masks: dict
    fused: FusedLabel
    intrinsics: CameraIntrinsics
    pose1: RigidPose
    pose2: RigidPose
    scene_id: str
    seed: int


def resolve_scene(spec: str, base_dir: Path | None = None) -> Scene:
    """Scene reference: 'preset:name[:key=value,...]' or a JSON file path."""
    if spec.startswith("preset:"):
        parts = spec.split(":")
        name = parts[1]
        params: dict = {}
        if len(parts) > 2 and parts[2]:
            for kv in parts[2].split(","):
                k, _, v = kv.partition("=")
                try:
                    params[k] = json.loads(v)
                except Exception:
                    params[k] = v
        return make_preset(name, **params)
    path = Path(spec)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise InvalidConfigError(f"scene file not found: {path}")
    return load_scene(path)


def rc_mode_for_backend(backend: str) -> str:
    return "splat" if backend == "splats" else "nerf"


def _render_view(scene: Scene, backend: str, pose: RigidPose, depth_mode: str, sampling: NerfSampling):
    if backend == "analytic":
        depth, image = render_analytic(list(scene.primitives), scene.intrinsics, pose)
        return RenderedView(image=image, depth=depth, field=None)
    if backend == "nerf_density":
        field, image = render_rayfield_nerf(
            list(scene.primitives), scene.intrinsics, pose, sampling
        )
        depth = median_depth(field, "nerf") if depth_mode == "median" else mean_depth(field)
        return RenderedView(image=image, depth=depth, field=field)
    field, image = render_rayfield_splats(list(scene.splats), scene.intrinsics, pose)
    depth = median_depth(field, "splat") if depth_mode == "median" else mean_depth(field)
    return RenderedView(image=image, depth=depth, field=field)


def _pose_pair(scene: Scene, cfg: RunConfig, index: int) -> tuple[RigidPose, RigidPose]:
    pose1 = scene.base_pose
    if cfg.task == "stereo":
        return pose1, stereo_pose(pose1, cfg.baseline)
    seed = np.random.SeedSequence([cfg.seed, index]).generate_state(1)[0]
    pose2 = compose_perturbed_pose(
        pose1, cfg.perturb_rotation, cfg.perturb_translation, rng_seed=int(seed)
    )
    return pose1, pose2


def _analytic_occlusion(
    scene: Scene, depth1: DepthMap, intrinsics: CameraIntrinsics, pose1: RigidPose, pose2: RigidPose
) -> OcclusionMask:
    u, v = intrinsics.pixel_grid()
    world = backproject(
        np.stack([u, v], axis=-1),
        np.where(depth1.valid, depth1.values, 1.0),
        intrinsics,
        pose1,
    )
    uv2, _, ok = reproject(depth1, intrinsics, pose1, pose2)
    exact = hit_visibility(list(scene.primitives), world, pose2, intrinsics)
    return OcclusionMask(exact & ok & depth1.valid)


def generate_pair(scene: Scene, cfg: RunConfig, index: int) -> GeneratedPair:
    """Deterministically build one labeled, assessed pair."""
    scene.require_backend(cfg.backend)
    intrinsics = scene.intrinsics
    sampling = (
        NerfSampling.from_json(cfg.sampling) if cfg.sampling else scene.sampling
    )
    thresholds = (
        ThresholdConfig.from_json(cfg.thresholds) if cfg.thresholds else ThresholdConfig()
    )
    pose1, pose2 = _pose_pair(scene, cfg, index)

    view1 = _render_view(scene, cfg.backend, pose1, cfg.depth, sampling)
    view2 = _render_view(scene, cfg.backend, pose2, cfg.depth, sampling)

    flow = flow_from_depth(view1.depth, intrinsics, pose1, pose2)
    uv2, z2, ok = reproject(view1.depth, intrinsics, pose1, pose2)

    if cfg.backend == "analytic":
        occ = _analytic_occlusion(scene, view1.depth, intrinsics, pose1, pose2)
        rc = MetricMap(
            np.zeros(intrinsics.shape), np.ones(intrinsics.shape, dtype=bool)
        )
    elif cfg.backend == "nerf_density":
        occ = occlusion_by_ray_integral(
            view2.field, uv2, z2, ok,
            threshold=cfg.occlusion_threshold, margin=cfg.occlusion_margin,
        )
        rc = reconstruction_confidence(view1.field, "nerf", thresholds)
    else:
        flow_bwd = flow_from_depth(view2.depth, intrinsics, pose2, pose1)
        occ = occlusion_by_fb_check(flow, flow_bwd, alpha=cfg.fb_alpha, beta=cfg.fb_beta)
        rc = reconstruction_confidence(view1.field, "splat", thresholds)

    gc = geometric_consistency(view1.depth, view2.depth, intrinsics, pose1, pose2)
    vss = visual_structural_similarity(view1.image, view2.image, flow)
    masks = {"rc": rc, "occ": occ, "gc": gc, "vss": vss}

    label: FlowField | DisparityMap
    if cfg.task == "stereo":
        label = disparity_from_flow(flow)
    else:
        label = flow
    fused = fuse_labels(
        label, masks, thresholds, rc_mode_for_backend(cfg.backend), cfg.mask_selection
    )

    if cfg.task == "stereo":
        final_label = DisparityMap(fused.values, fused.valid)
    else:
        final_label = FlowField(fused.values, fused.valid)
    pair = LabeledPair(
        image1=view1.image,
        image2=view2.image,
        label=final_label,
        depth1=view1.depth,
        depth2=view2.depth,
    )
    return GeneratedPair(
        pair=pair,
        raw_label=label,
        masks=masks,
        fused=fused,
        intrinsics=intrinsics,
        pose1=pose1,
        pose2=pose2,
        scene_id=scene.scene_id,
        seed=cfg.seed,
    )


def _write_pair(out_dir: Path, gp: GeneratedPair, cfg: RunConfig, index: int) -> PairRecord:
    stem = f"pair_{index:05d}"
    names = {
        "frame1": f"{stem}_frame1.png",
        "frame2": f"{stem}_frame2.png",
    }
    write_image_png(gp.pair.image1, out_dir / names["frame1"])
    write_image_png(gp.pair.image2, out_dir / names["frame2"])

    if cfg.task == "stereo":
        label_name = f"{stem}_disp.png"
        write_disparity_png16(gp.pair.label, out_dir / label_name)
    else:
        label_name = f"{stem}_flow.flo"
        write_flo(gp.pair.label, out_dir / label_name)

    masks = {
        "occ": f"{stem}_occ.png",
        "valid": f"{stem}_valid.png",
        "rc": f"{stem}_rc.pfm",
        "gc": f"{stem}_gc.pfm",
        "vss": f"{stem}_vss.pfm",
        "depth1": f"{stem}_depth1.pfm",
        "depth2": f"{stem}_depth2.pfm",
    }
    write_mask_png(gp.masks["occ"].visible, out_dir / masks["occ"])
    write_mask_png(gp.fused.valid, out_dir / masks["valid"])
    write_pfm(gp.masks["rc"].values, out_dir / masks["rc"], valid=gp.masks["rc"].valid)
    write_pfm(gp.masks["gc"].values, out_dir / masks["gc"], valid=gp.masks["gc"].valid)
    write_pfm(gp.masks["vss"].values, out_dir / masks["vss"], valid=gp.masks["vss"].valid)
    write_pfm(gp.pair.depth1.values, out_dir / masks["depth1"], valid=gp.pair.depth1.valid)
    write_pfm(gp.pair.depth2.values, out_dir / masks["depth2"], valid=gp.pair.depth2.valid)

    return PairRecord(
        index=index,
        task=cfg.task,
        frame1=names["frame1"],
        frame2=names["frame2"],
        label=label_name,
        masks=masks,
        intrinsics=gp.intrinsics,
        pose1=gp.pose1,
        pose2=gp.pose2,
        scene_id=gp.scene_id,
        seed=cfg.seed,
    )


def _worker(args) -> PairRecord:
    scene, cfg, index, out_dir = args
    gp = generate_pair(scene, cfg, index)
    return _write_pair(Path(out_dir), gp, cfg, index)


def generate_dataset(
    cfg: RunConfig,
    out_dir,
    base_dir: Path | None = None,
    jobs: int = 1,
) -> Path:
    """Run the full chain for every pair and write manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene = resolve_scene(cfg.scene, base_dir=base_dir)
    scene.require_backend(cfg.backend)

    tasks = [(scene, cfg, i, str(out)) for i in range(cfg.pairs)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_worker, tasks))
    else:
        records = [_worker(t) for t in tasks]
    logger.info("generated %d pairs into %s", len(records), out)

    manifest_path = out / "manifest.json"
    DatasetManifest(tuple(records)).write(manifest_path)
    return manifest_path

